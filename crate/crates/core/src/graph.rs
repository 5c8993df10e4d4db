//! Switch graph, walks on it, and the switching signals they expand into.
//!
//! Vertices `1..=N` are the subsystems; vertex `N + 1` stands for the stable
//! block, which dwells on subsystem `j` for `q` steps and then on `i` for `p`
//! steps. Edges are the ascending chain `l -> l + 1`, every subsystem to the
//! stable vertex, and the stable vertex back to every subsystem.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::search::StableCombination;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchGraph {
    n: usize,
    stable_self_loop: bool,
}

impl SwitchGraph {
    pub fn new(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidInput("the switch graph needs N >= 1".into()));
        }
        Ok(Self { n, stable_self_loop: false })
    }

    /// Graph with the extra edge `(N+1, N+1)`. This admits the purely
    /// periodic stable-block signal, which the plain graph does not.
    pub fn with_stable_self_loop(n: usize) -> Result<Self> {
        Ok(Self { stable_self_loop: true, ..Self::new(n)? })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn stable_vertex(&self) -> usize {
        self.n + 1
    }

    pub fn has_stable_self_loop(&self) -> bool {
        self.stable_self_loop
    }

    pub fn vertex_count(&self) -> usize {
        self.n + 1
    }

    pub fn is_plain(&self, v: usize) -> bool {
        (1..=self.n).contains(&v)
    }

    pub fn check_vertex(&self, v: usize) -> Result<()> {
        if (1..=self.n + 1).contains(&v) {
            Ok(())
        } else {
            Err(Error::VertexOutOfRange { vertex: v, max: self.n + 1 })
        }
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        let s = self.stable_vertex();
        if !(1..=s).contains(&from) || !(1..=s).contains(&to) {
            return false;
        }
        match (from == s, to == s) {
            (true, true) => self.stable_self_loop,
            (true, false) | (false, true) => true,
            (false, false) => to == from + 1,
        }
    }

    /// Out-neighbours in ascending order.
    pub fn out_neighbors(&self, v: usize) -> Vec<usize> {
        (1..=self.stable_vertex()).filter(|&w| self.has_edge(v, w)).collect()
    }

    /// All edges, sorted lexicographically.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (1..=self.stable_vertex())
            .flat_map(|v| self.out_neighbors(v).into_iter().map(move |w| (v, w)))
            .collect()
    }
}

/// Build the switch graph for `n` subsystems.
pub fn build_graph(n: usize) -> Result<SwitchGraph> {
    SwitchGraph::new(n)
}

/// A finite stretch of vertices on the switch graph for `n` subsystems.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Walk {
    pub n: usize,
    pub vertices: Vec<usize>,
}

impl Walk {
    /// Checks the vertex range and every consecutive edge.
    pub fn new(graph: &SwitchGraph, vertices: Vec<usize>) -> Result<Self> {
        for &v in &vertices {
            graph.check_vertex(v)?;
        }
        if let Some(w) = vertices.windows(2).find(|w| !graph.has_edge(w[0], w[1])) {
            return Err(Error::NotAnEdge { from: w[0], to: w[1] });
        }
        Ok(Self { n: graph.n(), vertices })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn stable_count(&self) -> usize {
        self.vertices.iter().filter(|&&v| v == self.n + 1).count()
    }

    /// Signal duration when the stable block lasts `block_len` steps.
    pub fn duration(&self, block_len: usize) -> usize {
        self.vertices.iter().map(|&v| if v == self.n + 1 { block_len } else { 1 }).sum()
    }
}

/// How the next vertex of a walk is chosen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WalkPolicy {
    /// Start uniformly on `V`, then pick uniformly among out-neighbours.
    UniformRandom,
    /// Start at `start`, then always take the smallest out-neighbour; this
    /// cycles `1 -> 2 -> ... -> N -> N+1 -> 1`.
    RoundRobin { start: usize },
    /// `N+1, plain, N+1, plain, ...`
    AlternateStable { plain: usize },
    /// A fixed vertex list.
    Explicit { vertices: Vec<usize> },
}

/// Resumable walk generator: holds the last vertex and the RNG state.
#[derive(Clone, Debug)]
pub struct WalkGenerator {
    graph: SwitchGraph,
    policy: WalkPolicy,
    rng: Rng,
    last: Option<usize>,
    emitted: usize,
}

impl WalkGenerator {
    pub fn new(graph: &SwitchGraph, policy: WalkPolicy, seed: u64) -> Result<Self> {
        match &policy {
            WalkPolicy::UniformRandom => {}
            WalkPolicy::RoundRobin { start } => graph.check_vertex(*start)?,
            WalkPolicy::AlternateStable { plain } => {
                if !graph.is_plain(*plain) {
                    return Err(Error::VertexOutOfRange { vertex: *plain, max: graph.n() });
                }
            }
            WalkPolicy::Explicit { vertices } => {
                if vertices.is_empty() {
                    return Err(Error::InvalidInput("explicit walk needs a start vertex".into()));
                }
                Walk::new(graph, vertices.clone())?;
            }
        }
        Ok(Self { graph: graph.clone(), policy, rng: rng::seeded(seed), last: None, emitted: 0 })
    }

    pub fn graph(&self) -> &SwitchGraph {
        &self.graph
    }

    /// Takes the next `steps` vertices as a walk. Fails if an explicit list
    /// runs out first.
    pub fn take_walk(&mut self, steps: usize) -> Result<Walk> {
        let vertices: Vec<usize> = self.by_ref().take(steps).collect();
        if vertices.len() < steps {
            return Err(Error::InvalidInput(format!(
                "explicit walk has {} vertices, {steps} requested",
                vertices.len()
            )));
        }
        Ok(Walk { n: self.graph.n(), vertices })
    }
}

impl Iterator for WalkGenerator {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        let s = self.graph.stable_vertex();
        let next = match (&self.policy, self.last) {
            (WalkPolicy::UniformRandom, None) => 1 + rng::index_below(&mut self.rng, s),
            (WalkPolicy::UniformRandom, Some(v)) => {
                let out = self.graph.out_neighbors(v);
                out[rng::index_below(&mut self.rng, out.len())]
            }
            (WalkPolicy::RoundRobin { start }, None) => *start,
            (WalkPolicy::RoundRobin { .. }, Some(v)) => self.graph.out_neighbors(v)[0],
            (WalkPolicy::AlternateStable { plain }, _) => {
                if self.emitted.is_multiple_of(2) {
                    s
                } else {
                    *plain
                }
            }
            (WalkPolicy::Explicit { vertices }, _) => *vertices.get(self.emitted)?,
        };
        self.last = Some(next);
        self.emitted += 1;
        Some(next)
    }
}

/// A walk of `steps` vertices under `policy`.
pub fn generate_walk(graph: &SwitchGraph, policy: WalkPolicy, steps: usize, seed: u64) -> Result<Walk> {
    if steps == 0 {
        return Err(Error::InvalidInput("a walk needs at least one step".into()));
    }
    WalkGenerator::new(graph, policy, seed)?.take_walk(steps)
}

/// Longest run of consecutive plain vertices anywhere in the walk.
pub fn max_stable_gap(walk: &Walk) -> usize {
    walk.vertices
        .split(|&v| v == walk.n + 1)
        .map(<[usize]>::len)
        .max()
        .unwrap_or(0)
}

/// Run-length switching schedule: `(subsystem, dwell)` pairs in time order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchingSignal {
    runs: Vec<(usize, usize)>,
}

impl SwitchingSignal {
    pub fn from_runs(runs: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(r) = runs.iter().find(|r| r.0 == 0 || r.1 == 0) {
            return Err(Error::InvalidInput(format!("invalid run {r:?}: index and dwell must be >= 1")));
        }
        Ok(Self { runs })
    }

    pub fn runs(&self) -> &[(usize, usize)] {
        &self.runs
    }

    pub fn duration(&self) -> usize {
        self.runs.iter().map(|r| r.1).sum()
    }

    /// Switching instants `tau_k`: the start time of each run.
    pub fn switching_instants(&self) -> Vec<usize> {
        self.runs
            .iter()
            .scan(0, |t, r| {
                let start = *t;
                *t += r.1;
                Some(start)
            })
            .collect()
    }

    /// Active subsystem at time `t`.
    pub fn at(&self, t: usize) -> Result<usize> {
        let mut end = 0;
        for &(index, dwell) in &self.runs {
            end += dwell;
            if t < end {
                return Ok(index);
            }
        }
        Err(Error::TimeOutOfRange { t, duration: end })
    }

    /// Per-step subsystem indices.
    pub fn expand(&self) -> Vec<usize> {
        self.runs.iter().flat_map(|&(index, dwell)| std::iter::repeat_n(index, dwell)).collect()
    }

    /// CSV with header `t,sigma`, one row per step.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,sigma\n");
        for (t, s) in self.expand().into_iter().enumerate() {
            let _ = writeln!(out, "{t},{s}");
        }
        out
    }
}

/// Active subsystem at time `t`.
pub fn signal_at(signal: &SwitchingSignal, t: usize) -> Result<usize> {
    signal.at(t)
}

/// Expands a walk: a plain vertex `l` becomes `(l, 1)`; the stable vertex
/// becomes `(j, q)` followed by `(i, p)`.
pub fn walk_to_signal(walk: &Walk, comb: &StableCombination) -> Result<SwitchingSignal> {
    let stable = walk.n + 1;
    let mut runs = Vec::with_capacity(walk.len() + walk.stable_count());
    for &v in &walk.vertices {
        if v == stable {
            runs.push((comb.j, comb.q));
            runs.push((comb.i, comb.p));
        } else if (1..stable).contains(&v) {
            runs.push((v, 1));
        } else {
            return Err(Error::VertexOutOfRange { vertex: v, max: stable });
        }
    }
    Ok(SwitchingSignal { runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn comb(i: usize, j: usize, p: usize, q: usize) -> StableCombination {
        StableCombination { i, j, p, q, combo: Matrix::identity(2), m: 1, rho: 0.5 }
    }

    #[test]
    fn edge_sets() {
        assert_eq!(build_graph(2).unwrap().edges(), vec![(1, 2), (1, 3), (2, 3), (3, 1), (3, 2)]);
        assert_eq!(build_graph(1).unwrap().edges(), vec![(1, 2), (2, 1)]);
        assert_eq!(
            build_graph(3).unwrap().edges(),
            vec![(1, 2), (1, 4), (2, 3), (2, 4), (3, 4), (4, 1), (4, 2), (4, 3)]
        );
        assert!(build_graph(0).is_err());
        let g = SwitchGraph::with_stable_self_loop(2).unwrap();
        assert!(g.has_edge(3, 3));
        assert!(!build_graph(2).unwrap().has_edge(3, 3));
    }

    #[test]
    fn edge_count_formula() {
        for n in 1..10 {
            assert_eq!(build_graph(n).unwrap().edges().len(), (n - 1) + n + n);
        }
    }

    #[test]
    fn policies() {
        let g = build_graph(2).unwrap();
        let w = generate_walk(&g, WalkPolicy::AlternateStable { plain: 1 }, 4, 0).unwrap();
        assert_eq!(w.vertices, vec![3, 1, 3, 1]);
        let w = generate_walk(&g, WalkPolicy::RoundRobin { start: 1 }, 6, 0).unwrap();
        assert_eq!(w.vertices, vec![1, 2, 3, 1, 2, 3]);
        let err = generate_walk(&g, WalkPolicy::Explicit { vertices: vec![1, 1] }, 2, 0).unwrap_err();
        assert!(matches!(err, Error::NotAnEdge { from: 1, to: 1 }));
        let w = generate_walk(&g, WalkPolicy::Explicit { vertices: vec![1, 2, 3, 2] }, 3, 0).unwrap();
        assert_eq!(w.vertices, vec![1, 2, 3]);
        assert!(generate_walk(&g, WalkPolicy::Explicit { vertices: vec![1, 2] }, 3, 0).is_err());
        assert!(generate_walk(&g, WalkPolicy::AlternateStable { plain: 3 }, 3, 0).is_err());
    }

    #[test]
    fn uniform_random_is_seeded_and_valid() {
        let g = build_graph(4).unwrap();
        let a = generate_walk(&g, WalkPolicy::UniformRandom, 500, 9).unwrap();
        let b = generate_walk(&g, WalkPolicy::UniformRandom, 500, 9).unwrap();
        assert_eq!(a, b);
        Walk::new(&g, a.vertices.clone()).unwrap();
        let c = generate_walk(&g, WalkPolicy::UniformRandom, 500, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generator_resumes() {
        let g = build_graph(3).unwrap();
        let whole = generate_walk(&g, WalkPolicy::UniformRandom, 40, 5).unwrap();
        let mut gen = WalkGenerator::new(&g, WalkPolicy::UniformRandom, 5).unwrap();
        let mut parts = gen.take_walk(15).unwrap().vertices;
        parts.extend(gen.take_walk(25).unwrap().vertices);
        assert_eq!(parts, whole.vertices);
    }

    #[test]
    fn signal_expansion() {
        let g = build_graph(2).unwrap();
        let c = comb(1, 2, 1, 1);
        let s = walk_to_signal(&Walk::new(&g, vec![3]).unwrap(), &c).unwrap();
        assert_eq!(s.runs(), &[(2, 1), (1, 1)]);
        let s = walk_to_signal(&Walk::new(&g, vec![1, 2]).unwrap(), &c).unwrap();
        assert_eq!(s.runs(), &[(1, 1), (2, 1)]);
        let s = walk_to_signal(&Walk::new(&g, vec![3, 1, 3]).unwrap(), &c).unwrap();
        assert_eq!(s.runs(), &[(2, 1), (1, 1), (1, 1), (2, 1), (1, 1)]);
        assert_eq!(s.duration(), 5);
        assert_eq!(s.switching_instants(), vec![0, 1, 2, 3, 4]);

        let c = comb(1, 2, 3, 2);
        let s = walk_to_signal(&Walk::new(&g, vec![1, 3]).unwrap(), &c).unwrap();
        assert_eq!(s.expand(), vec![1, 2, 2, 1, 1, 1]);
        assert_eq!(s.switching_instants(), vec![0, 1, 3]);

        let bad = Walk { n: 2, vertices: vec![4] };
        assert!(walk_to_signal(&bad, &c).is_err());
    }

    #[test]
    fn signal_lookup() {
        let s = SwitchingSignal::from_runs(vec![(2, 1), (1, 1)]).unwrap();
        assert_eq!(signal_at(&s, 0).unwrap(), 2);
        assert_eq!(signal_at(&s, 1).unwrap(), 1);
        assert!(matches!(signal_at(&s, 2), Err(Error::TimeOutOfRange { t: 2, duration: 2 })));
        let s = SwitchingSignal::from_runs(vec![(1, 3)]).unwrap();
        assert_eq!(signal_at(&s, 2).unwrap(), 1);
        assert!(SwitchingSignal::from_runs(vec![(1, 0)]).is_err());
        assert_eq!(s.to_csv(), "t,sigma\n0,1\n1,1\n2,1\n");
    }

    #[test]
    fn gaps() {
        assert_eq!(max_stable_gap(&Walk { n: 2, vertices: vec![3, 1, 3] }), 1);
        assert_eq!(max_stable_gap(&Walk { n: 2, vertices: vec![1, 2, 3] }), 2);
        assert_eq!(max_stable_gap(&Walk { n: 2, vertices: vec![3] }), 0);
    }

    // Every walk of 2N vertices, by brute force, for small N.
    #[test]
    fn gap_bound_exhaustive() {
        for n in 1..=5 {
            let g = build_graph(n).unwrap();
            let len = 2 * n;
            let mut stack: Vec<Vec<usize>> = (1..=n + 1).map(|v| vec![v]).collect();
            let mut count = 0;
            while let Some(w) = stack.pop() {
                if w.len() == len {
                    count += 1;
                    assert!(max_stable_gap(&Walk { n, vertices: w }) <= n);
                    continue;
                }
                for next in g.out_neighbors(*w.last().unwrap()) {
                    let mut x = w.clone();
                    x.push(next);
                    stack.push(x);
                }
            }
            assert!(count > 0);
        }
    }
}
