//! Brute-force checks of the product-norm envelope and of the commutator
//! rewriting `R = R1 combo^m + R2`.
//!
//! Everything here is exponential in the horizon and meant for small
//! instances. Enumeration counts every visited time step against a cap.

use serde::{Deserialize, Serialize};

use crate::certificate::CertificateInputs;
use crate::error::{Error, Result};
use crate::graph::{walk_to_signal, SwitchGraph, Walk};
use crate::linalg::{commutator, mat_mul, operator_norm, Matrix};
use crate::search::{MatrixFamily, StableCombination};

pub const DEFAULT_ENUMERATION_CAP: usize = 10_000_000;

/// `max_l ||A_l combo - (combo A_l + E_l)||` with `E_l = A_l combo - combo A_l`.
pub fn exchange_identity_residual(family: &MatrixFamily, comb: &StableCombination) -> Result<f64> {
    let mut worst = 0.0_f64;
    for a in family.matrices() {
        let e = commutator(a, &comb.combo)?;
        let lhs = mat_mul(a, &comb.combo)?;
        let rhs = mat_mul(&comb.combo, a)?.add(&e)?;
        worst = worst.max(operator_norm(&lhs.sub(&rhs)?)?);
    }
    Ok(worst)
}

/// Every non-empty walk whose signal lasts at most `duration` steps, in
/// lexicographic order.
pub fn enumerate_walks(
    graph: &SwitchGraph,
    comb: &StableCombination,
    duration: usize,
    cap: usize,
) -> Result<Vec<Walk>> {
    let block = comb.block_len();
    let cost = |v: usize| if v == graph.stable_vertex() { block } else { 1 };
    let mut out = Vec::new();
    let mut path = Vec::new();

    fn extend(
        graph: &SwitchGraph,
        cost: &dyn Fn(usize) -> usize,
        path: &mut Vec<usize>,
        used: usize,
        budget: usize,
        cap: usize,
        out: &mut Vec<Walk>,
    ) -> Result<()> {
        let candidates = match path.last() {
            None => (1..=graph.vertex_count()).collect(),
            Some(&v) => graph.out_neighbors(v),
        };
        for v in candidates {
            let next = used + cost(v);
            if next > budget {
                continue;
            }
            if out.len() >= cap {
                return Err(Error::EnumerationCap { cap });
            }
            path.push(v);
            out.push(Walk { n: graph.n(), vertices: path.clone() });
            extend(graph, cost, path, next, budget, cap, out)?;
            path.pop();
        }
        Ok(())
    }

    extend(graph, &cost, &mut path, 0, duration, cap, &mut out)?;
    Ok(out)
}

/// Largest envelope ratio found and the walk prefix realising it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeMax {
    /// `max ||M|| e^{lambda |M|}`, divided by `c` for bound checks.
    pub value: f64,
    /// Walk whose signal, truncated to `witness_len` steps, gives the maximum.
    pub witness: Walk,
    pub witness_len: usize,
    /// Number of products examined.
    pub products: usize,
}

/// Visits every product `A_{sigma(t-1)} ... A_{sigma(0)}` with
/// `1 <= t <= max_len`, where `sigma` is the signal of any walk on `graph`
/// (from any start vertex) truncated to `t` steps, including truncations in
/// the middle of a stable block.
fn for_each_signal_prefix<F>(
    family: &MatrixFamily,
    graph: &SwitchGraph,
    comb: &StableCombination,
    max_len: usize,
    cap: usize,
    visit: &mut F,
) -> Result<usize>
where
    F: FnMut(usize, &Matrix, &[usize]) -> Result<()>,
{
    if graph.n() != family.len() {
        return Err(Error::DimensionMismatch { expected: family.len(), found: graph.n() });
    }
    let mut block_steps = vec![comb.j; comb.q];
    block_steps.extend(std::iter::repeat_n(comb.i, comb.p));

    struct Ctx<'a, F> {
        family: &'a MatrixFamily,
        graph: &'a SwitchGraph,
        block_steps: Vec<usize>,
        max_len: usize,
        cap: usize,
        visited: usize,
        path: Vec<usize>,
        visit: &'a mut F,
    }

    fn descend<F>(ctx: &mut Ctx<'_, F>, product: &Matrix, t: usize) -> Result<()>
    where
        F: FnMut(usize, &Matrix, &[usize]) -> Result<()>,
    {
        let candidates = match ctx.path.last() {
            None => (1..=ctx.graph.vertex_count()).collect(),
            Some(&v) => ctx.graph.out_neighbors(v),
        };
        for v in candidates {
            ctx.path.push(v);
            let steps: Vec<usize> =
                if v == ctx.graph.stable_vertex() { ctx.block_steps.clone() } else { vec![v] };
            let mut acc = product.clone();
            let mut now = t;
            for s in steps {
                if now == ctx.max_len {
                    break;
                }
                ctx.visited += 1;
                if ctx.visited > ctx.cap {
                    return Err(Error::EnumerationCap { cap: ctx.cap });
                }
                acc = mat_mul(ctx.family.get(s)?, &acc)?;
                now += 1;
                (ctx.visit)(now, &acc, &ctx.path)?;
            }
            if now < ctx.max_len {
                descend(ctx, &acc, now)?;
            }
            ctx.path.pop();
        }
        Ok(())
    }

    let mut ctx = Ctx {
        family,
        graph,
        block_steps,
        max_len,
        cap,
        visited: 0,
        path: Vec::new(),
        visit,
    };
    if max_len > 0 {
        descend(&mut ctx, &Matrix::identity(family.dim()), 0)?;
    }
    Ok(ctx.visited)
}

fn envelope_max(
    family: &MatrixFamily,
    graph: &SwitchGraph,
    comb: &StableCombination,
    lambda: f64,
    max_len: usize,
    cap: usize,
) -> Result<EnvelopeMax> {
    let mut best = EnvelopeMax {
        value: 1.0,
        witness: Walk { n: graph.n(), vertices: Vec::new() },
        witness_len: 0,
        products: 0,
    };
    let products = for_each_signal_prefix(family, graph, comb, max_len, cap, &mut |t, m, path| {
        let v = operator_norm(m)? * (lambda * t as f64).exp();
        if v > best.value {
            best.value = v;
            best.witness = Walk { n: graph.n(), vertices: path.to_vec() };
            best.witness_len = t;
        }
        Ok(())
    })?;
    best.products = products;
    Ok(best)
}

/// Default basis length `m(p+q) + mN`.
pub fn basis_length(comb: &StableCombination, n: usize) -> usize {
    comb.m * (comb.block_len() + n)
}

/// Envelope constant `c = max(1, max ||M|| e^{lambda |M|})` over every
/// signal prefix `M` of length at most `l0` (default `m(p+q) + mN`).
pub fn induction_constant(
    family: &MatrixFamily,
    graph: &SwitchGraph,
    comb: &StableCombination,
    lambda: f64,
    l0: Option<usize>,
    cap: usize,
) -> Result<EnvelopeMax> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let l0 = l0.unwrap_or_else(|| basis_length(comb, family.len()));
    envelope_max(family, graph, comb, lambda, l0, cap)
}

/// `max ||M|| e^{lambda |M|} / c` over every signal prefix of length at most
/// `horizon`. A value `<= 1` certifies the envelope `||M|| <= c e^{-lambda |M|}`
/// up to that horizon.
pub fn bound_check_exhaustive(
    family: &MatrixFamily,
    graph: &SwitchGraph,
    comb: &StableCombination,
    lambda: f64,
    c: f64,
    horizon: usize,
    cap: usize,
) -> Result<EnvelopeMax> {
    if c.is_nan() || c <= 0.0 {
        return Err(Error::InvalidInput(format!("c must be positive, got {c}")));
    }
    let mut max = envelope_max(family, graph, comb, lambda, horizon, cap)?;
    max.value /= c;
    Ok(max)
}

/// One factor of a rewritten product.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Factor {
    /// Subsystem `A_l`.
    Plain(usize),
    /// The stable block `A_i^p A_j^q`.
    Combo,
    /// Commutator `A_l combo - combo A_l`.
    Commutator(usize),
}

/// A signed product of factors, written left to right as matrices multiply
/// (the rightmost factor acts first).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub sign: i8,
    pub factors: Vec<Factor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductDecomposition {
    /// The segment product, accumulated step by step from the signal.
    pub r: Matrix,
    /// Remaining word times `combo^m`.
    pub r1_times_am: Matrix,
    /// Sum of correction terms.
    pub r2: Matrix,
    /// Word left of `combo^m` after rewriting.
    pub r1_factors: Vec<Factor>,
    pub terms: Vec<Term>,
    pub term_count: usize,
    /// `||r - (r1_times_am + r2)||`.
    pub residual: f64,
    /// The segment starts with the stable vertex.
    pub starts_stable: bool,
}

impl ProductDecomposition {
    /// `N m(m+1)/2`, or `N m(m-1)/2` when the segment starts stable.
    pub fn term_bound(&self, n: usize, m: usize) -> usize {
        if self.starts_stable {
            n * m * (m - 1) / 2
        } else {
            n * m * (m + 1) / 2
        }
    }
}

/// `N m(m+1)/2 M1^{mN-1} M2^{m-1} eps`.
pub fn r2_norm_bound(inputs: &CertificateInputs) -> f64 {
    inputs.coupling()
}

fn eval_factors(
    family: &MatrixFamily,
    comb: &StableCombination,
    commutators: &[Matrix],
    factors: &[Factor],
) -> Result<Matrix> {
    let mut acc = Matrix::identity(family.dim());
    for f in factors.iter().rev() {
        let m = match *f {
            Factor::Plain(l) => family.get(l)?,
            Factor::Combo => &comb.combo,
            Factor::Commutator(l) => &commutators[l - 1],
        };
        acc = mat_mul(m, &acc)?;
    }
    Ok(acc)
}

/// Rewrites the product of a segment of `m(p+q) + mN` steps as
/// `R1 combo^m + R2`.
///
/// The first `m` stable blocks (in time) are moved to the right end one at a
/// time, each past the plain factors separating it from the blocks already
/// moved, using `combo A_l = A_l combo - E_l`. Every exchange leaves one
/// correction term with a single commutator factor.
pub fn decompose_r(family: &MatrixFamily, comb: &StableCombination, segment: &Walk) -> Result<ProductDecomposition> {
    let n = family.len();
    if segment.n != n {
        return Err(Error::DimensionMismatch { expected: n, found: segment.n });
    }
    let target = basis_length(comb, n);
    let duration = segment.duration(comb.block_len());
    if duration != target {
        return Err(Error::Precondition(format!("segment lasts {duration} steps, expected m(p+q) + mN = {target}")));
    }
    if segment.stable_count() < comb.m {
        return Err(Error::Precondition(format!(
            "segment has {} stable blocks, at least m = {} required",
            segment.stable_count(),
            comb.m
        )));
    }
    let stable = n + 1;
    let mut word: Vec<Factor> = segment
        .vertices
        .iter()
        .rev()
        .map(|&v| if v == stable { Factor::Combo } else { Factor::Plain(v) })
        .collect();
    let mut terms = Vec::new();
    for settled in 0..comb.m {
        let limit = word.len() - settled;
        let mut pos = word[..limit]
            .iter()
            .rposition(|f| *f == Factor::Combo)
            .expect("stable count checked above");
        while pos + 1 < limit {
            let Factor::Plain(l) = word[pos + 1] else {
                unreachable!("only plain factors lie between unsettled and settled blocks")
            };
            let mut factors = word[..pos].to_vec();
            factors.push(Factor::Commutator(l));
            factors.extend_from_slice(&word[pos + 2..]);
            terms.push(Term { sign: -1, factors });
            word.swap(pos, pos + 1);
            pos += 1;
        }
    }

    let commutators = family
        .matrices()
        .iter()
        .map(|a| commutator(a, &comb.combo))
        .collect::<Result<Vec<_>>>()?;
    let r1_times_am = eval_factors(family, comb, &commutators, &word)?;
    let mut r2 = Matrix::zeros(family.dim());
    for t in &terms {
        let v = eval_factors(family, comb, &commutators, &t.factors)?;
        r2 = r2.add(&v.scale(f64::from(t.sign)))?;
    }

    let mut r = Matrix::identity(family.dim());
    for s in walk_to_signal(segment, comb)?.expand() {
        r = mat_mul(family.get(s)?, &r)?;
    }
    let residual = operator_norm(&r.sub(&r1_times_am.add(&r2)?)?)?;
    let r1_factors = word[..word.len() - comb.m].to_vec();
    Ok(ProductDecomposition {
        r,
        r1_times_am,
        r2,
        r1_factors,
        term_count: terms.len(),
        terms,
        residual,
        starts_stable: segment.vertices.first() == Some(&stable),
    })
}

/// Every contiguous sub-walk of `walk` whose signal lasts exactly `duration`
/// steps.
pub fn exact_duration_segments(walk: &Walk, block_len: usize, duration: usize) -> Vec<Walk> {
    let cost = |v: usize| if v == walk.n + 1 { block_len } else { 1 };
    let mut out = Vec::new();
    for start in 0..walk.len() {
        let mut total = 0;
        for end in start..walk.len() {
            total += cost(walk.vertices[end]);
            if total == duration {
                out.push(Walk { n: walk.n, vertices: walk.vertices[start..=end].to_vec() });
            }
            if total >= duration {
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificate::compute_constants;
    use crate::graph::build_graph;

    fn diagonal() -> (MatrixFamily, StableCombination) {
        let f = MatrixFamily::new(vec![Matrix::diag(&[1.2, 0.4]).unwrap(), Matrix::diag(&[0.4, 1.2]).unwrap()])
            .unwrap();
        let c = StableCombination::new(&f, 1, 2, 1, 1, 512).unwrap();
        (f, c)
    }

    fn generic() -> (MatrixFamily, StableCombination) {
        let f = MatrixFamily::new(vec![
            Matrix::from_rows(&[[1.05, 0.08], [-0.03, 0.5]]).unwrap(),
            Matrix::from_rows(&[[0.45, -0.05], [0.06, 1.1]]).unwrap(),
            Matrix::from_rows(&[[1.02, 0.01], [0.02, 0.98]]).unwrap(),
        ])
        .unwrap();
        let c = StableCombination::new(&f, 1, 2, 1, 1, 512).unwrap();
        (f, c)
    }

    #[test]
    fn exchange_identity_is_tight() {
        let (f, c) = diagonal();
        assert_eq!(exchange_identity_residual(&f, &c).unwrap(), 0.0);
        let (f, c) = generic();
        let k = compute_constants(&f, &c).unwrap();
        assert!(k.epsilon > 0.0);
        assert!(exchange_identity_residual(&f, &c).unwrap() <= 1e-12 * k.m1 * k.m2);
    }

    #[test]
    fn walk_enumeration() {
        let (_, c) = diagonal();
        let g = build_graph(2).unwrap();
        assert!(enumerate_walks(&g, &c, 0, 100).unwrap().is_empty());
        let w = enumerate_walks(&g, &c, 1, 100).unwrap();
        let v: Vec<Vec<usize>> = w.into_iter().map(|w| w.vertices).collect();
        assert_eq!(v, vec![vec![1], vec![2]]);
        let w = enumerate_walks(&g, &c, 3, 100).unwrap();
        let v: Vec<Vec<usize>> = w.iter().map(|w| w.vertices.clone()).collect();
        assert_eq!(
            v,
            vec![
                vec![1],
                vec![1, 2],
                vec![1, 3],
                vec![2],
                vec![2, 3],
                vec![3],
                vec![3, 1],
                vec![3, 2],
            ]
        );
        for w in &w {
            Walk::new(&g, w.vertices.clone()).unwrap();
            assert!(w.duration(2) <= 3);
        }
        assert!(matches!(enumerate_walks(&g, &c, 3, 5), Err(Error::EnumerationCap { cap: 5 })));
    }

    #[test]
    fn induction_constant_is_at_least_one() {
        let (f, c) = diagonal();
        let g = build_graph(2).unwrap();
        let k = induction_constant(&f, &g, &c, 0.0, Some(0), 100).unwrap();
        assert_eq!(k.value, 1.0);
        assert_eq!(k.products, 0);
        let k = induction_constant(&f, &g, &c, 0.3, None, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(k.value >= 1.0);
    }

    // Brute force over explicit step sequences of the diagonal pair, where
    // every product is diagonal and its norm is the larger modulus.
    #[test]
    fn induction_constant_diagonal_regression() {
        let (f, c) = diagonal();
        let g = build_graph(2).unwrap();
        let k = induction_constant(&f, &g, &c, 0.3, None, DEFAULT_ENUMERATION_CAP).unwrap();
        let expand = |v: usize| if v == 3 { vec![2, 1] } else { vec![v] };
        let mut best: f64 = 1.0;
        let mut stack: Vec<Vec<usize>> = vec![vec![]];
        while let Some(path) = stack.pop() {
            let steps: Vec<usize> = path.iter().flat_map(|&v| expand(v)).collect();
            for t in 1..=steps.len().min(4) {
                let mut d = [1.0f64, 1.0];
                for &s in &steps[..t] {
                    let a = if s == 1 { [1.2, 0.4] } else { [0.4, 1.2] };
                    d = [d[0] * a[0], d[1] * a[1]];
                }
                best = best.max(d[0].abs().max(d[1].abs()) * (0.3 * t as f64).exp());
            }
            if steps.len() >= 4 {
                continue;
            }
            let next: Vec<usize> = match path.last() {
                None => vec![1, 2, 3],
                Some(&v) => g.out_neighbors(v),
            };
            for v in next {
                let mut p = path.clone();
                p.push(v);
                stack.push(p);
            }
        }
        assert!((k.value - best).abs() <= 1e-12 * best);
        // Attained by walk [2, 3] cut after two steps: A_2 A_2 = diag(0.16, 1.44).
        assert!((k.value - 1.44 * 0.6f64.exp()).abs() < 1e-12);
        assert_eq!(k.witness_len, 2);
        assert_eq!(k.witness.vertices, vec![2, 3]);
    }

    #[test]
    fn bound_check_up_to_basis_is_one_by_construction() {
        let (f, c) = generic();
        let g = build_graph(3).unwrap();
        let k = induction_constant(&f, &g, &c, 0.05, None, DEFAULT_ENUMERATION_CAP).unwrap();
        let b = bound_check_exhaustive(&f, &g, &c, 0.05, k.value, basis_length(&c, 3), DEFAULT_ENUMERATION_CAP)
            .unwrap();
        assert!(b.value <= 1.0);
    }

    #[test]
    fn bound_check_finds_violator_when_rate_is_too_fast() {
        let (f, c) = diagonal();
        let g = build_graph(2).unwrap();
        let lambda = 2.0 * (-(0.48f64).ln() / 2.0);
        let k = induction_constant(&f, &g, &c, lambda, None, DEFAULT_ENUMERATION_CAP).unwrap();
        let b = bound_check_exhaustive(&f, &g, &c, lambda, k.value, 20, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(b.value > 1.0);
        assert!(b.witness_len > 4);
        let w = Walk::new(&g, b.witness.vertices.clone()).unwrap();
        assert!(w.duration(2) >= b.witness_len);
    }

    #[test]
    fn decomposition_of_commuting_family_has_zero_correction() {
        let (f, c) = diagonal();
        let g = build_graph(2).unwrap();
        // m = 1, L0 = 1 * 2 + 2 = 4
        for vertices in [vec![1, 3, 1], vec![3, 1, 2], vec![1, 2, 3], vec![3, 2, 3]] {
            let w = Walk::new(&g, vertices).unwrap();
            if w.duration(2) != 4 {
                continue;
            }
            let d = decompose_r(&f, &c, &w).unwrap();
            assert_eq!(d.r2, Matrix::zeros(2));
            assert!(d.residual <= 1e-15);
            assert!(d.term_count <= d.term_bound(2, 1));
        }
    }

    #[test]
    fn decomposition_term_structure() {
        let (f, c) = generic();
        let g = build_graph(3).unwrap();
        // m = 1, p + q = 2, L0 = 5: walk 1, 2, 3, 4 has 3 plain steps then the block.
        let w = Walk::new(&g, vec![1, 2, 3, 4]).unwrap();
        let d = decompose_r(&f, &c, &w).unwrap();
        assert_eq!(d.term_count, 3);
        assert!(!d.starts_stable);
        assert_eq!(d.r1_factors, vec![Factor::Plain(3), Factor::Plain(2), Factor::Plain(1)]);
        for t in &d.terms {
            assert_eq!(t.factors.iter().filter(|f| matches!(f, Factor::Commutator(_))).count(), 1);
            assert_eq!(t.factors.len(), 3);
        }
        assert!(d.residual <= 1e-10 * operator_norm(&d.r).unwrap().max(1.0));
        let k = compute_constants(&f, &c).unwrap();
        assert!(operator_norm(&d.r2).unwrap() <= r2_norm_bound(&k) + 1e-9);

        let w = Walk::new(&g, vec![4, 1, 2, 3]).unwrap();
        let d = decompose_r(&f, &c, &w).unwrap();
        assert!(d.starts_stable);
        assert_eq!(d.term_count, 0);
        assert!(d.residual <= 1e-15);
    }

    #[test]
    fn decomposition_preconditions() {
        let (f, c) = generic();
        let g = build_graph(3).unwrap();
        assert!(matches!(
            decompose_r(&f, &c, &Walk::new(&g, vec![1, 2, 3]).unwrap()),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            decompose_r(&f, &c, &Walk::new(&g, vec![1, 2, 3, 4, 1, 2]).unwrap()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn segments_have_exact_duration() {
        let g = build_graph(3).unwrap();
        let w = Walk::new(&g, vec![1, 2, 4, 3, 4, 1, 4, 2]).unwrap();
        let segs = exact_duration_segments(&w, 2, 5);
        assert!(!segs.is_empty());
        for s in segs {
            assert_eq!(s.duration(2), 5);
        }
    }
}
