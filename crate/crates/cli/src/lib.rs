//! Pipeline behind the `switchcert` binary: load or generate an instance,
//! find a stable combination, certify, synthesize a switching signal,
//! simulate, verify and report.
//!
//! Every random stream is derived from the single `--seed`:
//!
//! * generated instance: `generate_random_instance(n, dim, seed)`;
//! * walk: `derive_seed(seed, 0)`;
//! * trial `k` initial condition: `derive_seed(seed, k + 1)`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use switchcert_core::certificate::{check_certificate, sweep_contraction, Certificate, CertifyOptions};
use switchcert_core::graph::{walk_to_signal, SwitchGraph, SwitchingSignal, Walk, WalkGenerator, WalkPolicy};
use switchcert_core::instance::{generate_random_instance, parse_instance, InstanceFile};
use switchcert_core::linalg::{Vector, SCHUR_MARGIN};
use switchcert_core::oracle::{
    basis_length, bound_check_exhaustive, decompose_r, exact_duration_segments, induction_constant,
    r2_norm_bound, DEFAULT_ENUMERATION_CAP,
};
use switchcert_core::rng::{derive_seed, seeded, symmetric_f64};
use switchcert_core::search::{assert_all_unstable, find_stable_combination, SearchBounds, StableCombination};
use switchcert_core::simulate::{fit_decay, fmt17, norms_to_csv, product_norms, simulate, verify_ges, DecayFit};
use switchcert_core::MatrixFamily;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_NO_COMBINATION: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_BOUND_VIOLATED: i32 = 4;
pub const EXIT_IO: i32 = 5;

/// Extra steps past the basis length checked by `verify`.
pub const VERIFY_EXTRA: usize = 6;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Instance { path: PathBuf, source: switchcert_core::Error },
    #[error(transparent)]
    Core(#[from] switchcert_core::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Instance { .. } => EXIT_IO,
            CliError::Core(switchcert_core::Error::Io(_)) => EXIT_IO,
            CliError::Core(_) | CliError::Usage(_) => EXIT_OTHER,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InstanceSource {
    File { path: PathBuf },
    Random { n: usize, dim: usize, seed: u64 },
}

/// Everything a run depends on.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub source: InstanceSource,
    pub bounds: SearchBounds,
    /// `None` certifies at `lambda* (1 - 1e-6)`.
    pub lambda: Option<f64>,
    /// Re-derive `(m, rho)` up to this power and keep the best `lambda*`.
    pub m_sweep: Option<usize>,
    pub policy: WalkPolicy,
    pub seed: u64,
    pub horizon: usize,
    pub trials: usize,
    pub allow_stable_self_loop: bool,
    pub enumeration_cap: usize,
}

impl Config {
    pub fn new(source: InstanceSource, seed: u64) -> Self {
        Self {
            source,
            bounds: SearchBounds::default(),
            lambda: None,
            m_sweep: None,
            policy: WalkPolicy::UniformRandom,
            seed,
            horizon: switchcert_core::simulate::DEFAULT_HORIZON,
            trials: switchcert_core::simulate::DEFAULT_TRIALS,
            allow_stable_self_loop: false,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub p_max: usize,
    pub q_max: usize,
    pub m_max: usize,
    pub lambda: Option<f64>,
    pub m_sweep: Option<usize>,
    pub policy: WalkPolicy,
    pub horizon: usize,
    pub trials: usize,
    pub allow_stable_self_loop: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinationSummary {
    pub i: usize,
    pub j: usize,
    pub p: usize,
    pub q: usize,
    pub m: usize,
    pub rho: f64,
}

impl From<&StableCombination> for CombinationSummary {
    fn from(c: &StableCombination) -> Self {
        Self { i: c.i, j: c.j, p: c.p, q: c.q, m: c.m, rho: c.rho }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub m1: f64,
    pub m2: f64,
    pub epsilon: f64,
}

/// Certificate fields that survive JSON: non-finite values become `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub lambda: f64,
    pub lambda_star: Option<f64>,
    pub lhs: Option<f64>,
    pub rate_value: Option<f64>,
    pub feasible: bool,
    pub boundary: bool,
    /// Envelope constant over the basis length, computed only when feasible.
    pub c: Option<f64>,
    pub c_witness: Option<Vec<usize>>,
    pub basis_length: usize,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl CertificateSummary {
    fn new(cert: &Certificate, basis_length: usize) -> Self {
        Self {
            lambda: cert.lambda,
            lambda_star: cert.lambda_star,
            lhs: finite(cert.lhs_value),
            rate_value: finite(cert.rate_value),
            feasible: cert.feasible,
            boundary: cert.boundary,
            c: None,
            c_witness: None,
            basis_length,
        }
    }

    /// `CERT lhs=<v> lambda=<v> feasible=<0|1>`.
    pub fn summary_line(&self) -> String {
        let lhs = self.lhs.map_or_else(|| "inf".to_string(), fmt17);
        format!("CERT lhs={lhs} lambda={} feasible={}", fmt17(self.lambda), u8::from(self.feasible))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GesSummary {
    pub holds: bool,
    pub worst_margin: f64,
    pub worst_t: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub index: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub final_norm: f64,
    pub fit: Option<DecayFit>,
    /// `||x(t)|| <= c e^{-lambda t} ||x0||`; absent without a certificate.
    pub ges: Option<GesSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub horizon: usize,
    pub max_ratio: f64,
    pub witness: Vec<usize>,
    pub witness_len: usize,
    pub products: usize,
    pub segments: usize,
    pub max_residual: f64,
    pub max_term_count: usize,
    pub term_bound: usize,
    pub max_r2_norm: f64,
    pub r2_bound: f64,
    pub holds: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Ok,
    NoCombination,
    Infeasible,
    BoundViolated,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Ok => EXIT_OK,
            Outcome::NoCombination => EXIT_NO_COMBINATION,
            Outcome::Infeasible => EXIT_INFEASIBLE,
            Outcome::BoundViolated => EXIT_BOUND_VIOLATED,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    pub seed: u64,
    pub walk_seed: u64,
    pub source: InstanceSource,
    pub settings: Settings,
    pub instance: InstanceFile,
    /// Subsystems that are Schur stable, 1-based; should be empty.
    pub stable_subsystems: Vec<usize>,
    pub combination: Option<CombinationSummary>,
    pub constants: Option<Constants>,
    pub certificate: Option<CertificateSummary>,
    pub walk: Option<Vec<usize>>,
    /// Product-norm envelope check along the walk.
    pub product_ges: Option<GesSummary>,
    pub trials: Vec<TrialSummary>,
    pub violations: usize,
    pub verify: Option<VerifySummary>,
    pub outcome: Outcome,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        self.outcome.exit_code()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible") + "\n"
    }
}

/// Output of a run besides the report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Artifacts {
    pub signal: Option<SwitchingSignal>,
    pub product_norms: Option<Vec<f64>>,
    pub trial_norms: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Analyze,
    Certify,
    Signal,
    Simulate,
    Verify,
    Experiment,
}

pub fn load_family(source: &InstanceSource) -> CliResult<(MatrixFamily, InstanceFile)> {
    match source {
        InstanceSource::File { path } => {
            let family = parse_instance(path).map_err(|e| match e {
                switchcert_core::Error::Io(source) => CliError::Io { path: path.clone(), source },
                source => CliError::Instance { path: path.clone(), source },
            })?;
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
            let file = InstanceFile::from_family(&family, name, None);
            Ok((family, file))
        }
        &InstanceSource::Random { n, dim, seed } => {
            let r = generate_random_instance(n, dim, seed)?;
            let file = InstanceFile::from_family(&r.family, Some(format!("random-n{n}-d{dim}")), Some(seed));
            Ok((r.family, file))
        }
    }
}

fn graph_for(config: &Config, n: usize) -> CliResult<SwitchGraph> {
    Ok(if config.allow_stable_self_loop {
        SwitchGraph::with_stable_self_loop(n)?
    } else {
        SwitchGraph::new(n)?
    })
}

/// Initial condition for trial `index`, uniform on `[-1, 1)^dim`.
pub fn trial_x0(seed: u64, index: usize, dim: usize) -> (u64, Vector) {
    let s = derive_seed(seed, index as u64 + 1);
    let mut rng = seeded(s);
    let x = (0..dim).map(|_| symmetric_f64(&mut rng)).collect();
    (s, Vector::new(x).expect("finite draws"))
}

/// Runs `trials` simulations along `signal` in parallel; results are in
/// trial order.
pub fn run_trials(
    family: &MatrixFamily,
    signal: &SwitchingSignal,
    seed: u64,
    trials: usize,
    horizon: usize,
    envelope: Option<(f64, f64)>,
) -> CliResult<Vec<(TrialSummary, Vec<f64>)>> {
    (0..trials)
        .into_par_iter()
        .map(|index| {
            let (s, x0) = trial_x0(seed, index, family.dim());
            let traj = simulate(family, signal, &x0, horizon)?;
            let x0_norm = x0.norm();
            let ges = match envelope {
                Some((c, lambda)) if x0_norm > 0.0 => {
                    let rel: Vec<f64> = traj.norms.iter().map(|n| n / x0_norm).collect();
                    let g = verify_ges(&rel, c, lambda)?;
                    Some(GesSummary { holds: g.holds, worst_margin: g.worst_margin, worst_t: g.worst_t })
                }
                _ => None,
            };
            let summary = TrialSummary {
                index,
                seed: s,
                x0: x0.as_slice().to_vec(),
                final_norm: *traj.norms.last().expect("horizon + 1 norms"),
                fit: fit_decay(&traj.norms).ok().filter(|f| f.c_hat.is_finite() && f.lambda_hat.is_finite()),
                ges,
            };
            Ok((summary, traj.norms))
        })
        .collect()
}

/// Exhaustive envelope check to `basis length + 6` plus the decomposition
/// checks on every basis-length segment of `walk`.
pub fn verify_instance(
    family: &MatrixFamily,
    graph: &SwitchGraph,
    comb: &StableCombination,
    cert: &Certificate,
    c: f64,
    walk: &Walk,
    cap: usize,
) -> CliResult<VerifySummary> {
    let n = family.len();
    let l0 = basis_length(comb, n);
    let horizon = l0 + VERIFY_EXTRA;
    let env = bound_check_exhaustive(family, graph, comb, cert.lambda, c, horizon, cap)?;
    let r2_bound = r2_norm_bound(&cert.inputs);
    let mut summary = VerifySummary {
        horizon,
        max_ratio: env.value,
        witness: env.witness.vertices.clone(),
        witness_len: env.witness_len,
        products: env.products,
        segments: 0,
        max_residual: 0.0,
        max_term_count: 0,
        term_bound: n * comb.m * (comb.m + 1) / 2,
        max_r2_norm: 0.0,
        r2_bound,
        holds: true,
    };
    let mut decomposition_ok = true;
    for seg in exact_duration_segments(walk, comb.block_len(), l0) {
        if seg.stable_count() < comb.m {
            continue;
        }
        let d = decompose_r(family, comb, &seg)?;
        let r_norm = switchcert_core::linalg::operator_norm(&d.r)?;
        let r2_norm = switchcert_core::linalg::operator_norm(&d.r2)?;
        summary.segments += 1;
        summary.max_residual = summary.max_residual.max(d.residual / r_norm.max(1.0));
        summary.max_term_count = summary.max_term_count.max(d.term_count);
        summary.max_r2_norm = summary.max_r2_norm.max(r2_norm);
        decomposition_ok &= d.residual <= 1e-10 * r_norm.max(1.0)
            && d.term_count <= d.term_bound(n, comb.m)
            && r2_norm <= r2_bound + 1e-9;
    }
    summary.holds = env.value <= 1.0 && decomposition_ok;
    Ok(summary)
}

/// Runs the pipeline up to `stage`.
pub fn run(config: &Config, stage: Stage) -> CliResult<(RunReport, Artifacts)> {
    if config.horizon == 0 {
        return Err(CliError::Usage("--horizon must be at least 1".into()));
    }
    let (family, instance) = load_family(&config.source)?;
    let walk_seed = derive_seed(config.seed, 0);
    let mut report = RunReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        walk_seed,
        source: config.source.clone(),
        settings: Settings {
            p_max: config.bounds.p_max,
            q_max: config.bounds.q_max,
            m_max: config.bounds.m_max,
            lambda: config.lambda,
            m_sweep: config.m_sweep,
            policy: config.policy.clone(),
            horizon: config.horizon,
            trials: config.trials,
            allow_stable_self_loop: config.allow_stable_self_loop,
        },
        instance,
        stable_subsystems: assert_all_unstable(&family, SCHUR_MARGIN)?,
        combination: None,
        constants: None,
        certificate: None,
        walk: None,
        product_ges: None,
        trials: Vec::new(),
        violations: 0,
        verify: None,
        outcome: Outcome::Ok,
    };
    let mut artifacts = Artifacts::default();

    let Some(mut comb) = find_stable_combination(&family, config.bounds, SCHUR_MARGIN)? else {
        report.outcome = Outcome::NoCombination;
        return Ok((report, artifacts));
    };
    if let Some(m_max) = config.m_sweep {
        comb = sweep_contraction(&family, &comb, m_max)?;
    }
    report.combination = Some((&comb).into());
    let cert = check_certificate(&family, &comb, CertifyOptions { lambda: config.lambda, epsilon_override: None })?;
    report.constants = Some(Constants { m1: cert.inputs.m1, m2: cert.inputs.m2, epsilon: cert.inputs.epsilon });
    if stage == Stage::Analyze {
        return Ok((report, artifacts));
    }

    let graph = graph_for(config, family.len())?;
    let mut summary = CertificateSummary::new(&cert, basis_length(&comb, family.len()));
    let needs_c = matches!(stage, Stage::Certify | Stage::Verify | Stage::Experiment) && cert.feasible;
    if needs_c {
        let env = induction_constant(&family, &graph, &comb, cert.lambda, None, config.enumeration_cap)?;
        summary.c = Some(env.value.max(1.0));
        summary.c_witness = Some(env.witness.vertices);
    }
    report.certificate = Some(summary.clone());
    if !cert.feasible {
        report.outcome = Outcome::Infeasible;
    }
    if stage == Stage::Certify {
        return Ok((report, artifacts));
    }

    let walk = WalkGenerator::new(&graph, config.policy.clone(), walk_seed)?.take_walk(config.horizon)?;
    let signal = walk_to_signal(&walk, &comb)?;
    report.walk = Some(walk.vertices.clone());
    artifacts.signal = Some(signal.clone());
    if stage == Stage::Signal {
        return Ok((report, artifacts));
    }

    let envelope = summary.c.map(|c| (c, cert.lambda));
    if matches!(stage, Stage::Simulate | Stage::Experiment) {
        let norms = product_norms(&family, &signal, config.horizon)?;
        if let Some((c, lambda)) = envelope {
            let g = verify_ges(&norms, c, lambda)?;
            report.product_ges = Some(GesSummary { holds: g.holds, worst_margin: g.worst_margin, worst_t: g.worst_t });
        }
        artifacts.product_norms = Some(norms);
        for (t, norms) in run_trials(&family, &signal, config.seed, config.trials, config.horizon, envelope)? {
            report.trials.push(t);
            artifacts.trial_norms.push(norms);
        }
        report.violations = report.trials.iter().filter(|t| t.ges.as_ref().is_some_and(|g| !g.holds)).count();
    }
    if matches!(stage, Stage::Verify | Stage::Experiment) {
        if let Some((c, _)) = envelope {
            report.verify = Some(verify_instance(&family, &graph, &comb, &cert, c, &walk, config.enumeration_cap)?);
        }
    }

    let violated = report.violations > 0
        || report.product_ges.as_ref().is_some_and(|g| !g.holds)
        || report.verify.as_ref().is_some_and(|v| !v.holds);
    if report.outcome == Outcome::Ok && violated {
        report.outcome = Outcome::BoundViolated;
    }
    Ok((report, artifacts))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Writes `report.json`, `signal.csv`, `product_norms.csv` and
/// `norms/trial_NNN.csv` under `dir`.
pub fn write_outputs(dir: &Path, report: &RunReport, artifacts: &Artifacts) -> CliResult<()> {
    let io = |source| CliError::Io { path: dir.to_path_buf(), source };
    std::fs::create_dir_all(dir).map_err(io)?;
    write_file(&dir.join("report.json"), &report.to_json())?;
    if let Some(signal) = &artifacts.signal {
        write_file(&dir.join("signal.csv"), &signal.to_csv())?;
    }
    if let Some(norms) = &artifacts.product_norms {
        write_file(&dir.join("product_norms.csv"), &norms_to_csv(norms))?;
    }
    if !artifacts.trial_norms.is_empty() {
        let norms_dir = dir.join("norms");
        std::fs::create_dir_all(&norms_dir).map_err(|source| CliError::Io { path: norms_dir.clone(), source })?;
        for (k, norms) in artifacts.trial_norms.iter().enumerate() {
            write_file(&norms_dir.join(format!("trial_{k:03}.csv")), &norms_to_csv(norms))?;
        }
    }
    Ok(())
}

/// Human-readable stdout summary.
pub fn render_summary(report: &RunReport) -> String {
    let mut out = String::new();
    if !report.stable_subsystems.is_empty() {
        let _ = writeln!(out, "warning: Schur-stable subsystems {:?}", report.stable_subsystems);
    }
    match &report.combination {
        None => {
            let s = &report.settings;
            let _ = writeln!(out, "no stable combination with p <= {}, q <= {}", s.p_max, s.q_max);
        }
        Some(c) => {
            let _ = writeln!(out, "combination i={} j={} p={} q={} m={} rho={}", c.i, c.j, c.p, c.q, c.m, fmt17(c.rho));
        }
    }
    if let Some(k) = &report.constants {
        let _ = writeln!(out, "constants M1={} M2={} eps={}", fmt17(k.m1), fmt17(k.m2), fmt17(k.epsilon));
    }
    if let Some(cert) = &report.certificate {
        if let Some(l) = cert.lambda_star {
            let _ = writeln!(out, "lambda_star={}", fmt17(l));
        }
        if let Some(c) = cert.c {
            let _ = writeln!(out, "c={} basis_length={}", fmt17(c), cert.basis_length);
        }
        let _ = writeln!(out, "{}", cert.summary_line());
    }
    if !report.trials.is_empty() {
        let fits: Vec<f64> = report.trials.iter().filter_map(|t| t.fit.map(|f| f.lambda_hat)).collect();
        if !fits.is_empty() {
            let mean = fits.iter().sum::<f64>() / fits.len() as f64;
            let _ = writeln!(out, "trials={} mean_lambda_hat={}", report.trials.len(), fmt17(mean));
        }
        let _ = writeln!(out, "violations={}", report.violations);
    }
    if let Some(v) = &report.verify {
        let _ = writeln!(
            out,
            "verify L={} max_ratio={} segments={} holds={}",
            v.horizon,
            fmt17(v.max_ratio),
            v.segments,
            u8::from(v.holds)
        );
    }
    let _ = writeln!(out, "outcome={}", serde_json::to_value(report.outcome).expect("enum").as_str().unwrap_or(""));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diagonal_file() -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), r#"{"dim": 2, "matrices": [[[1.2, 0], [0, 0.4]], [[0.4, 0], [0, 1.2]]]}"#).unwrap();
        f
    }

    #[test]
    fn diagonal_certifies() {
        let f = diagonal_file();
        let cfg = Config::new(InstanceSource::File { path: f.path().to_path_buf() }, 0);
        let (report, _) = run(&cfg, Stage::Certify).unwrap();
        let cert = report.certificate.unwrap();
        assert!(cert.feasible);
        assert!((cert.lambda_star.unwrap() - (-(0.48f64).ln() / 2.0)).abs() < 1e-12);
        assert_eq!(report.constants.unwrap().epsilon, 0.0);
        assert_eq!(report.outcome, Outcome::Ok);
        assert!(cert.summary_line().starts_with("CERT lhs="));
    }

    #[test]
    fn missing_file_is_io() {
        let cfg = Config::new(InstanceSource::File { path: "/nonexistent/x.json".into() }, 0);
        assert_eq!(run(&cfg, Stage::Analyze).unwrap_err().exit_code(), EXIT_IO);
    }

    #[test]
    fn report_round_trips() {
        let mut cfg = Config::new(InstanceSource::Random { n: 3, dim: 2, seed: 29 }, 29);
        cfg.trials = 4;
        cfg.horizon = 30;
        let (report, _) = run(&cfg, Stage::Experiment).unwrap();
        let back: RunReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn trials_are_ordered_and_deterministic() {
        let cfg = Config::new(InstanceSource::Random { n: 2, dim: 2, seed: 121 }, 5);
        let (a, _) = run(&cfg, Stage::Simulate).unwrap();
        let (b, _) = run(&cfg, Stage::Simulate).unwrap();
        assert_eq!(a, b);
        assert!(a.trials.iter().enumerate().all(|(k, t)| t.index == k));
    }
}
