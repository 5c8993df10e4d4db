use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use switchcert_cli::{
    render_summary, run, write_outputs, CliError, CliResult, Config, InstanceSource, Stage, EXIT_OTHER,
};
use switchcert_core::graph::WalkPolicy;
use switchcert_core::search::{DEFAULT_M_MAX, DEFAULT_P_MAX, DEFAULT_Q_MAX};
use switchcert_core::simulate::{DEFAULT_HORIZON, DEFAULT_TRIALS};

/// Stabilizing switching signals for discrete-time switched linear systems
/// whose subsystems are all unstable.
///
/// Exit codes: 0 ok, 1 usage or internal error, 2 no stable combination,
/// 3 certificate infeasible, 4 simulated or exhaustive bound violated, 5 I/O.
#[derive(Debug, Parser)]
#[command(name = "switchcert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stability check, stable combination and constants.
    Analyze(Common),
    /// Evaluate the certificate and the envelope constant c.
    Certify(Common),
    /// Generate a walk and write its switching signal.
    Signal(Common),
    /// Simulate random initial conditions along a generated signal.
    Simulate(Common),
    /// Exhaustive envelope check and product decomposition checks.
    Verify(Common),
    /// Full pipeline: certify, synthesize, simulate, verify, report.
    Experiment(Common),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyKind {
    UniformRandom,
    RoundRobin,
    AlternateStable,
    Explicit,
}

#[derive(Debug, Args)]
struct Common {
    /// Instance file (JSON); a random instance is generated when omitted.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Number of subsystems of a generated instance.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// State dimension of a generated instance.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_P_MAX)]
    pmax: usize,
    #[arg(long, default_value_t = DEFAULT_Q_MAX)]
    qmax: usize,
    #[arg(long, default_value_t = DEFAULT_M_MAX)]
    mmax: usize,
    /// Rate to certify, or `auto` for the supremum backed off by 1e-6.
    #[arg(long, default_value = "auto", value_parser = parse_lambda)]
    lambda: LambdaArg,
    /// Try every contraction power up to this bound and keep the best rate.
    #[arg(long)]
    m_sweep: Option<usize>,
    #[arg(long, value_enum, default_value_t = PolicyKind::UniformRandom)]
    policy: PolicyKind,
    /// Start vertex for round-robin, plain vertex for alternate-stable.
    #[arg(long, default_value_t = 1)]
    policy_vertex: usize,
    /// Comma-separated vertices for the explicit policy.
    #[arg(long, value_delimiter = ',')]
    walk: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    horizon: usize,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    /// Add the edge from the stable vertex to itself.
    #[arg(long)]
    allow_stable_self_loop: bool,
    /// Output directory for report.json and CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug)]
struct LambdaArg(Option<f64>);

fn parse_lambda(s: &str) -> Result<LambdaArg, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(LambdaArg(None));
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(LambdaArg(Some(v))),
        _ => Err(format!("expected `auto` or a finite rate >= 0, got `{s}`")),
    }
}

impl Common {
    fn config(&self) -> CliResult<Config> {
        let source = match &self.instance {
            Some(path) => InstanceSource::File { path: path.clone() },
            None => InstanceSource::Random { n: self.n, dim: self.dim, seed: self.seed },
        };
        let policy = match self.policy {
            PolicyKind::UniformRandom => WalkPolicy::UniformRandom,
            PolicyKind::RoundRobin => WalkPolicy::RoundRobin { start: self.policy_vertex },
            PolicyKind::AlternateStable => WalkPolicy::AlternateStable { plain: self.policy_vertex },
            PolicyKind::Explicit if self.walk.is_empty() => {
                return Err(CliError::Usage("--policy explicit needs --walk".into()));
            }
            PolicyKind::Explicit => WalkPolicy::Explicit { vertices: self.walk.clone() },
        };
        let mut config = Config::new(source, self.seed);
        config.bounds.p_max = self.pmax;
        config.bounds.q_max = self.qmax;
        config.bounds.m_max = self.mmax;
        config.lambda = self.lambda.0;
        config.m_sweep = self.m_sweep;
        config.policy = policy;
        config.horizon = self.horizon;
        config.trials = self.trials;
        config.allow_stable_self_loop = self.allow_stable_self_loop;
        Ok(config)
    }
}

fn execute(stage: Stage, args: &Common) -> CliResult<i32> {
    let config = args.config()?;
    let (report, artifacts) = run(&config, stage)?;
    match stage {
        Stage::Signal if args.out.is_none() => {
            if let Some(signal) = &artifacts.signal {
                print!("{}", signal.to_csv());
            }
        }
        _ => print!("{}", render_summary(&report)),
    }
    if let Some(dir) = &args.out {
        write_outputs(dir, &report, &artifacts)?;
    }
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_OTHER as u8 } else { 0 });
        }
    };
    let (stage, args) = match &cli.command {
        Command::Analyze(a) => (Stage::Analyze, a),
        Command::Certify(a) => (Stage::Certify, a),
        Command::Signal(a) => (Stage::Signal, a),
        Command::Simulate(a) => (Stage::Simulate, a),
        Command::Verify(a) => (Stage::Verify, a),
        Command::Experiment(a) => (Stage::Experiment, a),
    };
    match execute(stage, args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
