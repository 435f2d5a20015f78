use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use semibandit::config::LoadedEnvConfig;
use semibandit::harness::{self, oracle, ExperimentConfig, Format};
use semibandit::policies::{Mode, PolicyConfig, PolicyKind};

#[derive(Parser)]
#[command(name = "semibandit", version, about = "Combinatorial semi-bandit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    #[value(name = "escb-c")]
    EscbC,
    #[value(name = "escb-c-sparse")]
    EscbCSparse,
    #[value(name = "escb-c-v")]
    EscbCV,
    #[value(name = "cucb-v")]
    CucbV,
    #[value(name = "cucb-kl")]
    CucbKl,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::EscbC => PolicyKind::EscbC,
            PolicyArg::EscbCSparse => PolicyKind::EscbCSparse,
            PolicyArg::EscbCV => PolicyKind::EscbCV,
            PolicyArg::CucbV => PolicyKind::CucbV,
            PolicyArg::CucbKl => PolicyKind::CucbKl,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Greedy,
    Lovasz,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Greedy => Mode::Greedy,
            ModeArg::Lovasz => Mode::Lovasz,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a policy on an environment and write regret traces.
    Run {
        /// Environment description (TOML).
        #[arg(long)]
        env: PathBuf,
        #[arg(long, value_enum)]
        policy: PolicyArg,
        #[arg(long, value_enum, default_value = "exact")]
        mode: ModeArg,
        /// Horizon.
        #[arg(long = "T")]
        horizon: u64,
        /// Either a count k (seeds 0..k) or a comma-separated list.
        #[arg(long, default_value = "1")]
        seeds: String,
        /// Per-round traces.
        #[arg(long)]
        out: PathBuf,
        /// Mean and standard deviation at log-spaced checkpoints.
        #[arg(long)]
        aggregate: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        #[arg(long)]
        zeta: Option<f64>,
        /// Sparsity level for escb-c-sparse.
        #[arg(long)]
        s: Option<usize>,
        /// Largest action count enumerated in exact mode.
        #[arg(long)]
        enumeration_cap: Option<usize>,
        #[arg(long, default_value_t = 100)]
        checkpoints: usize,
    },
    /// Cross-check the solvers against brute-force and Monte-Carlo oracles.
    OracleCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let spec = spec.trim();
    if spec.contains(',') {
        spec.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed {s:?}")))
            .collect()
    } else {
        let k: u64 = spec.parse().with_context(|| format!("bad seed count {spec:?}"))?;
        if k == 0 {
            bail!("seed count must be positive");
        }
        Ok((0..k).collect())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            env,
            policy,
            mode,
            horizon,
            seeds,
            out,
            aggregate,
            format,
            zeta,
            s,
            enumeration_cap,
            checkpoints,
        } => {
            let environment = LoadedEnvConfig::from_file(&env)?.build().with_context(|| format!("building {}", env.display()))?;
            let mut pc = PolicyConfig::new(policy.into(), mode.into());
            if let Some(z) = zeta {
                pc.zeta = z;
            }
            pc.s = s;
            if let Some(c) = enumeration_cap {
                pc.enumeration_cap = c;
            }
            let mut exp = ExperimentConfig::new(pc, horizon, parse_seeds(&seeds)?);
            exp.checkpoints = checkpoints;
            let (traces, agg) = harness::replicate(&exp, &environment)?;
            harness::export_traces(&traces, &out, format.into())?;
            if let Some(path) = aggregate {
                harness::export_aggregate(&agg, &path, format.into())?;
            }
            let last = agg.points.last().expect("nonempty grid");
            println!(
                "{} {} T={} seeds={} mean regret {:.4} (sd {:.4})",
                exp.policy.kind, exp.policy.mode, horizon, last.n_seeds, last.mean_regret, last.sd_regret
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::OracleCheck { seed } => {
            let results = oracle::all_checks(seed);
            let mut ok = true;
            for r in &results {
                println!("[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                ok &= r.passed;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
