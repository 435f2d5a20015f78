//! Simulation loop, replication and export.

pub mod oracle;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::instance::Action;
use crate::policies::{Diagnostics, Policy, PolicyConfig};

const ENV_STREAM: u64 = 0;
const ROUNDING_STREAM: u64 = 1;

/// Generator for one named stream of run `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u64,
    /// Arms joined by `;`.
    pub action: String,
    pub gap: f64,
    pub cum_regret: f64,
}

/// Pseudo-regret trajectory of a single run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub seed: u64,
    pub env_digest: String,
    pub policy_digest: String,
    pub records: Vec<RoundRecord>,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_regret)
    }

    /// Cumulative regret after round `t` (zero before the first round).
    pub fn regret_at(&self, t: u64) -> f64 {
        let k = self.records.partition_point(|r| r.t <= t);
        if k == 0 {
            0.0
        } else {
            self.records[k - 1].cum_regret
        }
    }
}

/// Round-level view handed to instrumentation hooks, after selection and
/// before the outcome is observed.
pub struct RoundView<'a> {
    pub t: u64,
    pub action: &'a Action,
    pub diagnostics: &'a Diagnostics,
    pub policy: &'a Policy,
    pub env: &'a Environment,
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Short fingerprint of an environment's law parameters.
pub fn env_digest(env: &Environment) -> String {
    let inst = env.instance();
    let mut buf = Vec::new();
    buf.extend_from_slice(env.kind_name().as_bytes());
    buf.extend_from_slice(&(inst.n() as u64).to_le_bytes());
    buf.extend_from_slice(&(inst.m() as u64).to_le_bytes());
    for v in inst.mu_star().iter().chain(inst.sigma_star().unwrap_or(&[])) {
        buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    hex_digest(&buf)
}

pub fn policy_digest(config: &PolicyConfig) -> String {
    hex_digest(serde_json::to_string(config).expect("serializable").as_bytes())
}

/// Plays `horizon` rounds of `config` on `env`; fully determined by `seed`.
pub fn run(config: &PolicyConfig, env: &Environment, horizon: u64, seed: u64) -> Result<RegretTrace> {
    run_instrumented(config, env, horizon, seed, |_| Ok(()))
}

/// [`run`] with a hook called on every round.
pub fn run_instrumented<F>(
    config: &PolicyConfig,
    env: &Environment,
    horizon: u64,
    seed: u64,
    mut hook: F,
) -> Result<RegretTrace>
where
    F: FnMut(&RoundView<'_>) -> Result<()>,
{
    if horizon == 0 {
        return Err(Error::OutOfRange("horizon must be at least 1".into()));
    }
    let inst = env.instance();
    let mut env_rng = stream_rng(seed, ENV_STREAM);
    let mut policy = Policy::new(
        config.clone(),
        inst.space().clone(),
        env.outcome_range(),
        env.sparsity(),
        horizon,
        stream_rng(seed, ROUNDING_STREAM),
    )?;
    let mut records = Vec::with_capacity(horizon as usize);
    let mut x = vec![0.0; env.n()];
    let mut cum = 0.0;
    for t in 1..=horizon {
        let at_round = |e: Error| Error::Round { round: t, source: Box::new(e) };
        let (a, diag) = policy.select(t).map_err(at_round)?;
        hook(&RoundView { t, action: &a, diagnostics: &diag, policy: &policy, env }).map_err(at_round)?;
        env.sample_into(&mut env_rng, &mut x);
        policy.observe(&a, &x);
        let gap = inst.gap(&a).map_err(at_round)?;
        cum += gap;
        records.push(RoundRecord { t, action: a.label(), gap, cum_regret: cum });
    }
    Ok(RegretTrace { seed, env_digest: env_digest(env), policy_digest: policy_digest(config), records })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub policy: PolicyConfig,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    /// Approximate size of the checkpoint grid.
    pub checkpoints: usize,
}

impl ExperimentConfig {
    pub fn new(policy: PolicyConfig, horizon: u64, seeds: Vec<u64>) -> Self {
        ExperimentConfig { policy, horizon, seeds, checkpoints: 100 }
    }
}

/// About `points` log-spaced rounds in `[1, horizon]`, always including
/// both ends.
pub fn checkpoint_grid(horizon: u64, points: usize) -> Vec<u64> {
    if horizon <= 1 || points <= 1 {
        return vec![horizon.max(1)];
    }
    let top = (horizon as f64).ln();
    let mut grid: Vec<u64> = (0..points)
        .map(|k| ((top * k as f64 / (points - 1) as f64).exp().round() as u64).clamp(1, horizon))
        .collect();
    grid.push(horizon);
    grid.sort_unstable();
    grid.dedup();
    grid
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub t: u64,
    pub mean_regret: f64,
    pub sd_regret: f64,
    pub n_seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub points: Vec<AggregatePoint>,
}

impl Aggregate {
    pub fn at(&self, t: u64) -> Option<&AggregatePoint> {
        self.points.iter().find(|p| p.t == t)
    }
}

/// Sum of the values in sorted order, hence independent of their order.
fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Mean and sample standard deviation of cumulative regret across traces
/// at each checkpoint.
pub fn aggregate(traces: &[RegretTrace], grid: &[u64]) -> Result<Aggregate> {
    if traces.is_empty() {
        return Err(Error::OutOfRange("no traces to aggregate".into()));
    }
    let k = traces.len() as f64;
    let points = grid
        .iter()
        .map(|&t| {
            let mut vals: Vec<f64> = traces.iter().map(|tr| tr.regret_at(t)).collect();
            let mean = ordered_sum(&mut vals) / k;
            let sd = if traces.len() < 2 {
                0.0
            } else {
                let mut sq: Vec<f64> = vals.iter().map(|v| (v - mean) * (v - mean)).collect();
                (ordered_sum(&mut sq) / (k - 1.0)).sqrt()
            };
            AggregatePoint { t, mean_regret: mean, sd_regret: sd, n_seeds: traces.len() }
        })
        .collect();
    Ok(Aggregate { points })
}

/// Runs every seed (in parallel) and aggregates on the log-spaced grid.
pub fn replicate(config: &ExperimentConfig, env: &Environment) -> Result<(Vec<RegretTrace>, Aggregate)> {
    if config.seeds.is_empty() {
        return Err(Error::OutOfRange("at least one seed is required".into()));
    }
    let mut seen = HashSet::new();
    if let Some(&dup) = config.seeds.iter().find(|s| !seen.insert(**s)) {
        return Err(Error::OutOfRange(format!("seed {dup} listed twice")));
    }
    let traces = config
        .seeds
        .par_iter()
        .map(|&seed| {
            run(&config.policy, env, config.horizon, seed).map_err(|e| Error::Seed { seed, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    let agg = aggregate(&traces, &checkpoint_grid(config.horizon, config.checkpoints))?;
    Ok((traces, agg))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub const TRACE_HEADER: &str = "seed,t,action,gap,cum_regret";
pub const AGGREGATE_HEADER: &str = "t,mean_regret,sd_regret,n_seeds";

pub fn write_traces_csv<W: Write>(traces: &[RegretTrace], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for tr in traces {
        for r in &tr.records {
            writeln!(w, "{},{},{},{},{}", tr.seed, r.t, r.action, fmt_float(r.gap), fmt_float(r.cum_regret))?;
        }
    }
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(agg: &Aggregate, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{AGGREGATE_HEADER}")?;
    for p in &agg.points {
        writeln!(w, "{},{},{},{}", p.t, fmt_float(p.mean_regret), fmt_float(p.sd_regret), p.n_seeds)?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn export_traces(traces: &[RegretTrace], path: &Path, format: Format) -> Result<()> {
    let mut w = create(path)?;
    match format {
        Format::Csv => write_traces_csv(traces, &mut w)?,
        Format::Json => serde_json::to_writer_pretty(&mut w, traces).map_err(std::io::Error::from)?,
    }
    w.flush()?;
    Ok(())
}

pub fn export_aggregate(agg: &Aggregate, path: &Path, format: Format) -> Result<()> {
    let mut w = create(path)?;
    match format {
        Format::Csv => write_aggregate_csv(agg, &mut w)?,
        Format::Json => serde_json::to_writer_pretty(&mut w, agg).map_err(std::io::Error::from)?,
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_log_spaced_and_complete() {
        let g = checkpoint_grid(10_000, 100);
        assert_eq!(g[0], 1);
        assert_eq!(*g.last().unwrap(), 10_000);
        assert!(g.len() > 80 && g.len() <= 101);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(checkpoint_grid(1, 100), vec![1]);
    }

    #[test]
    fn float_format_has_seventeen_digits() {
        let v = 0.1f64 + 0.2;
        let s = fmt_float(v);
        assert_eq!(s.parse::<f64>().unwrap(), v);
        assert_eq!(s.split('e').next().unwrap().replace('.', "").len(), 17);
    }
}
