use std::process::Command;

use semibandit::envs::{block_covariance, Environment};
use semibandit::harness::{
    self, aggregate, checkpoint_grid, ExperimentConfig, Format, RegretTrace, AGGREGATE_HEADER, TRACE_HEADER,
};
use semibandit::policies::{Mode, PolicyConfig, PolicyKind};
use semibandit::{Action, ActionSpace, Error};

fn env() -> Environment {
    Environment::thm1(4, 2, block_covariance(4, 2, 1.0, 0.2), 0.4).unwrap()
}

fn escb() -> PolicyConfig {
    PolicyConfig::new(PolicyKind::EscbC, Mode::Exact)
}

#[test]
fn trace_accounts_every_round() {
    let env = env();
    let tr = harness::run(&escb(), &env, 500, 3).unwrap();
    assert_eq!(tr.records.len(), 500);
    let mut cum = 0.0;
    for (k, r) in tr.records.iter().enumerate() {
        assert_eq!(r.t, k as u64 + 1);
        let a = Action::parse_label(&r.action).unwrap();
        assert_eq!(r.gap, env.instance().gap(&a).unwrap());
        cum += r.gap;
        assert_eq!(r.cum_regret, cum);
    }
    assert_eq!(tr.regret_at(0), 0.0);
    assert_eq!(tr.regret_at(10_000), tr.final_regret());
}

#[test]
fn deterministic_outcomes_keep_the_truth_inside_every_region() {
    let env = Environment::gaussian(ActionSpace::partition(4, 2).unwrap(), vec![1.0, 1.0, 0.0, 0.0], vec![0.0; 16]).unwrap();
    let star = env.instance().optimal_action().clone();
    let opt = env.instance().optimal_value();
    let tr = harness::run_instrumented(&escb(), &env, 3000, 0, |view| {
        if !view.diagnostics.initialization {
            let region = view.policy.region(&star, view.t)?;
            assert!(region.center.iter().all(|c| *c == 1.0));
            assert!(region.offsets.iter().all(|o| *o > 0.0));
            assert!(view.diagnostics.value >= opt);
        }
        Ok(())
    })
    .unwrap();
    let plays = |r: std::ops::Range<usize>| tr.records[r].iter().filter(|x| x.gap > 0.0).count();
    let (first, second) = (plays(0..1500), plays(1500..3000));
    assert!(second * 2 < first, "suboptimal plays: {first} then {second}");
}

#[test]
fn seed_order_does_not_change_aggregates() {
    let env = env();
    let fwd = ExperimentConfig::new(escb(), 400, vec![1, 2, 3, 4, 5]);
    let rev = ExperimentConfig::new(escb(), 400, vec![5, 4, 3, 2, 1]);
    let (_, a) = harness::replicate(&fwd, &env).unwrap();
    let (_, b) = harness::replicate(&rev, &env).unwrap();
    for (p, q) in a.points.iter().zip(&b.points) {
        assert_eq!(p.t, q.t);
        assert!((p.mean_regret - q.mean_regret).abs() <= 1e-9);
        assert!((p.sd_regret - q.sd_regret).abs() <= 1e-9);
    }
}

#[test]
fn aggregate_statistics_match_direct_computation() {
    let env = env();
    let traces: Vec<RegretTrace> = (0..4).map(|s| harness::run(&escb(), &env, 200, s).unwrap()).collect();
    let agg = aggregate(&traces, &[1, 50, 200]).unwrap();
    for p in &agg.points {
        let v: Vec<f64> = traces.iter().map(|t| t.records[p.t as usize - 1].cum_regret).collect();
        let mean = v.iter().sum::<f64>() / 4.0;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
        assert!((p.mean_regret - mean).abs() < 1e-12 && (p.sd_regret - sd).abs() < 1e-12);
        assert_eq!(p.n_seeds, 4);
    }
    let single = aggregate(&traces[..1], &[200]).unwrap();
    assert_eq!(single.points[0].mean_regret, traces[0].final_regret());
    assert_eq!(single.points[0].sd_regret, 0.0);
}

#[test]
fn duplicate_and_missing_seeds_are_rejected() {
    let env = env();
    assert!(matches!(harness::replicate(&ExperimentConfig::new(escb(), 10, vec![1, 1]), &env), Err(Error::OutOfRange(_))));
    assert!(harness::replicate(&ExperimentConfig::new(escb(), 10, vec![]), &env).is_err());
    assert!(harness::run(&escb(), &env, 0, 0).is_err());
}

#[test]
fn csv_parses_back_to_full_precision() {
    let env = env();
    let traces = vec![harness::run(&escb(), &env, 100, 9).unwrap()];
    let mut buf = Vec::new();
    harness::write_traces_csv(&traces, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(TRACE_HEADER));
    for (line, r) in lines.zip(&traces[0].records) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0], "9");
        assert_eq!(cols[1].parse::<u64>().unwrap(), r.t);
        assert_eq!(cols[2], r.action);
        assert_eq!(cols[3].parse::<f64>().unwrap().to_bits(), r.gap.to_bits());
        assert_eq!(cols[4].parse::<f64>().unwrap().to_bits(), r.cum_regret.to_bits());
    }
}

#[test]
fn json_export_roundtrips() {
    let env = env();
    let exp = ExperimentConfig::new(escb(), 50, vec![0, 1]);
    let (traces, agg) = harness::replicate(&exp, &env).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let tp = dir.path().join("nested/traces.json");
    let ap = dir.path().join("agg.json");
    harness::export_traces(&traces, &tp, Format::Json).unwrap();
    harness::export_aggregate(&agg, &ap, Format::Json).unwrap();
    let back: Vec<RegretTrace> = serde_json::from_str(&std::fs::read_to_string(&tp).unwrap()).unwrap();
    assert_eq!(back, traces);
    let back: harness::Aggregate = serde_json::from_str(&std::fs::read_to_string(&ap).unwrap()).unwrap();
    assert_eq!(back, agg);
    assert_eq!(agg.points.len(), checkpoint_grid(50, 100).len());
}

#[test]
fn digests_identify_env_and_policy() {
    let a = harness::run(&escb(), &env(), 5, 0).unwrap();
    let b = harness::run(&PolicyConfig::new(PolicyKind::CucbV, Mode::Exact), &env(), 5, 0).unwrap();
    let c = harness::run(&escb(), &Environment::thm1(4, 2, block_covariance(4, 2, 1.0, 0.0), 0.4).unwrap(), 5, 0).unwrap();
    assert_eq!(a.env_digest.len(), 16);
    assert_eq!(a.env_digest, b.env_digest);
    assert_ne!(a.policy_digest, b.policy_digest);
    assert_ne!(a.env_digest, c.env_digest);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_semibandit"))
}

#[test]
fn cli_run_writes_traces_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("env.toml"), "kind = \"thm3\"\nn = 8\nm = 4\ns = 2\ndelta = 0.05\n").unwrap();
    let out = cli()
        .current_dir(dir.path())
        .args(["run", "--env", "env.toml", "--policy", "escb-c-sparse", "--T", "200", "--seeds", "3"])
        .args(["--out", "t.csv", "--aggregate", "a.csv", "--checkpoints", "10"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let traces = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(traces.lines().count(), 1 + 3 * 200);
    let agg = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(agg.lines().next(), Some(AGGREGATE_HEADER));
    assert!(agg.lines().last().unwrap().starts_with("200,"));
}

#[test]
fn cli_errors_exit_with_code_two() {
    let out = cli().args(["run", "--env", "/nonexistent.toml", "--policy", "cucb-v", "--T", "10", "--out", "x.csv"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn cli_oracle_check_passes() {
    let out = cli().args(["oracle-check", "--seed", "0"]).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.lines().all(|l| l.starts_with("[PASS]")));
}
