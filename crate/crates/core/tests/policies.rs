use std::f64::consts::E;

use semibandit::confidence::OutcomeRange;
use semibandit::envs::{block_covariance, Environment};
use semibandit::harness::{self, stream_rng};
use semibandit::policies::{Mode, Policy, PolicyConfig, PolicyKind};
use semibandit::{Action, ActionSpace, Error};

fn radius(t: f64, m: f64) -> f64 {
    let ll = if t > E { t.ln().ln() } else { 0.0 };
    8.0 * (t.ln() + ll) + 4.0 * E * m
}

fn g_diag(n: f64, t: f64) -> f64 {
    let l = t.ln();
    16.0 * (3.0 * l / n).max((3.0 * l / n).sqrt()) + (48.0 * l * l / (n * n)).sqrt() + (36.0 * l * l / (n * n)).sqrt()
}

#[test]
fn two_singletons_match_hand_solved_roots() {
    let space = ActionSpace::explicit(2, vec![Action::new([0]), Action::new([1])]).unwrap();
    let config = PolicyConfig::new(PolicyKind::EscbC, Mode::Exact);
    let mut p = Policy::new(config, space, None, None, 100, stream_rng(0, 1)).unwrap();
    let x = [0.6, 0.5];
    for t in 1..=2 {
        let (a, diag) = p.select(t).unwrap();
        assert!(diag.initialization);
        p.observe(&a, &x);
    }
    for _ in 0..4 {
        p.observe(&Action::new([0]), &x);
    }
    let t = 7.0;
    let d = radius(t, 1.0);
    let index = |mean: f64, n: f64| {
        let offset = g_diag(n, t);
        mean + (d + (d * d + 4.0 * n * d * offset).sqrt()) / (2.0 * n)
    };
    let (i0, i1) = (index(0.6, 5.0), index(0.5, 1.0));
    let (a, diag) = p.select(7).unwrap();
    let (want, value) = if i0 >= i1 { ([0], i0) } else { ([1], i1) };
    assert_eq!(a.arms(), &want);
    assert!((diag.value - value).abs() <= 1e-9 * value, "{} vs {}", diag.value, value);
}

fn small_env() -> Environment {
    Environment::thm1(6, 2, block_covariance(6, 2, 0.5, 0.3), 0.3).unwrap()
}

#[test]
fn every_kind_runs_in_exact_mode() {
    let env = small_env();
    for kind in [PolicyKind::EscbC, PolicyKind::EscbCSparse, PolicyKind::EscbCV, PolicyKind::CucbV, PolicyKind::CucbKl] {
        let mut config = PolicyConfig::new(kind, Mode::Exact);
        config.s = Some(2);
        let trace = harness::run(&config, &env, 300, 1).unwrap();
        assert_eq!(trace.records.len(), 300);
        assert!(trace.records.windows(2).all(|w| w[1].cum_regret >= w[0].cum_regret), "{kind}");
    }
}

#[test]
fn cucb_picks_the_top_indices() {
    let space = ActionSpace::uniform_matroid(5, 2).unwrap();
    let env = Environment::multinomial_sparse(space.clone(), vec![0.3, 0.25, 0.2, 0.15, 0.1], 2).unwrap();
    for kind in [PolicyKind::CucbV, PolicyKind::CucbKl] {
        let mut p = Policy::new(PolicyConfig::new(kind, Mode::Exact), space.clone(), env.outcome_range(), None, 500, stream_rng(0, 1))
            .unwrap();
        let mut rng = stream_rng(3, 0);
        for t in 1..=200 {
            let (a, diag) = p.select(t).unwrap();
            if let Some(idx) = &diag.indices {
                let mut sorted = idx.clone();
                sorted.sort_by(|a, b| b.total_cmp(a));
                assert!((a.value(idx) - sorted[0] - sorted[1]).abs() < 1e-12);
            }
            p.observe(&a, &env.sample(&mut rng));
        }
    }
}

#[test]
fn greedy_and_lovasz_modes_run_on_uniform_matroids() {
    let n = 6;
    let mut sigma = block_covariance(n, 3, 0.2, 0.5);
    sigma[1] = 0.0;
    sigma[n] = 0.0;
    let mu = vec![0.3, 0.1, -0.2, 0.25, 0.0, -0.1];
    let env = Environment::gaussian(ActionSpace::uniform_matroid(n, 3).unwrap(), mu, sigma).unwrap();
    for (kind, mode) in [
        (PolicyKind::EscbC, Mode::Greedy),
        (PolicyKind::EscbCV, Mode::Greedy),
        (PolicyKind::EscbC, Mode::Lovasz),
    ] {
        let trace = harness::run(&PolicyConfig::new(kind, mode), &env, 150, 2).unwrap();
        assert_eq!(trace.records.len(), 150);
        assert!(trace.records.iter().all(|r| Action::parse_label(&r.action).is_some_and(|a| !a.is_empty() && a.len() <= 3)));
    }
}

#[test]
fn unsupported_modes_are_rejected() {
    let partition = ActionSpace::partition(4, 2).unwrap();
    let uniform = ActionSpace::uniform_matroid(4, 2).unwrap();
    let make = |kind, mode, space: &ActionSpace| {
        Policy::new(PolicyConfig::new(kind, mode), space.clone(), None, Some(2), 10, stream_rng(0, 1))
    };
    assert!(matches!(make(PolicyKind::EscbC, Mode::Greedy, &partition), Err(Error::UnsupportedMode { .. })));
    assert!(matches!(make(PolicyKind::EscbC, Mode::Lovasz, &partition), Err(Error::UnsupportedMode { .. })));
    assert!(matches!(make(PolicyKind::EscbCSparse, Mode::Lovasz, &uniform), Err(Error::UnsupportedMode { .. })));
    assert!(make(PolicyKind::EscbC, Mode::Lovasz, &uniform).is_ok());
    let big = ActionSpace::uniform_matroid(40, 20).unwrap();
    assert!(matches!(make(PolicyKind::EscbC, Mode::Exact, &big), Err(Error::UnsupportedMode { .. })));
}

#[test]
fn sparse_policy_needs_a_sparsity_level() {
    let space = ActionSpace::partition(4, 2).unwrap();
    let r = Policy::new(PolicyConfig::new(PolicyKind::EscbCSparse, Mode::Exact), space, Some(OutcomeRange::UNIT), None, 10, stream_rng(0, 1));
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn rounds_start_at_one() {
    let space = ActionSpace::partition(4, 2).unwrap();
    let mut p = Policy::new(PolicyConfig::new(PolicyKind::CucbV, Mode::Exact), space, None, None, 10, stream_rng(0, 1)).unwrap();
    assert!(matches!(p.select(0), Err(Error::OutOfRange(_))));
}
