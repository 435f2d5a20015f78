//! Brute-force and Monte-Carlo oracles used to cross-check the solvers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::confidence::{build_region, cov_radius, RegionKind, RegionSpec};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::instance::{Action, ActionSpace};
use crate::optimize::{greedy_max, level_distribution, lovasz_eval, region_max, round_levels, FnSetFunction};
use crate::stats::Statistics;

/// Largest `ξ` whose cost on coordinate `i` fits in `budget`.
fn last_coordinate(region: &RegionSpec, i: usize, budget: f64) -> f64 {
    if budget <= 0.0 {
        return 0.0;
    }
    let (k, w, o) = (region.slack_scale, region.weights[i], region.offsets[i]);
    let root = (budget * k + (budget * budget * k * k + 4.0 * w * budget * o).sqrt()) / (2.0 * w);
    match &region.half_width {
        Some(h) => root.min(h[i].max(0.0)),
        None => root,
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let mut v = Vec::new();
    let mut x = lo.max(0.0);
    while x < hi {
        v.push(x);
        x += step;
    }
    v.push(hi);
    v
}

/// Best value over a grid on the leading coordinates, with the last
/// coordinate set to its largest feasible value.
fn scan(region: &RegionSpec, ranges: &[(f64, f64)], step: f64) -> (f64, Vec<f64>) {
    let d = region.dim();
    let mut best = (f64::NEG_INFINITY, vec![0.0; d.saturating_sub(1)]);
    let mut prefix = Vec::with_capacity(d);
    fn rec(
        region: &RegionSpec,
        ranges: &[(f64, f64)],
        step: f64,
        prefix: &mut Vec<f64>,
        spent: f64,
        best: &mut (f64, Vec<f64>),
    ) {
        let d = region.dim();
        let p = prefix.len();
        if p + 1 == d {
            let last = last_coordinate(region, p, region.radius - spent);
            let v = prefix.iter().sum::<f64>() + last;
            if v > best.0 {
                *best = (v, prefix.clone());
            }
            return;
        }
        let (lo, hi) = ranges[p];
        for x in grid(lo, hi, step) {
            let c = spent + region.coordinate_cost(p, x);
            if c > region.radius {
                break;
            }
            prefix.push(x);
            rec(region, ranges, step, prefix, c, best);
            prefix.pop();
        }
    }
    rec(region, ranges, step, &mut prefix, 0.0, &mut best);
    best
}

fn permuted(region: &RegionSpec, order: &[usize]) -> RegionSpec {
    let pick = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    RegionSpec {
        center: pick(&region.center),
        weights: pick(&region.weights),
        slack_scale: region.slack_scale,
        offsets: pick(&region.offsets),
        radius: region.radius,
        half_width: region.half_width.as_ref().map(|h| pick(h)),
    }
}

/// Grid-search lower bound on the inner maximum for actions of at most
/// three arms. Every coordinate takes a turn as the one solved in closed
/// form while the others run over a grid of spacing `grid_step` on
/// `[0, ξ_max]`; the best grid point is then refined twice locally.
pub fn brute_region_max(region: &RegionSpec, a: &Action, grid_step: f64) -> Result<f64> {
    let d = a.len();
    if d > 3 {
        return Err(Error::OracleDimension(d));
    }
    if region.dim() != d {
        return Err(Error::OutOfRange("region does not match action".into()));
    }
    let center: f64 = region.center.iter().sum();
    if region.radius <= 0.0 || d == 0 {
        return Ok(center);
    }
    let mut best = f64::NEG_INFINITY;
    for free in 0..d {
        let order: Vec<usize> = (0..d).filter(|&i| i != free).chain([free]).collect();
        let r = permuted(region, &order);
        let xmax: Vec<f64> = (0..d).map(|i| r.single_coordinate_bound(i)).collect();
        let mut ranges: Vec<(f64, f64)> = xmax.iter().map(|&x| (0.0, x)).collect();
        let mut step = grid_step;
        let (mut value, mut at) = scan(&r, &ranges, step);
        for _ in 0..2 {
            for (p, &x) in at.iter().enumerate() {
                ranges[p] = ((x - step).max(0.0), (x + step).min(xmax[p]));
            }
            step /= 10.0;
            let (v, a2) = scan(&r, &ranges, step);
            if v > value {
                value = v;
                at = a2;
            }
        }
        best = best.max(value);
    }
    Ok(center + best)
}

/// A random region of dimension `dim` with moderate counts and offsets.
pub fn random_region<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> RegionSpec {
    let boxed = rng.random_bool(0.25);
    RegionSpec {
        center: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        weights: (0..dim).map(|_| rng.random_range(5.0..500.0)).collect(),
        slack_scale: dim as f64,
        offsets: (0..dim).map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.01..3.0) }).collect(),
        radius: if rng.random_bool(0.05) { 0.0 } else { rng.random_range(0.5..20.0) },
        half_width: boxed.then(|| (0..dim).map(|_| rng.random_range(0.01..0.5)).collect()),
    }
}

/// Outcome of one oracle comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Largest `|region_max − grid|` over `cases` random regions of dimension
/// at most three.
pub fn inner_solver_gap(cases: usize, grid_step: f64, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let d = rng.random_range(1..=3);
        let region = random_region(&mut rng, d);
        let a = Action::new(0..d);
        let exact = region_max(&region, &a)?.value;
        let brute = brute_region_max(&region, &a, grid_step)?;
        worst = worst.max((exact - brute).abs());
        if brute > exact + 1e-9 {
            worst = worst.max(brute - exact);
        }
    }
    Ok(worst)
}

/// Number of random set functions on `n` elements whose Monte-Carlo
/// extension estimate (with `draws` thresholds) is more than 3 standard
/// errors away from the exact value.
pub fn lovasz_monte_carlo_misses(cases: usize, n: usize, draws: usize, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut misses = 0;
    for _ in 0..cases {
        let mut table: Vec<f64> = (0..1usize << n).map(|_| rng.random_range(-1.0..1.0)).collect();
        table[0] = 0.0;
        let f = FnSetFunction::new(n, |s: &[usize]| table[s.iter().map(|&i| 1usize << i).sum::<usize>()]);
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let exact = lovasz_eval(&f, &x)?;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let u: f64 = rng.random();
            let set = round_levels(&x, u);
            let v = table[set.iter().map(|&i| 1usize << i).sum::<usize>()];
            s1 += v;
            s2 += v * v;
        }
        let k = draws as f64;
        let mean = s1 / k;
        let se = ((s2 / k - mean * mean).max(0.0) / k).sqrt();
        if (mean - exact).abs() > 3.0 * se + 1e-12 {
            misses += 1;
        }
    }
    Ok(misses)
}

/// Largest deviation, in standard errors, between empirical level-set
/// frequencies and the exact level-set law over `cases` random vectors.
pub fn rounding_frequency_z(cases: usize, n: usize, draws: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let dist = level_distribution(&x)?;
        let mut counts = vec![0usize; n + 1];
        for _ in 0..draws {
            let u: f64 = rng.random();
            counts[round_levels(&x, u).len()] += 1;
        }
        let k = draws as f64;
        let mut probs = vec![dist.empty_mass];
        probs.extend_from_slice(&dist.probs);
        for (c, p) in counts.iter().zip(&probs) {
            let se = (p * (1.0 - p) / k).sqrt();
            let dev = (*c as f64 / k - p).abs();
            if se > 0.0 {
                worst = worst.max(dev / se);
            } else if dev > 0.0 {
                worst = f64::INFINITY;
            }
        }
    }
    Ok(worst)
}

/// Random partition matroid or uniform matroid on at most six arms.
fn random_matroid<R: Rng + ?Sized>(rng: &mut R) -> Result<ActionSpace> {
    let n = rng.random_range(3..=6);
    if rng.random_bool(0.5) {
        ActionSpace::uniform_matroid(n, rng.random_range(1..=n))
    } else {
        let parts = rng.random_range(2..=3usize);
        let caps: Vec<usize> = (0..parts).map(|_| rng.random_range(1..=2)).collect();
        let m = caps.iter().sum();
        ActionSpace::matroid(
            n,
            m,
            move |s: &[usize]| (0..parts).all(|p| s.iter().filter(|&&i| i % parts == p).count() <= caps[p]),
            Some(10_000),
        )
    }
}

/// Number of violations of
/// `2 (F(A_g) − e_{A_g}ᵀμ̄) + e_{A_g}ᵀμ̄ ≥ F(A*)` for the sparse region
/// index `F` over `cases` random matroid instances.
pub fn greedy_certificate_violations(cases: usize, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..cases {
        let space = random_matroid(&mut rng)?;
        let n = space.n();
        let m = space.max_size();
        let s = rng.random_range(1..=n);
        let mut stats = Statistics::with_pairs(n, &[]);
        let rounds = rng.random_range(n..=20 * n);
        for r in 0..rounds {
            let a = if r < n { Action::new([r]) } else { Action::new((0..n).filter(|_| rng.random_bool(0.5))) };
            if a.is_empty() {
                continue;
            }
            let x: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.3) { rng.random::<f64>() } else { 0.0 }).collect();
            stats.record(&a, &x);
        }
        let t = stats.rounds() + 1;
        let f = |arms: &[usize]| -> Result<f64> {
            let a = Action::new(arms.iter().copied());
            region_max(&build_region(&a, &stats, t, m, RegionKind::Sparse { s })?, &a).map(|sol| sol.value)
        };
        let g = greedy_max(n, f, |set| space.is_independent(set))?;
        let greedy = Action::new(g.members);
        let linear: f64 = greedy.arms().iter().map(|&i| stats.mean(i)).sum::<Result<f64>>()?;
        let lhs = 2.0 * (g.value - linear) + linear;
        let mut best = f64::NEG_INFINITY;
        for a in space.enumerate(10_000)? {
            best = best.max(f(a.arms())?);
        }
        if lhs < best - 1e-9 {
            violations += 1;
        }
    }
    Ok(violations)
}

/// Per pair `(i, j)` with `i ≤ j`, the fraction of `reps` runs where
/// `|Σ*_ij − Σ̄_ij| > g_ij(t)` after playing all arms for `t − 1` rounds.
pub fn covariance_miss_rates(env: &Environment, t: u64, reps: usize, seed: u64) -> Result<Vec<((usize, usize), f64)>> {
    let n = env.n();
    let sigma = env.instance().sigma_star().ok_or_else(|| Error::InvalidEnvironment("covariance unknown".into()))?;
    let full = Action::new(0..n);
    let mut misses = vec![0usize; n * n];
    let mut x = vec![0.0; n];
    for r in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let mut stats = Statistics::dense(n);
        for _ in 1..t {
            env.sample_into(&mut rng, &mut x);
            stats.record(&full, &x);
        }
        for i in 0..n {
            for j in i..n {
                if (sigma[i * n + j] - stats.cov_estimate(i, j)?).abs() > cov_radius(&stats, i, j, t)? {
                    misses[i * n + j] += 1;
                }
            }
        }
    }
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            out.push(((i, j), misses[i * n + j] as f64 / reps as f64));
        }
    }
    Ok(out)
}

/// Fraction of `reps` runs (all arms played every round) in which the true
/// mean leaves the covariance region of the optimal action at one of the
/// `checkpoints`.
pub fn region_miss_rate(env: &Environment, checkpoints: &[u64], reps: usize, seed: u64) -> Result<f64> {
    let inst = env.instance();
    let n = env.n();
    let star = inst.optimal_action().clone();
    let m = inst.m();
    let truth: Vec<f64> = star.arms().iter().map(|&i| inst.mu_star()[i]).collect();
    let full = Action::new(0..n);
    let last = checkpoints.iter().copied().max().unwrap_or(0);
    let mut x = vec![0.0; n];
    let mut missed_runs = 0;
    for r in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let mut stats = Statistics::dense(n);
        let mut missed = false;
        for t in 1..=last {
            if t >= 2 && checkpoints.contains(&t) {
                let region = build_region(&star, &stats, t, m, RegionKind::Covariance)?;
                if !region.contains(&truth) {
                    missed = true;
                }
            }
            env.sample_into(&mut rng, &mut x);
            stats.record(&full, &x);
        }
        if missed {
            missed_runs += 1;
        }
    }
    Ok(missed_runs as f64 / reps as f64)
}

/// Four-arm Gaussian instance with mixed-sign correlations used by the
/// coverage experiments.
pub fn coverage_env() -> Result<Environment> {
    #[rustfmt::skip]
    let sigma = vec![
        1.0,  0.5, -0.3,  0.0,
        0.5,  0.8,  0.1, -0.2,
       -0.3,  0.1,  0.6,  0.25,
        0.0, -0.2,  0.25, 0.5,
    ];
    Environment::gaussian(ActionSpace::partition(4, 2)?, vec![0.3, 0.2, 0.1, 0.15], sigma)
}

/// Runs every oracle with the default sizes.
pub fn all_checks(seed: u64) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let mut push = |name: &'static str, r: Result<(bool, String)>| {
        let (passed, detail) = r.unwrap_or_else(|e| (false, format!("error: {e}")));
        out.push(CheckOutcome { name, passed, detail });
    };
    push(
        "inner-max-vs-grid",
        inner_solver_gap(100, 1e-3, seed).map(|g| (g <= 1e-4, format!("max |exact - grid| = {g:.3e} (tol 1e-4)"))),
    );
    push(
        "lovasz-monte-carlo",
        lovasz_monte_carlo_misses(50, 5, 20_000, seed)
            .map(|k| (k <= 2, format!("{k}/50 cases beyond 3 standard errors (allowed 2)"))),
    );
    push(
        "rounding-frequencies",
        rounding_frequency_z(10, 5, 100_000, seed).map(|z| (z <= 4.0, format!("max deviation {z:.2} standard errors"))),
    );
    push(
        "greedy-certificate",
        greedy_certificate_violations(100, seed).map(|v| (v == 0, format!("{v} violations in 100 instances"))),
    );
    push(
        "covariance-coverage",
        coverage_env().and_then(|env| covariance_miss_rates(&env, 1000, 200, seed)).map(|rates| {
            let worst = rates.iter().map(|r| r.1).fold(0.0, f64::max);
            (worst <= 0.01, format!("worst pair miss rate {worst:.3} (tol 0.01)"))
        }),
    );
    push(
        "region-coverage",
        coverage_env()
            .and_then(|env| region_miss_rate(&env, &[100, 300, 1000, 3000], 200, seed))
            .map(|f| (f <= 0.01, format!("miss rate {f:.3} (tol 0.01)"))),
    );
    out
}
