//! Maximization machinery.
//!
//! * [`region_max`]: the inner problem `max Σ_i ξ_i` over a separable
//!   region, solved through its scalar Lagrange dual.
//! * [`argmax_action`]: the outer problem over an enumerable space.
//! * [`greedy_max`]: greedy over a matroid independence test.
//! * Lovász extensions, projected supergradient ascent over their concave
//!   composites, and level-set rounding back to sets.

use rand::Rng;

use crate::confidence::RegionSpec;
use crate::error::{Error, Result};
use crate::instance::{Action, ActionSpace};

const MAX_BISECTIONS: usize = 200;
const SQRT_EPS: f64 = 1e-12;

/// Maximizer of the inner problem for one action.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerSolution {
    /// `Σ_i center_i + Σ_i ξ_i`.
    pub value: f64,
    pub xi: Vec<f64>,
    /// Lagrange multiplier of the region constraint.
    pub multiplier: f64,
    pub iterations: usize,
    /// Upper bound on the optimal value from the dual function.
    pub dual_bound: f64,
}

impl InnerSolution {
    pub fn bonus(&self) -> f64 {
        self.xi.iter().sum()
    }
}

/// Best response of one coordinate to multiplier `lambda`:
/// `argmax_{0 ≤ ξ ≤ cap} ξ − λ N ξ² / (kξ + o)`.
///
/// Stationarity gives `(kξ + o)² = λN(kξ² + 2oξ)`, i.e.
/// `kξ + o = o √(λN / (λN − k))` whenever `λN > k`.
fn coordinate_response(lambda: f64, w: f64, k: f64, o: f64, cap: f64) -> f64 {
    if cap <= 0.0 {
        return 0.0;
    }
    let lw = lambda * w;
    if lw <= k {
        return cap;
    }
    if o <= 0.0 {
        return 0.0;
    }
    let r = (lw / (lw - k)).sqrt();
    (o * (r - 1.0) / k).min(cap)
}

/// Maximizes `Σ_i ξ_i` over the region built for action `a`, with `ξ ≥ 0`
/// and `ξ_i ≤ half_width_i` when the region carries a box.
///
/// Bisects the scalar multiplier until the constraint residual is at most
/// `1e-10 · max(1, radius)` or the bracket collapses; coordinates with zero
/// offset (linear cost) absorb any leftover budget at their threshold price.
pub fn region_max(region: &RegionSpec, a: &Action) -> Result<InnerSolution> {
    let d = region.dim();
    if a.len() != d || region.weights.len() != d || region.offsets.len() != d {
        return Err(Error::OutOfRange(format!("region of dimension {d} does not match action {a}")));
    }
    let center_sum: f64 = region.center.iter().sum();
    let caps: Vec<f64> = match &region.half_width {
        Some(h) => h.iter().map(|&v| v.max(0.0)).collect(),
        None => vec![f64::INFINITY; d],
    };
    let k = region.slack_scale;
    let delta = region.radius;
    if delta <= 0.0 || d == 0 {
        return Ok(InnerSolution {
            value: center_sum,
            xi: vec![0.0; d],
            multiplier: f64::INFINITY,
            iterations: 0,
            dual_bound: center_sum,
        });
    }
    let respond = |lambda: f64| -> Vec<f64> {
        (0..d)
            .map(|i| coordinate_response(lambda, region.weights[i], k, region.offsets[i], caps[i]))
            .collect()
    };
    let cost = |xi: &[f64]| -> f64 {
        if xi.iter().any(|v| v.is_infinite()) {
            f64::INFINITY
        } else {
            region.constraint(xi)
        }
    };

    // Everything boxed and the full box affordable.
    if caps.iter().all(|c| c.is_finite()) && region.constraint(&caps) <= delta {
        let value = center_sum + caps.iter().sum::<f64>();
        return Ok(InnerSolution { value, xi: caps, multiplier: 0.0, iterations: 0, dual_bound: value });
    }

    let mut lo = (0..d)
        .filter(|&i| caps[i].is_infinite())
        .map(|i| k / region.weights[i])
        .fold(0.0f64, f64::max);
    let mut hi = if lo > 0.0 { 2.0 * lo } else { 1.0 };
    let mut iterations = 0;
    while cost(&respond(hi)) > delta {
        hi *= 2.0;
        iterations += 1;
        if iterations > 2000 {
            return Err(Error::OutOfRange("inner multiplier diverged".into()));
        }
    }
    let tol = 1e-10 * delta.max(1.0);
    let mut xi_hi = respond(hi);
    let mut h_hi = cost(&xi_hi);
    for _ in 0..MAX_BISECTIONS {
        if delta - h_hi <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let xi_mid = respond(mid);
        let h_mid = cost(&xi_mid);
        if h_mid > delta {
            lo = mid;
        } else {
            hi = mid;
            xi_hi = xi_mid;
            h_hi = h_mid;
        }
    }
    let mut xi = xi_hi;
    let base: f64 = xi.iter().sum();
    let dual_bound = center_sum + base + hi * (delta - h_hi).max(0.0);

    // Linear coordinates switch off at λ = k / N_i; spend what is left on
    // those whose threshold lies inside the final bracket.
    let mut leftover = delta - h_hi;
    for i in 0..d {
        if leftover <= 0.0 {
            break;
        }
        if region.offsets[i] <= 0.0 {
            let w = region.weights[i];
            let straddles = lo * w <= k * (1.0 + 1e-12) && hi * w >= k * (1.0 - 1e-12);
            if straddles && xi[i] < caps[i] {
                let unit = region.weights[i] / k;
                let add = (caps[i] - xi[i]).min(leftover / unit);
                xi[i] += add;
                leftover -= add * unit;
            }
        }
    }
    let value = center_sum + xi.iter().sum::<f64>();
    Ok(InnerSolution { value, xi, multiplier: hi, iterations, dual_bound: dual_bound.max(value) })
}

/// Result of the outer maximization over actions.
#[derive(Clone, Debug)]
pub struct ArgmaxOutcome {
    pub action: Action,
    pub value: f64,
    /// Optimistic mean vector: `base` with `center + ξ` written on the action.
    pub mu: Vec<f64>,
    pub solution: InnerSolution,
    pub evaluations: usize,
    pub iterations: usize,
}

/// Solves `max_{A, μ ∈ C(A)} e_Aᵀ μ` over `actions`, ties to the
/// lexicographically smallest action.
pub fn argmax_over<F>(actions: &[Action], base: &[f64], mut region_for: F) -> Result<ArgmaxOutcome>
where
    F: FnMut(&Action) -> Result<RegionSpec>,
{
    let mut best: Option<(Action, InnerSolution, RegionSpec)> = None;
    let mut iterations = 0;
    for a in actions {
        let region = region_for(a)?;
        let sol = region_max(&region, a)?;
        iterations += sol.iterations;
        let better = match &best {
            None => true,
            Some((b, bs, _)) => sol.value > bs.value || (sol.value == bs.value && a < b),
        };
        if better {
            best = Some((a.clone(), sol, region));
        }
    }
    let (action, solution, region) = best.ok_or(Error::EmptyActionSpace)?;
    let mut mu = base.to_vec();
    for (p, &i) in action.arms().iter().enumerate() {
        mu[i] = region.center[p] + solution.xi[p];
    }
    Ok(ArgmaxOutcome { value: solution.value, action, mu, solution, evaluations: actions.len(), iterations })
}

/// [`argmax_over`] on the enumeration of `space`; fails when the space has
/// more than `cap` actions.
pub fn argmax_action<F>(space: &ActionSpace, cap: usize, base: &[f64], region_for: F) -> Result<ArgmaxOutcome>
where
    F: FnMut(&Action) -> Result<RegionSpec>,
{
    let actions = space.enumerate(cap)?;
    argmax_over(&actions, base, region_for)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyOutcome {
    /// Chosen arms in increasing order; empty when no singleton beats `f(∅) = 0`.
    pub members: Vec<usize>,
    pub value: f64,
    pub evaluations: usize,
}

/// Greedy maximization from the empty set (`f(∅) = 0`): repeatedly add the
/// best feasible arm while it strictly increases `f`. Ties go to the lower
/// arm index.
pub fn greedy_max<F, I>(n: usize, mut f: F, independent: I) -> Result<GreedyOutcome>
where
    F: FnMut(&[usize]) -> Result<f64>,
    I: Fn(&[usize]) -> bool,
{
    let mut members: Vec<usize> = Vec::new();
    let mut value = 0.0;
    let mut evaluations = 0;
    let mut in_set = vec![false; n];
    loop {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if in_set[i] {
                continue;
            }
            let mut cand = members.clone();
            let pos = cand.partition_point(|&v| v < i);
            cand.insert(pos, i);
            if !independent(&cand) {
                continue;
            }
            let v = f(&cand)?;
            evaluations += 1;
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((i, v));
            }
        }
        match best {
            Some((i, v)) if v > value => {
                let pos = members.partition_point(|&x| x < i);
                members.insert(pos, i);
                in_set[i] = true;
                value = v;
            }
            _ => break,
        }
    }
    Ok(GreedyOutcome { members, value, evaluations })
}

/// A set function on `{0, …, n−1}` with `f(∅) = 0`.
pub trait SetFunction {
    fn ground_size(&self) -> usize;
    fn eval(&self, set: &[usize]) -> f64;
}

/// Wraps a closure as a [`SetFunction`].
pub struct FnSetFunction<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[usize]) -> f64> FnSetFunction<F> {
    pub fn new(n: usize, f: F) -> Self {
        FnSetFunction { n, f }
    }
}

impl<F: Fn(&[usize]) -> f64> SetFunction for FnSetFunction<F> {
    fn ground_size(&self) -> usize {
        self.n
    }
    fn eval(&self, set: &[usize]) -> f64 {
        (self.f)(set)
    }
}

fn check_unit_box(x: &[f64]) -> Result<()> {
    if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::OutOfRange(format!("x[{i}] = {v} outside [0, 1]")));
    }
    Ok(())
}

/// Coordinates sorted by decreasing value, ties by index.
fn descending_order(x: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    order
}

/// Law of the level set `{i : x_i ≥ U}` for `U` uniform on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSetDistribution {
    /// Permutation sorting `x` in decreasing order.
    pub order: Vec<usize>,
    /// `probs[j]` is the probability of the prefix `order[..=j]`.
    pub probs: Vec<f64>,
    pub empty_mass: f64,
}

impl LevelSetDistribution {
    /// The nested set `S_{j+1}` (sorted).
    pub fn set(&self, j: usize) -> Vec<usize> {
        let mut s = self.order[..=j].to_vec();
        s.sort_unstable();
        s
    }

    /// `E[f(S)]` under this law, with `f(∅) = 0`.
    pub fn expectation(&self, f: &dyn Fn(&[usize]) -> f64) -> f64 {
        (0..self.probs.len()).filter(|&j| self.probs[j] > 0.0).map(|j| self.probs[j] * f(&self.set(j))).sum()
    }
}

pub fn level_distribution(x: &[f64]) -> Result<LevelSetDistribution> {
    check_unit_box(x)?;
    let order = descending_order(x);
    let n = x.len();
    let probs: Vec<f64> = (0..n)
        .map(|j| {
            let next = if j + 1 < n { x[order[j + 1]] } else { 0.0 };
            x[order[j]] - next
        })
        .collect();
    let top = order.first().map_or(0.0, |&i| x[i]);
    Ok(LevelSetDistribution { order, probs, empty_mass: 1.0 - top })
}

/// The level set `{i : x_i ≥ u}`.
pub fn round_levels(x: &[f64], u: f64) -> Vec<usize> {
    (0..x.len()).filter(|&i| x[i] >= u).collect()
}

/// `f^L(x) = E f({i : x_i ≥ U})`, evaluated exactly on the sorted levels.
pub fn lovasz_eval(f: &dyn SetFunction, x: &[f64]) -> Result<f64> {
    if x.len() != f.ground_size() {
        return Err(Error::OutOfRange(format!("x has length {}, expected {}", x.len(), f.ground_size())));
    }
    let dist = level_distribution(x)?;
    let mut prefix: Vec<usize> = Vec::with_capacity(x.len());
    let mut total = 0.0;
    for (j, &i) in dist.order.iter().enumerate() {
        let pos = prefix.partition_point(|&v| v < i);
        prefix.insert(pos, i);
        if dist.probs[j] > 0.0 {
            total += dist.probs[j] * f.eval(&prefix);
        }
    }
    Ok(total)
}

/// `G(A) = Σ_{i∈A} Σ_{j∈A} a_ij` with nonnegative coefficients, which makes
/// `G` supermodular and its Lovász extension concave.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseSupermodular {
    n: usize,
    a: Vec<f64>,
    modular: bool,
}

impl PairwiseSupermodular {
    /// `a` is row-major `n × n`; negative entries are rejected.
    pub fn new(n: usize, a: Vec<f64>) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::OutOfRange(format!("coefficient matrix has {} entries, expected {}", a.len(), n * n)));
        }
        if let Some(p) = a.iter().position(|&v| v < 0.0 || v.is_nan()) {
            return Err(Error::NotConcave(format!("a[{}][{}] = {} < 0", p / n, p % n, a[p])));
        }
        let modular = (0..n).all(|i| (0..n).all(|j| i == j || a[i * n + j] == 0.0));
        Ok(PairwiseSupermodular { n, a, modular })
    }

    /// Modular special case `G(A) = Σ_{i∈A} d_i`.
    pub fn diagonal(d: &[f64]) -> Result<Self> {
        let n = d.len();
        let mut a = vec![0.0; n * n];
        for (i, &v) in d.iter().enumerate() {
            a[i * n + i] = v;
        }
        Self::new(n, a)
    }

    pub fn coefficient(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    /// Lovász extension value and the supergradient given by the
    /// marginal gains along the sorted order of `x`.
    pub fn lovasz_with_supergradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let n = self.n;
        if self.modular {
            let grad: Vec<f64> = (0..n).map(|k| self.a[k * n + k]).collect();
            return (grad.iter().zip(x).map(|(g, v)| g * v).sum(), grad);
        }
        let order = descending_order(x);
        let mut grad = vec![0.0; n];
        let mut value = 0.0;
        for (p, &k) in order.iter().enumerate() {
            let mut marg = self.a[k * n + k];
            for &j in &order[..p] {
                marg += self.a[k * n + j] + self.a[j * n + k];
            }
            grad[k] = marg;
            value += x[k] * marg;
        }
        (value, grad)
    }
}

impl SetFunction for PairwiseSupermodular {
    fn ground_size(&self) -> usize {
        self.n
    }
    fn eval(&self, set: &[usize]) -> f64 {
        let mut s = 0.0;
        for &i in set {
            for &j in set {
                s += self.a[i * self.n + j];
            }
        }
        s
    }
}

/// `x ↦ cᵀx + Σ_k α_k √(G_k^L(x))` with `α_k ≥ 0` and supermodular `G_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeObjective {
    pub linear: Vec<f64>,
    pub sqrt_terms: Vec<(f64, PairwiseSupermodular)>,
}

impl CompositeObjective {
    pub fn new(linear: Vec<f64>, sqrt_terms: Vec<(f64, PairwiseSupermodular)>) -> Result<Self> {
        let n = linear.len();
        for (alpha, g) in &sqrt_terms {
            if *alpha < 0.0 {
                return Err(Error::NotConcave(format!("square-root coefficient {alpha} < 0")));
            }
            if g.n != n {
                return Err(Error::OutOfRange("term dimension mismatch".into()));
            }
        }
        Ok(CompositeObjective { linear, sqrt_terms })
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.value_with_supergradient(x).0
    }

    /// Value and a supergradient; `√g` is differentiated as `√(g + ε)`.
    pub fn value_with_supergradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut value: f64 = self.linear.iter().zip(x).map(|(c, v)| c * v).sum();
        let mut grad = self.linear.clone();
        for (alpha, g) in &self.sqrt_terms {
            let (gv, gg) = g.lovasz_with_supergradient(x);
            let gv = gv.max(0.0);
            value += alpha * gv.sqrt();
            let scale = alpha / (2.0 * (gv + SQRT_EPS).sqrt());
            for (o, d) in grad.iter_mut().zip(gg) {
                *o += scale * d;
            }
        }
        (value, grad)
    }

    /// The set function this objective extends.
    pub fn set_value(&self, set: &[usize]) -> f64 {
        let lin: f64 = set.iter().map(|&i| self.linear[i]).sum();
        lin + self.sqrt_terms.iter().map(|(a, g)| a * g.eval(set).max(0.0).sqrt()).sum::<f64>()
    }
}

/// Pointwise minimum of concave composites, value and active supergradient.
fn min_objective(objs: &[CompositeObjective], x: &[f64]) -> (f64, Vec<f64>) {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for o in objs {
        let (v, g) = o.value_with_supergradient(x);
        if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
            best = Some((v, g));
        }
    }
    best.expect("at least one objective")
}

/// Euclidean projection onto `{x ∈ [0, 1]^n : Σ x_i ≤ rank}`.
pub fn project_capped_box(x: &mut [f64], rank: f64) {
    let capped = |tau: f64, x: &[f64]| x.iter().map(|v| (v - tau).clamp(0.0, 1.0)).sum::<f64>();
    if capped(0.0, x) <= rank {
        for v in x.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        return;
    }
    // Σ clamp(x_i − τ, 0, 1) is piecewise linear in τ with kinks at x_i − 1
    // and x_i; locate the piece where it crosses `rank`.
    let mut kinks: Vec<f64> = x.iter().flat_map(|&v| [v - 1.0, v]).filter(|&b| b > 0.0).collect();
    kinks.push(0.0);
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();
    let k = kinks.partition_point(|&b| capped(b, x) > rank);
    let (lo, hi) = (kinks[k - 1], kinks[k]);
    let (g_lo, g_hi) = (capped(lo, x), capped(hi, x));
    let tau = if g_lo > g_hi { lo + (g_lo - rank) * (hi - lo) / (g_lo - g_hi) } else { hi };
    for v in x.iter_mut() {
        *v = (*v - tau).clamp(0.0, 1.0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AscentConfig {
    pub iterations: usize,
    pub restarts: usize,
    /// Step constant `c` in `c / √k`; defaults to half the feasible diameter.
    pub step: Option<f64>,
    /// Extra run from the best point found, with the step constant scaled
    /// by this factor.
    pub refine: Option<f64>,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig { iterations: 500, restarts: 5, step: None, refine: Some(0.03) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LovaszSolution {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Maximizes the pointwise minimum of `objectives` over
/// `{x ∈ [0, 1]^n : Σ x_i ≤ rank}` by projected supergradient ascent with
/// normalized steps `c / √k`, scoring every iterate and the average of the
/// second half of each run. The first start is the uniform point, the
/// others are drawn from `rng`, and an optional last run restarts from the
/// incumbent with a shorter step; the best iterate wins, ties broken by the
/// lexicographically smaller `x`.
pub fn lovasz_maximize<R: Rng + ?Sized>(
    objectives: &[CompositeObjective],
    rank: usize,
    config: AscentConfig,
    rng: &mut R,
) -> Result<LovaszSolution> {
    let n = objectives.first().map(CompositeObjective::dim).ok_or_else(|| Error::OutOfRange("no objective".into()))?;
    if objectives.iter().any(|o| o.dim() != n) {
        return Err(Error::OutOfRange("objective dimension mismatch".into()));
    }
    let rankf = rank.min(n) as f64;
    let step = config.step.unwrap_or(0.5 * rankf.max(1.0).sqrt());
    let mut best: Option<(f64, Vec<f64>)> = None;
    let consider = |v: f64, x: &[f64], best: &mut Option<(f64, Vec<f64>)>| {
        let better = match best {
            None => true,
            Some((bv, bx)) => v > *bv || (v == *bv && x.iter().zip(bx.iter()).find(|(a, b)| a != b).is_some_and(|(a, b)| a < b)),
        };
        if better {
            *best = Some((v, x.to_vec()));
        }
    };
    let mut total_iters = 0;
    let restarts = config.restarts.max(1);
    let runs = restarts + usize::from(config.refine.is_some());
    for r in 0..runs {
        let mut step = step;
        let mut x: Vec<f64> = if r == 0 {
            vec![(rankf / n as f64).min(1.0); n]
        } else if r < restarts {
            (0..n).map(|_| rng.random::<f64>()).collect()
        } else {
            step *= config.refine.unwrap_or(1.0);
            best.as_ref().expect("earlier runs").1.clone()
        };
        project_capped_box(&mut x, rankf);
        let tail_from = config.iterations / 2 + 1;
        let mut tail = vec![0.0; n];
        let mut tail_len = 0usize;
        for it in 1..=config.iterations {
            let (v, g) = min_objective(objectives, &x);
            consider(v, &x, &mut best);
            if it >= tail_from {
                tail.iter_mut().zip(&x).for_each(|(a, b)| *a += b);
                tail_len += 1;
            }
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                break;
            }
            let eta = step / (it as f64).sqrt() / norm;
            for (xi, gi) in x.iter_mut().zip(&g) {
                *xi += eta * gi;
            }
            project_capped_box(&mut x, rankf);
            total_iters += 1;
        }
        let (v, _) = min_objective(objectives, &x);
        consider(v, &x, &mut best);
        if tail_len > 0 {
            tail.iter_mut().for_each(|a| *a /= tail_len as f64);
            project_capped_box(&mut tail, rankf);
            let (v, _) = min_objective(objectives, &tail);
            consider(v, &tail, &mut best);
        }
    }
    let (value, x) = best.expect("at least one iterate");
    Ok(LovaszSolution { x, value, iterations: total_iters })
}
