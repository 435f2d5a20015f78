//! Confidence radii, optimistic indices and confidence-region builders.
//!
//! All logarithms are natural logarithms.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Action;
use crate::stats::Statistics;

/// Default exploration constant of the per-arm baselines.
pub const DEFAULT_ZETA: f64 = 1.2;

/// Known bounds on a single outcome coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRange {
    pub lo: f64,
    pub hi: f64,
}

impl OutcomeRange {
    pub const UNIT: OutcomeRange = OutcomeRange { lo: 0.0, hi: 1.0 };

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.lo) / self.width()
    }

    pub fn denormalize(&self, u: f64) -> f64 {
        self.lo + u * self.width()
    }
}

impl Default for OutcomeRange {
    fn default() -> Self {
        OutcomeRange::UNIT
    }
}

fn log_t(t: u64) -> f64 {
    (t as f64).ln()
}

/// Covariance confidence radius `g_ij(t)` from raw counters.
pub fn cov_radius_from_counts(n_ij: u64, n_i: u64, n_j: u64, t: u64) -> Result<f64> {
    if t < 2 {
        return Err(Error::PreInitialization(t));
    }
    if n_ij == 0 || n_i == 0 || n_j == 0 {
        return Err(Error::OutOfRange(format!("counters must be positive ({n_ij}, {n_i}, {n_j})")));
    }
    let l = log_t(t);
    let (nij, ni, nj) = (n_ij as f64, n_i as f64, n_j as f64);
    let r = 3.0 * l / nij;
    Ok(16.0 * r.max(r.sqrt()) + (48.0 * l * l / (nij * ni)).sqrt() + (36.0 * l * l / (nij * nj)).sqrt())
}

/// `g_ij(t)` for arms `i`, `j`. Note the asymmetric 48/36 weights on
/// `N_i` and `N_j`: the order of `i` and `j` matters.
pub fn cov_radius(stats: &Statistics, i: usize, j: usize, t: u64) -> Result<f64> {
    if !stats.has_pair(i, j) {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        return Err(Error::MissingPair(a, b));
    }
    let nij = stats.pair_count(i, j);
    if nij == 0 {
        return Err(Error::NeverCoObserved(i.min(j), i.max(j)));
    }
    cov_radius_from_counts(nij, stats.count(i), stats.count(j), t)
}

/// Optimistic covariance `Σ_ij,t = Σ̄_ij,t−1 + g_ij(t)`.
pub fn cov_ucb(stats: &Statistics, i: usize, j: usize, t: u64) -> Result<f64> {
    let g = cov_radius(stats, i, j, t)?;
    Ok(stats.cov_estimate(i, j)? + g)
}

/// Region budget `δ(t) = 8(log t + log log t) + 4em`, with the `log log t`
/// term set to zero when `t ≤ e`.
pub fn region_radius(t: u64, m: usize) -> f64 {
    let tf = t.max(1) as f64;
    let ll = if tf > E { tf.ln().ln() } else { 0.0 };
    8.0 * (tf.ln() + ll) + 4.0 * E * m as f64
}

/// Hoeffding upper bound on `E|X_i|`: `ν̄_i + √(1.5 log t / N_i)`.
pub fn nu_ucb(stats: &Statistics, i: usize, t: u64) -> Result<f64> {
    let nu = stats.abs_mean(i)?;
    Ok(nu + (1.5 * log_t(t.max(1)) / stats.count(i) as f64).sqrt())
}

/// Bernoulli Kullback–Leibler divergence with `0 log 0 = 0`.
pub fn kl_bernoulli(p: f64, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return Err(Error::OutOfRange(format!("kl({p}, {q})")));
    }
    Ok(kl_unchecked(p, q))
}

fn kl_unchecked(p: f64, q: f64) -> f64 {
    let term = |a: f64, b: f64| {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    };
    term(p, q) + term(1.0 - p, 1.0 - q)
}

/// Largest `x ∈ [p, 1]` with `N kl(p, x) ≤ budget`, by bisection.
///
/// `p` is clamped into `[0, 1]`.
pub fn kl_index(p: f64, n: u64, budget: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    if budget <= 0.0 || n == 0 {
        return p;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let nf = n as f64;
    let residual = |x: f64| nf * kl_unchecked(p, x) - budget;
    let (mut lo, mut hi) = (p, 1.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if residual(hi).abs() < residual(lo).abs() {
        hi
    } else {
        lo
    }
}

/// Empirical-Bernstein bonus `√(2ζσ̄² log t / N) + 3ζ w log t / N` for
/// outcomes of range width `w`.
pub fn v_bonus(variance: f64, n: u64, t: u64, zeta: f64, width: f64) -> f64 {
    let l = log_t(t.max(1));
    let nf = n as f64;
    (2.0 * zeta * variance.max(0.0) * l / nf).sqrt() + 3.0 * zeta * width * l / nf
}

/// CUCB-V index on `[0, 1]` outcomes: `1 ∧ (μ̄ + bonus)`.
pub fn v_index(stats: &Statistics, i: usize, t: u64, zeta: f64) -> Result<f64> {
    v_index_in(stats, i, t, zeta, OutcomeRange::UNIT)
}

/// CUCB-V index for outcomes in `range`, capped at `range.hi`.
pub fn v_index_in(stats: &Statistics, i: usize, t: u64, zeta: f64, range: OutcomeRange) -> Result<f64> {
    let mean = stats.mean(i)?;
    let var = stats.variance(i)?;
    Ok((mean + v_bonus(var, stats.count(i), t, zeta, range.width())).min(range.hi))
}

/// CUCB-KL index for outcomes in `range`: the kl-UCB of the normalized
/// mean with budget `ζ log t`, mapped back.
pub fn kl_ucb_index_in(stats: &Statistics, i: usize, t: u64, zeta: f64, range: OutcomeRange) -> Result<f64> {
    let mean = stats.mean(i)?;
    let p = range.normalize(mean);
    Ok(range.denormalize(kl_index(p, stats.count(i), zeta * log_t(t.max(1)))))
}

/// Which confidence region to build around the empirical means.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RegionKind {
    /// Offsets `Σ_j∈A 0 ∨ Σ_ij,t`, slack `|A|`.
    Covariance,
    /// Offsets `2 (s ∧ m) ν_i,t`, slack `m`.
    Sparse { s: usize },
    /// Covariance region intersected with the CUCB-V box.
    CovarianceBox { zeta: f64, range: OutcomeRange },
}

/// A separable region
/// `{ μ̄ + ξ : Σ_i N_i ξ_i² / (scale |ξ_i| + offset_i) ≤ radius }`
/// over the coordinates of one action, optionally intersected with the box
/// `|ξ_i| ≤ half_width_i`. Vectors are aligned with the action's arms.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSpec {
    pub center: Vec<f64>,
    pub weights: Vec<f64>,
    pub slack_scale: f64,
    pub offsets: Vec<f64>,
    pub radius: f64,
    pub half_width: Option<Vec<f64>>,
}

impl RegionSpec {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `N_i ξ_i² / (scale |ξ_i| + offset_i)`, zero at `ξ_i = 0`.
    pub fn coordinate_cost(&self, i: usize, xi: f64) -> f64 {
        if xi == 0.0 {
            return 0.0;
        }
        self.weights[i] * xi * xi / (self.slack_scale * xi.abs() + self.offsets[i])
    }

    /// Left-hand side of the region constraint at displacement `xi`.
    pub fn constraint(&self, xi: &[f64]) -> f64 {
        xi.iter().enumerate().map(|(i, &x)| self.coordinate_cost(i, x)).sum()
    }

    /// Whether `center + xi` lies in the region (with absolute slack `tol`).
    pub fn contains_displacement(&self, xi: &[f64], tol: f64) -> bool {
        if let Some(hw) = &self.half_width {
            if xi.iter().zip(hw).any(|(x, h)| x.abs() > h + tol) {
                return false;
            }
        }
        self.constraint(xi) <= self.radius + tol
    }

    /// Whether the point `mu` (given on the action's arms) lies in the region.
    pub fn contains(&self, mu: &[f64]) -> bool {
        let xi: Vec<f64> = mu.iter().zip(&self.center).map(|(m, c)| m - c).collect();
        self.contains_displacement(&xi, 0.0)
    }

    /// Largest admissible `ξ_i` when the whole budget goes to coordinate `i`.
    pub fn single_coordinate_bound(&self, i: usize) -> f64 {
        let (d, k, w, o) = (self.radius, self.slack_scale, self.weights[i], self.offsets[i]);
        let root = if d <= 0.0 { 0.0 } else { (d * k + (d * d * k * k + 4.0 * w * d * o).sqrt()) / (2.0 * w) };
        match &self.half_width {
            Some(hw) => root.min(hw[i]),
            None => root,
        }
    }
}

/// Builds the confidence region of `kind` for action `a` at round `t`.
/// `m` is the largest action size of the space.
pub fn build_region(a: &Action, stats: &Statistics, t: u64, m: usize, kind: RegionKind) -> Result<RegionSpec> {
    let arms = a.arms();
    let mut center = Vec::with_capacity(arms.len());
    let mut weights = Vec::with_capacity(arms.len());
    for &i in arms {
        center.push(stats.mean(i)?);
        weights.push(stats.count(i) as f64);
    }
    let radius = region_radius(t, m);
    let (slack_scale, offsets, half_width) = match kind {
        RegionKind::Covariance | RegionKind::CovarianceBox { .. } => {
            let mut offsets = Vec::with_capacity(arms.len());
            for &i in arms {
                let mut acc = 0.0;
                for &j in arms {
                    acc += cov_ucb(stats, i, j, t)?.max(0.0);
                }
                offsets.push(acc);
            }
            let half_width = match kind {
                RegionKind::CovarianceBox { zeta, range } => Some(
                    arms.iter()
                        .map(|&i| Ok(v_bonus(stats.variance(i)?, stats.count(i), t, zeta, range.width())))
                        .collect::<Result<Vec<f64>>>()?,
                ),
                _ => None,
            };
            (arms.len() as f64, offsets, half_width)
        }
        RegionKind::Sparse { s } => {
            let factor = 2.0 * s.min(m) as f64;
            let offsets = arms.iter().map(|&i| Ok(factor * nu_ucb(stats, i, t)?)).collect::<Result<Vec<f64>>>()?;
            (m as f64, offsets, None)
        }
    };
    Ok(RegionSpec { center, weights, slack_scale, offsets, radius, half_width })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn stats_with_counts(nij: u64) -> Statistics {
        let mut st = Statistics::dense(2);
        let a = Action::new([0, 1]);
        for k in 0..nij {
            let v = (k % 2) as f64;
            st.record(&a, &[v, 1.0 - v]);
        }
        st
    }

    #[test]
    fn cov_radius_plug_in() {
        let st = stats_with_counts(100);
        let g = cov_radius(&st, 0, 1, 100).unwrap();
        // Independent re-evaluation of the three terms.
        let l = 100f64.ln();
        let t1 = 16.0 * (3.0 * l / 100.0).sqrt();
        let t2 = (48.0 * l * l / 10_000.0).sqrt();
        let t3 = (36.0 * l * l / 10_000.0).sqrt();
        assert_abs_diff_eq!(t1, 5.94707, epsilon = 1e-5);
        assert_abs_diff_eq!(t2, 0.31905, epsilon = 1e-5);
        assert_abs_diff_eq!(t3, 0.27631, epsilon = 1e-5);
        assert_abs_diff_eq!(g, t1 + t2 + t3, epsilon = 1e-12);
        assert_abs_diff_eq!(g, 6.542, epsilon = 1e-3);
    }

    #[test]
    fn cov_radius_branch_crossover() {
        // 3 log t = N_ij makes both branches of the max equal to 1.
        let t = 20u64;
        let n = 3.0 * (t as f64).ln();
        let r: f64 = 3.0 * (t as f64).ln() / n;
        assert_eq!(16.0 * r, 16.0);
        assert_eq!(16.0 * r.sqrt(), 16.0);
    }

    #[test]
    fn cov_radius_decreases_when_counters_double() {
        for t in [2u64, 10, 100, 1000, 100_000] {
            for n in [1u64, 2, 5, 17, 100, 1000] {
                for (a, b) in [(1u64, 1u64), (1, 3), (2, 1)] {
                    let g1 = cov_radius_from_counts(n, n * a, n * b, t).unwrap();
                    let g2 = cov_radius_from_counts(2 * n, 2 * n * a, 2 * n * b, t).unwrap();
                    assert!(g2 < g1, "t={t} n={n}");
                }
            }
        }
    }

    #[test]
    fn cov_radius_rejects_early_rounds() {
        assert!(matches!(cov_radius_from_counts(1, 1, 1, 1), Err(Error::PreInitialization(1))));
    }

    #[test]
    fn cov_ucb_is_estimate_plus_radius() {
        let st = stats_with_counts(100);
        let est = st.cov_estimate(0, 1).unwrap();
        assert_abs_diff_eq!(est, -0.25, epsilon = 1e-15);
        let u = cov_ucb(&st, 0, 1, 100).unwrap();
        assert_eq!(u, est + cov_radius(&st, 0, 1, 100).unwrap());
        assert_abs_diff_eq!(u, 6.292, epsilon = 1e-3);

        let mut zero = Statistics::dense(2);
        for _ in 0..10 {
            zero.record(&Action::new([0, 1]), &[0.0, 0.0]);
        }
        assert_eq!(cov_ucb(&zero, 0, 1, 50).unwrap(), cov_radius(&zero, 0, 1, 50).unwrap());
        assert!(cov_ucb(&zero, 0, 1, 50).unwrap() > 0.0);
    }

    #[test]
    fn region_radius_values() {
        let expect = 8.0 * (10f64.ln() + 10f64.ln().ln()) + 8.0 * E;
        assert_abs_diff_eq!(region_radius(10, 2), expect, epsilon = 1e-12);
        assert_abs_diff_eq!(region_radius(10, 2), 46.839, epsilon = 1e-3);
        assert_abs_diff_eq!(region_radius(2, 1), 8.0 * 2f64.ln() + 4.0 * E, epsilon = 1e-12);
        assert_abs_diff_eq!(region_radius(1, 1), 4.0 * E, epsilon = 1e-12);
        let mut prev = region_radius(3, 4);
        for t in 4..5000 {
            let r = region_radius(t, 4);
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn nu_ucb_values() {
        let mut st = Statistics::dense(1);
        for k in 0..100 {
            st.record(&Action::new([0]), &[if k < 20 { 1.0 } else { 0.0 }]);
        }
        let v = nu_ucb(&st, 0, 100).unwrap();
        assert_abs_diff_eq!(v, 0.2 + (1.5 * 100f64.ln() / 100.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.4628, epsilon = 1e-4);
        assert_eq!(nu_ucb(&st, 0, 1).unwrap(), st.abs_mean(0).unwrap());
        assert!(nu_ucb(&Statistics::dense(1), 0, 5).is_err());
    }

    #[test]
    fn kl_values() {
        assert_eq!(kl_bernoulli(0.3, 0.3).unwrap(), 0.0);
        let expect = 0.5 * (2.0f64 / 3.0).ln() + 0.5 * 2f64.ln();
        assert_abs_diff_eq!(kl_bernoulli(0.5, 0.75).unwrap(), expect, epsilon = 1e-15);
        assert_abs_diff_eq!(expect, 0.14384, epsilon = 1e-5);
        assert_abs_diff_eq!(kl_bernoulli(0.0, 0.5).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert_eq!(kl_bernoulli(0.5, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(kl_bernoulli(1.0, 1.0).unwrap(), 0.0);
        assert!(kl_bernoulli(-0.1, 0.5).is_err());
        assert!(kl_bernoulli(0.5, 1.5).is_err());
    }

    #[test]
    fn kl_index_cases() {
        assert_eq!(kl_index(0.3, 10, 0.0), 0.3);
        assert_eq!(kl_index(1.0, 10, 5.0), 1.0);
        let x = kl_index(0.5, 10, 1.0);
        assert_abs_diff_eq!(x, 0.7129, epsilon = 1e-3);
        assert!((10.0 * kl_bernoulli(0.5, x).unwrap() - 1.0).abs() < 1e-9);
        let mut prev = 0.2;
        for b in 1..50 {
            let x = kl_index(0.2, 7, b as f64 * 0.1);
            assert!(x >= prev);
            prev = x;
        }
    }

    #[test]
    fn v_index_values() {
        // μ̄ = .5 and σ̄² = .25 from alternating 0/1 outcomes.
        let mut st = Statistics::dense(1);
        for k in 0..100 {
            st.record(&Action::new([0]), &[(k % 2) as f64]);
        }
        let l = 100f64.ln();
        let sq = (2.0 * 1.2 * 0.25 * l / 100.0).sqrt();
        let lin = 3.0 * 1.2 * l / 100.0;
        assert_abs_diff_eq!(sq, 0.166226, epsilon = 1e-6);
        assert_abs_diff_eq!(lin, 0.165786, epsilon = 1e-6);
        let v = v_index(&st, 0, 100, DEFAULT_ZETA).unwrap();
        assert_abs_diff_eq!(v, 0.5 + sq + lin, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.8320, epsilon = 1e-4);

        assert_eq!(v_index(&st, 0, 1_000_000_000, 50.0).unwrap(), 1.0);

        let mut c = Statistics::dense(1);
        for _ in 0..100 {
            c.record(&Action::new([0]), &[0.25]);
        }
        let v = v_index(&c, 0, 10, 1.2).unwrap();
        assert_abs_diff_eq!(v, 0.25 + 3.0 * 1.2 * 10f64.ln() / 100.0, epsilon = 1e-12);
    }

    #[test]
    fn sparse_region_uses_min_of_s_and_m() {
        let mut st = Statistics::dense(2);
        for _ in 0..10 {
            st.record(&Action::new([0, 1]), &[1.0, 0.0]);
        }
        let a = Action::new([0, 1]);
        let r = build_region(&a, &st, 10, 2, RegionKind::Sparse { s: 5 }).unwrap();
        let nu0 = nu_ucb(&st, 0, 10).unwrap();
        assert_abs_diff_eq!(r.offsets[0], 4.0 * nu0, epsilon = 1e-15);
        assert_eq!(r.slack_scale, 2.0);
    }

    #[test]
    fn covariance_region_offsets_clip_each_term() {
        let mut st = Statistics::dense(2);
        for k in 0..400 {
            let v = (k % 2) as f64;
            st.record(&Action::new([0, 1]), &[v, 1.0 - v]);
        }
        let a = Action::new([0, 1]);
        let t = 1000;
        let r = build_region(&a, &st, t, 2, RegionKind::Covariance).unwrap();
        let expect0 = cov_ucb(&st, 0, 0, t).unwrap().max(0.0) + cov_ucb(&st, 0, 1, t).unwrap().max(0.0);
        assert_eq!(r.offsets[0], expect0);
        assert_eq!(r.slack_scale, 2.0);
        assert_eq!(r.radius, region_radius(t, 2));
        assert!(r.contains(&[st.mean(0).unwrap(), st.mean(1).unwrap()]));
    }

    #[test]
    fn box_region_contains_center() {
        let mut st = Statistics::dense(2);
        for k in 0..50 {
            st.record(&Action::new([0, 1]), &[(k % 3) as f64 / 2.0, (k % 5) as f64 / 4.0]);
        }
        let r = build_region(&Action::new([0, 1]), &st, 60, 2, RegionKind::CovarianceBox { zeta: 1.2, range: OutcomeRange::UNIT })
            .unwrap();
        let hw = r.half_width.clone().unwrap();
        assert!(hw.iter().all(|&h| h > 0.0));
        assert!(r.contains_displacement(&[0.0, 0.0], 0.0));
        assert!(!r.contains_displacement(&[hw[0] * 1.01, 0.0], 0.0));
    }

    #[test]
    fn missing_pair_statistics_error() {
        let space = crate::instance::ActionSpace::partition(4, 2).unwrap();
        let mut st = Statistics::for_space(&space);
        st.record(&Action::new([0, 1]), &[0.0; 4]);
        st.record(&Action::new([2, 3]), &[0.0; 4]);
        let r = build_region(&Action::new([1, 2]), &st, 5, 2, RegionKind::Covariance);
        assert!(matches!(r, Err(Error::MissingPair(1, 2))));
    }
}
