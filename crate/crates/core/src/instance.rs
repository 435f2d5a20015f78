//! Problem instances: arms, action spaces, true parameters and gaps.
//!
//! Arms are indexed from zero. An [`Action`] is a nonempty set of arms kept
//! as a strictly increasing index list, so set equality is list equality.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bound on how many actions exact enumeration may produce.
pub const DEFAULT_ENUMERATION_CAP: usize = 100_000;

/// A set of arms in canonical (strictly increasing) order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(Vec<usize>);

impl Action {
    /// Builds an action from arbitrary arm indices; duplicates are dropped.
    pub fn new(arms: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = arms.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Action(v)
    }

    pub fn arms(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, arm: usize) -> bool {
        self.0.binary_search(&arm).is_ok()
    }

    /// `e_Aᵀ v`, summed in index order.
    pub fn value(&self, v: &[f64]) -> f64 {
        self.0.iter().map(|&i| v[i]).sum()
    }

    /// Incidence vector of length `n`.
    pub fn incidence(&self, n: usize) -> Vec<f64> {
        let mut e = vec![0.0; n];
        for &i in &self.0 {
            e[i] = 1.0;
        }
        e
    }

    /// Compact label used in CSV output, e.g. `0;1;3`.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        parts.join(";")
    }

    /// Inverse of [`Action::label`].
    pub fn parse_label(s: &str) -> Option<Self> {
        if s.is_empty() {
            return Some(Action(Vec::new()));
        }
        let arms: Option<Vec<usize>> = s.split(';').map(|p| p.parse().ok()).collect();
        arms.map(Action::new)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.label().replace(';', ","))
    }
}

impl From<Vec<usize>> for Action {
    fn from(v: Vec<usize>) -> Self {
        Action::new(v)
    }
}

type IndependenceFn = dyn Fn(&[usize]) -> bool + Send + Sync;

/// Independence test of a matroid given as a black box, plus the cap on how
/// many independent sets may be enumerated from it.
#[derive(Clone)]
pub struct IndependenceOracle {
    test: Arc<IndependenceFn>,
    cap: usize,
}

impl IndependenceOracle {
    pub fn is_independent(&self, arms: &[usize]) -> bool {
        (self.test)(arms)
    }

    pub fn cap(&self) -> usize {
        self.cap
    }
}

impl fmt::Debug for IndependenceOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IndependenceOracle").field("cap", &self.cap).finish()
    }
}

#[derive(Clone, Debug)]
pub enum SpaceKind {
    /// Explicit list of actions, stored in enumeration order.
    Explicit { actions: Vec<Action>, lookup: HashSet<Action> },
    /// `n / m` disjoint consecutive blocks of `m` arms.
    Partition,
    /// Every nonempty subset of size at most `m`.
    UniformMatroid,
    /// Nonempty independent sets of a matroid known only through its oracle.
    Matroid(IndependenceOracle),
}

/// The feasible actions `A` together with the arm count `n` and `m = max |A|`.
#[derive(Clone, Debug)]
pub struct ActionSpace {
    n: usize,
    m: usize,
    kind: SpaceKind,
}

/// Enumeration order: by size, then lexicographically.
fn shortlex(a: &Action, b: &Action) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

impl ActionSpace {
    pub fn explicit(n: usize, actions: Vec<Action>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::EmptyActionSpace);
        }
        let mut lookup = HashSet::with_capacity(actions.len());
        for a in &actions {
            if a.is_empty() {
                return Err(Error::InvalidInstance("actions must be nonempty".into()));
            }
            if let Some(&bad) = a.arms().iter().find(|&&i| i >= n) {
                return Err(Error::InvalidInstance(format!("arm {bad} out of range for n = {n}")));
            }
            if !lookup.insert(a.clone()) {
                return Err(Error::InvalidInstance(format!("duplicate action {a}")));
            }
        }
        let mut actions = actions;
        actions.sort_by(shortlex);
        let m = actions.iter().map(Action::len).max().unwrap_or(0);
        Ok(ActionSpace { n, m, kind: SpaceKind::Explicit { actions, lookup } })
    }

    pub fn partition(n: usize, m: usize) -> Result<Self> {
        if m == 0 || n == 0 || !n.is_multiple_of(m) {
            return Err(Error::InvalidInstance(format!(
                "partition requires m to divide n (n = {n}, m = {m})"
            )));
        }
        Ok(ActionSpace { n, m, kind: SpaceKind::Partition })
    }

    pub fn uniform_matroid(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::EmptyActionSpace);
        }
        Ok(ActionSpace { n, m: m.min(n), kind: SpaceKind::UniformMatroid })
    }

    /// Matroid of rank at most `m` given by an independence test.
    pub fn matroid<F>(n: usize, m: usize, test: F, cap: Option<usize>) -> Result<Self>
    where
        F: Fn(&[usize]) -> bool + Send + Sync + 'static,
    {
        let cap = cap.ok_or(Error::MissingEnumerationCap)?;
        if n == 0 || m == 0 {
            return Err(Error::EmptyActionSpace);
        }
        if !(0..n).any(|i| test(&[i])) {
            return Err(Error::EmptyActionSpace);
        }
        let oracle = IndependenceOracle { test: Arc::new(test), cap };
        Ok(ActionSpace { n, m: m.min(n), kind: SpaceKind::Matroid(oracle) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `m`, the largest action size.
    pub fn max_size(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> &SpaceKind {
        &self.kind
    }

    /// True for spaces where greedy over an independence test is meaningful.
    pub fn is_matroid(&self) -> bool {
        matches!(self.kind, SpaceKind::UniformMatroid | SpaceKind::Matroid(_))
    }

    /// Independence test for matroid spaces (size and oracle checks only).
    pub fn is_independent(&self, arms: &[usize]) -> bool {
        match &self.kind {
            SpaceKind::UniformMatroid => arms.len() <= self.m,
            SpaceKind::Matroid(o) => arms.len() <= self.m && o.is_independent(arms),
            _ => false,
        }
    }

    pub fn contains(&self, a: &Action) -> bool {
        if a.is_empty() || a.len() > self.m || a.arms().iter().any(|&i| i >= self.n) {
            return false;
        }
        match &self.kind {
            SpaceKind::Explicit { lookup, .. } => lookup.contains(a),
            SpaceKind::Partition => {
                let first = a.arms()[0];
                a.len() == self.m
                    && first.is_multiple_of(self.m)
                    && a.arms().iter().enumerate().all(|(k, &i)| i == first + k)
            }
            SpaceKind::UniformMatroid => true,
            SpaceKind::Matroid(o) => o.is_independent(a.arms()),
        }
    }

    /// Number of actions, saturating at `usize::MAX`; `None` for oracle matroids.
    pub fn count(&self) -> Option<usize> {
        match &self.kind {
            SpaceKind::Explicit { actions, .. } => Some(actions.len()),
            SpaceKind::Partition => Some(self.n / self.m),
            SpaceKind::UniformMatroid => {
                Some((1..=self.m).fold(0usize, |acc, k| acc.saturating_add(binomial(self.n, k))))
            }
            SpaceKind::Matroid(_) => None,
        }
    }

    /// All actions in size-then-lexicographic order. Fails rather than
    /// truncating when the space holds more than `cap` actions.
    pub fn enumerate(&self, cap: usize) -> Result<Vec<Action>> {
        if let Some(c) = self.count() {
            if c > cap {
                return Err(Error::EnumerationOverflow { cap });
            }
        }
        match &self.kind {
            SpaceKind::Explicit { actions, .. } => Ok(actions.clone()),
            SpaceKind::Partition => Ok((0..self.n / self.m)
                .map(|b| Action::new(b * self.m..(b + 1) * self.m))
                .collect()),
            SpaceKind::UniformMatroid => {
                let mut out = Vec::new();
                for k in 1..=self.m {
                    for_each_combination(self.n, k, |c| out.push(Action(c.to_vec())));
                }
                Ok(out)
            }
            SpaceKind::Matroid(o) => {
                let cap = cap.min(o.cap());
                let mut out: Vec<Action> = Vec::new();
                let mut level: Vec<Vec<usize>> =
                    (0..self.n).filter(|&i| o.is_independent(&[i])).map(|i| vec![i]).collect();
                let mut size = 1;
                while !level.is_empty() {
                    if out.len() + level.len() > cap {
                        return Err(Error::EnumerationOverflow { cap });
                    }
                    out.extend(level.iter().cloned().map(Action));
                    if size == self.m {
                        break;
                    }
                    let mut next = Vec::new();
                    for set in &level {
                        let last = *set.last().unwrap();
                        for e in last + 1..self.n {
                            let mut cand = set.clone();
                            cand.push(e);
                            if o.is_independent(&cand) {
                                next.push(cand);
                            }
                        }
                    }
                    level = next;
                    size += 1;
                }
                Ok(out)
            }
        }
    }

    /// Pairs `i < j` that appear together in at least one action.
    pub fn co_occurring_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        match &self.kind {
            SpaceKind::Explicit { actions, .. } => {
                let mut seen = HashSet::new();
                for a in actions {
                    let arms = a.arms();
                    for (x, &i) in arms.iter().enumerate() {
                        for &j in &arms[x + 1..] {
                            if seen.insert((i, j)) {
                                pairs.push((i, j));
                            }
                        }
                    }
                }
                pairs.sort_unstable();
            }
            SpaceKind::Partition => {
                for b in 0..self.n / self.m {
                    for i in b * self.m..(b + 1) * self.m {
                        for j in i + 1..(b + 1) * self.m {
                            pairs.push((i, j));
                        }
                    }
                }
            }
            SpaceKind::UniformMatroid => {
                if self.m >= 2 {
                    for i in 0..self.n {
                        for j in i + 1..self.n {
                            pairs.push((i, j));
                        }
                    }
                }
            }
            SpaceKind::Matroid(o) => {
                // Independent sets are closed under subsets, so a pair
                // co-occurs iff it is itself independent.
                if self.m >= 2 {
                    for i in 0..self.n {
                        for j in i + 1..self.n {
                            if o.is_independent(&[i, j]) {
                                pairs.push((i, j));
                            }
                        }
                    }
                }
            }
        }
        pairs
    }

    /// Arms that belong to at least one action.
    pub fn coverable_arms(&self) -> Vec<bool> {
        match &self.kind {
            SpaceKind::Explicit { actions, .. } => {
                let mut cov = vec![false; self.n];
                for a in actions {
                    for &i in a.arms() {
                        cov[i] = true;
                    }
                }
                cov
            }
            SpaceKind::Partition | SpaceKind::UniformMatroid => vec![true; self.n],
            SpaceKind::Matroid(o) => (0..self.n).map(|i| o.is_independent(&[i])).collect(),
        }
    }

    /// Maximizes `e_Aᵀ w` over the space. Ties go to the lexicographically
    /// smallest action for enumerated spaces and to lower arm indices for
    /// matroid spaces, where the greedy algorithm is exact.
    pub fn linear_argmax(&self, w: &[f64]) -> Action {
        match &self.kind {
            SpaceKind::Explicit { actions, .. } => best_by_value(actions.iter().cloned(), w),
            SpaceKind::Partition => {
                best_by_value((0..self.n / self.m).map(|b| Action::new(b * self.m..(b + 1) * self.m)), w)
            }
            SpaceKind::UniformMatroid | SpaceKind::Matroid(_) => {
                let mut order: Vec<usize> = (0..self.n).collect();
                order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
                let mut chosen: Vec<usize> = Vec::new();
                for &i in &order {
                    if w[i] <= 0.0 || chosen.len() == self.m {
                        break;
                    }
                    let mut cand = chosen.clone();
                    cand.push(i);
                    cand.sort_unstable();
                    if self.is_independent(&cand) {
                        chosen = cand;
                    }
                }
                if chosen.is_empty() {
                    let best = order
                        .iter()
                        .copied()
                        .find(|&i| self.is_independent(&[i]))
                        .expect("matroid spaces have an independent singleton");
                    chosen.push(best);
                }
                Action::new(chosen)
            }
        }
    }
}

fn best_by_value(actions: impl Iterator<Item = Action>, w: &[f64]) -> Action {
    let mut best: Option<(Action, f64)> = None;
    for a in actions {
        let v = a.value(w);
        let better = match &best {
            None => true,
            Some((b, bv)) => v > *bv || (v == *bv && a < *b),
        };
        if better {
            best = Some((a, v));
        }
    }
    best.expect("nonempty action space").0
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

/// Calls `f` on every `k`-subset of `0..n` in lexicographic order.
pub(crate) fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k == 0 || k > n {
        return;
    }
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        f(&c);
        let mut i = k;
        while i > 0 && c[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        c[i - 1] += 1;
        for j in i..k {
            c[j] = c[j - 1] + 1;
        }
    }
}

/// Symmetric positive semi-definite check with eigenvalue floor `-1e-9`.
pub fn check_psd(n: usize, sigma: &[f64]) -> Result<()> {
    if sigma.len() != n * n {
        return Err(Error::InvalidInstance(format!(
            "covariance has {} entries, expected {}",
            sigma.len(),
            n * n
        )));
    }
    let scale = sigma.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    for i in 0..n {
        for j in 0..i {
            if (sigma[i * n + j] - sigma[j * n + i]).abs() > 1e-12 * scale {
                return Err(Error::InvalidInstance(format!("covariance not symmetric at ({i}, {j})")));
            }
        }
    }
    let m = DMatrix::from_row_slice(n, n, sigma);
    let eig = m.symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-9 {
        return Err(Error::NotPsd(min));
    }
    Ok(())
}

/// A validated bandit problem: action space plus the true outcome law's
/// first two moments.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    space: ActionSpace,
    mu_star: Vec<f64>,
    sigma_star: Option<Vec<f64>>,
    kappa: f64,
    sparsity: Option<usize>,
    optimal_action: Action,
    optimal_value: f64,
}

impl ProblemInstance {
    pub fn new(
        space: ActionSpace,
        mu_star: Vec<f64>,
        sigma_star: Option<Vec<f64>>,
        kappa: f64,
        sparsity: Option<usize>,
    ) -> Result<Self> {
        let n = space.n();
        if mu_star.len() != n {
            return Err(Error::InvalidInstance(format!(
                "mean vector has length {}, expected {n}",
                mu_star.len()
            )));
        }
        if mu_star.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInstance("mean vector must be finite".into()));
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidInstance(format!("kappa must be nonnegative, got {kappa}")));
        }
        if let Some(s) = sparsity {
            if s == 0 || s > n {
                return Err(Error::InvalidInstance(format!("sparsity {s} outside 1..={n}")));
            }
        }
        if let Some(sig) = &sigma_star {
            check_psd(n, sig)?;
        }
        let (optimal_action, optimal_value) = match space.enumerate(DEFAULT_ENUMERATION_CAP) {
            Ok(actions) => {
                let mut best: Option<(Action, f64)> = None;
                for a in actions {
                    let v = a.value(&mu_star);
                    let better = match &best {
                        None => true,
                        Some((b, bv)) => v > *bv || (v == *bv && a < *b),
                    };
                    if better {
                        best = Some((a, v));
                    }
                }
                best.ok_or(Error::EmptyActionSpace)?
            }
            Err(Error::EnumerationOverflow { .. }) if space.is_matroid() => {
                let a = space.linear_argmax(&mu_star);
                let v = a.value(&mu_star);
                (a, v)
            }
            Err(e) => return Err(e),
        };
        Ok(ProblemInstance { space, mu_star, sigma_star, kappa, sparsity, optimal_action, optimal_value })
    }

    pub fn n(&self) -> usize {
        self.space.n()
    }

    pub fn m(&self) -> usize {
        self.space.max_size()
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn mu_star(&self) -> &[f64] {
        &self.mu_star
    }

    /// Row-major `n × n` covariance, when known.
    pub fn sigma_star(&self) -> Option<&[f64]> {
        self.sigma_star.as_deref()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn sparsity(&self) -> Option<usize> {
        self.sparsity
    }

    pub fn optimal_action(&self) -> &Action {
        &self.optimal_action
    }

    pub fn optimal_value(&self) -> f64 {
        self.optimal_value
    }

    /// `Δ(A) = (e_{A*} − e_A)ᵀ μ*`.
    pub fn gap(&self, a: &Action) -> Result<f64> {
        if !self.space.contains(a) {
            return Err(Error::UnknownAction(a.arms().to_vec()));
        }
        Ok((self.optimal_value - a.value(&self.mu_star)).max(0.0))
    }
}
