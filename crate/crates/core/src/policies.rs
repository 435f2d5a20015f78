//! Round-by-round action selection.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::{
    build_region, cov_ucb, kl_ucb_index_in, region_radius, v_index_in, OutcomeRange, RegionKind, RegionSpec,
    DEFAULT_ZETA,
};
use crate::error::{Error, Result};
use crate::instance::{Action, ActionSpace, SpaceKind, DEFAULT_ENUMERATION_CAP};
use crate::optimize::{
    argmax_over, greedy_max, lovasz_maximize, region_max, round_levels, AscentConfig, CompositeObjective,
    PairwiseSupermodular,
};
use crate::stats::Statistics;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    EscbC,
    EscbCSparse,
    EscbCV,
    CucbV,
    CucbKl,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] =
        [PolicyKind::EscbC, PolicyKind::EscbCSparse, PolicyKind::EscbCV, PolicyKind::CucbV, PolicyKind::CucbKl];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::EscbC => "escb-c",
            PolicyKind::EscbCSparse => "escb-c-sparse",
            PolicyKind::EscbCV => "escb-c-v",
            PolicyKind::CucbV => "cucb-v",
            PolicyKind::CucbKl => "cucb-kl",
        }
    }

    /// Kinds whose region needs every co-occurring pair observed.
    pub fn needs_pairs(&self) -> bool {
        matches!(self, PolicyKind::EscbC | PolicyKind::EscbCV)
    }

    pub fn is_cucb(&self) -> bool {
        matches!(self, PolicyKind::CucbV | PolicyKind::CucbKl)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy {s:?}")))
    }
}

/// How the optimistic combinatorial problem is solved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Exact,
    Greedy,
    Lovasz,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Greedy => "greedy",
            Mode::Lovasz => "lovasz",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Mode::Exact),
            "greedy" => Ok(Mode::Greedy),
            "lovasz" => Ok(Mode::Lovasz),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    /// Sparsity level for the sparse policy; defaults to the environment's.
    #[serde(default)]
    pub s: Option<usize>,
    #[serde(default = "default_cap")]
    pub enumeration_cap: usize,
    /// Outcome bounds for the per-arm baselines; defaults to the
    /// environment's, then to `[0, 1]`.
    #[serde(default)]
    pub range: Option<OutcomeRange>,
}

fn default_zeta() -> f64 {
    DEFAULT_ZETA
}

fn default_cap() -> usize {
    DEFAULT_ENUMERATION_CAP
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind, mode: Mode) -> Self {
        PolicyConfig { kind, mode, zeta: DEFAULT_ZETA, s: None, enumeration_cap: DEFAULT_ENUMERATION_CAP, range: None }
    }
}

/// What a selection looked like from the inside.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub initialization: bool,
    /// Optimistic mean vector `μ_t` (ESCB kinds in exact or greedy mode).
    pub mu: Option<Vec<f64>>,
    /// Per-arm indices (CUCB kinds) or the relaxed maximizer (Lovász mode).
    pub indices: Option<Vec<f64>>,
    /// Objective value of the selected action.
    pub value: f64,
    pub inner_iterations: usize,
    pub evaluations: usize,
}

/// Forced actions played before the first adaptive round. Covers every
/// co-occurring pair and every arm for kinds that need pairs, every arm
/// otherwise. A space holding `[n]` gets the single action `[n]`.
pub fn init_schedule(space: &ActionSpace, kind: PolicyKind, cap: usize) -> Result<Vec<Action>> {
    let n = space.n();
    if let Some(i) = space.coverable_arms().iter().position(|&c| !c) {
        return Err(Error::Uncoverable(i));
    }
    let full = Action::new(0..n);
    if space.contains(&full) {
        return Ok(vec![full]);
    }
    if let SpaceKind::UniformMatroid = space.kind() {
        if space.count().is_none_or(|c| c > cap) {
            return Ok(chunked_schedule(n, space.max_size(), kind.needs_pairs()));
        }
    }
    let actions = space.enumerate(cap)?;
    let mut pending: HashSet<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    if kind.needs_pairs() {
        pending.extend(space.co_occurring_pairs());
    }
    let mut schedule = Vec::new();
    while !pending.is_empty() {
        let mut best: Option<(&Action, usize)> = None;
        for a in &actions {
            let arms = a.arms();
            let mut gain = 0;
            for (p, &i) in arms.iter().enumerate() {
                for &j in &arms[p..] {
                    if pending.contains(&(i, j)) {
                        gain += 1;
                    }
                }
            }
            if gain > best.map_or(0, |(_, g)| g) {
                best = Some((a, gain));
            }
        }
        let (a, _) = best.ok_or_else(|| {
            let &(i, _) = pending.iter().min().expect("nonempty");
            Error::Uncoverable(i)
        })?;
        let arms = a.arms();
        for (p, &i) in arms.iter().enumerate() {
            for &j in &arms[p..] {
                pending.remove(&(i, j));
            }
        }
        schedule.push(a.clone());
    }
    Ok(schedule)
}

/// Schedule for large uniform matroids: chunks of size `m/2` played in
/// pairs when pairs are needed, chunks of size `m` otherwise.
fn chunked_schedule(n: usize, m: usize, pairs: bool) -> Vec<Action> {
    let size = if pairs { (m / 2).max(1) } else { m };
    let chunks: Vec<Vec<usize>> = (0..n).collect::<Vec<_>>().chunks(size).map(<[usize]>::to_vec).collect();
    if !pairs || chunks.len() == 1 || m < 2 {
        return chunks.into_iter().map(Action::new).collect();
    }
    let mut out = Vec::new();
    for a in 0..chunks.len() {
        for b in a + 1..chunks.len() {
            out.push(Action::new(chunks[a].iter().chain(&chunks[b]).copied()));
        }
    }
    out
}

/// Per-run policy state.
pub struct Policy {
    config: PolicyConfig,
    space: ActionSpace,
    stats: Statistics,
    schedule: VecDeque<Action>,
    init_len: usize,
    actions: Option<Vec<Action>>,
    range: OutcomeRange,
    sparsity: usize,
    horizon: u64,
    rng: ChaCha8Rng,
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Policy").field("config", &self.config).field("rounds", &self.stats.rounds()).finish()
    }
}

impl Policy {
    /// `range` and `sparsity` come from the environment when known;
    /// `horizon` enters the Lovász objective; `rng` is used only for rounding.
    pub fn new(
        config: PolicyConfig,
        space: ActionSpace,
        range: Option<OutcomeRange>,
        sparsity: Option<usize>,
        horizon: u64,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let kind = config.kind;
        if !(config.zeta > 0.0) {
            return Err(Error::Config(format!("zeta must be positive, got {}", config.zeta)));
        }
        let unsupported = |msg: &str| Err(Error::UnsupportedMode { mode: config.mode.as_str(), msg: msg.into() });
        match config.mode {
            Mode::Exact if kind.is_cucb() => {}
            Mode::Exact => {
                if space.count().is_none_or(|c| c > config.enumeration_cap) {
                    return unsupported(&format!(
                        "more than {} actions; use greedy or lovasz mode",
                        config.enumeration_cap
                    ));
                }
            }
            Mode::Greedy if kind.is_cucb() => {}
            Mode::Greedy if !space.is_matroid() => return unsupported("greedy needs a matroid action space"),
            Mode::Greedy => {}
            Mode::Lovasz if kind != PolicyKind::EscbC => return unsupported("lovasz rounding is implemented for escb-c"),
            Mode::Lovasz if !matches!(space.kind(), SpaceKind::UniformMatroid) => {
                return unsupported("lovasz rounding needs a uniform matroid action space")
            }
            Mode::Lovasz => {}
        }
        let sparsity = match kind {
            PolicyKind::EscbCSparse => config
                .s
                .or(sparsity)
                .ok_or_else(|| Error::Config("sparse policy needs s".into()))?,
            _ => config.s.or(sparsity).unwrap_or(space.n()),
        };
        if sparsity == 0 {
            return Err(Error::Config("s must be positive".into()));
        }
        let range = config.range.or(range).unwrap_or(OutcomeRange::UNIT);
        if !(range.width() > 0.0) {
            return Err(Error::Config(format!("empty outcome range [{}, {}]", range.lo, range.hi)));
        }
        let schedule = init_schedule(&space, kind, config.enumeration_cap)?;
        let actions = if config.mode == Mode::Exact && !kind.is_cucb() {
            Some(space.enumerate(config.enumeration_cap)?)
        } else {
            None
        };
        let stats = if kind.needs_pairs() || config.mode == Mode::Lovasz {
            Statistics::for_space(&space)
        } else {
            Statistics::with_pairs(space.n(), &[])
        };
        Ok(Policy {
            init_len: schedule.len(),
            schedule: schedule.into(),
            config,
            space,
            stats,
            actions,
            range,
            sparsity,
            horizon: horizon.max(2),
            rng,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn stats(&self) -> &Statistics {
        &self.stats
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    /// Length of the forced initialization.
    pub fn init_len(&self) -> usize {
        self.init_len
    }

    pub fn in_initialization(&self) -> bool {
        !self.schedule.is_empty()
    }

    fn region_kind(&self) -> RegionKind {
        match self.config.kind {
            PolicyKind::EscbCSparse => RegionKind::Sparse { s: self.sparsity },
            PolicyKind::EscbCV => RegionKind::CovarianceBox { zeta: self.config.zeta, range: self.range },
            _ => RegionKind::Covariance,
        }
    }

    /// Confidence region the policy uses for `a` at round `t`.
    pub fn region(&self, a: &Action, t: u64) -> Result<RegionSpec> {
        build_region(a, &self.stats, t, self.space.max_size(), self.region_kind())
    }

    /// Chooses the action for round `t` (1-based).
    pub fn select(&mut self, t: u64) -> Result<(Action, Diagnostics)> {
        if t == 0 {
            return Err(Error::OutOfRange("rounds are numbered from 1".into()));
        }
        if let Some(a) = self.schedule.pop_front() {
            return Ok((a, Diagnostics { initialization: true, ..Diagnostics::default() }));
        }
        if t < 2 {
            return Err(Error::PreInitialization(t));
        }
        match (self.config.kind, self.config.mode) {
            (PolicyKind::CucbV | PolicyKind::CucbKl, _) => self.select_cucb(t),
            (_, Mode::Exact) => self.select_exact(t),
            (_, Mode::Greedy) => self.select_greedy(t),
            (_, Mode::Lovasz) => self.select_lovasz(t),
        }
    }

    /// Feeds back the outcome of the round's action.
    pub fn observe(&mut self, a: &Action, x: &[f64]) {
        self.stats.record(a, x);
    }

    fn means(&self) -> Vec<f64> {
        (0..self.space.n()).map(|i| self.stats.mean(i).unwrap_or(0.0)).collect()
    }

    fn select_cucb(&mut self, t: u64) -> Result<(Action, Diagnostics)> {
        let n = self.space.n();
        let mut idx = Vec::with_capacity(n);
        for i in 0..n {
            let v = match self.config.kind {
                PolicyKind::CucbV => v_index_in(&self.stats, i, t, self.config.zeta, self.range)?,
                _ => kl_ucb_index_in(&self.stats, i, t, self.config.zeta, self.range)?,
            };
            idx.push(v);
        }
        let a = self.space.linear_argmax(&idx);
        let value = a.value(&idx);
        Ok((a, Diagnostics { value, indices: Some(idx), evaluations: n, ..Diagnostics::default() }))
    }

    fn select_exact(&mut self, t: u64) -> Result<(Action, Diagnostics)> {
        let base = self.means();
        let actions = self.actions.as_ref().expect("enumerated at construction");
        let out = argmax_over(actions, &base, |a| self.region(a, t))?;
        let diag = Diagnostics {
            value: out.value,
            mu: Some(out.mu),
            inner_iterations: out.iterations,
            evaluations: out.evaluations,
            ..Diagnostics::default()
        };
        Ok((out.action, diag))
    }

    fn select_greedy(&mut self, t: u64) -> Result<(Action, Diagnostics)> {
        let n = self.space.n();
        let mut iterations = 0;
        let mut solve = |arms: &[usize]| -> Result<(f64, Vec<f64>)> {
            let a = Action::new(arms.iter().copied());
            let region = self.region(&a, t)?;
            let sol = region_max(&region, &a)?;
            iterations += sol.iterations;
            let mu: Vec<f64> = region.center.iter().zip(&sol.xi).map(|(c, x)| c + x).collect();
            Ok((sol.value, mu))
        };
        let g = greedy_max(n, |s| solve(s).map(|r| r.0), |s| self.space.is_independent(s))?;
        let mut evaluations = g.evaluations;
        let members = if g.members.is_empty() {
            let mut best: Option<(usize, f64)> = None;
            for i in (0..n).filter(|&i| self.space.is_independent(&[i])) {
                let v = solve(&[i])?.0;
                evaluations += 1;
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((i, v));
                }
            }
            vec![best.ok_or(Error::EmptyActionSpace)?.0]
        } else {
            g.members
        };
        let a = Action::new(members);
        let (value, local) = solve(a.arms())?;
        let mut mu = self.means();
        for (p, &i) in a.arms().iter().enumerate() {
            mu[i] = local[p];
        }
        let diag =
            Diagnostics { value, mu: Some(mu), inner_iterations: iterations, evaluations, ..Diagnostics::default() };
        Ok((a, diag))
    }

    /// Relaxed objective `xᵀμ̄ + 2√(δ(t) G₁^L(x)) + 4mδ(T)√(G₂^L(x))` with
    /// `G₁(A) = Σ_{i,j∈A} (0 ∨ Σ_ij,t) / N_i` and `G₂(A) = Σ_{i∈A} 1/N_i²`.
    pub fn lovasz_objective(&self, t: u64) -> Result<CompositeObjective> {
        let n = self.space.n();
        let m = self.space.max_size();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            let ni = self.stats.count(i) as f64;
            for j in 0..n {
                if i == j || self.stats.has_pair(i, j) {
                    a[i * n + j] = cov_ucb(&self.stats, i, j, t)?.max(0.0) / ni;
                }
            }
        }
        let g1 = PairwiseSupermodular::new(n, a)?;
        let inv_sq: Vec<f64> = (0..n).map(|i| (self.stats.count(i) as f64).powi(-2)).collect();
        let g2 = PairwiseSupermodular::diagonal(&inv_sq)?;
        let c1 = 2.0 * region_radius(t, m).sqrt();
        let c2 = 4.0 * m as f64 * region_radius(self.horizon, m);
        CompositeObjective::new(self.means(), vec![(c1, g1), (c2, g2)])
    }

    fn select_lovasz(&mut self, t: u64) -> Result<(Action, Diagnostics)> {
        let m = self.space.max_size();
        let objective = self.lovasz_objective(t)?;
        let sol = lovasz_maximize(std::slice::from_ref(&objective), m, AscentConfig::default(), &mut self.rng)?;
        let u: f64 = self.rng.random();
        let mut set = round_levels(&sol.x, u);
        if set.len() > m {
            set.sort_by(|&a, &b| sol.x[b].total_cmp(&sol.x[a]).then(a.cmp(&b)));
            set.truncate(m);
        }
        if set.is_empty() {
            let best = (0..sol.x.len()).fold(0, |b, i| if sol.x[i] > sol.x[b] { i } else { b });
            set.push(best);
        }
        let a = Action::new(set);
        let value = objective.set_value(a.arms());
        let diag = Diagnostics {
            value,
            indices: Some(sol.x),
            inner_iterations: sol.iterations,
            evaluations: 1,
            ..Diagnostics::default()
        };
        Ok((a, diag))
    }
}
