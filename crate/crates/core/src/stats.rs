//! Incremental sufficient statistics under semi-bandit feedback.
//!
//! Per arm we keep the play count, the sum of outcomes and the sum of
//! absolute outcomes. Per co-occurring pair `i <= j` we keep the joint
//! count and the three running sums `Σ X_i X_j`, `Σ X_i`, `Σ X_j` over the
//! rounds where both arms were played, which is all the covariance
//! estimator needs.

use std::io::Write;

use crate::error::{Error, Result};
use crate::instance::{Action, ActionSpace};

const NO_SLOT: u32 = u32::MAX;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairSums {
    pub count: u64,
    pub prod: f64,
    pub first: f64,
    pub second: f64,
}

#[derive(Clone, Debug)]
pub struct Statistics {
    n: usize,
    rounds: u64,
    count: Vec<u64>,
    sum: Vec<f64>,
    abs_sum: Vec<f64>,
    slot: Vec<u32>,
    pairs: Vec<PairSums>,
    pair_index: Vec<(usize, usize)>,
}

impl Statistics {
    /// Allocates the diagonal plus every pair that co-occurs in `space`.
    pub fn for_space(space: &ActionSpace) -> Self {
        Self::with_pairs(space.n(), &space.co_occurring_pairs())
    }

    /// Allocates the diagonal plus the given off-diagonal pairs.
    pub fn with_pairs(n: usize, off_diagonal: &[(usize, usize)]) -> Self {
        let mut slot = vec![NO_SLOT; n * n];
        let mut pair_index = Vec::with_capacity(n + off_diagonal.len());
        for i in 0..n {
            slot[i * n + i] = pair_index.len() as u32;
            pair_index.push((i, i));
        }
        for &(a, b) in off_diagonal {
            let (i, j) = if a <= b { (a, b) } else { (b, a) };
            if slot[i * n + j] == NO_SLOT {
                slot[i * n + j] = pair_index.len() as u32;
                pair_index.push((i, j));
            }
        }
        Statistics {
            n,
            rounds: 0,
            count: vec![0; n],
            sum: vec![0.0; n],
            abs_sum: vec![0.0; n],
            slot,
            pairs: vec![PairSums::default(); pair_index.len()],
            pair_index,
        }
    }

    /// Every pair allocated; convenient for forced-exploration experiments.
    pub fn dense(n: usize) -> Self {
        let mut p = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                p.push((i, j));
            }
        }
        Self::with_pairs(n, &p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of rounds recorded so far.
    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    fn slot_of(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        match self.slot[i * self.n + j] {
            NO_SLOT => None,
            s => Some(s as usize),
        }
    }

    pub fn has_pair(&self, i: usize, j: usize) -> bool {
        self.slot_of(i, j).is_some()
    }

    /// Records one round: only coordinates in `a` are read from `x`.
    /// Pairs without an allocated slot are skipped.
    pub fn record(&mut self, a: &Action, x: &[f64]) {
        let arms = a.arms();
        for (p, &i) in arms.iter().enumerate() {
            let xi = x[i];
            self.count[i] += 1;
            self.sum[i] += xi;
            self.abs_sum[i] += xi.abs();
            for &j in &arms[p..] {
                if let Some(s) = self.slot_of(i, j) {
                    let xj = x[j];
                    let e = &mut self.pairs[s];
                    e.count += 1;
                    e.prod += xi * xj;
                    e.first += xi;
                    e.second += xj;
                }
            }
        }
        self.rounds += 1;
    }

    /// `N_i`.
    pub fn count(&self, i: usize) -> u64 {
        self.count[i]
    }

    /// `S_i = Σ X_i`.
    pub fn sum(&self, i: usize) -> f64 {
        self.sum[i]
    }

    pub fn abs_sum(&self, i: usize) -> f64 {
        self.abs_sum[i]
    }

    /// `N_ij`; zero for unallocated pairs.
    pub fn pair_count(&self, i: usize, j: usize) -> u64 {
        self.slot_of(i, j).map_or(0, |s| self.pairs[s].count)
    }

    /// Running sums for the canonical pair `(min, max)`.
    pub fn pair_sums(&self, i: usize, j: usize) -> Option<&PairSums> {
        self.slot_of(i, j).map(|s| &self.pairs[s])
    }

    /// Empirical mean `μ̄_i = S_i / N_i`.
    pub fn mean(&self, i: usize) -> Result<f64> {
        match self.count[i] {
            0 => Err(Error::UnobservedArm(i)),
            c => Ok(self.sum[i] / c as f64),
        }
    }

    /// Empirical absolute mean `ν̄_i`.
    pub fn abs_mean(&self, i: usize) -> Result<f64> {
        match self.count[i] {
            0 => Err(Error::UnobservedArm(i)),
            c => Ok(self.abs_sum[i] / c as f64),
        }
    }

    /// Covariance estimate
    /// `Σ̄_ij = (P_ij − μ̄_i V_ij − μ̄_j U_ij) / N_ij + μ̄_i μ̄_j`,
    /// evaluated on the canonical `(min, max)` ordering so that it is
    /// symmetric bit for bit.
    pub fn cov_estimate(&self, i: usize, j: usize) -> Result<f64> {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let s = self.slot_of(i, j).ok_or(Error::MissingPair(i, j))?;
        let e = &self.pairs[s];
        if e.count == 0 {
            return Err(Error::NeverCoObserved(i, j));
        }
        let mi = self.mean(i)?;
        let mj = self.mean(j)?;
        Ok((e.prod - mi * e.second - mj * e.first) / e.count as f64 + mi * mj)
    }

    /// Empirical variance `σ̄²_i`, the diagonal of the covariance estimate
    /// floored at zero.
    pub fn variance(&self, i: usize) -> Result<f64> {
        Ok(self.cov_estimate(i, i)?.max(0.0))
    }

    /// Debug dump with columns `i,j,N_ij,P_ij,U_ij,V_ij`.
    pub fn write_pairs_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,j,N_ij,P_ij,U_ij,V_ij")?;
        let mut order: Vec<usize> = (0..self.pair_index.len()).collect();
        order.sort_by_key(|&s| self.pair_index[s]);
        for s in order {
            let (i, j) = self.pair_index[s];
            let e = &self.pairs[s];
            writeln!(w, "{i},{j},{},{:e},{:e},{:e}", e.count, e.prod, e.first, e.second)?;
        }
        Ok(())
    }
}
