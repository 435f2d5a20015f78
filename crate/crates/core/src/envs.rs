//! Outcome generators.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Gamma, StandardNormal};

use crate::confidence::OutcomeRange;
use crate::error::{Error, Result};
use crate::instance::{check_psd, ActionSpace, ProblemInstance};

const CHOLESKY_JITTER: f64 = 1e-10;

/// Market-basket transactions over an item vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct TransactionTable {
    items: Vec<String>,
    transactions: Vec<Vec<usize>>,
    frequencies: Vec<f64>,
    skipped_lines: usize,
}

impl TransactionTable {
    /// Builds a table from item-name lists. Items are indexed in order of
    /// first appearance; repeats within a transaction are dropped.
    pub fn from_transactions<S: AsRef<str>>(rows: &[Vec<S>]) -> Result<Self> {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut items = Vec::new();
        let mut transactions = Vec::with_capacity(rows.len());
        for row in rows {
            let mut tx = Vec::with_capacity(row.len());
            for name in row {
                let name = name.as_ref();
                let id = *index.entry(name.to_string()).or_insert_with(|| {
                    items.push(name.to_string());
                    items.len() - 1
                });
                tx.push(id);
            }
            tx.sort_unstable();
            tx.dedup();
            if !tx.is_empty() {
                transactions.push(tx);
            }
        }
        if transactions.is_empty() {
            return Err(Error::InvalidEnvironment("no transactions".into()));
        }
        let mut counts = vec![0usize; items.len()];
        for tx in &transactions {
            for &i in tx {
                counts[i] += 1;
            }
        }
        let total = transactions.len() as f64;
        let frequencies = counts.iter().map(|&c| c as f64 / total).collect();
        Ok(TransactionTable { items, transactions, frequencies, skipped_lines: 0 })
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    pub fn transactions(&self) -> &[Vec<usize>] {
        &self.transactions
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Blank lines ignored while loading.
    pub fn skipped_lines(&self) -> usize {
        self.skipped_lines
    }

    /// Fraction of transactions containing both `i` and `j`.
    pub fn joint_frequency(&self, i: usize, j: usize) -> f64 {
        let c = self.transactions.iter().filter(|tx| tx.binary_search(&i).is_ok() && tx.binary_search(&j).is_ok()).count();
        c as f64 / self.len() as f64
    }

    /// Writes one comma-separated line per transaction.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for tx in &self.transactions {
            let names: Vec<&str> = tx.iter().map(|&i| self.items[i].as_str()).collect();
            writeln!(w, "{}", names.join(","))?;
        }
        Ok(())
    }
}

/// Reads a transaction file: one transaction per line, comma-separated
/// item tokens. Blank lines are skipped and counted.
pub fn load_transactions(path: impl AsRef<Path>) -> Result<TransactionTable> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::Transactions { path: path.to_path_buf(), msg: e.to_string() })?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut skipped = 0;
    let body = bytes.strip_suffix(b"\n").unwrap_or(&bytes);
    for (k, raw) in body.split(|&b| b == b'\n').enumerate() {
        let line = std::str::from_utf8(raw).map_err(|e| Error::TransactionLine {
            path: path.to_path_buf(),
            line: k + 1,
            msg: format!("invalid UTF-8: {e}"),
        })?;
        let tokens: Vec<String> = line.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
        if tokens.is_empty() {
            skipped += 1;
            continue;
        }
        rows.push(tokens);
    }
    if rows.is_empty() {
        return Err(Error::Transactions { path: path.to_path_buf(), msg: "file contains no transactions".into() });
    }
    if skipped > 0 {
        warn!("{}: skipped {skipped} blank line(s)", path.display());
    }
    let mut table = TransactionTable::from_transactions(&rows)?;
    table.skipped_lines = skipped;
    Ok(table)
}

#[derive(Clone, Debug)]
enum Sampler {
    Gaussian {
        /// Coordinates with positive variance and the Cholesky factor of
        /// their covariance block.
        active: Vec<usize>,
        factor: DMatrix<f64>,
    },
    SparseLowerBound {
        block: usize,
        blocks_per_draw: usize,
        ones_per_block: usize,
        first_block_prob: f64,
    },
    Multinomial {
        weights: WeightedIndex<f64>,
        trials: usize,
    },
    DirichletMultinomial {
        gammas: Vec<Gamma<f64>>,
        trials: usize,
    },
    Assortment {
        table: Arc<TransactionTable>,
        price: f64,
        cost: f64,
    },
}

/// A problem instance together with its outcome law.
#[derive(Clone, Debug)]
pub struct Environment {
    instance: ProblemInstance,
    sampler: Sampler,
    range: Option<OutcomeRange>,
    sparsity: Option<usize>,
}

impl Environment {
    /// Gaussian outcomes `N(μ*, Σ*)` with a PSD `Σ*` (row-major).
    pub fn gaussian(space: ActionSpace, mu_star: Vec<f64>, sigma_star: Vec<f64>) -> Result<Self> {
        let n = space.n();
        if mu_star.len() != n || sigma_star.len() != n * n {
            return Err(Error::InvalidEnvironment(format!("expected {n} means and {} covariance entries", n * n)));
        }
        check_psd(n, &sigma_star)?;
        let active: Vec<usize> = (0..n).filter(|&i| sigma_star[i * n + i] > 0.0).collect();
        let d = active.len();
        let block = DMatrix::from_fn(d, d, |r, c| sigma_star[active[r] * n + active[c]]);
        let factor = match block.clone().cholesky() {
            Some(ch) => ch.l(),
            None => (block + DMatrix::identity(d, d) * CHOLESKY_JITTER)
                .cholesky()
                .ok_or(Error::NotPsd(f64::NAN))?
                .l(),
        };
        let max_var = active.iter().map(|&i| sigma_star[i * n + i]).fold(0.0, f64::max);
        let kappa = max_var.sqrt();
        let instance = ProblemInstance::new(space, mu_star, Some(sigma_star), kappa, None)?;
        Ok(Environment { instance, sampler: Sampler::Gaussian { active, factor }, range: None, sparsity: None })
    }

    /// Gaussian lower-bound instance: `n/m` disjoint blocks, means zero on
    /// the first block and `−Δ/m` elsewhere, so every other block has gap `Δ`.
    pub fn thm1(n: usize, m: usize, sigma_star: Vec<f64>, delta: f64) -> Result<Self> {
        if m == 0 || !n.is_multiple_of(m) || n / m < 2 {
            return Err(Error::InvalidEnvironment(format!("n/m must be an integer ≥ 2 (n = {n}, m = {m})")));
        }
        if delta <= 0.0 {
            return Err(Error::InvalidEnvironment(format!("gap must be positive, got {delta}")));
        }
        let space = ActionSpace::partition(n, m)?;
        let mu = (0..n).map(|i| if i < m { 0.0 } else { -delta / m as f64 }).collect();
        Self::gaussian(space, mu, sigma_star)
    }

    /// Sparse lower-bound instance: each draw picks `1 ∨ (s/m)` blocks of
    /// size `m` and sets the first `s ∧ m` arms of every chosen block to 1.
    /// The first block is picked with probability `(1 ∨ s/m) m/n + δ(1 − m/n)`,
    /// the remaining picks are uniform without replacement among the others.
    pub fn thm3(n: usize, m: usize, s: usize, delta: f64) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidEnvironment(msg));
        if m == 0 || s == 0 || !n.is_multiple_of(m) || !n.is_multiple_of(s) || n / m < 2 || n / s < 2 {
            return bad(format!("n/m and n/s must be integers ≥ 2 (n = {n}, m = {m}, s = {s})"));
        }
        if s > m && !s.is_multiple_of(m) {
            return bad(format!("s/m must be an integer when s > m (s = {s}, m = {m})"));
        }
        if delta < 0.0 {
            return bad(format!("offset must be nonnegative, got {delta}"));
        }
        let k = (s / m).max(1);
        let ones = s.min(m);
        let gap = ones as f64 * delta;
        let max_gap = (m * s) as f64 / (2.0 * (n - m) as f64);
        if gap > max_gap {
            return bad(format!("gap (s∧m)δ = {gap} exceeds ms/(2(n−m)) = {max_gap}"));
        }
        let (nf, mf) = (n as f64, m as f64);
        let p1 = k as f64 * mf / nf + delta * (1.0 - mf / nf);
        let blocks = n / m;
        let p_other = (k as f64 - p1) / (blocks - 1) as f64;
        if !(0.0..=1.0).contains(&p1) || p_other < 0.0 {
            return bad(format!("selection probability {p1} out of range"));
        }
        let mu = (0..n)
            .map(|i| {
                if i % m >= ones {
                    0.0
                } else if i < m {
                    p1
                } else {
                    p_other
                }
            })
            .collect();
        let instance = ProblemInstance::new(ActionSpace::partition(n, m)?, mu, None, 0.5, Some(s))?;
        Ok(Environment {
            instance,
            sampler: Sampler::SparseLowerBound { block: m, blocks_per_draw: k, ones_per_block: ones, first_block_prob: p1 },
            range: Some(OutcomeRange::UNIT),
            sparsity: Some(s),
        })
    }

    /// `X = counts / s` where counts follow a multinomial with `s` trials.
    pub fn multinomial_sparse(space: ActionSpace, probs: Vec<f64>, trials: usize) -> Result<Self> {
        let n = space.n();
        check_probabilities(n, &probs, trials)?;
        let sum: f64 = probs.iter().sum();
        let p: Vec<f64> = probs.iter().map(|v| v / sum).collect();
        let s = trials as f64;
        let mut sigma = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                sigma[i * n + j] = (if i == j { p[i] } else { 0.0 } - p[i] * p[j]) / s;
            }
        }
        let weights = WeightedIndex::new(&p).map_err(|e| Error::InvalidEnvironment(e.to_string()))?;
        let instance = ProblemInstance::new(space, p, Some(sigma), 0.5, Some(trials))?;
        Ok(Environment {
            instance,
            sampler: Sampler::Multinomial { weights, trials },
            range: Some(OutcomeRange::UNIT),
            sparsity: Some(trials),
        })
    }

    /// Multinomial with `s` trials whose category law is redrawn from
    /// `Dirichlet(α)` every round; outcomes are `counts / s`.
    pub fn dirichlet_multinomial(space: ActionSpace, alpha: Vec<f64>, trials: usize) -> Result<Self> {
        let n = space.n();
        check_probabilities(n, &alpha, trials)?;
        if alpha.iter().any(|&a| a <= 0.0) {
            return Err(Error::InvalidEnvironment("Dirichlet parameters must be positive".into()));
        }
        let total: f64 = alpha.iter().sum();
        let mu = alpha.iter().map(|a| a / total).collect();
        let gammas = alpha
            .iter()
            .map(|&a| Gamma::new(a, 1.0).map_err(|e| Error::InvalidEnvironment(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let instance = ProblemInstance::new(space, mu, None, 0.5, Some(trials))?;
        Ok(Environment {
            instance,
            sampler: Sampler::DirichletMultinomial { gammas, trials },
            range: Some(OutcomeRange::UNIT),
            sparsity: Some(trials),
        })
    }

    /// Assortment over every item subset of size at most `max_size`
    /// (all items when `None`). Each round draws a uniform transaction;
    /// an offered item earns `price − cost` when it is in the transaction
    /// and `−cost` otherwise.
    pub fn assortment(table: Arc<TransactionTable>, price: f64, cost: f64, max_size: Option<usize>) -> Result<Self> {
        if !(price > cost && cost >= 0.0) {
            return Err(Error::InvalidEnvironment(format!("need price > cost ≥ 0 (price = {price}, cost = {cost})")));
        }
        if table.is_empty() {
            return Err(Error::InvalidEnvironment("empty transaction table".into()));
        }
        let n = table.n_items();
        let m = max_size.unwrap_or(n).min(n);
        let f = table.frequencies();
        let mu: Vec<f64> = f.iter().map(|&q| (price - cost) * q - cost * (1.0 - q)).collect();
        let mut sigma = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let fij = if i == j { f[i] } else { table.joint_frequency(i, j) };
                let c = price * price * (fij - f[i] * f[j]);
                sigma[i * n + j] = c;
                sigma[j * n + i] = c;
            }
        }
        let instance = ProblemInstance::new(ActionSpace::uniform_matroid(n, m)?, mu, Some(sigma), price / 2.0, None)?;
        Ok(Environment {
            instance,
            sampler: Sampler::Assortment { table, price, cost },
            range: Some(OutcomeRange { lo: -cost, hi: price - cost }),
            sparsity: None,
        })
    }

    pub fn instance(&self) -> &ProblemInstance {
        &self.instance
    }

    pub fn n(&self) -> usize {
        self.instance.n()
    }

    pub fn kind_name(&self) -> &'static str {
        match self.sampler {
            Sampler::Gaussian { .. } => "gaussian",
            Sampler::SparseLowerBound { .. } => "sparse-lb",
            Sampler::Multinomial { .. } => "multinomial-sparse",
            Sampler::DirichletMultinomial { .. } => "dirichlet-multinomial",
            Sampler::Assortment { .. } => "assortment",
        }
    }

    /// Almost-sure bounds on each outcome, when the law is bounded.
    pub fn outcome_range(&self) -> Option<OutcomeRange> {
        self.range
    }

    /// Almost-sure bound on `‖X‖₀`, when the law is sparse.
    pub fn sparsity(&self) -> Option<usize> {
        self.sparsity
    }

    /// Lower-triangular factor of the positive-variance block, when Gaussian.
    pub fn cholesky_factor(&self) -> Option<(&[usize], &DMatrix<f64>)> {
        match &self.sampler {
            Sampler::Gaussian { active, factor } => Some((active, factor)),
            _ => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = vec![0.0; self.n()];
        self.sample_into(rng, &mut x);
        x
    }

    /// Draws one outcome vector into `x`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, x: &mut [f64]) {
        let mu = self.instance.mu_star();
        match &self.sampler {
            Sampler::Gaussian { active, factor } => {
                x.copy_from_slice(mu);
                let z = DVector::from_fn(active.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                let y = factor * z;
                for (k, &i) in active.iter().enumerate() {
                    x[i] += y[k];
                }
            }
            Sampler::SparseLowerBound { block, blocks_per_draw, ones_per_block, first_block_prob } => {
                x.fill(0.0);
                let others = self.n() / block - 1;
                let first = rng.random::<f64>() < *first_block_prob;
                let mut light = |b: usize| {
                    for v in &mut x[b * block..b * block + ones_per_block] {
                        *v = 1.0;
                    }
                };
                let rest = if first {
                    light(0);
                    blocks_per_draw - 1
                } else {
                    *blocks_per_draw
                };
                for b in index::sample(rng, others, rest) {
                    light(b + 1);
                }
            }
            Sampler::Multinomial { weights, trials } => {
                x.fill(0.0);
                let inc = 1.0 / *trials as f64;
                for _ in 0..*trials {
                    x[weights.sample(rng)] += inc;
                }
            }
            Sampler::DirichletMultinomial { gammas, trials } => {
                x.fill(0.0);
                let g: Vec<f64> = gammas.iter().map(|d| d.sample(rng)).collect();
                let total: f64 = g.iter().sum();
                let inc = 1.0 / *trials as f64;
                for _ in 0..*trials {
                    let u = rng.random::<f64>() * total;
                    let mut acc = 0.0;
                    let mut pick = g.len() - 1;
                    for (i, &w) in g.iter().enumerate() {
                        acc += w;
                        if u < acc {
                            pick = i;
                            break;
                        }
                    }
                    x[pick] += inc;
                }
            }
            Sampler::Assortment { table, price, cost } => {
                x.fill(-cost);
                let tx = &table.transactions()[rng.random_range(0..table.len())];
                for &i in tx {
                    x[i] = price - cost;
                }
            }
        }
    }
}

/// Monte-Carlo estimate of `E exp(λ (X_i − μ*_i))` against the
/// sub-Gaussian bound `exp(κ² λ² / 2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MgfSample {
    pub arm: usize,
    pub lambda: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub bound: f64,
}

impl MgfSample {
    /// Whether the estimate is within `z` standard errors of the bound.
    pub fn within(&self, z: f64) -> bool {
        self.empirical <= self.bound * (1.0 + z * self.std_error)
    }
}

pub fn empirical_mgf<R: Rng + ?Sized>(env: &Environment, arm: usize, lambda: f64, draws: usize, rng: &mut R) -> MgfSample {
    let mu = env.instance().mu_star()[arm];
    let kappa = env.instance().kappa();
    let mut x = vec![0.0; env.n()];
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..draws {
        env.sample_into(rng, &mut x);
        let v = (lambda * (x[arm] - mu)).exp();
        s1 += v;
        s2 += v * v;
    }
    let k = draws as f64;
    let mean = s1 / k;
    let std_error = ((s2 / k - mean * mean).max(0.0) / k).sqrt();
    MgfSample { arm, lambda, empirical: mean, std_error, bound: (kappa * kappa * lambda * lambda / 2.0).exp() }
}

fn check_probabilities(n: usize, p: &[f64], trials: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::InvalidEnvironment(format!("expected {n} weights, got {}", p.len())));
    }
    if trials == 0 {
        return Err(Error::InvalidEnvironment("number of trials must be positive".into()));
    }
    if p.iter().any(|&v| v < 0.0 || !v.is_finite()) || p.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidEnvironment("weights must be nonnegative with a positive sum".into()));
    }
    Ok(())
}

/// `σ² ((1 − γ) I + γ 𝟙𝟙ᵀ)` on each of the `n/m` diagonal blocks, zero
/// across blocks (row-major).
pub fn block_covariance(n: usize, m: usize, sigma2: f64, gamma: f64) -> Vec<f64> {
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i / m == j / m {
                s[i * n + j] = sigma2 * if i == j { 1.0 } else { gamma };
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn thm1_means_and_gaps() {
        let env = Environment::thm1(4, 2, block_covariance(4, 2, 1.0, 0.0), 0.2).unwrap();
        assert_eq!(env.instance().mu_star(), &[0.0, 0.0, -0.1, -0.1]);
        let inst = env.instance();
        let gap = inst.gap(&crate::instance::Action::new([2, 3])).unwrap();
        assert!((gap - 0.2).abs() < 1e-15);
        assert!(Environment::thm1(5, 2, vec![0.0; 25], 0.2).is_err());
        assert!(Environment::thm1(2, 2, vec![0.0; 4], 0.2).is_err());
    }

    #[test]
    fn zero_covariance_returns_means() {
        let space = ActionSpace::partition(4, 2).unwrap();
        let env = Environment::gaussian(space, vec![0.1, 0.2, 0.3, 0.4], vec![0.0; 16]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(env.sample(&mut rng), vec![0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn cholesky_reproduces_covariance() {
        let sigma = block_covariance(6, 3, 0.5, 0.4);
        let env = Environment::thm1(6, 3, sigma.clone(), 0.1).unwrap();
        let (active, l) = env.cholesky_factor().unwrap();
        let llt = l * l.transpose();
        for (r, &i) in active.iter().enumerate() {
            for (c, &j) in active.iter().enumerate() {
                assert!((llt[(r, c)] - sigma[i * 6 + j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn singular_covariance_is_accepted() {
        let env = Environment::thm1(4, 2, block_covariance(4, 2, 1.0, 1.0), 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = env.sample(&mut rng);
        assert!((x[0] - x[1]).abs() < 1e-3);
    }

    #[test]
    fn thm3_sparsity_and_parameters() {
        let env = Environment::thm3(12, 6, 2, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = env.sample(&mut rng);
            assert_eq!(x.iter().filter(|&&v| v != 0.0).count(), 2);
            assert!(x.iter().all(|&v| v == 0.0 || v == 1.0));
        }
        assert!(Environment::thm3(12, 5, 2, 0.05).is_err());
        assert!(Environment::thm3(12, 6, 2, 10.0).is_err());
        let sym = Environment::thm3(12, 6, 2, 0.0).unwrap();
        let inst = sym.instance();
        assert_eq!(inst.gap(&crate::instance::Action::new(6..12)).unwrap(), 0.0);
    }

    #[test]
    fn assortment_means() {
        let rows = vec![vec!["milk", "bread"], vec!["milk"]];
        let table = Arc::new(TransactionTable::from_transactions(&rows).unwrap());
        assert_eq!(table.frequencies(), &[1.0, 0.5]);
        let env = Environment::assortment(table, 1.5, 0.1, None).unwrap();
        let mu = env.instance().mu_star();
        assert!((mu[0] - 1.4).abs() < 1e-15);
        assert!((mu[1] - (1.4 * 0.5 - 0.1 * 0.5)).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = env.sample(&mut rng);
        assert!((x[0] - 1.4).abs() < 1e-15);
        assert!(x[1] == 1.4 || x[1] == -0.1);
        assert!(Environment::assortment(Arc::new(TransactionTable::from_transactions(&rows).unwrap()), 0.1, 0.1, None).is_err());
    }

    #[test]
    fn identical_seeds_identical_streams() {
        let env = Environment::thm3(8, 2, 4, 0.0).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            assert_eq!(env.sample(&mut a), env.sample(&mut b));
        }
    }
}
