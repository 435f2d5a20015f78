//! TOML environment descriptions.
//!
//! ```toml
//! kind = "thm1"
//! n = 6
//! m = 2
//! delta = 0.2
//! sigma2 = 1.0
//! gamma = 0.0
//! ```
//!
//! Relative paths (`sigma_file`, `transactions`) are resolved against the
//! directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::envs::{block_covariance, load_transactions, Environment};
use crate::error::{Error, Result};
use crate::instance::{Action, ActionSpace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpaceConfig {
    Partition { n: usize, m: usize },
    Uniform { n: usize, m: usize },
    Explicit { n: usize, actions: Vec<Vec<usize>> },
}

impl SpaceConfig {
    pub fn build(&self) -> Result<ActionSpace> {
        match self {
            SpaceConfig::Partition { n, m } => ActionSpace::partition(*n, *m),
            SpaceConfig::Uniform { n, m } => ActionSpace::uniform_matroid(*n, *m),
            SpaceConfig::Explicit { n, actions } => {
                ActionSpace::explicit(*n, actions.iter().map(|a| Action::new(a.iter().copied())).collect())
            }
        }
    }
}

fn default_price() -> f64 {
    1.5
}

fn default_cost() -> f64 {
    0.1
}

fn default_sigma2() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvConfig {
    Gaussian {
        space: SpaceConfig,
        mu: Vec<f64>,
        #[serde(default)]
        sigma: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        sigma_file: Option<PathBuf>,
    },
    Thm1 {
        n: usize,
        m: usize,
        delta: f64,
        #[serde(default = "default_sigma2")]
        sigma2: f64,
        #[serde(default)]
        gamma: f64,
        #[serde(default)]
        sigma: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        sigma_file: Option<PathBuf>,
    },
    Thm3 {
        n: usize,
        m: usize,
        s: usize,
        delta: f64,
    },
    MultinomialSparse {
        space: SpaceConfig,
        probs: Vec<f64>,
        s: usize,
    },
    DirichletMultinomial {
        space: SpaceConfig,
        alpha: Vec<f64>,
        s: usize,
    },
    Assortment {
        transactions: PathBuf,
        #[serde(default = "default_price")]
        price: f64,
        #[serde(default = "default_cost")]
        cost: f64,
        /// Largest assortment size; every subset when absent.
        #[serde(default)]
        m: Option<usize>,
    },
}

/// An environment description plus the directory relative paths refer to.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedEnvConfig {
    pub env: EnvConfig,
    pub base_dir: PathBuf,
}

impl LoadedEnvConfig {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let env: EnvConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(LoadedEnvConfig { env, base_dir: base_dir.into() })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn covariance(&self, n: usize, inline: &Option<Vec<Vec<f64>>>, file: &Option<PathBuf>) -> Result<Option<Vec<f64>>> {
        let rows = match (inline, file) {
            (Some(_), Some(_)) => return Err(Error::Config("give either sigma or sigma_file, not both".into())),
            (Some(r), None) => r.clone(),
            (None, Some(f)) => read_matrix_csv(&self.resolve(f))?,
            (None, None) => return Ok(None),
        };
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Config(format!("covariance must be {n} × {n}")));
        }
        Ok(Some(rows.into_iter().flatten().collect()))
    }

    pub fn build(&self) -> Result<Environment> {
        match &self.env {
            EnvConfig::Gaussian { space, mu, sigma, sigma_file } => {
                let space = space.build()?;
                let n = space.n();
                let sigma = self
                    .covariance(n, sigma, sigma_file)?
                    .ok_or_else(|| Error::Config("gaussian needs sigma or sigma_file".into()))?;
                Environment::gaussian(space, mu.clone(), sigma)
            }
            EnvConfig::Thm1 { n, m, delta, sigma2, gamma, sigma, sigma_file } => {
                if *m == 0 {
                    return Err(Error::Config("m must be positive".into()));
                }
                let cov = match self.covariance(*n, sigma, sigma_file)? {
                    Some(c) => c,
                    None => block_covariance(*n, *m, *sigma2, *gamma),
                };
                Environment::thm1(*n, *m, cov, *delta)
            }
            EnvConfig::Thm3 { n, m, s, delta } => Environment::thm3(*n, *m, *s, *delta),
            EnvConfig::MultinomialSparse { space, probs, s } => {
                Environment::multinomial_sparse(space.build()?, probs.clone(), *s)
            }
            EnvConfig::DirichletMultinomial { space, alpha, s } => {
                Environment::dirichlet_multinomial(space.build()?, alpha.clone(), *s)
            }
            EnvConfig::Assortment { transactions, price, cost, m } => {
                let table = load_transactions(self.resolve(transactions))?;
                Environment::assortment(Arc::new(table), *price, *cost, *m)
            }
        }
    }
}

/// Dense numeric matrix, one comma-separated row per line.
pub fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), k + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}
