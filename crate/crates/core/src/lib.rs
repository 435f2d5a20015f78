//! Combinatorial semi-bandits with covariance-adaptive confidence regions.

pub mod config;
pub mod confidence;
pub mod envs;
pub mod error;
pub mod harness;
pub mod instance;
pub mod optimize;
pub mod policies;
pub mod stats;

pub use error::{Error, Result};
pub use instance::{Action, ActionSpace, ProblemInstance};
pub use stats::Statistics;
