//! Pufferfish privacy for correlated data.
//!
//! Two families of mechanisms calibrate Laplace noise to the correlation
//! an adversary may assume:
//!
//! * [`wasserstein`]: the general mechanism for small joint models given
//!   as explicit tables. Noise scales with the worst infinity-Wasserstein
//!   distance between conditional output distributions.
//! * [`quilt`] and [`approx`]: the Markov quilt mechanism for Markov-chain
//!   time series, with exact max-influence or a mixing-rate bound.
//!
//! [`baselines`] holds group-DP and entry-DP for comparison and
//! [`ingest`] turns timestamped CSV data into chains.
//!
//! Node labels `X_1 .. X_T` are 1-based in plans and messages; states and
//! record indices are 0-based in every API.

pub mod approx;
pub mod baselines;
pub mod chain;
pub mod discrete;
pub mod error;
pub mod ingest;
pub mod noise;
pub mod plan;
pub mod query;
pub mod quilt;
pub mod wasserstein;

pub use chain::{ClassSpec, DistributionClass, MarkovChainModel, TransitionMatrix};
pub use discrete::DiscreteDistribution;
pub use error::{Error, Result};
pub use noise::LaplaceSource;
pub use plan::{MechanismId, NodeRecord, NoisePlan, PrivateRelease};
pub use query::{builtin_query, LipschitzQuery};
pub use quilt::MarkovQuilt;

/// Privacy parameters must be positive and finite.
pub fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )))
    }
}

/// A database must have one state in `0..k` per chain node.
pub fn check_data(data: &[usize], len: usize, k: usize) -> Result<()> {
    if data.len() != len {
        return Err(Error::InvalidParameter(format!(
            "data has {} records, the class describes chains of length {len}",
            data.len()
        )));
    }
    if let Some(pos) = data.iter().position(|&s| s >= k) {
        return Err(Error::InvalidParameter(format!(
            "record {} holds state {} outside 1..={k}",
            pos + 1,
            data[pos] + 1
        )));
    }
    Ok(())
}
