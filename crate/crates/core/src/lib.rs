//! Proportional-rate-fair resource allocation for multiuser OFDMA downlink.
//!
//! The allocator runs in two phases. A greedy pass hands subcarriers to the
//! user with the lowest weighted rate under equal power, then an iterative
//! pass moves small power quanta between the two users whose rate shares
//! deviate most from their target proportions, water-filling each user's
//! budget over its own subcarriers after every move.
//!
//! Around that core the crate ships a frequency-selective Rayleigh channel
//! generator, two reference allocators, an exhaustive optimum for toy-sized
//! instances, and a Monte Carlo harness that writes plot-ready CSV.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the harness and CLI use.

pub mod allocator;
pub mod baselines;
pub mod channel;
pub mod error;
pub mod experiments;
pub mod oracle;
pub mod scalar;
pub mod waterfill;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type GainGrid = channel::GainGrid<f64>;
pub type SystemParams = channel::SystemParams<f64>;
pub type PowerDelayProfile = channel::PowerDelayProfile<f64>;
pub type FairnessWeights = allocator::FairnessWeights<f64>;
pub type Allocation = allocator::Allocation<f64>;
pub type DeviationReport = allocator::DeviationReport<f64>;
pub type Reallocation = allocator::Reallocation<f64>;
pub type WaterfillResult = waterfill::WaterfillResult<f64>;
pub type OracleResult = oracle::OracleResult<f64>;

pub use allocator::Assignment;
