//! Multi-cell Massive MIMO pilot assignment and max-min data power control.
//!
//! The crate models `L` cells on a wrap-around torus, each with an `M`-antenna
//! base station serving `K` single-antenna users over spatially correlated
//! Rayleigh fading. Channel statistics follow the exponential correlation
//! model of a uniform linear array, channels are estimated by MMSE from
//! orthogonal pilots that are reused across cells, and the uplink and downlink
//! spectral efficiencies are evaluated in closed form for maximum-ratio
//! processing.
//!
//! On top of the evaluator sit:
//!
//! - [`assignment`]: a cell-by-cell pilot reassignment heuristic with a
//!   backtracking acceptance rule, plus random, covariance-greedy and
//!   exhaustive baselines;
//! - [`power`]: max-min weighted SE data power control solved by bisection
//!   over the objective with a standard-interference-function feasibility test;
//! - [`montecarlo`]: sampled channel realizations that check every
//!   expectation behind the closed forms;
//! - [`harness`]: seeded campaigns that emit CSV/JSON data series.
//!
//! With the default `parallel` feature, per-user evaluation, Monte Carlo draws
//! and campaign drops run on rayon. Without it everything runs sequentially and
//! produces bit-identical results.
//!
//! Users are addressed by a flat index `u = cell * K + user`; cells, users and
//! pilots are zero-based throughout.

// NaN-rejecting `!(x > 0.0)` checks and index loops over coupled matrices
// are intentional throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assignment;
pub mod config;
pub mod correlation;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod montecarlo;
mod par;
pub mod power;
pub mod se;
pub mod synthetic;
pub mod topology;

pub use config::{Direction, SystemConfig, Weights};
pub use correlation::{build_statistics, exp_correlation, ChannelStatistics, CorrelationMatrix};
pub use error::{Error, Result};
pub use estimation::{EstimationCache, EstimationStats, PilotAssignment};
pub use se::{Evaluator, PowerAllocation, SEReport};
pub use topology::{generate_scenario, NetworkScenario};
