//! Nonparametric tail-dependence analysis for functional data observed on a
//! finite grid of `[0, 1]`.
//!
//! The crate is organised bottom-up:
//!
//! - [`sim`]: seeded samplers for the Smith model and the Pareto process, and
//!   the grid distortions used to generate non-stationary alternatives.
//! - [`rank`] and [`estimate`]: ranks and the rank-based estimators of tail
//!   copulas, stable tail dependence functions and their partial derivatives.
//! - [`theory`]: closed-form tail copulas of the two example models and the
//!   covariance of the limiting empirical tail copula process.
//! - [`mvn`]: multivariate normal rectangle probabilities and the distribution
//!   of the range of a Gaussian vector.
//! - [`stattest`]: the tail-copula stationarity test and its Monte Carlo harness.
//! - [`io`]: CSV/JSON formats and parsers for untrusted input.

pub mod cov;
pub mod error;
pub mod estimate;
pub mod grid;
pub mod io;
pub mod mvn;
pub mod normal;
pub mod rank;
pub mod sample;
pub mod sim;
pub mod stattest;
pub mod theory;

pub use cov::CovMatrix;
pub use error::{Error, Result};
pub use estimate::{
    default_bandwidth, empirical_stdf, empirical_tail_copula, estimate_partial_derivative,
    pairwise_tdc_matrix, tail_empirical_df, Coordinate, TailCopulaQuery,
};
pub use grid::{distort_grid, Grid};
pub use mvn::{mvn_cdf, range_cdf, range_pdf, MvnOptions, MvnResult};
pub use rank::{compute_ranks, RankMatrix};
pub use sample::{FunctionalSample, SampleMetadata};
pub use sim::{simulate_pareto, simulate_smith, DEFAULT_SMITH_WINDOW};
pub use stattest::{
    integral_statistic, monte_carlo_experiment, stationarity_test, test_statistic,
    theoretical_vn_covariance, ExperimentConfig, ExperimentSummary, TestConfig, TestResult,
};
pub use theory::ModelSpec;
