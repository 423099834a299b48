//! Adaptive Bayesian inference of Markov chain transition rates.
//!
//! A posterior over the unknown rates lives on a grid (or, for binary
//! structure problems, on the full configuration space). Each new sample
//! time is the one minimizing the expected posterior variance (one rate)
//! or the determinant of the expected posterior covariance (several rates).
//!
//! Numerical code is generic over [`Scalar`] (`f32`, `f64`); the aliases at
//! the crate root fix the scalar to `f64`, with `*32` variants for `f32`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod chain;
pub mod design;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod posterior;
pub mod prior;
pub mod scalar;
pub mod special;

pub use chain::{ChainModel, ModelKind, ModelSpec, Protocol};
pub use design::{DesignConfig, ObjectiveWeighting};
pub use error::{Error, Result};
pub use posterior::PosteriorKind;
pub use prior::PriorSpec;
pub use scalar::Scalar;

pub type Observation = chain::Observation<f64>;
pub type RateVector = chain::RateVector<f64>;
pub type GeneratorMatrix = chain::GeneratorMatrix<f64>;
pub type Matrix = linalg::SquareMatrix<f64>;
pub type RateGrid = grid::RateGrid<f64>;
pub type Support = grid::Support<f64>;
pub type Posterior = posterior::Posterior<f64>;
pub type CovarianceMatrix = posterior::CovarianceMatrix<f64>;
pub type Trace = design::Trace<f64>;
pub type StepRecord = design::StepRecord<f64>;
pub type Inference = design::Inference<f64>;
pub type SimulatedObserver = design::SimulatedObserver<f64>;

pub type Observation32 = chain::Observation<f32>;
pub type RateGrid32 = grid::RateGrid<f32>;
pub type Posterior32 = posterior::Posterior<f32>;
pub type Trace32 = design::Trace<f32>;
pub type Inference32 = design::Inference<f32>;

use std::sync::Arc;

/// Prior discretized on the default grid (`[0, 10]`, 201 nodes per rate)
/// or on the configuration space for structure priors.
pub fn default_prior(spec: &PriorSpec) -> Result<Posterior> {
    prior_on_grid(spec, grid::DEFAULT_H_MAX, grid::DEFAULT_NODES)
}

/// Prior discretized on `n_nodes` equispaced nodes per rate over `[0, h_max]`.
pub fn prior_on_grid<S: Scalar>(spec: &PriorSpec, h_max: S, n_nodes: usize) -> Result<posterior::Posterior<S>> {
    let grid = if spec.is_structure() { None } else { Some(grid::RateGrid::uniform(spec.dim(), h_max, n_nodes)?) };
    let support = Arc::new(spec.support(grid)?);
    prior::prior_density(spec, support)
}
