//! Adaptive choice of sampling times and the inference loops built on it.

mod config;
mod objective;
mod run;
mod search;

pub use config::{DesignConfig, ObjectiveWeighting, DEFAULT_STEP_CAP};
pub use objective::{expected_covariance, expected_variance, objective, ObjectiveEvaluator};
pub use run::{
    convergence_metric, run_adaptive, run_periodic, FnObserver, Inference, Observer, Recommendation, SimulatedObserver,
    StepRecord, Trace,
};
pub use search::{choose_next_time, objective_curve, TimeChoice};
