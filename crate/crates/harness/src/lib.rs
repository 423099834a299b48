//! Batch simulation studies for adaptive rate inference.
//!
//! A [`StudySpec`] names a study kind, its sweep and one or more model and
//! prior variants. [`run_study`] draws true rates, runs the inference loop
//! for every replicate and aggregates the outcomes into [`ResultRow`]s,
//! which [`result::write_csv`] emits in a fixed column order.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod draw;
pub mod error;
pub mod invariants;
pub mod result;
pub mod spec;
pub mod stats;
pub mod study;

pub use error::{HarnessError, Result};
pub use result::{Arm, ReplicateRecord, ResultRow, StudyResult};
pub use spec::{GridSpec, StudyKind, StudySpec, Sweep, Variant};
pub use study::{run_study, Outcome};

/// Environment variable overriding the master seed of a study.
pub const SEED_ENV: &str = "ADAPTRATE_SEED";
