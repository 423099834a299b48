use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the expected posterior covariance weights the previous posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveWeighting {
    /// Branch weights `p(k | x_prev, h) · p_{n-1}(h)²`, the squared posterior
    /// written in the bidirectional and general covariance updates.
    #[default]
    LiteralSquared,
    /// Branch weights `p(k | x_prev, h) · p_{n-1}(h)`: the expectation of
    /// the one-step-ahead posterior covariance under the predictive
    /// distribution of the next state.
    StandardPredictive,
}

/// Settings of one adaptive (or periodic) inference run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignConfig {
    /// Stop once the posterior variance (one rate) or covariance
    /// determinant (several rates) is at or below `theta`. For structure
    /// posteriors the bound is `theta · D` with `D` the prior determinant.
    pub theta: f64,
    pub weighting: ObjectiveWeighting,
    /// Smallest candidate offset from the previous sample.
    pub delta_min: f64,
    /// Largest candidate offset.
    pub delta_max: f64,
    /// Log-spaced candidate offsets in `[delta_min, delta_max]`.
    pub n_candidates: usize,
    /// Golden-section refinement around the best candidate.
    pub refine: bool,
    pub step_cap: usize,
    /// Atoms whose weight in the objective is below this fraction of the
    /// largest weight are skipped when evaluating the objective (0 keeps
    /// all atoms). Posterior updates always use every atom.
    pub prune_below: f64,
    pub seed: u64,
}

pub const DEFAULT_STEP_CAP: usize = 500;

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            theta: 0.1,
            weighting: ObjectiveWeighting::default(),
            delta_min: 1e-3,
            delta_max: 1e2,
            n_candidates: 60,
            refine: true,
            step_cap: DEFAULT_STEP_CAP,
            prune_below: 1e-18,
            seed: 0,
        }
    }
}

impl DesignConfig {
    pub fn with_theta(theta: f64) -> Self {
        Self { theta, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.theta > 0.0) {
            return bad(format!("theta must be positive, got {}", self.theta));
        }
        if !(self.delta_min > 0.0) || !(self.delta_max > self.delta_min) || !self.delta_max.is_finite() {
            return bad(format!(
                "time window must satisfy 0 < delta_min < delta_max (got {}, {})",
                self.delta_min, self.delta_max
            ));
        }
        if self.n_candidates < 2 {
            return bad("n_candidates must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.prune_below) {
            return bad(format!("prune_below must lie in [0, 1), got {}", self.prune_below));
        }
        Ok(())
    }

    /// `n_candidates` log-spaced offsets from `delta_min` to `delta_max`.
    pub fn candidate_offsets(&self) -> Vec<f64> {
        let n = self.n_candidates;
        let ratio = (self.delta_max / self.delta_min).ln();
        (0..n)
            .map(
                |i| {
                    if i == n - 1 {
                        self.delta_max
                    } else {
                        self.delta_min * (ratio * i as f64 / (n - 1) as f64).exp()
                    }
                },
            )
            .collect()
    }
}
