//! Study descriptions, read from TOML.
//!
//! ```toml
//! name = "unidirectional-periodic"
//! kind = "periodic_vs_adaptive"
//! replicates = 200
//! seed = 1
//!
//! [config]            # any DesignConfig field; the rest keep their defaults
//! theta = 0.1
//!
//! [sweep]
//! periods = [0.2, 0.5, 1.0, 2.0, 5.0]
//!
//! [[variants]]
//! label = "unidirectional"
//! model = { kind = "two_state_unidirectional" }
//! prior = { family = "gamma", alpha = 2.0, beta = 1.0 }
//! grid = { h_max = 10.0, nodes = 201 }   # optional
//! ```

use std::path::{Path, PathBuf};

use adaptrate_core::grid::{DEFAULT_H_MAX, DEFAULT_NODES};
use adaptrate_core::{ChainModel, DesignConfig, ModelKind, ModelSpec, Posterior, PriorSpec};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    /// Adaptive runs against fixed-period runs at each of `sweep.periods`,
    /// on the same true rates and observation streams.
    PeriodicVsAdaptive,
    /// Adaptive runs at every point of the lattice spanned by `sweep.rates`.
    FixedRateHeatmap,
    /// One adaptive run per replicate down to the smallest `sweep.thetas`,
    /// read off at every threshold.
    ToleranceSweep,
    /// Ring chains of each size in `sweep.ring_sizes`.
    RingSizeSweep,
    /// Binary structures drawn with each Bernoulli parameter in
    /// `sweep.probabilities`; rows are split by the number of present links.
    BinaryStructureSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub h_max: f64,
    pub nodes: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { h_max: DEFAULT_H_MAX, nodes: DEFAULT_NODES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    pub model: ModelSpec,
    pub prior: PriorSpec,
    #[serde(default)]
    pub grid: GridSpec,
}

impl Variant {
    pub fn build_model(&self) -> Result<ChainModel> {
        Ok(self.model.build()?)
    }

    pub fn build_prior(&self) -> Result<Posterior> {
        Ok(adaptrate_core::prior_on_grid(&self.prior, self.grid.h_max, self.grid.nodes)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sweep {
    pub periods: Vec<f64>,
    /// One list of values per rate; the lattice is their cartesian product.
    pub rates: Vec<Vec<f64>>,
    pub thetas: Vec<f64>,
    pub ring_sizes: Vec<usize>,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub name: String,
    pub kind: StudyKind,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub config: DesignConfig,
    #[serde(default)]
    pub sweep: Sweep,
    pub variants: Vec<Variant>,
}

impl StudySpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: StudySpec = toml::from_str(text).map_err(|e| HarnessError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Spec(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("study specs serialize")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Spec(m));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.variants.is_empty() {
            return bad("at least one [[variants]] entry is required".into());
        }
        if self.name.contains(',') || self.variants.iter().any(|v| v.label.contains(',')) {
            return bad("names and labels may not contain commas".into());
        }
        self.config.validate()?;
        let s = &self.sweep;
        let positive = |xs: &[f64], what: &str| -> Result<()> {
            if xs.is_empty() {
                return Err(HarnessError::Spec(format!("sweep.{what} must not be empty")));
            }
            if xs.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(HarnessError::Spec(format!("sweep.{what} must be positive and finite")));
            }
            Ok(())
        };
        match self.kind {
            StudyKind::PeriodicVsAdaptive => positive(&s.periods, "periods")?,
            StudyKind::ToleranceSweep => positive(&s.thetas, "thetas")?,
            StudyKind::FixedRateHeatmap => {
                if s.rates.is_empty() || s.rates.iter().any(|axis| axis.is_empty()) {
                    return bad("sweep.rates needs a non-empty list of values per rate".into());
                }
                if s.rates.iter().flatten().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return bad("sweep.rates must be nonnegative and finite".into());
                }
            }
            StudyKind::RingSizeSweep => {
                if s.ring_sizes.is_empty() || s.ring_sizes.iter().any(|&m| m < 2) {
                    return bad("sweep.ring_sizes must be a non-empty list of sizes >= 2".into());
                }
            }
            StudyKind::BinaryStructureSweep => {
                if s.probabilities.is_empty() || s.probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return bad("sweep.probabilities must be a non-empty list in [0, 1]".into());
                }
            }
        }
        for v in &self.variants {
            let model = v.build_model()?;
            match self.kind {
                StudyKind::RingSizeSweep if !matches!(model.kind(), ModelKind::Ring { .. }) => {
                    return bad(format!("variant `{}`: ring_size_sweep needs a ring model", v.label));
                }
                StudyKind::BinaryStructureSweep if !matches!(model.kind(), ModelKind::BinaryDigraph { .. }) => {
                    return bad(format!("variant `{}`: binary_structure_sweep needs a binary_digraph model", v.label));
                }
                StudyKind::BinaryStructureSweep => {}
                _ => {
                    let prior = v.build_prior()?;
                    if prior.dim() != model.d() {
                        return bad(format!(
                            "variant `{}`: prior has {} rates, model has {}",
                            v.label,
                            prior.dim(),
                            model.d()
                        ));
                    }
                }
            }
            if self.kind == StudyKind::FixedRateHeatmap && s.rates.len() != model.d() {
                return bad(format!("variant `{}`: sweep.rates needs {} axes", v.label, model.d()));
            }
        }
        Ok(())
    }
}
