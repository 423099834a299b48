//! Prior families and their discretization onto a support.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{RateGrid, Support};
use crate::posterior::Posterior;
use crate::scalar::Scalar;
use crate::special::{ln_gamma, whittaker_w};

/// Prior over the rate vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PriorSpec {
    /// `Γ(α, β)` with rate parameter `β` (one rate).
    Gamma { alpha: f64, beta: f64 },
    /// Bivariate gamma with shapes `a, b` and scales `μ₁, μ₂`, whose density
    /// involves the Whittaker function (two rates).
    BivariateGamma { a: f64, b: f64, mu1: f64, mu2: f64 },
    /// The bivariate gamma restricted to `h0 < h1` (birth below death rate).
    TruncatedBivariateGamma { a: f64, b: f64, mu1: f64, mu2: f64 },
    /// Independent Bernoulli(`p`) indicator for each of the `m(m-1)` edges.
    BernoulliStructure { p: f64, m: usize },
}

impl PriorSpec {
    pub const fn default_gamma() -> Self {
        PriorSpec::Gamma { alpha: 2.0, beta: 1.0 }
    }

    pub const fn default_bivariate() -> Self {
        PriorSpec::BivariateGamma { a: 1.0, b: 1.0, mu1: 2.0, mu2: 2.0 }
    }

    pub const fn default_truncated() -> Self {
        PriorSpec::TruncatedBivariateGamma { a: 1.0, b: 1.0, mu1: 2.0, mu2: 2.0 }
    }

    /// Number of rates the prior covers.
    pub fn dim(&self) -> usize {
        match *self {
            PriorSpec::Gamma { .. } => 1,
            PriorSpec::BivariateGamma { .. } | PriorSpec::TruncatedBivariateGamma { .. } => 2,
            PriorSpec::BernoulliStructure { m, .. } => m * m.saturating_sub(1),
        }
    }

    pub fn is_structure(&self) -> bool {
        matches!(self, PriorSpec::BernoulliStructure { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidPrior(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            PriorSpec::Gamma { alpha, beta } => {
                positive("alpha", alpha)?;
                positive("beta", beta)
            }
            PriorSpec::BivariateGamma { a, b, mu1, mu2 } | PriorSpec::TruncatedBivariateGamma { a, b, mu1, mu2 } => {
                positive("a", a)?;
                positive("b", b)?;
                positive("mu1", mu1)?;
                positive("mu2", mu2)
            }
            PriorSpec::BernoulliStructure { p, m } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidPrior(format!("p must lie in [0, 1], got {p}")));
                }
                if m < 2 {
                    return Err(Error::InvalidPrior(format!("structure prior needs m >= 2, got {m}")));
                }
                Ok(())
            }
        }
    }

    /// The support this prior lives on: `grid` for continuous families, the
    /// configuration space for the structure prior (grid ignored).
    pub fn support<S: Scalar>(&self, grid: Option<RateGrid<S>>) -> Result<Support<S>> {
        match self {
            PriorSpec::BernoulliStructure { .. } => Support::structure(self.dim()),
            _ => {
                let grid = grid.ok_or_else(|| Error::InvalidConfig("continuous prior needs a rate grid".into()))?;
                if grid.dim() != self.dim() {
                    return Err(Error::DimensionMismatch { expected: self.dim(), got: grid.dim() });
                }
                Ok(Support::grid(grid))
            }
        }
    }
}

/// `ln p(h)` of the (untruncated) bivariate gamma, with a cache for the
/// Whittaker factor keyed on `z = h0/μ₁ + h1/μ₂`.
struct BivariateGamma {
    a: f64,
    mu1: f64,
    mu2: f64,
    c: f64,
    ln_const: f64,
    w_lam: f64,
    w_mu: f64,
    cache: HashMap<u64, f64>,
}

impl BivariateGamma {
    fn new(a: f64, b: f64, mu1: f64, mu2: f64) -> Self {
        let c = a + b;
        // C Γ(b) with 1/C = (μ₁μ₂)^c Γ(c) Γ(a) Γ(b)
        let ln_const = -(c * (mu1 * mu2).ln() + ln_gamma(c) + ln_gamma(a));
        Self { a, mu1, mu2, c, ln_const, w_lam: c - b + (1.0 - a) / 2.0, w_mu: c - a / 2.0, cache: HashMap::new() }
    }

    fn density(&mut self, h0: f64, h1: f64) -> Result<f64> {
        let z = h0 / self.mu1 + h1 / self.mu2;
        if h0 == 0.0 || h1 == 0.0 {
            return if self.c > 1.0 {
                Ok(0.0)
            } else {
                Err(Error::InvalidPrior("bivariate gamma density is unbounded on the axes when a + b <= 1".into()))
            };
        }
        let ln_w = match self.cache.get(&z.to_bits()) {
            Some(&v) => v,
            None => {
                let v = whittaker_w(self.w_lam, self.w_mu, z)?.ln();
                self.cache.insert(z.to_bits(), v);
                v
            }
        };
        let ln_p =
            self.ln_const + (self.c - 1.0) * (h0 * h1).ln() + ((self.a - 1.0) / 2.0 - self.c) * z.ln() - z / 2.0 + ln_w;
        Ok(ln_p.exp())
    }
}

/// Evaluates the prior on `support` and renormalizes so the quadrature mass
/// is one.
pub fn prior_density<S: Scalar>(spec: &PriorSpec, support: Arc<Support<S>>) -> Result<Posterior<S>> {
    spec.validate()?;
    if support.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: support.dim() });
    }
    if spec.is_structure() != support.is_structure() {
        return Err(Error::InvalidPrior("prior family does not match the support kind".into()));
    }
    let n = support.len();
    let mut density = Vec::with_capacity(n);
    let mut untruncated_mass = S::zero();
    match *spec {
        PriorSpec::Gamma { alpha, beta } => {
            let ln_norm = alpha * beta.ln() - ln_gamma(alpha);
            for i in 0..n {
                let h = support.point(i)[0].as_f64();
                let v = if h == 0.0 {
                    match alpha.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Greater) => 0.0,
                        Some(std::cmp::Ordering::Equal) => ln_norm.exp(),
                        _ => {
                            return Err(Error::InvalidPrior(
                                "gamma density is unbounded at h = 0 when alpha < 1".into(),
                            ))
                        }
                    }
                } else {
                    (ln_norm + (alpha - 1.0) * h.ln() - beta * h).exp()
                };
                density.push(S::lit(v));
            }
        }
        PriorSpec::BivariateGamma { a, b, mu1, mu2 } | PriorSpec::TruncatedBivariateGamma { a, b, mu1, mu2 } => {
            let truncate = matches!(spec, PriorSpec::TruncatedBivariateGamma { .. });
            let mut bg = BivariateGamma::new(a, b, mu1, mu2);
            for i in 0..n {
                let p = support.point(i);
                let (h0, h1) = (p[0].as_f64(), p[1].as_f64());
                let v = S::lit(bg.density(h0, h1)?);
                untruncated_mass += v * support.weights()[i];
                density.push(if truncate && h0 >= h1 { S::zero() } else { v });
            }
        }
        PriorSpec::BernoulliStructure { p, .. } => {
            let d = spec.dim();
            for i in 0..n {
                let ones = support.point(i).iter().filter(|&&v| v == S::one()).count();
                let prob = p.powi(ones as i32) * (1.0 - p).powi((d - ones) as i32);
                density.push(S::lit(prob));
            }
        }
    }
    if density.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidPrior("prior density not finite on the grid".into()));
    }
    let mass: S = density.iter().zip(support.weights()).map(|(&p, &w)| p * w).sum();
    if matches!(spec, PriorSpec::TruncatedBivariateGamma { .. }) && !(mass >= S::lit(1e-6) * untruncated_mass) {
        return Err(Error::PriorMassTooSmall { retained: mass.as_f64(), total: untruncated_mass.as_f64() });
    }
    if !(mass > S::zero()) {
        return Err(Error::PriorMassTooSmall { retained: mass.as_f64(), total: mass.as_f64() });
    }
    let density = density.into_iter().map(|p| p / mass).collect();
    Posterior::from_density(support, density)
}
