//! Grid and configuration posteriors, the Bayes update and posterior
//! summaries (mean, covariance, MAP, MSE, MAE).

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::chain::{ChainModel, Observation, RateVector};
use crate::error::{Error, Result};
use crate::grid::Support;
use crate::linalg::SquareMatrix;
use crate::scalar::Scalar;

/// Continuous density on a grid or probability vector over configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosteriorKind {
    Continuous,
    Structure,
}

/// Nonnegative density over the atoms of a [`Support`], normalized so that
/// `Σ wᵢ pᵢ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior<S> {
    support: Arc<Support<S>>,
    density: Vec<S>,
}

/// Symmetric `d x d` posterior (co)variance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix<S>(pub SquareMatrix<S>);

impl<S: Scalar> CovarianceMatrix<S> {
    pub fn det(&self) -> S {
        self.0.det()
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.0[(i, j)]
    }

    pub fn diagonal(&self) -> Vec<S> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }
}

impl<S: Scalar> Posterior<S> {
    /// Wraps a density, renormalizing it. Fails on negative or non-finite
    /// values, a length mismatch, or zero mass.
    pub fn from_density(support: Arc<Support<S>>, density: Vec<S>) -> Result<Self> {
        if density.len() != support.len() {
            return Err(Error::DimensionMismatch { expected: support.len(), got: density.len() });
        }
        if density.iter().any(|&p| !(p >= S::zero()) || !p.is_finite()) {
            return Err(Error::InvalidPrior("density must be finite and nonnegative".into()));
        }
        let mut post = Self { support, density };
        let mass = post.mass();
        if !(mass > S::zero()) || !mass.is_finite() {
            return Err(Error::LikelihoodVanished);
        }
        for p in &mut post.density {
            *p /= mass;
        }
        Ok(post)
    }

    pub fn support(&self) -> &Arc<Support<S>> {
        &self.support
    }

    pub fn density(&self) -> &[S] {
        &self.density
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    pub fn kind(&self) -> PosteriorKind {
        if self.support.is_structure() {
            PosteriorKind::Structure
        } else {
            PosteriorKind::Continuous
        }
    }

    /// `Σ wᵢ pᵢ`.
    pub fn mass(&self) -> S {
        self.density.iter().zip(self.support.weights()).map(|(&p, &w)| p * w).sum()
    }

    /// Probability mass of each atom, `wᵢ pᵢ`.
    pub fn atom_masses(&self) -> impl Iterator<Item = S> + '_ {
        self.density.iter().zip(self.support.weights()).map(|(&p, &w)| p * w)
    }

    /// `p(X = x_obs | X_prev = x_prev, h, Δt)` at every atom; atoms with zero
    /// density are skipped (left at zero).
    pub fn likelihood(&self, model: &ChainModel, x_prev: usize, dt: S, x_obs: usize) -> Result<Vec<S>> {
        if model.d() != self.dim() {
            return Err(Error::DimensionMismatch { expected: model.d(), got: self.dim() });
        }
        if x_prev >= model.n_states() || x_obs >= model.n_states() {
            return Err(Error::StateOutOfRange { state: x_prev.max(x_obs), n_states: model.n_states() });
        }
        let d = self.dim();
        let mut out = vec![S::zero(); self.support.len()];
        let atoms = self.support.points().chunks_exact(d);
        if let Some(two) = model.two_state_kernel() {
            for ((l, h), &p) in out.iter_mut().zip(atoms).zip(&self.density) {
                if p != S::zero() {
                    *l = two.row(h, x_prev, dt)[x_obs];
                }
            }
            if out.iter().any(|l| !l.is_finite()) {
                return Err(Error::NonFinite);
            }
            return Ok(out);
        }
        let mut row = vec![S::zero(); model.n_states()];
        for ((l, h), &p) in out.iter_mut().zip(atoms).zip(&self.density) {
            if p != S::zero() {
                model.transition_row(h, x_prev, dt, &mut row)?;
                *l = row[x_obs];
            }
        }
        Ok(out)
    }

    /// Multiplies by a likelihood and renormalizes.
    pub fn update_with_likelihood(&self, likelihood: &[S]) -> Result<Self> {
        if likelihood.len() != self.density.len() {
            return Err(Error::DimensionMismatch { expected: self.density.len(), got: likelihood.len() });
        }
        let density: Vec<S> = self.density.iter().zip(likelihood).map(|(&p, &l)| p * l).collect();
        let mass: S = density.iter().zip(self.support.weights()).map(|(&p, &w)| p * w).sum();
        if !(mass > S::zero()) || !mass.is_finite() {
            return Err(Error::LikelihoodVanished);
        }
        let density = density.into_iter().map(|p| p / mass).collect();
        Ok(Self { support: Arc::clone(&self.support), density })
    }

    /// Posterior after observing `obs`, given the previous sample `prev`
    /// (use [`ChainModel::origin`] before the first sample).
    pub fn bayes_update(&self, model: &ChainModel, prev: &Observation<S>, obs: &Observation<S>) -> Result<Self> {
        let (x_prev, dt) = model.interval(prev, obs)?;
        let like = self.likelihood(model, x_prev, dt, obs.x)?;
        self.update_with_likelihood(&like)
    }

    pub fn mean(&self) -> RateVector<S> {
        let d = self.dim();
        let mut m = vec![S::zero(); d];
        let points = self.support.points();
        if d == 2 {
            let (mut m0, mut m1) = (S::zero(), S::zero());
            for (i, (&p, &w)) in self.density.iter().zip(self.support.weights()).enumerate() {
                let pm = p * w;
                m0 += pm * points[2 * i];
                m1 += pm * points[2 * i + 1];
            }
            return RateVector::new(vec![m0, m1]);
        }
        let atoms = points.chunks_exact(d);
        for ((h, &p), &w) in atoms.zip(&self.density).zip(self.support.weights()) {
            let pm = p * w;
            if pm == S::zero() {
                continue;
            }
            for (mk, &hk) in m.iter_mut().zip(h) {
                *mk += pm * hk;
            }
        }
        RateVector::new(m)
    }

    /// Quadrature-weighted central second moments.
    pub fn covariance(&self) -> CovarianceMatrix<S> {
        self.moments().1
    }

    /// Mean and covariance.
    pub fn moments(&self) -> (RateVector<S>, CovarianceMatrix<S>) {
        let d = self.dim();
        let mean = self.mean();
        let mu = &mean.values;
        // upper triangle, row-major
        let mut upper = vec![S::zero(); d * (d + 1) / 2];
        let (points, weights) = (self.support.points(), self.support.weights());
        if d <= 2 {
            let (mut s00, mut s01, mut s11) = (S::zero(), S::zero(), S::zero());
            for (i, (&p, &w)) in self.density.iter().zip(weights).enumerate() {
                let pm = p * w;
                let e0 = points[i * d] - mu[0];
                let e1 = if d == 2 { points[i * d + 1] - mu[1] } else { S::zero() };
                let a = pm * e0;
                s00 += a * e0;
                s01 += a * e1;
                s11 += pm * e1 * e1;
            }
            upper[0] = s00;
            if d == 2 {
                upper[1] = s01;
                upper[2] = s11;
            }
        }
        let mut dev = vec![S::zero(); d];
        let atoms = points.chunks_exact(d).take(if d <= 2 { 0 } else { usize::MAX });
        for ((h, &p), &w) in atoms.zip(&self.density).zip(weights) {
            let pm = p * w;
            if pm == S::zero() {
                continue;
            }
            for ((dk, &hk), &mk) in dev.iter_mut().zip(h).zip(mu) {
                *dk = hk - mk;
            }
            let mut t = 0;
            for a in 0..d {
                let da = pm * dev[a];
                for &db in &dev[a..] {
                    upper[t] += da * db;
                    t += 1;
                }
            }
        }
        let mut c = SquareMatrix::zeros(d);
        let mut t = 0;
        for a in 0..d {
            for b in a..d {
                c[(a, b)] = upper[t];
                c[(b, a)] = upper[t];
                t += 1;
            }
        }
        (mean, CovarianceMatrix(c))
    }

    /// Variance of a one-dimensional posterior (or of component 0).
    pub fn variance(&self) -> S {
        self.covariance().get(0, 0)
    }

    /// Atom of maximal density; ties go to the lexicographically smallest.
    pub fn map_estimate(&self) -> RateVector<S> {
        let mut best = 0;
        for (i, &p) in self.density.iter().enumerate() {
            if p > self.density[best] {
                best = i;
            }
        }
        RateVector::new(self.support.point(best).to_vec())
    }

    /// `∫ p(h) (h_c - h_true,c)² dh`, marginalizing the other components.
    pub fn mse(&self, h_true: &[S], component: usize) -> S {
        let target = h_true[component];
        self.atom_masses()
            .enumerate()
            .map(|(i, pm)| {
                let e = self.support.point(i)[component] - target;
                pm * e * e
            })
            .sum()
    }

    /// Writes `h0,...,h{d-1},weight,density` rows at 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.dim();
        let header: Vec<String> = (0..d).map(|k| format!("h{k}")).chain(["weight".into(), "density".into()]).collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.support.len() {
            let mut fields: Vec<String> = self.support.point(i).iter().map(|v| fmt17(v.as_f64())).collect();
            fields.push(fmt17(self.support.weights()[i].as_f64()));
            fields.push(fmt17(self.density[i].as_f64()));
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    /// Reads a snapshot written by [`write_csv`](Self::write_csv) back onto
    /// `support`; coordinates must match node for node.
    pub fn read_csv<R: BufRead>(support: Arc<Support<S>>, r: R) -> Result<Self> {
        let bad = |msg: String| Error::InvalidConfig(format!("posterior snapshot: {msg}"));
        let d = support.dim();
        let mut lines = r.lines();
        lines.next().ok_or_else(|| bad("missing header".into()))?.map_err(|e| bad(e.to_string()))?;
        let mut density = Vec::with_capacity(support.len());
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>().map_err(|e| bad(format!("row {i}: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != d + 2 || i >= support.len() {
                return Err(bad(format!("row {i} does not match the support")));
            }
            if support.point(i).iter().zip(&vals[..d]).any(|(p, v)| p.as_f64() != *v) {
                return Err(bad(format!("row {i} coordinates differ from the support")));
            }
            density.push(S::lit(vals[d + 1]));
        }
        if density.len() != support.len() {
            return Err(bad(format!("expected {} rows, found {}", support.len(), density.len())));
        }
        // Stored densities are already normalized; keep them bit-for-bit.
        if density.iter().any(|&p| !(p >= S::zero()) || !p.is_finite()) {
            return Err(bad("negative or non-finite density".into()));
        }
        Ok(Self { support, density })
    }
}

/// `Σ_k |h_k - ĥ_k| / d_max`.
pub fn mae<S: Scalar>(h_map: &[S], h_true: &[S], d_max: usize) -> S {
    h_map.iter().zip(h_true).map(|(&a, &b)| (a - b).abs()).sum::<S>() / S::from_usize_lossy(d_max)
}

/// Scientific notation with 17 significant digits (round-trips `f64`).
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
