//! Expected posterior variance / covariance after one more sample.

use std::collections::HashMap;

use crate::chain::{clamp_unit, ring_add_mode, ring_half_modes, ChainModel, ModelKind};
use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::posterior::{CovarianceMatrix, Posterior};
use crate::scalar::Scalar;

use super::config::{DesignConfig, ObjectiveWeighting};

/// Branches whose predictive weight falls below this contribute nothing.
const BRANCH_FLOOR: f64 = 1e-300;

/// How one evaluation turns atoms into branch accumulators.
enum Plan<S> {
    /// One transition row per atom.
    Rows,
    /// Two-state chains: the probability of leaving `from` is
    /// `r(h) (1 - e^{-s(h) Δt})`, so atoms sharing `s` are pre-summed and an
    /// evaluation only touches the distinct values of `s`.
    Relaxation { from: usize, to: usize, rates: Vec<S>, grouped: Vec<S>, total: Vec<S> },
    /// Rings: decay and phase tables over the distinct values of `h₊ + h₋`
    /// and `h₊ - h₋`.
    Ring { m: usize, sums: Vec<S>, sum_of: Vec<u32>, diffs: Vec<S>, diff_of: Vec<u32> },
}

/// Expected covariance of the next posterior as a function of the sampling
/// offset, for a fixed current posterior and conditioning state.
///
/// Construction gathers the atoms that carry weight, centres their
/// coordinates on the posterior mean and caches their branch weights
/// (`w p` or `w p²`). Each evaluation then costs one transition row per atom,
/// or less for chains whose rows factor through a few shared quantities.
pub struct ObjectiveEvaluator<'a, S> {
    model: &'a ChainModel,
    x_prev: usize,
    dim: usize,
    atoms: Vec<usize>,
    centred: Vec<S>,
    base: Vec<S>,
    posterior: &'a Posterior<S>,
    plan: Plan<S>,
}

fn stride_for(d: usize) -> usize {
    1 + d + d * (d + 1) / 2
}

/// Adds `u [1, h, h hᵀ]` (upper triangle) into `acc`.
#[inline]
fn accumulate<S: Scalar>(acc: &mut [S], u: S, h: &[S]) {
    let d = h.len();
    acc[0] += u;
    let mut t = 1 + d;
    for p in 0..d {
        let up = u * h[p];
        acc[1 + p] += up;
        for q in p..d {
            acc[t] += up * h[q];
            t += 1;
        }
    }
}

/// Index of `v` among distinct values, keyed by bit pattern.
fn intern<S: Scalar>(v: S, keys: &mut HashMap<u64, u32>, values: &mut Vec<S>) -> u32 {
    let key = v.as_f64().to_bits();
    *keys.entry(key).or_insert_with(|| {
        values.push(v);
        (values.len() - 1) as u32
    })
}

impl<'a, S: Scalar> ObjectiveEvaluator<'a, S> {
    pub fn new(
        posterior: &'a Posterior<S>,
        model: &'a ChainModel,
        x_prev: usize,
        weighting: ObjectiveWeighting,
        prune_below: f64,
    ) -> Result<Self> {
        if model.d() != posterior.dim() {
            return Err(Error::DimensionMismatch { expected: model.d(), got: posterior.dim() });
        }
        if x_prev >= model.n_states() {
            return Err(Error::StateOutOfRange { state: x_prev, n_states: model.n_states() });
        }
        let support = posterior.support();
        let dim = posterior.dim();
        let mean = posterior.mean().values;
        let weights = support.weights();
        let density = posterior.density();
        let base_of = |i: usize| match weighting {
            ObjectiveWeighting::LiteralSquared => weights[i] * density[i] * density[i],
            ObjectiveWeighting::StandardPredictive => weights[i] * density[i],
        };
        let max_base = (0..support.len()).map(base_of).fold(S::zero(), S::max);
        let cutoff = max_base * S::lit(prune_below);
        let mut atoms = Vec::new();
        let mut centred = Vec::new();
        let mut base = Vec::new();
        for i in 0..support.len() {
            let b = base_of(i);
            if b > S::zero() && b >= cutoff {
                atoms.push(i);
                base.push(b);
                centred.extend(support.point(i).iter().zip(&mean).map(|(&h, &m)| h - m));
            }
        }
        let mut ev = Self { model, x_prev, dim, atoms, centred, base, posterior, plan: Plan::Rows };
        ev.plan = ev.make_plan();
        Ok(ev)
    }

    fn make_plan(&self) -> Plan<S> {
        let d = self.dim;
        let support = self.posterior.support();
        match self.model.kind() {
            ModelKind::TwoStateUnidirectional | ModelKind::TwoStateBidirectional => {
                let uni = matches!(self.model.kind(), ModelKind::TwoStateUnidirectional);
                if uni && self.x_prev != 0 {
                    return Plan::Rows;
                }
                let (from, to) = (self.x_prev, 1 - self.x_prev);
                let stride = stride_for(d);
                let mut keys = HashMap::new();
                let mut rates = Vec::new();
                let mut grouped: Vec<S> = Vec::new();
                let mut total = vec![S::zero(); stride];
                for (slot, &i) in self.atoms.iter().enumerate() {
                    let h = support.point(i);
                    let (s, r) = if uni {
                        (h[0], S::one())
                    } else {
                        let s = h[0] + h[1];
                        (s, if s == S::zero() { S::zero() } else { h[from] / s })
                    };
                    let g = intern(s, &mut keys, &mut rates) as usize;
                    if grouped.len() < rates.len() * stride {
                        grouped.resize(rates.len() * stride, S::zero());
                    }
                    let c = &self.centred[slot * d..(slot + 1) * d];
                    let b = self.base[slot];
                    accumulate(&mut total, b, c);
                    accumulate(&mut grouped[g * stride..(g + 1) * stride], b * r, c);
                }
                Plan::Relaxation { from, to, rates, grouped, total }
            }
            ModelKind::Ring { m } => {
                let (mut sum_keys, mut diff_keys) = (HashMap::new(), HashMap::new());
                let (mut sums, mut diffs) = (Vec::new(), Vec::new());
                let mut sum_of = Vec::with_capacity(self.atoms.len());
                let mut diff_of = Vec::with_capacity(self.atoms.len());
                for &i in &self.atoms {
                    let h = support.point(i);
                    sum_of.push(intern(h[0] + h[1], &mut sum_keys, &mut sums));
                    diff_of.push(intern(h[0] - h[1], &mut diff_keys, &mut diffs));
                }
                Plan::Ring { m: *m, sums, sum_of, diffs, diff_of }
            }
            _ => Plan::Rows,
        }
    }

    pub fn n_active(&self) -> usize {
        self.atoms.len()
    }

    /// Per-branch sums of `b(h) p(k | x_prev, h, Δt) [1, h - m, (h - m)(h - m)ᵀ]`.
    fn branch_sums(&self, dt: S) -> Result<Vec<S>> {
        if !(dt >= S::zero()) || !dt.is_finite() {
            return Err(Error::InvalidTime(dt.as_f64()));
        }
        let d = self.dim;
        let n_states = self.model.n_states();
        let stride = stride_for(d);
        let mut acc = vec![S::zero(); n_states * stride];
        match &self.plan {
            Plan::Rows => {
                let mut row = vec![S::zero(); n_states];
                let support = self.posterior.support();
                for (slot, &i) in self.atoms.iter().enumerate() {
                    self.model.transition_row(support.point(i), self.x_prev, dt, &mut row)?;
                    let h = &self.centred[slot * d..(slot + 1) * d];
                    let b = self.base[slot];
                    for (k, &pk) in row.iter().enumerate() {
                        if pk != S::zero() {
                            accumulate(&mut acc[k * stride..(k + 1) * stride], b * pk, h);
                        }
                    }
                }
            }
            Plan::Relaxation { from, to, rates, grouped, total } => {
                let (moved_acc, stay_acc) = {
                    let mut moved = vec![S::zero(); stride];
                    for (g, &s) in rates.iter().enumerate() {
                        // 1 - e^{-s dt} without cancellation
                        let f = -(-s * dt).exp_m1();
                        if f == S::zero() {
                            continue;
                        }
                        for (a, &v) in moved.iter_mut().zip(&grouped[g * stride..(g + 1) * stride]) {
                            *a += f * v;
                        }
                    }
                    let stay: Vec<S> = total.iter().zip(&moved).map(|(&t, &v)| t - v).collect();
                    (moved, stay)
                };
                acc[to * stride..(to + 1) * stride].copy_from_slice(&moved_acc);
                acc[from * stride..(from + 1) * stride].copy_from_slice(&stay_acc);
            }
            Plan::Ring { m, sums, sum_of, diffs, diff_of } => {
                let m = *m;
                let decay: Vec<S> = sums
                    .iter()
                    .flat_map(|&s| (0..m).map(move |k| (s, k)))
                    .map(|(s, k)| self.model.ring_decay(s, m, k, dt))
                    .collect();
                let phase: Vec<(S, S)> = diffs
                    .iter()
                    .flat_map(|&v| (0..m).map(move |k| (v, k)))
                    .map(|(v, k)| self.model.ring_phase(v, m, k, dt))
                    .collect();
                let half = ring_half_modes(m);
                let (cos_tab, sin_tab) = self.model.ring_tables::<S>();
                let mut rel = vec![S::zero(); m];
                let mut f = vec![S::zero(); stride];
                // component-major sums over the offset `r = (k - x_prev) mod m`
                let mut by_offset = vec![S::zero(); stride * m];
                for slot in 0..self.atoms.len() {
                    let (gs, gd) = (sum_of[slot] as usize * m, diff_of[slot] as usize * m);
                    rel.fill(S::zero());
                    for k in 0..half {
                        let span = k * m..(k + 1) * m;
                        ring_add_mode(
                            m,
                            k,
                            decay[gs + k],
                            phase[gd + k],
                            &cos_tab[span.clone()],
                            &sin_tab[span],
                            &mut rel,
                        );
                    }
                    clamp_unit(&mut rel);
                    f.fill(S::zero());
                    accumulate(&mut f, self.base[slot], &self.centred[slot * d..(slot + 1) * d]);
                    for (c, &fc) in f.iter().enumerate() {
                        let dst = &mut by_offset[c * m..(c + 1) * m];
                        let rel = &rel[..m];
                        for r in 0..m {
                            dst[r] += fc * rel[r];
                        }
                    }
                }
                for r in 0..m {
                    let k = (self.x_prev + r) % m;
                    for c in 0..stride {
                        acc[k * stride + c] = by_offset[c * m + r];
                    }
                }
            }
        }
        if acc.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(acc)
    }

    /// `Σ_k Σ_h (h - m_k)(h - m_k)ᵀ b(h) p(k | x_prev, h, Δt)` with
    /// `m_k` the branch mean under the same weights.
    pub fn expected_covariance(&self, dt: S) -> Result<CovarianceMatrix<S>> {
        let d = self.dim;
        let stride = stride_for(d);
        let acc = self.branch_sums(dt)?;
        let mut cov = SquareMatrix::zeros(d);
        let mut any = false;
        for a in acc.chunks_exact(stride) {
            let z = a[0];
            if !(z > S::lit(BRANCH_FLOOR)) {
                continue;
            }
            any = true;
            let mut t = 1 + d;
            for p in 0..d {
                for q in p..d {
                    cov[(p, q)] += a[t] - a[1 + p] * a[1 + q] / z;
                    t += 1;
                }
            }
        }
        if !any {
            return Err(Error::AllBranchesVanished);
        }
        for p in 0..d {
            for q in 0..p {
                cov[(p, q)] = cov[(q, p)];
            }
        }
        Ok(CovarianceMatrix(cov))
    }

    /// Expected variance for one rate, determinant of the expected
    /// covariance otherwise.
    pub fn objective(&self, dt: S) -> Result<S> {
        let cov = self.expected_covariance(dt)?;
        Ok(if self.dim == 1 { cov.get(0, 0) } else { cov.det() })
    }
}

/// Expected posterior variance of the single rate of the unidirectional
/// chain after a sample at offset `t` from the reset:
/// `Σ_{x∈{0,1}} ∫ p(h) p(x | h, t) (h - E[h | x])² dh`.
pub fn expected_variance<S: Scalar>(posterior: &Posterior<S>, model: &ChainModel, t: S) -> Result<S> {
    if posterior.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: posterior.dim() });
    }
    let ev =
        ObjectiveEvaluator::new(posterior, model, model.initial_state(), ObjectiveWeighting::StandardPredictive, 0.0)?;
    Ok(ev.expected_covariance(t)?.get(0, 0))
}

/// Expected covariance after sampling `dt` after a visit to `x_prev`.
pub fn expected_covariance<S: Scalar>(
    posterior: &Posterior<S>,
    model: &ChainModel,
    x_prev: usize,
    dt: S,
    weighting: ObjectiveWeighting,
) -> Result<CovarianceMatrix<S>> {
    ObjectiveEvaluator::new(posterior, model, x_prev, weighting, 0.0)?.expected_covariance(dt)
}

/// Design objective: [`expected_variance`] for one rate, determinant of
/// [`expected_covariance`] for several.
pub fn objective<S: Scalar>(
    posterior: &Posterior<S>,
    model: &ChainModel,
    x_prev: usize,
    dt: S,
    config: &DesignConfig,
) -> Result<S> {
    let weighting = if posterior.dim() == 1 { ObjectiveWeighting::StandardPredictive } else { config.weighting };
    ObjectiveEvaluator::new(posterior, model, x_prev, weighting, config.prune_below)?.objective(dt)
}
