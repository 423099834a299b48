//! Markov chain families, their generators, exact transition probabilities
//! and forward sampling of point observations.

mod mm1;
mod sample;

pub use mm1::{mm1_row_prefix, mm1_transition_prob, MAX_SERIES_TERMS};
pub use sample::sample_transition;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{expm, SquareMatrix};
use crate::scalar::Scalar;

/// Smallest admissible truncation of the M/M/1 state space.
pub const MIN_MM1_STATE_CAP: usize = 10;
pub const DEFAULT_MM1_STATE_CAP: usize = 50;
/// Largest binary digraph whose configuration space is enumerated exactly.
pub const MAX_BINARY_STATES: usize = 4;

/// Chain family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// `0 -> 1` at rate `h0`; state 1 absorbs.
    TwoStateUnidirectional,
    /// `0 -> 1` at `h0`, `1 -> 0` at `h1`.
    TwoStateBidirectional,
    /// Birth rate `λ`, death rate `μ`, states `0..=state_cap`.
    Mm1Queue { state_cap: usize },
    /// `m` states on a cycle; `h+` one step clockwise, `h-` counterclockwise.
    Ring { m: usize },
    /// Every ordered pair `i != j` carries its own rate.
    BinaryDigraph { m: usize },
}

/// How successive samples relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// The chain is restarted in the initial state before every sample;
    /// sample times are offsets from the restart.
    ResetEachSample,
    /// One trajectory, sampled at strictly increasing times.
    ContinuousTrajectory,
}

/// A point sample `(t, X(t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation<S> {
    pub t: S,
    pub x: usize,
}

impl<S: Scalar> Observation<S> {
    pub fn new(t: S, x: usize) -> Self {
        Self { t, x }
    }
}

/// Unknown rate vector with per-index labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateVector<S> {
    pub values: Vec<S>,
    pub labels: Vec<String>,
}

impl<S: Scalar> RateVector<S> {
    /// Unlabelled vector; labels default to `h0, h1, ...`.
    pub fn new(values: Vec<S>) -> Self {
        let labels = (0..values.len()).map(|i| format!("h{i}")).collect();
        Self { values, labels }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.values
    }
}

impl<S> std::ops::Index<usize> for RateVector<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        &self.values[i]
    }
}

/// Infinitesimal generator: non-negative off-diagonal rates, rows summing
/// to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix<S>(pub SquareMatrix<S>);

impl<S: Scalar> GeneratorMatrix<S> {
    pub fn matrix(&self) -> &SquareMatrix<S> {
        &self.0
    }

    /// Largest absolute row sum.
    pub fn max_row_sum(&self) -> S {
        self.0.rows().map(|r| r.iter().copied().sum::<S>().abs()).fold(S::zero(), S::max)
    }
}

/// A chain family together with its observation protocol and start state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    kind: ModelKind,
    protocol: Protocol,
    initial_state: usize,
    edges: Vec<(usize, usize)>,
    /// cos/sin of `2π k r / m`, row-major over `(k, r)`; ring only.
    ring_trig: Vec<(f64, f64)>,
}

impl ChainModel {
    /// Builds a model with its family's default protocol and `X₀ = 0`.
    pub fn new(kind: ModelKind) -> Result<Self> {
        let protocol = match kind {
            ModelKind::TwoStateUnidirectional => Protocol::ResetEachSample,
            _ => Protocol::ContinuousTrajectory,
        };
        Self::with_protocol(kind, protocol, 0)
    }

    pub fn with_protocol(kind: ModelKind, protocol: Protocol, initial_state: usize) -> Result<Self> {
        match kind {
            ModelKind::TwoStateUnidirectional if protocol != Protocol::ResetEachSample => {
                return Err(Error::InvalidModel(
                    "the unidirectional chain absorbs in state 1 and must be reset before every sample".into(),
                ));
            }
            ModelKind::Mm1Queue { state_cap } if state_cap < MIN_MM1_STATE_CAP => {
                return Err(Error::InvalidModel(format!(
                    "M/M/1 state_cap must be >= {MIN_MM1_STATE_CAP}, got {state_cap}"
                )));
            }
            ModelKind::Ring { m } if m < 2 => {
                return Err(Error::InvalidModel(format!("ring needs m >= 2, got {m}")));
            }
            ModelKind::BinaryDigraph { m } if !(2..=MAX_BINARY_STATES).contains(&m) => {
                return Err(Error::InvalidModel(format!(
                    "binary digraph supports 2 <= m <= {MAX_BINARY_STATES}, got {m}"
                )));
            }
            _ => {}
        }
        let edges = match kind {
            ModelKind::BinaryDigraph { m } => binary_edge_order(m),
            _ => Vec::new(),
        };
        let ring_trig = match kind {
            ModelKind::Ring { m } => (0..m)
                .flat_map(|k| {
                    (0..m).map(move |r| {
                        let ang = 2.0 * PI * ((k * r) % m) as f64 / m as f64;
                        (ang.cos(), ang.sin())
                    })
                })
                .collect(),
            _ => Vec::new(),
        };
        let model = Self { kind, protocol, initial_state, edges, ring_trig };
        if initial_state >= model.n_states() {
            return Err(Error::StateOutOfRange { state: initial_state, n_states: model.n_states() });
        }
        Ok(model)
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    /// Number of free rates.
    pub fn d(&self) -> usize {
        match self.kind {
            ModelKind::TwoStateUnidirectional => 1,
            ModelKind::TwoStateBidirectional | ModelKind::Mm1Queue { .. } | ModelKind::Ring { .. } => 2,
            ModelKind::BinaryDigraph { m } => m * (m - 1),
        }
    }

    /// Size of the (truncated) state space.
    pub fn n_states(&self) -> usize {
        match self.kind {
            ModelKind::TwoStateUnidirectional | ModelKind::TwoStateBidirectional => 2,
            ModelKind::Mm1Queue { state_cap } => state_cap + 1,
            ModelKind::Ring { m } | ModelKind::BinaryDigraph { m } => m,
        }
    }

    /// Ordered pairs `(from, to)` indexing the binary digraph rates,
    /// row-major: `0→1, 0→2, …, 1→0, 1→2, …`. Empty for other families.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn rate_labels(&self) -> Vec<String> {
        match self.kind {
            ModelKind::TwoStateUnidirectional => vec!["h0".into()],
            ModelKind::TwoStateBidirectional => vec!["h0".into(), "h1".into()],
            ModelKind::Mm1Queue { .. } => vec!["lambda".into(), "mu".into()],
            ModelKind::Ring { .. } => vec!["h_plus".into(), "h_minus".into()],
            ModelKind::BinaryDigraph { .. } => self.edges.iter().map(|(i, j)| format!("h{i}_{j}")).collect(),
        }
    }

    /// Wraps `values` in a [`RateVector`] with this model's labels.
    pub fn rates<S: Scalar>(&self, values: Vec<S>) -> Result<RateVector<S>> {
        self.check_rates(&values)?;
        Ok(RateVector { values, labels: self.rate_labels() })
    }

    pub(crate) fn check_rates<S: Scalar>(&self, h: &[S]) -> Result<()> {
        if h.len() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: h.len() });
        }
        if let Some(index) = h.iter().position(|&v| !(v >= S::zero()) || !v.is_finite()) {
            return Err(Error::InvalidRate { index });
        }
        Ok(())
    }

    pub(crate) fn check_state(&self, x: usize) -> Result<()> {
        if x >= self.n_states() {
            return Err(Error::StateOutOfRange { state: x, n_states: self.n_states() });
        }
        Ok(())
    }

    /// Generator matrix of the chain (truncated with a reflecting cap for
    /// M/M/1: no birth out of `state_cap`).
    pub fn build_generator<S: Scalar>(&self, h: &[S]) -> Result<GeneratorMatrix<S>> {
        self.check_rates(h)?;
        let n = self.n_states();
        let mut a = SquareMatrix::zeros(n);
        let mut add = |i: usize, j: usize, r: S| {
            a[(i, j)] += r;
            a[(i, i)] -= r;
        };
        match self.kind {
            ModelKind::TwoStateUnidirectional => add(0, 1, h[0]),
            ModelKind::TwoStateBidirectional => {
                add(0, 1, h[0]);
                add(1, 0, h[1]);
            }
            ModelKind::Mm1Queue { state_cap } => {
                for i in 0..=state_cap {
                    if i < state_cap {
                        add(i, i + 1, h[0]);
                    }
                    if i > 0 {
                        add(i, i - 1, h[1]);
                    }
                }
            }
            ModelKind::Ring { m } => {
                for i in 0..m {
                    add(i, (i + 1) % m, h[0]);
                    add(i, (i + m - 1) % m, h[1]);
                }
            }
            ModelKind::BinaryDigraph { .. } => {
                for (&(i, j), &r) in self.edges.iter().zip(h) {
                    add(i, j, r);
                }
            }
        }
        Ok(GeneratorMatrix(a))
    }

    /// Full transition matrix over `Δt`: entry `(i, j)` is
    /// `p(X(t+Δt) = j | X(t) = i)`.
    ///
    /// Two-state chains use closed forms, ring and binary digraph the matrix
    /// exponential of the generator, and M/M/1 the Bessel series row by row
    /// (with the truncated-generator exponential as fallback).
    pub fn transition_matrix<S: Scalar>(&self, h: &[S], dt: S) -> Result<SquareMatrix<S>> {
        self.check_rates(h)?;
        check_dt(dt)?;
        let n = self.n_states();
        match self.kind {
            ModelKind::Ring { .. } | ModelKind::BinaryDigraph { .. } => self.expm_transition(h, dt),
            _ => {
                let mut p = SquareMatrix::zeros(n);
                let mut row = vec![S::zero(); n];
                for i in 0..n {
                    self.transition_row(h, i, dt, &mut row)?;
                    for (j, &v) in row.iter().enumerate() {
                        p[(i, j)] = v;
                    }
                }
                Ok(p)
            }
        }
    }

    /// `exp(A Δt)` of the generator.
    pub fn expm_transition<S: Scalar>(&self, h: &[S], dt: S) -> Result<SquareMatrix<S>> {
        let a = self.build_generator(h)?;
        let mut p = expm(&a.0.scaled(dt)).ok_or(Error::NonFinite)?;
        let n = p.dim();
        for i in 0..n {
            for j in 0..n {
                let v = p[(i, j)];
                p[(i, j)] = v.max(S::zero()).min(S::one());
            }
        }
        Ok(p)
    }

    /// Row `from` of the transition matrix, written into `out`
    /// (`out.len() == n_states()`).
    ///
    /// This is the likelihood kernel of the engine. Ring rows use the
    /// circulant eigen-decomposition (equal to the matrix exponential to
    /// rounding); M/M/1 rows use the Bessel series with every state at or
    /// beyond `state_cap` lumped into the cap state.
    pub fn transition_row<S: Scalar>(&self, h: &[S], from: usize, dt: S, out: &mut [S]) -> Result<()> {
        debug_assert_eq!(out.len(), self.n_states());
        debug_assert!(from < self.n_states());
        match self.kind {
            ModelKind::TwoStateUnidirectional | ModelKind::TwoStateBidirectional => {
                check_dt(dt)?;
                let kernel = self.two_state_kernel().expect("two-state family");
                out.copy_from_slice(&kernel.row(h, from, dt));
            }
            ModelKind::Mm1Queue { state_cap } => {
                let (lambda, mu) = (h[0], h[1]);
                match mm1_row_prefix(from, lambda, mu, dt, out) {
                    Ok(()) => {
                        let below: S = out[..state_cap].iter().copied().sum();
                        out[state_cap] = (S::one() - below).max(S::zero());
                    }
                    Err(Error::NotStationary { .. }) => {
                        return Err(Error::NotStationary { lambda: lambda.as_f64(), mu: mu.as_f64() })
                    }
                    Err(Error::InvalidTime(t)) => return Err(Error::InvalidTime(t)),
                    Err(_) => {
                        let p = self.expm_transition(h, dt)?;
                        out.copy_from_slice(p.row(from));
                    }
                }
            }
            ModelKind::Ring { m } => self.ring_row(h[0], h[1], m, from, dt, out),
            ModelKind::BinaryDigraph { .. } => {
                if h.iter().all(|&r| r == S::zero()) || dt == S::zero() {
                    out.fill(S::zero());
                    out[from] = S::one();
                } else {
                    let p = self.expm_transition(h, dt)?;
                    out.copy_from_slice(p.row(from));
                }
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// `P[i, j] = (1/m) Σ_k e^{Re λ_k Δt} cos(Im λ_k Δt - 2πk(j-i)/m)` with
    /// `λ_k = -(h+ + h-)(1 - cos θ_k) + i (h+ - h-) sin θ_k`.
    fn ring_row<S: Scalar>(&self, hp: S, hm: S, m: usize, from: usize, dt: S, out: &mut [S]) {
        let mut rel = vec![S::zero(); m];
        let sum = hp + hm;
        let diff = hp - hm;
        for k in 0..ring_half_modes(m) {
            let decay = self.ring_decay(sum, m, k, dt);
            let phase = self.ring_phase(diff, m, k, dt);
            self.ring_add_mode(m, k, decay, phase, &mut rel);
        }
        clamp_unit(&mut rel);
        let (head, tail) = out.split_at_mut(from);
        for (o, &p) in tail.iter_mut().chain(head.iter_mut()).zip(&rel) {
            *o = p;
        }
    }

    pub(crate) fn two_state_kernel(&self) -> Option<TwoStateKernel> {
        match self.kind {
            ModelKind::TwoStateUnidirectional => Some(TwoStateKernel { bidirectional: false }),
            ModelKind::TwoStateBidirectional => Some(TwoStateKernel { bidirectional: true }),
            _ => None,
        }
    }

    /// `e^{-(h₊+h₋)(1 - cos θ_k)Δt} / m` for mode `k` of the ring.
    #[inline]
    pub(crate) fn ring_decay<S: Scalar>(&self, sum: S, m: usize, k: usize, dt: S) -> S {
        // (k, r = 1) holds cos θ_k, sin θ_k
        let cos_t = self.ring_trig[k * m + 1].0;
        (-(sum * (S::one() - S::lit(cos_t))) * dt).exp() / S::from_usize_lossy(m)
    }

    /// `(sin φ, cos φ)` with `φ = (h₊-h₋) sin θ_k Δt`.
    #[inline]
    pub(crate) fn ring_phase<S: Scalar>(&self, diff: S, m: usize, k: usize, dt: S) -> (S, S) {
        let sin_t = self.ring_trig[k * m + 1].1;
        (diff * S::lit(sin_t) * dt).sin_cos()
    }

    /// Adds mode `k` (and its conjugate `m - k`) to a row indexed by the
    /// offset `(j - from) mod m`.
    #[inline]
    pub(crate) fn ring_add_mode<S: Scalar>(&self, m: usize, k: usize, decay: S, phase: (S, S), rel: &mut [S]) {
        if decay == S::zero() {
            return;
        }
        let w = if k == 0 || 2 * k == m { decay } else { decay + decay };
        let (a, b) = (w * phase.1, w * phase.0);
        for (o, &(c, s)) in rel.iter_mut().zip(&self.ring_trig[k * m..(k + 1) * m]) {
            *o += a * S::lit(c) + b * S::lit(s);
        }
    }

    /// `cos θ_k r` and `sin θ_k r` as component-major tables over `(k, r)`.
    pub(crate) fn ring_tables<S: Scalar>(&self) -> (Vec<S>, Vec<S>) {
        self.ring_trig.iter().map(|&(c, s)| (S::lit(c), S::lit(s))).unzip()
    }
}

/// Adds mode `k` and its conjugate given the `cos θ_k r`, `sin θ_k r` rows.
#[inline]
pub(crate) fn ring_add_mode<S: Scalar>(
    m: usize,
    k: usize,
    decay: S,
    phase: (S, S),
    cos_r: &[S],
    sin_r: &[S],
    rel: &mut [S],
) {
    if decay == S::zero() {
        return;
    }
    let w = if k == 0 || 2 * k == m { decay } else { decay + decay };
    let (a, b) = (w * phase.1, w * phase.0);
    let (cos_r, sin_r, rel) = (&cos_r[..m], &sin_r[..m], &mut rel[..m]);
    for r in 0..m {
        rel[r] += a * cos_r[r] + b * sin_r[r];
    }
}

/// Closed-form rows of the two-state chains.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TwoStateKernel {
    bidirectional: bool,
}

impl TwoStateKernel {
    #[inline]
    pub(crate) fn row<S: Scalar>(self, h: &[S], from: usize, dt: S) -> [S; 2] {
        if !self.bidirectional {
            let stay = (-h[0] * dt).exp();
            return if from == 0 { [stay, S::one() - stay] } else { [S::zero(), S::one()] };
        }
        let (h0, h1) = (h[0], h[1]);
        let s = h0 + h1;
        if s == S::zero() {
            let mut out = [S::zero(); 2];
            out[from] = S::one();
            return out;
        }
        // 1 - e^{-s dt} computed without cancellation
        let moved = -(-s * dt).exp_m1();
        if from == 0 {
            let p1 = h0 / s * moved;
            [S::one() - p1, p1]
        } else {
            let p0 = h1 / s * moved;
            [p0, S::one() - p0]
        }
    }
}

/// Modes `0..=m/2`; the remaining ones are conjugates.
pub(crate) fn ring_half_modes(m: usize) -> usize {
    m / 2 + 1
}

pub(crate) fn clamp_unit<S: Scalar>(row: &mut [S]) {
    for o in row.iter_mut() {
        *o = o.max(S::zero()).min(S::one());
    }
}

fn check_dt<S: Scalar>(dt: S) -> Result<()> {
    if !(dt >= S::zero()) || !dt.is_finite() {
        return Err(Error::InvalidTime(dt.as_f64()));
    }
    Ok(())
}

/// Row-major ordered pairs `(i, j)`, `i != j`.
pub fn binary_edge_order(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j))).collect()
}

/// Serializable description of a [`ChainModel`].
///
/// ```toml
/// kind = "ring"          # two_state_unidirectional | two_state_bidirectional
///                        # | mm1_queue | ring | binary_digraph
/// m = 4                  # ring / binary_digraph
/// state_cap = 50         # mm1_queue
/// protocol = "continuous_trajectory"   # optional, family default otherwise
/// initial_state = 0      # optional
/// edges = [[0, 1], [0, 2], ...]        # optional, must be the canonical order
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<Protocol>,
    #[serde(default)]
    pub initial_state: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize)>>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<ChainModel> {
        let need_m = || self.m.ok_or_else(|| Error::InvalidModel(format!("`{}` requires `m`", self.kind)));
        let kind = match self.kind.as_str() {
            "two_state_unidirectional" => ModelKind::TwoStateUnidirectional,
            "two_state_bidirectional" => ModelKind::TwoStateBidirectional,
            "mm1_queue" => ModelKind::Mm1Queue { state_cap: self.state_cap.unwrap_or(DEFAULT_MM1_STATE_CAP) },
            "ring" => ModelKind::Ring { m: need_m()? },
            "binary_digraph" => ModelKind::BinaryDigraph { m: need_m()? },
            other => return Err(Error::InvalidModel(format!("unknown model kind `{other}`"))),
        };
        let model = match self.protocol {
            Some(p) => ChainModel::with_protocol(kind, p, self.initial_state)?,
            None => {
                let mut m = ChainModel::new(kind)?;
                if self.initial_state != 0 {
                    m = ChainModel::with_protocol(m.kind.clone(), m.protocol, self.initial_state)?;
                }
                m
            }
        };
        if let Some(edges) = &self.edges {
            if edges.as_slice() != model.edges() {
                return Err(Error::InvalidModel("edge list must follow the row-major order of ordered pairs".into()));
            }
        }
        Ok(model)
    }
}

impl From<&ChainModel> for ModelSpec {
    fn from(model: &ChainModel) -> Self {
        let (kind, m, state_cap) = match model.kind {
            ModelKind::TwoStateUnidirectional => ("two_state_unidirectional", None, None),
            ModelKind::TwoStateBidirectional => ("two_state_bidirectional", None, None),
            ModelKind::Mm1Queue { state_cap } => ("mm1_queue", None, Some(state_cap)),
            ModelKind::Ring { m } => ("ring", Some(m), None),
            ModelKind::BinaryDigraph { m } => ("binary_digraph", Some(m), None),
        };
        ModelSpec {
            kind: kind.into(),
            m,
            state_cap,
            protocol: Some(model.protocol),
            initial_state: model.initial_state,
            edges: (!model.edges.is_empty()).then(|| model.edges.clone()),
        }
    }
}

impl ChainModel {
    /// Conditioning state and elapsed time for a sample `next` taken after
    /// `prev` under this model's protocol. Under reset, `prev` is ignored and
    /// `next.t` is the offset from the restart.
    pub fn interval<S: Scalar>(&self, prev: &Observation<S>, next: &Observation<S>) -> Result<(usize, S)> {
        self.check_state(next.x)?;
        match self.protocol {
            Protocol::ResetEachSample => {
                check_dt(next.t)?;
                Ok((self.initial_state, next.t))
            }
            Protocol::ContinuousTrajectory => {
                self.check_state(prev.x)?;
                if !(next.t > prev.t) || !next.t.is_finite() {
                    return Err(Error::NonIncreasingTime { prev: prev.t.as_f64(), next: next.t.as_f64() });
                }
                Ok((prev.x, next.t - prev.t))
            }
        }
    }

    /// The observation every run starts from: `(0, X₀)`.
    pub fn origin<S: Scalar>(&self) -> Observation<S> {
        Observation::new(S::zero(), self.initial_state)
    }
}
