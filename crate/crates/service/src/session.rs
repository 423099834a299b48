//! Session state and the engine calls behind each endpoint.

use std::collections::BTreeMap;
use std::sync::Arc;

use adaptrate_core::design::Observer;
use adaptrate_core::design::{objective, objective_curve, Recommendation};
use adaptrate_core::grid::{DEFAULT_H_MAX, DEFAULT_NODES};
use adaptrate_core::{
    ChainModel, DesignConfig, Inference, ModelSpec, Observation, Posterior, PriorSpec, Protocol, SimulatedObserver,
    StepRecord, Trace,
};
use axum::http::StatusCode;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridRequest {
    pub h_max: f64,
    pub nodes: usize,
}

impl Default for GridRequest {
    fn default() -> Self {
        Self { h_max: DEFAULT_H_MAX, nodes: DEFAULT_NODES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    /// Observations are reported by the experimenter.
    Manual,
    /// Observations are drawn from the chain with rates `h_true`.
    Simulated { h_true: Vec<f64>, seed: u64 },
}

/// Body of `POST /sessions`.
///
/// ```json
/// {
///   "model": {"kind": "two_state_bidirectional"},
///   "prior": {"family": "bivariate_gamma", "a": 1.0, "b": 1.0, "mu1": 2.0, "mu2": 2.0},
///   "grid": {"h_max": 10.0, "nodes": 201},
///   "config": {"theta": 0.1},
///   "mode": {"kind": "simulated", "h_true": [1.0, 2.0], "seed": 7}
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateRequest {
    pub model: ModelSpec,
    pub prior: PriorSpec,
    #[serde(default)]
    pub grid: GridRequest,
    #[serde(default)]
    pub config: DesignConfig,
    #[serde(default = "manual")]
    pub mode: Mode,
}

fn manual() -> Mode {
    Mode::Manual
}

/// Body of `POST /sessions/{id}/observations`: `{"state": 1, "time": 0.8}`.
/// `time` is the absolute sample time (the offset from the restart under
/// reset protocols) and may differ from the recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationRequest {
    pub state: usize,
    pub time: f64,
}

/// Body of `POST /sessions/{id}/advance`: `{"steps": 10}`; omitted steps
/// mean one.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AdvanceRequest {
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecommendationView {
    pub offset: f64,
    pub time: f64,
    pub objective: f64,
}

impl From<Recommendation<f64>> for RecommendationView {
    fn from(r: Recommendation<f64>) -> Self {
        Self { offset: r.offset, time: r.time, objective: r.objective }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Status {
    AwaitingObservation {
        recommendation: RecommendationView,
    },
    Converged,
    /// Stopped at the step cap without converging.
    Aborted,
}

/// A stored reply to a request carrying an `Idempotency-Key`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredReply {
    pub request: serde_json::Value,
    pub status: u16,
    pub body: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub request: CreateRequest,
    pub create_key: Option<String>,
    pub run: Inference,
    pub observer: Option<SimulatedObserver>,
    pub status: Status,
    pub replies: BTreeMap<String, StoredReply>,
}

fn status_of(run: &Inference) -> ApiResult<Status> {
    if run.is_converged() {
        Ok(Status::Converged)
    } else if run.at_step_cap() {
        Ok(Status::Aborted)
    } else {
        Ok(Status::AwaitingObservation { recommendation: run.recommend()?.into() })
    }
}

pub fn build_model(spec: &ModelSpec) -> ApiResult<ChainModel> {
    Ok(spec.build()?)
}

pub fn build_prior(req: &CreateRequest) -> ApiResult<Posterior> {
    Ok(adaptrate_core::prior_on_grid(&req.prior, req.grid.h_max, req.grid.nodes)?)
}

impl Session {
    pub fn create(id: String, request: CreateRequest, create_key: Option<String>) -> ApiResult<Self> {
        let model = build_model(&request.model)?;
        let prior = build_prior(&request)?;
        let observer = match &request.mode {
            Mode::Manual => None,
            Mode::Simulated { h_true, seed } => {
                model.rates(h_true.clone())?;
                Some(SimulatedObserver::new(h_true.clone(), *seed))
            }
        };
        let run = Inference::new(model, prior, request.config.clone())?;
        let status = status_of(&run)?;
        Ok(Self { id, request, create_key, run, observer, status, replies: BTreeMap::new() })
    }

    /// Rebuilds a session from persisted parts; the status is taken as saved.
    #[allow(clippy::too_many_arguments)]
    pub fn restore(
        id: String,
        request: CreateRequest,
        create_key: Option<String>,
        posterior: Posterior,
        last: Observation,
        trace: Trace,
        word_pos: Option<u128>,
        status: Status,
        replies: BTreeMap<String, StoredReply>,
    ) -> ApiResult<Self> {
        let model = build_model(&request.model)?;
        let observer = match (&request.mode, word_pos) {
            (Mode::Manual, _) => None,
            (Mode::Simulated { h_true, seed }, Some(pos)) => {
                Some(SimulatedObserver::resume(h_true.clone(), *seed, pos))
            }
            (Mode::Simulated { .. }, None) => {
                return Err(ApiError::internal(format!("snapshot of `{id}` lacks the generator position")))
            }
        };
        let run = Inference::resume(model, posterior, request.config.clone(), last, trace)?;
        Ok(Self { id, request, create_key, run, observer, status, replies })
    }

    fn ensure_open(&self) -> ApiResult<RecommendationView> {
        match &self.status {
            Status::AwaitingObservation { recommendation } => Ok(*recommendation),
            Status::Converged => Err(ApiError::conflict("session_closed", "session has converged")),
            Status::Aborted => Err(ApiError::conflict("session_closed", "session stopped at the step cap")),
        }
    }

    /// Bayes update with a reported observation. On error the session is
    /// left unchanged.
    pub fn report(&mut self, obs: ObservationRequest) -> ApiResult<()> {
        if self.observer.is_some() {
            return Err(ApiError::conflict("simulated_session", "simulated sessions draw their own observations"));
        }
        let rec = self.ensure_open()?;
        let model = self.run.model();
        if obs.state >= model.n_states() {
            return Err(adaptrate_core::Error::StateOutOfRange { state: obs.state, n_states: model.n_states() }.into());
        }
        if !(obs.time > 0.0) || !obs.time.is_finite() {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_time",
                format!("time must be positive and finite, got {}", obs.time),
            ));
        }
        let next = Observation::new(obs.time, obs.state);
        let (x_prev, dt) = model.interval(self.run.last_observation(), &next)?;
        let value = if obs.time == rec.time {
            rec.objective
        } else {
            objective(self.run.posterior(), model, x_prev, dt, self.run.config())?
        };
        self.run.record(next, value)?;
        self.status = status_of(&self.run)?;
        Ok(())
    }

    /// Draws and records up to `steps` simulated observations, stopping
    /// early at convergence or the step cap.
    pub fn advance(&mut self, steps: usize) -> ApiResult<usize> {
        if self.observer.is_none() {
            return Err(ApiError::conflict("manual_session", "only simulated sessions can advance"));
        }
        let mut done = 0;
        while done < steps {
            let Status::AwaitingObservation { recommendation: rec } = self.status else { break };
            let from = match self.run.model().protocol() {
                Protocol::ResetEachSample => self.run.model().origin(),
                Protocol::ContinuousTrajectory => *self.run.last_observation(),
            };
            let observer = self.observer.as_mut().expect("checked above");
            let x = observer.observe(self.run.model(), &from, rec.offset)?;
            self.run.record(Observation::new(rec.time, x), rec.objective)?;
            self.status = status_of(&self.run)?;
            done += 1;
        }
        Ok(done)
    }

    pub fn word_pos(&self) -> Option<u128> {
        self.observer.as_ref().map(|o| o.word_pos())
    }

    pub fn summary(&self) -> SessionSummary {
        let trace = self.run.trace();
        SessionSummary {
            id: self.id.clone(),
            mode: self.request.mode.clone(),
            model: self.request.model.clone(),
            prior: self.request.prior,
            config: self.request.config.clone(),
            n_states: self.run.model().n_states(),
            labels: trace.labels.clone(),
            status: self.status.clone(),
            n_samples: trace.n_samples(),
            metric: trace.final_metric(),
            initial_metric: trace.initial_metric,
            threshold: trace.threshold,
            last_observation: *self.run.last_observation(),
            steps: trace.steps.clone(),
        }
    }

    pub fn brief(&self) -> SessionBrief {
        SessionBrief {
            id: self.id.clone(),
            model: self.request.model.kind.clone(),
            mode: match self.request.mode {
                Mode::Manual => "manual",
                Mode::Simulated { .. } => "simulated",
            }
            .to_string(),
            status: self.status.clone(),
            n_samples: self.run.trace().n_samples(),
        }
    }
}

/// `GET /sessions/{id}` and the reply to every mutating request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub mode: Mode,
    pub model: ModelSpec,
    pub prior: PriorSpec,
    pub config: DesignConfig,
    pub n_states: usize,
    pub labels: Vec<String>,
    pub status: Status,
    pub n_samples: usize,
    /// Current posterior variance (one rate) or covariance determinant.
    pub metric: f64,
    pub initial_metric: f64,
    /// Stopping bound compared with `metric`.
    pub threshold: f64,
    pub last_observation: Observation,
    pub steps: Vec<StepRecord>,
}

impl SessionSummary {
    /// The trace as the engine would write it.
    pub fn trace(&self) -> Trace {
        Trace {
            labels: self.labels.clone(),
            steps: self.steps.clone(),
            initial_metric: self.initial_metric,
            threshold: self.threshold,
            converged: self.status == Status::Converged,
            capped: self.status == Status::Aborted,
        }
    }
}

/// Entry of `GET /sessions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionBrief {
    pub id: String,
    pub model: String,
    pub mode: String,
    pub status: Status,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub label: String,
    pub nodes: Vec<f64>,
    /// Marginal density at `nodes` (probabilities for structure posteriors).
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub h0: Vec<f64>,
    pub h1: Vec<f64>,
    /// Joint density, row `i` holding `h0[i]` against every `h1[j]`.
    pub density: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub offset: f64,
    /// `null` where every outcome branch vanishes.
    pub objective: Option<f64>,
}

/// `GET /sessions/{id}/posterior?resolution=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorView {
    pub marginals: Vec<Marginal>,
    /// Present for two-rate grid posteriors.
    pub joint: Option<Joint>,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub map: Vec<f64>,
    pub metric: f64,
    pub threshold: f64,
    /// Objective over the candidate offsets for the next sample; empty once
    /// the session is closed.
    pub objective_curve: Vec<CurvePoint>,
}

/// Up to `k` indices spread evenly over `0..n`, always keeping both ends.
pub fn thin(n: usize, k: Option<usize>) -> Vec<usize> {
    match k {
        Some(k) if k >= 2 && k < n => {
            let mut idx: Vec<usize> =
                (0..k).map(|j| ((j as f64) * (n - 1) as f64 / (k - 1) as f64).round() as usize).collect();
            idx.dedup();
            idx
        }
        _ => (0..n).collect(),
    }
}

pub fn posterior_view(session: &Session, resolution: Option<usize>) -> ApiResult<PosteriorView> {
    let post = session.run.posterior();
    let support = post.support();
    let d = post.dim();
    let labels = session.run.trace().labels.clone();
    let density = post.density();
    let marginals = match support.as_grid() {
        Some(grid) => {
            let shape = grid.shape();
            let n = density.len();
            (0..d)
                .map(|k| {
                    let stride: usize = shape[k + 1..].iter().product();
                    let mut marg = vec![0.0; shape[k]];
                    for (i, &p) in density.iter().enumerate().take(n) {
                        let ik = (i / stride) % shape[k];
                        // weight of the other coordinates
                        let w = support.weights()[i] / grid.axis_weights(k)[ik];
                        marg[ik] += p * w;
                    }
                    let keep = thin(shape[k], resolution);
                    Marginal {
                        label: labels[k].clone(),
                        nodes: keep.iter().map(|&i| grid.axis(k)[i]).collect(),
                        density: keep.iter().map(|&i| marg[i]).collect(),
                    }
                })
                .collect()
        }
        None => (0..d)
            .map(|k| {
                let mut marg = [0.0; 2];
                for (i, m) in post.atom_masses().enumerate() {
                    marg[support.point(i)[k] as usize] += m;
                }
                Marginal { label: labels[k].clone(), nodes: vec![0.0, 1.0], density: marg.to_vec() }
            })
            .collect(),
    };
    let joint = match support.as_grid() {
        Some(grid) if d == 2 => {
            let n1 = grid.axis(1).len();
            let r0 = thin(grid.axis(0).len(), resolution);
            let r1 = thin(n1, resolution);
            Some(Joint {
                h0: r0.iter().map(|&i| grid.axis(0)[i]).collect(),
                h1: r1.iter().map(|&j| grid.axis(1)[j]).collect(),
                density: r0.iter().map(|&i| r1.iter().map(|&j| density[i * n1 + j]).collect()).collect(),
            })
        }
        _ => None,
    };
    let (mean, cov) = post.moments();
    let objective_curve = match session.status {
        Status::AwaitingObservation { .. } => {
            objective_curve(post, session.run.model(), session.run.conditioning_state(), session.run.config())?
                .into_iter()
                .map(|(offset, v)| CurvePoint { offset, objective: v.is_finite().then_some(v) })
                .collect()
        }
        _ => Vec::new(),
    };
    Ok(PosteriorView {
        marginals,
        joint,
        mean: mean.values,
        covariance: (0..d).map(|i| (0..d).map(|j| cov.get(i, j)).collect()).collect(),
        map: post.map_estimate().values,
        metric: session.run.metric(),
        threshold: session.run.trace().threshold,
        objective_curve,
    })
}

pub type SharedSession = Arc<Session>;
