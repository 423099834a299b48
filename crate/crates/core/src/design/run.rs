//! The sequential inference loop: check convergence, choose the next
//! sampling time, obtain an observation, update the posterior.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{sample_transition, ChainModel, Observation, Protocol};
use crate::error::{Error, Result};
use crate::posterior::{fmt17, CovarianceMatrix, Posterior, PosteriorKind};
use crate::scalar::Scalar;

use super::config::DesignConfig;
use super::search::{choose_next_time, TimeChoice};

/// One completed iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord<S> {
    pub n: usize,
    /// Sample time (offset from the reset under `ResetEachSample`).
    pub t: S,
    /// Elapsed time since the conditioning state was observed.
    pub dt: S,
    pub x: usize,
    /// Design objective at the chosen time (NaN for fixed-period runs).
    pub objective: S,
    /// Posterior variance (one rate) or covariance determinant after the update.
    pub metric: S,
    pub map: Vec<S>,
    pub mean: Vec<S>,
}

/// Full history of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace<S> {
    pub labels: Vec<String>,
    pub steps: Vec<StepRecord<S>>,
    /// Variance / determinant of the prior.
    pub initial_metric: S,
    /// Absolute stopping bound (`θ`, or `θ·D` for structure posteriors).
    pub threshold: S,
    pub converged: bool,
    /// True if the run stopped at the step cap without converging.
    pub capped: bool,
}

impl<S: Scalar> Trace<S> {
    /// Number of samples taken.
    pub fn n_samples(&self) -> usize {
        self.steps.len()
    }

    /// Final posterior metric (the prior's when no sample was taken).
    pub fn final_metric(&self) -> S {
        self.steps.last().map_or(self.initial_metric, |s| s.metric)
    }

    /// `n,t_n,x_n,objective,det_cov,map_*,mean_*`, floats at 17 significant
    /// digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = vec!["n".to_string(), "t_n".into(), "x_n".into(), "objective".into(), "det_cov".into()];
        header.extend(self.labels.iter().map(|l| format!("map_{l}")));
        header.extend(self.labels.iter().map(|l| format!("mean_{l}")));
        writeln!(w, "{}", header.join(","))?;
        for s in &self.steps {
            let mut f = vec![s.n.to_string(), fmt17(s.t.as_f64()), s.x.to_string()];
            f.push(fmt17(s.objective.as_f64()));
            f.push(fmt17(s.metric.as_f64()));
            f.extend(s.map.iter().map(|v| fmt17(v.as_f64())));
            f.extend(s.mean.iter().map(|v| fmt17(v.as_f64())));
            writeln!(w, "{}", f.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Source of observations: a simulator or a person at the bench.
pub trait Observer<S> {
    /// State observed `offset` after `from` (under reset, `from` is the
    /// restart state at time 0 and `offset` the sample time).
    fn observe(&mut self, model: &ChainModel, from: &Observation<S>, offset: S) -> Result<usize>;
}

/// Draws observations from the chain with known rates.
#[derive(Debug, Clone)]
pub struct SimulatedObserver<S> {
    h_true: Vec<S>,
    rng: ChaCha8Rng,
}

impl<S: Scalar> SimulatedObserver<S> {
    pub fn new(h_true: Vec<S>, seed: u64) -> Self {
        Self { h_true, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Resumes a generator at a given word position of its stream.
    pub fn resume(h_true: Vec<S>, seed: u64, word_pos: u128) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_word_pos(word_pos);
        Self { h_true, rng }
    }

    pub fn word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn h_true(&self) -> &[S] {
        &self.h_true
    }
}

impl<S: Scalar> Observer<S> for SimulatedObserver<S> {
    fn observe(&mut self, model: &ChainModel, from: &Observation<S>, offset: S) -> Result<usize> {
        sample_transition(model, &self.h_true, from.x, offset, &mut self.rng)
    }
}

/// Wraps a closure `(from_state, offset) -> state` as an [`Observer`].
pub struct FnObserver<F>(pub F);

impl<S: Scalar, F: FnMut(usize, S) -> Result<usize>> Observer<S> for FnObserver<F> {
    fn observe(&mut self, _model: &ChainModel, from: &Observation<S>, offset: S) -> Result<usize> {
        (self.0)(from.x, offset)
    }
}

/// Recommended next sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recommendation<S> {
    /// Offset after the previous sample (or after the reset).
    pub offset: S,
    /// Absolute sample time.
    pub time: S,
    pub objective: S,
}

/// State of one inference run, advanced one sample at a time.
#[derive(Debug, Clone)]
pub struct Inference<S> {
    model: ChainModel,
    config: DesignConfig,
    posterior: Posterior<S>,
    last: Observation<S>,
    trace: Trace<S>,
}

/// Posterior variance for one rate, covariance determinant otherwise.
pub fn convergence_metric<S: Scalar>(posterior: &Posterior<S>) -> S {
    metric_of(&posterior.covariance())
}

fn metric_of<S: Scalar>(cov: &CovarianceMatrix<S>) -> S {
    if cov.dim() == 1 {
        cov.get(0, 0)
    } else {
        cov.det()
    }
}

impl<S: Scalar> Inference<S> {
    pub fn new(model: ChainModel, prior: Posterior<S>, config: DesignConfig) -> Result<Self> {
        config.validate()?;
        if model.d() != prior.dim() {
            return Err(Error::DimensionMismatch { expected: model.d(), got: prior.dim() });
        }
        let initial_metric = convergence_metric(&prior);
        let theta = S::lit(config.theta);
        let threshold = match prior.kind() {
            PosteriorKind::Structure => theta * initial_metric,
            PosteriorKind::Continuous => theta,
        };
        let trace = Trace {
            labels: model.rate_labels(),
            steps: Vec::new(),
            initial_metric,
            threshold,
            converged: initial_metric <= threshold,
            capped: false,
        };
        let last = model.origin();
        Ok(Self { model, config, posterior: prior, last, trace })
    }

    /// Rebuilds a run from a saved posterior, trace and last observation.
    /// The convergence flags of `trace` are recomputed.
    pub fn resume(
        model: ChainModel,
        posterior: Posterior<S>,
        config: DesignConfig,
        last: Observation<S>,
        trace: Trace<S>,
    ) -> Result<Self> {
        config.validate()?;
        if model.d() != posterior.dim() {
            return Err(Error::DimensionMismatch { expected: model.d(), got: posterior.dim() });
        }
        if last.x >= model.n_states() {
            return Err(Error::StateOutOfRange { state: last.x, n_states: model.n_states() });
        }
        let mut run = Self { model, config, posterior, last, trace };
        run.trace.converged = run.is_converged();
        run.trace.capped = !run.trace.converged && run.at_step_cap();
        Ok(run)
    }

    pub fn model(&self) -> &ChainModel {
        &self.model
    }

    pub fn config(&self) -> &DesignConfig {
        &self.config
    }

    pub fn posterior(&self) -> &Posterior<S> {
        &self.posterior
    }

    pub fn trace(&self) -> &Trace<S> {
        &self.trace
    }

    pub fn into_trace(self) -> Trace<S> {
        self.trace
    }

    pub fn last_observation(&self) -> &Observation<S> {
        &self.last
    }

    pub fn metric(&self) -> S {
        self.trace.final_metric()
    }

    pub fn is_converged(&self) -> bool {
        self.metric() <= self.trace.threshold
    }

    pub fn at_step_cap(&self) -> bool {
        self.trace.steps.len() >= self.config.step_cap
    }

    /// State the next transition is conditioned on.
    pub fn conditioning_state(&self) -> usize {
        match self.model.protocol() {
            Protocol::ResetEachSample => self.model.initial_state(),
            Protocol::ContinuousTrajectory => self.last.x,
        }
    }

    fn absolute_time(&self, offset: S) -> S {
        match self.model.protocol() {
            Protocol::ResetEachSample => offset,
            Protocol::ContinuousTrajectory => self.last.t + offset,
        }
    }

    /// Minimizer of the design objective for the next sample.
    pub fn recommend(&self) -> Result<Recommendation<S>> {
        let TimeChoice { offset, objective } =
            choose_next_time(&self.posterior, &self.model, self.conditioning_state(), &self.config)?;
        Ok(Recommendation { offset, time: self.absolute_time(offset), objective })
    }

    /// Bayes update with an observation and append it to the trace.
    pub fn record(&mut self, obs: Observation<S>, objective: S) -> Result<&StepRecord<S>> {
        let (_, dt) = self.model.interval(&self.last, &obs)?;
        let posterior = self.posterior.bayes_update(&self.model, &self.last, &obs)?;
        let (mean, cov) = posterior.moments();
        let metric = metric_of(&cov);
        self.posterior = posterior;
        self.last = obs;
        let step = StepRecord {
            n: self.trace.steps.len() + 1,
            t: obs.t,
            dt,
            x: obs.x,
            objective,
            metric,
            map: self.posterior.map_estimate().values,
            mean: mean.values,
        };
        self.trace.steps.push(step);
        self.trace.converged = self.is_converged();
        self.trace.capped = !self.trace.converged && self.at_step_cap();
        Ok(self.trace.steps.last().expect("just pushed"))
    }

    /// One adaptive iteration. Returns `false` without doing anything when
    /// the run has converged or hit the step cap.
    pub fn step<O: Observer<S> + ?Sized>(&mut self, observer: &mut O) -> Result<bool> {
        if self.is_converged() || self.at_step_cap() {
            return Ok(false);
        }
        let rec = self.recommend()?;
        let from = self.anchor();
        let x = observer.observe(&self.model, &from, rec.offset)?;
        self.record(Observation::new(rec.time, x), rec.objective)?;
        Ok(true)
    }

    /// One fixed-period iteration.
    pub fn step_periodic<O: Observer<S> + ?Sized>(&mut self, period: S, observer: &mut O) -> Result<bool> {
        if self.is_converged() || self.at_step_cap() {
            return Ok(false);
        }
        let from = self.anchor();
        let x = observer.observe(&self.model, &from, period)?;
        self.record(Observation::new(self.absolute_time(period), x), S::nan())?;
        Ok(true)
    }

    fn anchor(&self) -> Observation<S> {
        match self.model.protocol() {
            Protocol::ResetEachSample => self.model.origin(),
            Protocol::ContinuousTrajectory => self.last,
        }
    }
}

/// Runs the adaptive loop to convergence or the step cap.
pub fn run_adaptive<S: Scalar, O: Observer<S> + ?Sized>(
    model: &ChainModel,
    prior: &Posterior<S>,
    config: &DesignConfig,
    observer: &mut O,
) -> Result<Trace<S>> {
    let mut run = Inference::new(model.clone(), prior.clone(), config.clone())?;
    while run.step(observer)? {}
    Ok(run.into_trace())
}

/// Same loop with samples every `period` instead of optimized times.
pub fn run_periodic<S: Scalar, O: Observer<S> + ?Sized>(
    model: &ChainModel,
    prior: &Posterior<S>,
    config: &DesignConfig,
    period: S,
    observer: &mut O,
) -> Result<Trace<S>> {
    if !(period > S::zero()) || !period.is_finite() {
        return Err(Error::InvalidConfig(format!("period must be positive, got {period}")));
    }
    let mut run = Inference::new(model.clone(), prior.clone(), config.clone())?;
    while run.step_periodic(period, observer)? {}
    Ok(run.into_trace())
}
