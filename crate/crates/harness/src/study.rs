//! Replicate execution and aggregation.

use adaptrate_core::posterior::mae;
use adaptrate_core::{
    ChainModel, DesignConfig, Inference, ModelKind, ModelSpec, Posterior, PriorSpec, SimulatedObserver,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::draw::draw_rates;
use crate::error::{HarnessError, Result};
use crate::result::{aggregate, Arm, ReplicateRecord, StudyResult};
use crate::spec::{StudyKind, StudySpec};

/// Result of one run read off its final posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub n_samples: usize,
    pub converged: bool,
    pub capped: bool,
    /// Per-rate MSE against the truth, marginal over the other rates.
    pub mse: Vec<f64>,
    pub mae: f64,
    /// Observations that landed in the last state of a truncated queue.
    pub cap_hits: usize,
}

fn score(posterior: &Posterior, h_true: &[f64]) -> (Vec<f64>, f64) {
    let mse = (0..h_true.len()).map(|k| posterior.mse(h_true, k)).collect();
    let map = posterior.map_estimate();
    (mse, mae(&map.values, h_true, h_true.len()))
}

fn cap_state(model: &ChainModel) -> Option<usize> {
    match model.kind() {
        ModelKind::Mm1Queue { state_cap } => Some(*state_cap),
        _ => None,
    }
}

fn finish(run: &Inference, h_true: &[f64]) -> Outcome {
    let trace = run.trace();
    let (mse, mae) = score(run.posterior(), h_true);
    let cap_hits = cap_state(run.model()).map_or(0, |c| trace.steps.iter().filter(|s| s.x == c).count());
    Outcome { n_samples: trace.n_samples(), converged: trace.converged, capped: trace.capped, mse, mae, cap_hits }
}

/// Adaptive run against simulated observations.
pub fn adaptive_outcome(
    model: &ChainModel,
    prior: &Posterior,
    config: &DesignConfig,
    h_true: &[f64],
    seed: u64,
) -> Result<Outcome> {
    let mut run = Inference::new(model.clone(), prior.clone(), config.clone())?;
    let mut obs = SimulatedObserver::new(h_true.to_vec(), seed);
    while run.step(&mut obs)? {}
    Ok(finish(&run, h_true))
}

/// Fixed-period run against simulated observations.
pub fn periodic_outcome(
    model: &ChainModel,
    prior: &Posterior,
    config: &DesignConfig,
    period: f64,
    h_true: &[f64],
    seed: u64,
) -> Result<Outcome> {
    let mut run = Inference::new(model.clone(), prior.clone(), config.clone())?;
    let mut obs = SimulatedObserver::new(h_true.to_vec(), seed);
    while run.step_periodic(period, &mut obs)? {}
    Ok(finish(&run, h_true))
}

/// Runs once to the smallest threshold and reads off the outcome at the
/// first step meeting each of `thetas`. Choosing the next time does not
/// depend on the threshold, so this equals separate runs per threshold.
pub fn tolerance_outcomes(
    model: &ChainModel,
    prior: &Posterior,
    config: &DesignConfig,
    thetas: &[f64],
    h_true: &[f64],
    seed: u64,
) -> Result<Vec<Outcome>> {
    let theta_min = thetas.iter().copied().fold(f64::INFINITY, f64::min);
    let config = DesignConfig { theta: theta_min, ..config.clone() };
    let mut run = Inference::new(model.clone(), prior.clone(), config)?;
    // scale turning θ into the absolute bound (D for structure posteriors)
    let scale = run.trace().threshold / theta_min;
    let mut path = vec![(run.metric(), score(run.posterior(), h_true))];
    let mut obs = SimulatedObserver::new(h_true.to_vec(), seed);
    while run.step(&mut obs)? {
        path.push((run.metric(), score(run.posterior(), h_true)));
    }
    let cap = cap_state(model);
    let steps = &run.trace().steps;
    Ok(thetas
        .iter()
        .map(|&theta| {
            let bound = theta * scale;
            let hit = path.iter().position(|(m, _)| *m <= bound);
            let n = hit.unwrap_or(path.len() - 1);
            let (mse, mae) = path[n].1.clone();
            Outcome {
                n_samples: n,
                converged: hit.is_some(),
                capped: hit.is_none(),
                mse,
                mae,
                cap_hits: cap.map_or(0, |c| steps[..n].iter().filter(|s| s.x == c).count()),
            }
        })
        .collect())
}

/// Independent generator for `(variant, cell, replicate)` under `master`.
pub fn replicate_rng(master: u64, variant: usize, cell: usize, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((variant as u64) << 48) | ((cell as u64) << 32) | replicate as u64);
    rng
}

struct Cell {
    variant: usize,
    index: usize,
    model: ChainModel,
    prior: Posterior,
    prior_spec: PriorSpec,
    x: f64,
    y: f64,
    fixed: Option<Vec<f64>>,
}

fn lattice(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

fn cells(spec: &StudySpec) -> Result<Vec<Cell>> {
    let mut out = Vec::new();
    for (vi, v) in spec.variants.iter().enumerate() {
        let model = v.build_model()?;
        match spec.kind {
            StudyKind::PeriodicVsAdaptive | StudyKind::ToleranceSweep => out.push(Cell {
                variant: vi,
                index: 0,
                model,
                prior: v.build_prior()?,
                prior_spec: v.prior,
                x: f64::NAN,
                y: f64::NAN,
                fixed: None,
            }),
            StudyKind::FixedRateHeatmap => {
                let prior = v.build_prior()?;
                for (ci, h) in lattice(&spec.sweep.rates).into_iter().enumerate() {
                    out.push(Cell {
                        variant: vi,
                        index: ci,
                        model: model.clone(),
                        prior: prior.clone(),
                        prior_spec: v.prior,
                        x: h[0],
                        y: h.get(1).copied().unwrap_or(f64::NAN),
                        fixed: Some(h),
                    });
                }
            }
            StudyKind::RingSizeSweep => {
                let prior = v.build_prior()?;
                for (ci, &m) in spec.sweep.ring_sizes.iter().enumerate() {
                    let ring = ModelSpec { m: Some(m), ..v.model.clone() }.build()?;
                    out.push(Cell {
                        variant: vi,
                        index: ci,
                        model: ring,
                        prior: prior.clone(),
                        prior_spec: v.prior,
                        x: m as f64,
                        y: f64::NAN,
                        fixed: None,
                    });
                }
            }
            StudyKind::BinaryStructureSweep => {
                let m = match model.kind() {
                    ModelKind::BinaryDigraph { m } => *m,
                    _ => unreachable!("validated"),
                };
                for (ci, &p) in spec.sweep.probabilities.iter().enumerate() {
                    let prior_spec = PriorSpec::BernoulliStructure { p, m };
                    out.push(Cell {
                        variant: vi,
                        index: ci,
                        model: model.clone(),
                        prior: adaptrate_core::default_prior(&prior_spec)?,
                        prior_spec,
                        x: p,
                        y: f64::NAN,
                        fixed: None,
                    });
                }
            }
        }
    }
    Ok(out)
}

fn record(cell: &Cell, arm: Arm, x: f64, y: f64, replicate: usize, h: &[f64], o: Outcome) -> ReplicateRecord {
    ReplicateRecord {
        variant: cell.variant,
        arm,
        x,
        y,
        replicate,
        h_true: h.to_vec(),
        n_samples: o.n_samples,
        converged: o.converged,
        capped: o.capped,
        mse: o.mse,
        mae: o.mae,
        cap_hits: o.cap_hits,
    }
}

fn run_job(spec: &StudySpec, cell: &Cell, replicate: usize) -> Result<Vec<ReplicateRecord>> {
    // Rates and observation streams are shared across the cells of a
    // variant (paired comparisons) except for structure draws, which
    // depend on the cell's Bernoulli parameter.
    let stream_cell = if spec.kind == StudyKind::BinaryStructureSweep { cell.index } else { 0 };
    let mut rng = replicate_rng(spec.seed, cell.variant, stream_cell, replicate);
    let h = match &cell.fixed {
        Some(h) => h.clone(),
        None => draw_rates(&cell.prior_spec, &cell.prior, &mut rng),
    };
    let seed: u64 = rng.gen();
    let config = &spec.config;
    let (model, prior) = (&cell.model, &cell.prior);
    let mut out = Vec::new();
    match spec.kind {
        StudyKind::PeriodicVsAdaptive => {
            let a = adaptive_outcome(model, prior, config, &h, seed)?;
            out.push(record(cell, Arm::Adaptive, f64::NAN, f64::NAN, replicate, &h, a));
            for &t in &spec.sweep.periods {
                let p = periodic_outcome(model, prior, config, t, &h, seed)?;
                out.push(record(cell, Arm::Periodic, t, f64::NAN, replicate, &h, p));
            }
        }
        StudyKind::ToleranceSweep => {
            let outcomes = tolerance_outcomes(model, prior, config, &spec.sweep.thetas, &h, seed)?;
            for (&theta, o) in spec.sweep.thetas.iter().zip(outcomes) {
                out.push(record(cell, Arm::Adaptive, theta, f64::NAN, replicate, &h, o));
            }
        }
        StudyKind::FixedRateHeatmap | StudyKind::RingSizeSweep => {
            let a = adaptive_outcome(model, prior, config, &h, seed)?;
            out.push(record(cell, Arm::Adaptive, cell.x, cell.y, replicate, &h, a));
        }
        StudyKind::BinaryStructureSweep => {
            let links = h.iter().filter(|&&v| v > 0.0).count() as f64;
            let a = adaptive_outcome(model, prior, config, &h, seed)?;
            out.push(record(cell, Arm::Adaptive, cell.x, links, replicate, &h, a));
        }
    }
    Ok(out)
}

/// Runs every replicate of `spec` on a pool of `threads` workers (0 picks
/// the number of cores) and aggregates in replicate order.
pub fn run_study(spec: &StudySpec, threads: usize) -> Result<StudyResult> {
    spec.validate()?;
    let cells = cells(spec)?;
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..spec.replicates).map(move |r| (c, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Spec(format!("thread pool: {e}")))?;
    let records: Vec<Vec<ReplicateRecord>> =
        pool.install(|| jobs.par_iter().map(|&(c, r)| run_job(spec, &cells[c], r)).collect::<Result<_>>())?;
    let records: Vec<ReplicateRecord> = records.into_iter().flatten().collect();
    let labels: Vec<String> = spec.variants.iter().map(|v| v.label.clone()).collect();
    Ok(StudyResult { name: spec.name.clone(), rows: aggregate(&spec.name, &labels, &records), replicates: records })
}
