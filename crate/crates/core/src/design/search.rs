//! Global candidate sweep over log-spaced offsets followed by an optional
//! golden-section refinement in log time.

use crate::chain::ChainModel;
use crate::error::Result;
use crate::posterior::Posterior;
use crate::scalar::Scalar;

use super::config::{DesignConfig, ObjectiveWeighting};
use super::objective::ObjectiveEvaluator;

/// Relative bracket width at which golden-section refinement stops.
const REFINE_REL_WIDTH: f64 = 1e-3;

/// Selected sampling offset and the objective value there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeChoice<S> {
    pub offset: S,
    pub objective: S,
}

/// Objective evaluated on the candidate offsets; branches that all vanish
/// score `+∞`.
pub fn objective_curve<S: Scalar>(
    posterior: &Posterior<S>,
    model: &ChainModel,
    x_prev: usize,
    config: &DesignConfig,
) -> Result<Vec<(S, S)>> {
    let ev = evaluator(posterior, model, x_prev, config)?;
    config
        .candidate_offsets()
        .into_iter()
        .map(|t| {
            let t = S::lit(t);
            Ok((t, score(&ev, t)?))
        })
        .collect()
}

fn evaluator<'a, S: Scalar>(
    posterior: &'a Posterior<S>,
    model: &'a ChainModel,
    x_prev: usize,
    config: &DesignConfig,
) -> Result<ObjectiveEvaluator<'a, S>> {
    let weighting = if posterior.dim() == 1 { ObjectiveWeighting::StandardPredictive } else { config.weighting };
    ObjectiveEvaluator::new(posterior, model, x_prev, weighting, config.prune_below)
}

fn score<S: Scalar>(ev: &ObjectiveEvaluator<'_, S>, t: S) -> Result<S> {
    match ev.objective(t) {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) | Err(crate::error::Error::AllBranchesVanished) => Ok(S::infinity()),
        Err(e) => Err(e),
    }
}

/// Offset after the previous sample that minimizes the design objective.
///
/// Ties on the candidate grid go to the smallest offset; the refined point
/// replaces the grid winner only if strictly better.
pub fn choose_next_time<S: Scalar>(
    posterior: &Posterior<S>,
    model: &ChainModel,
    x_prev: usize,
    config: &DesignConfig,
) -> Result<TimeChoice<S>> {
    config.validate()?;
    let ev = evaluator(posterior, model, x_prev, config)?;
    let offsets = config.candidate_offsets();
    let mut best = 0;
    let mut best_val = S::infinity();
    for (i, &t) in offsets.iter().enumerate() {
        let v = score(&ev, S::lit(t))?;
        if v < best_val {
            best = i;
            best_val = v;
        }
    }
    let mut choice = TimeChoice { offset: S::lit(offsets[best]), objective: best_val };
    if !config.refine || !best_val.is_finite() {
        return Ok(choice);
    }
    let lo = offsets[best.saturating_sub(1)];
    let hi = offsets[(best + 1).min(offsets.len() - 1)];
    if let Some((t, v)) = golden_log(&ev, lo, hi)? {
        if v < choice.objective {
            choice = TimeChoice { offset: t, objective: v };
        }
    }
    Ok(choice)
}

fn golden_log<S: Scalar>(ev: &ObjectiveEvaluator<'_, S>, lo: f64, hi: f64) -> Result<Option<(S, S)>> {
    if !(hi > lo) {
        return Ok(None);
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let f = |u: f64| score(ev, S::lit(u.exp()));
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    // width in log space approximates relative width in t
    while b - a > REFINE_REL_WIDTH {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(Some(if fc <= fd { (S::lit(c.exp()), fc) } else { (S::lit(d.exp()), fd) }))
}
