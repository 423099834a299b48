use rand::Rng;

use super::ChainModel;
use crate::error::Result;
use crate::scalar::Scalar;

/// Draws `X(t+Δt)` given `X(t) = from` by inverting the cumulative
/// transition row with one uniform variate.
pub fn sample_transition<S: Scalar, R: Rng + ?Sized>(
    model: &ChainModel,
    h: &[S],
    from: usize,
    dt: S,
    rng: &mut R,
) -> Result<usize> {
    model.check_rates(h)?;
    model.check_state(from)?;
    super::check_dt(dt)?;
    let mut row = vec![S::zero(); model.n_states()];
    model.transition_row(h, from, dt, &mut row)?;
    let u = S::lit(rng.gen::<f64>());
    let total: S = row.iter().copied().sum();
    let target = u * total;
    let mut acc = S::zero();
    let mut last_positive = from;
    for (j, &p) in row.iter().enumerate() {
        if p > S::zero() {
            last_positive = j;
        }
        acc += p;
        if target < acc {
            return Ok(j);
        }
    }
    Ok(last_positive)
}
