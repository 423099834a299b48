//! Transient transition probabilities of the M/M/1 queue.
//!
//! For `0 < λ < μ`, `ρ = λ/μ`, `a = 2√(λμ)` and interval `Δt`:
//!
//! ```text
//! p(j | i) = e^{-(λ+μ)Δt} [ ρ^{(j-i)/2} I_{j-i}(aΔt)
//!                          + ρ^{(j-i-1)/2} I_{j+i+1}(aΔt)
//!                          + (1-ρ) ρ^j Σ_{k≥j+i+2} ρ^{-k/2} I_k(aΔt) ]
//! ```
//!
//! Every term is assembled in log space from `ln(e^{-x} I_k(x))`, using
//! `e^{-(λ+μ)Δt} I_k(x) = e^{-(√μ-√λ)²Δt} e^{-x} I_k(x)`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Hard cap on the number of Bessel orders summed in the tail.
pub const MAX_SERIES_TERMS: usize = 10_000;

fn check_rates<S: Scalar>(lambda: S, mu: S) -> Result<()> {
    if !(mu > S::zero()) || !(lambda >= S::zero()) || !(lambda < mu) || !lambda.is_finite() || !mu.is_finite() {
        return Err(Error::NotStationary { lambda: lambda.as_f64(), mu: mu.as_f64() });
    }
    Ok(())
}

/// `p(X(t+Δt) = j | X(t) = i)` for the untruncated M/M/1 queue.
pub fn mm1_transition_prob<S: Scalar>(i: usize, j: usize, lambda: S, mu: S, dt: S) -> Result<S> {
    let mut row = vec![S::zero(); j + 1];
    mm1_row_prefix(i, lambda, mu, dt, &mut row)?;
    Ok(row[j])
}

/// Fills `out[j] = p(j | i)` for `j = 0..out.len()` (no tail lumping).
pub fn mm1_row_prefix<S: Scalar>(i: usize, lambda: S, mu: S, dt: S, out: &mut [S]) -> Result<()> {
    check_rates(lambda, mu)?;
    if !(dt >= S::zero()) || !dt.is_finite() {
        return Err(Error::InvalidTime(dt.as_f64()));
    }
    out.fill(S::zero());
    if dt == S::zero() {
        if i < out.len() {
            out[i] = S::one();
        }
        return Ok(());
    }
    if lambda == S::zero() {
        pure_death_row(i, mu * dt, out);
        return Ok(());
    }

    let n_states = out.len();
    let ln_rho = lambda.ln() - mu.ln();
    let rho = ln_rho.exp();
    let x = S::lit(2.0) * (lambda * mu).sqrt() * dt;
    let gap = mu.sqrt() - lambda.sqrt();
    let base = -(gap * gap) * dt;

    // Reversibility gives |p(j|i) - π_j| ≤ e^{-(√μ-√λ)²Δt} ρ^{(j-i)/2}.
    let di = S::from_usize_lossy(i);
    if base + S::lit(0.5) * di * ln_rho.abs() < S::lit(STATIONARY_LOG_BOUND) {
        let one_m_rho = -ln_rho.exp_m1();
        let mut pj = one_m_rho;
        for o in out.iter_mut() {
            *o = pj;
            pj *= rho;
        }
        return Ok(());
    }

    // Tail terms ρ^{-k/2} Ĩ_k peak near k ≈ (μ-λ)Δt and then decay
    // super-geometrically.
    let mu_dt = (mu * dt).as_f64();
    let needed = (n_states + 2 * i + 2).max(mu_dt.ceil() as usize) + 40 + (12.0 * mu_dt.sqrt()).ceil() as usize;
    if needed > MAX_SERIES_TERMS {
        return Err(Error::SeriesNonConvergence(MAX_SERIES_TERMS));
    }
    let (ratios, ln_i0) = scaled_bessel_ratios(x, needed);

    // R_k = T_k / u_k for k = i+2 ..= n_states+i+1, where
    // u_k = ρ^{-k/2} Ĩ_k and T_k = Σ_{q≥k} u_q, via R_k = 1 + q_{k+1} R_{k+1}
    // with q_k = r_k / √ρ; `scale` counts divisions by RESCALE.
    let inv_sqrt_rho = (-S::lit(0.5) * ln_rho).exp();
    let big = S::lit(RESCALE);
    let (lo, hi) = (i + 2, n_states + i + 1);
    let mut tail_ratio = vec![(S::zero(), 0i32); hi - lo + 1];
    let mut r_acc = S::zero();
    let mut scale = 0i32;
    // share of the last summed term in r_acc, same scale
    let mut last = S::one();
    for k in (lo..=needed).rev() {
        let carry = if k < needed { ratios[k + 1] * inv_sqrt_rho } else { S::zero() };
        r_acc = if scale == 0 { S::one() + carry * r_acc } else { carry * r_acc };
        if k < needed {
            last *= carry;
        }
        if r_acc > big {
            r_acc /= big;
            last /= big;
            scale += 1;
        }
        if k <= hi {
            tail_ratio[k - lo] = (r_acc, scale);
        }
    }
    // the last summed term must be negligible against the shortest tail
    if !(last < r_acc * S::lit(1e-14)) {
        return Err(Error::SeriesNonConvergence(needed));
    }

    let k_direct = n_states + 2 * i + 1;
    if !assemble_linear(i, rho, base, ln_i0, inv_sqrt_rho, &ratios[..=k_direct], &tail_ratio, out) {
        assemble_log(i, ln_rho, base, ln_i0, &ratios[..=k_direct], &tail_ratio, out);
    }
    if out.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite);
    }
    for o in out.iter_mut() {
        *o = o.max(S::zero()).min(S::one());
    }
    Ok(())
}

/// Builds the row from running products of `a_k = e^{base} ρ^{-k/2} Ĩ_k`
/// and `b_k = e^{base} ρ^{k/2} Ĩ_k`; returns false when the scales leave
/// the floating-point range, leaving `out` unspecified.
#[allow(clippy::too_many_arguments)]
fn assemble_linear<S: Scalar>(
    i: usize,
    rho: S,
    base: S,
    ln_i0: S,
    inv_sqrt_rho: S,
    ratios: &[S],
    tail_ratio: &[(S, i32)],
    out: &mut [S],
) -> bool {
    let a0 = (base + ln_i0).exp();
    if !(a0 > S::lit(1e-280)) || tail_ratio.iter().any(|&(_, sc)| sc != 0) {
        return false;
    }
    let sqrt_rho = S::one() / inv_sqrt_rho;
    let n = ratios.len();
    let mut a = vec![a0; n];
    let mut b = vec![a0; n];
    for k in 1..n {
        a[k] = a[k - 1] * ratios[k] * inv_sqrt_rho;
        b[k] = b[k - 1] * ratios[k] * sqrt_rho;
    }
    let one_m_rho = S::one() - rho;
    let rho_pow_neg = rho.powi(-(i as i32 + 1));
    let mut rho_j = S::one();
    for (j, o) in out.iter_mut().enumerate() {
        let t1 = if j >= i { b[j - i] } else { a[i - j] };
        let t2 = b[j + i + 1] * rho_pow_neg;
        let t3 = one_m_rho * rho_j * a[j + i + 2] * tail_ratio[j].0;
        *o = t1 + t2 + t3;
        rho_j *= rho;
    }
    out.iter().all(|p| p.is_finite())
}

/// Same row assembled term by term in log space.
fn assemble_log<S: Scalar>(
    i: usize,
    ln_rho: S,
    base: S,
    ln_i0: S,
    ratios: &[S],
    tail_ratio: &[(S, i32)],
    out: &mut [S],
) {
    let mut ln_i = Vec::with_capacity(ratios.len());
    let mut cum = ln_i0;
    ln_i.push(cum);
    for &r in &ratios[1..] {
        cum += r.ln();
        ln_i.push(cum);
    }
    let half = S::lit(0.5);
    let ln_big = S::lit(RESCALE).ln();
    let one_m_rho = -ln_rho.exp_m1();
    let di = S::from_usize_lossy(i);
    for (j, o) in out.iter_mut().enumerate() {
        let dj = S::from_usize_lossy(j);
        let k = j + i + 2;
        let (r, sc) = tail_ratio[j];
        let ln_tail = ln_i[k] - half * S::from_usize_lossy(k) * ln_rho + r.ln() + S::from_i32(sc).unwrap() * ln_big;
        let t1 = base + half * (dj - di) * ln_rho + ln_i[j.abs_diff(i)];
        let t2 = base + half * (dj - di - S::one()) * ln_rho + ln_i[j + i + 1];
        let t3 = base + dj * ln_rho + ln_tail;
        *o = t1.exp() + t2.exp() + one_m_rho * t3.exp();
    }
}

/// Rows closer than `e^{-40}` to the stationary law are returned as it.
const STATIONARY_LOG_BOUND: f64 = -40.0;
const RESCALE: f64 = 1e250;

/// Ratios `r_k = I_k(x) / I_{k-1}(x)` for `k = 1..=n_max` (entry 0 unused)
/// and `ln(e^{-x} I_0(x))`, by Miller's backward recurrence normalised with
/// `e^{-x}(I_0 + 2 Σ_{k≥1} I_k) = 1`.
fn scaled_bessel_ratios<S: Scalar>(x: S, n_max: usize) -> (Vec<S>, S) {
    let mut ratios = vec![S::zero(); n_max + 1];
    if x == S::zero() {
        return (ratios, S::zero());
    }
    let xf = x.as_f64();
    let start = n_max.max(xf.ceil() as usize) + 40 + (10.0 * xf.sqrt()).ceil() as usize;
    let two_over_x = S::lit(2.0) / x;
    let big = S::lit(RESCALE);
    // y_{k-1} = y_{k+1} + (2k/x) y_k, seeded with y_{start+1} = 0
    let (mut y_next, mut y) = (S::zero(), S::min_positive_value() * S::lit(1e20));
    let mut sum = S::zero();
    for k in (1..=start).rev() {
        let y_prev = y_next + two_over_x * S::from_usize_lossy(k) * y;
        if k <= n_max {
            ratios[k] = y / y_prev;
        }
        sum += y;
        y_next = y;
        y = y_prev;
        if y > big {
            y /= big;
            y_next /= big;
            sum /= big;
        }
    }
    let ln_i0 = -(S::one() + S::lit(2.0) * sum / y).ln();
    (ratios, ln_i0)
}

/// λ = 0: deaths arrive as a Poisson(μΔt) stream until the queue empties.
fn pure_death_row<S: Scalar>(i: usize, mean: S, out: &mut [S]) {
    let ln_mean = mean.ln();
    let pois = |n: usize| -> S {
        (S::from_usize_lossy(n) * ln_mean - mean - crate::special::ln_gamma(S::from_usize_lossy(n + 1))).exp()
    };
    let mut below = S::zero();
    for j in 1..=i {
        let p = pois(i - j);
        if j < out.len() {
            out[j] = p;
        }
        below += p;
    }
    if !out.is_empty() {
        out[0] = (S::one() - below).max(S::zero());
    }
}
