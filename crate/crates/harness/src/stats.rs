//! Summary statistics, bootstrap intervals and rank correlation.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

pub const BOOTSTRAP_RESAMPLES: usize = 2000;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean; zero for fewer than two values.
pub fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (n - 1) as f64 / n as f64).sqrt()
}

/// Two-sided percentile interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

fn percentile_interval(mut stats: Vec<f64>, level: f64) -> Interval {
    stats.sort_by(f64::total_cmp);
    let n = stats.len();
    let alpha = (1.0 - level) / 2.0;
    let at = |q: f64| stats[((q * n as f64).floor() as usize).min(n - 1)];
    Interval { lo: at(alpha), hi: at(1.0 - alpha) }
}

/// Bootstrap interval for the mean of `xs` (use it on paired differences).
pub fn bootstrap_mean<R: Rng + ?Sized>(xs: &[f64], resamples: usize, level: f64, rng: &mut R) -> Interval {
    assert!(!xs.is_empty(), "bootstrap of an empty sample");
    let n = xs.len();
    let stats = (0..resamples).map(|_| (0..n).map(|_| xs[rng.gen_range(0..n)]).sum::<f64>() / n as f64).collect();
    percentile_interval(stats, level)
}

/// Bootstrap interval for `mean(a) - mean(b)` with independent samples.
pub fn bootstrap_mean_difference<R: Rng + ?Sized>(
    a: &[f64],
    b: &[f64],
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> Interval {
    assert!(!a.is_empty() && !b.is_empty(), "bootstrap of an empty sample");
    let resample_mean =
        |xs: &[f64], rng: &mut R| (0..xs.len()).map(|_| xs[rng.gen_range(0..xs.len())]).sum::<f64>() / xs.len() as f64;
    let stats = (0..resamples).map(|_| resample_mean(a, rng) - resample_mean(b, rng)).collect();
    percentile_interval(stats, level)
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub rho: f64,
    /// Two-sided p-value from the t approximation with `n - 2` degrees of freedom.
    pub p_value: f64,
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Correlation {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let rho = pearson(&ranks(x), &ranks(y));
    if n < 3 {
        return Correlation { rho, p_value: 1.0 };
    }
    if rho.abs() >= 1.0 {
        return Correlation { rho, p_value: 0.0 };
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    Correlation { rho, p_value: 2.0 * (1.0 - dist.cdf(t.abs())) }
}
