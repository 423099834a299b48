//! Quick self-checks of the engine, run by `adaptrate validate`.

use std::sync::Arc;

use adaptrate_core::design::{convergence_metric, expected_covariance, expected_variance};
use adaptrate_core::{ChainModel, ModelKind, ObjectiveWeighting, Posterior, RateGrid, Support};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, tol: f64) -> Check {
    Check { name, passed: worst <= tol, detail: format!("max deviation {worst:.3e} (tolerance {tol:.0e})") }
}

fn models() -> Vec<ChainModel> {
    let mut out = vec![
        ChainModel::new(ModelKind::TwoStateUnidirectional).unwrap(),
        ChainModel::new(ModelKind::TwoStateBidirectional).unwrap(),
        ChainModel::new(ModelKind::Mm1Queue { state_cap: 30 }).unwrap(),
        ChainModel::new(ModelKind::BinaryDigraph { m: 3 }).unwrap(),
    ];
    out.extend((2..=8).map(|m| ChainModel::new(ModelKind::Ring { m }).unwrap()));
    out
}

fn random_rates(model: &ChainModel, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match model.kind() {
        ModelKind::Mm1Queue { .. } => {
            let mu = rng.gen_range(0.5..3.0);
            vec![mu * rng.gen_range(0.0..0.6), mu]
        }
        _ => (0..model.d()).map(|_| rng.gen_range(0.0..4.0)).collect(),
    }
}

/// Row sums, Chapman–Kolmogorov, and closed forms against the matrix
/// exponential.
pub fn transition_checks(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = 0.0f64;
    let mut ck = 0.0f64;
    let mut expm = 0.0f64;
    for model in models() {
        for _ in 0..5 {
            let h = random_rates(&model, &mut rng);
            let (s, t) = (rng.gen_range(0.05..2.0), rng.gen_range(0.05..2.0));
            let ps = model.transition_matrix(&h, s).unwrap();
            let pt = model.transition_matrix(&h, t).unwrap();
            let pst = model.transition_matrix(&h, s + t).unwrap();
            for r in pst.rows() {
                rows = rows.max((r.iter().sum::<f64>() - 1.0).abs());
            }
            if !matches!(model.kind(), ModelKind::Mm1Queue { .. }) {
                ck = ck.max(ps.matmul(&pt).max_abs_diff(&pst));
                expm = expm.max(pst.max_abs_diff(&model.expm_transition(&h, s + t).unwrap()));
            }
        }
    }
    vec![
        check("transition rows sum to one", rows, 1e-10),
        check("Chapman-Kolmogorov", ck, 1e-8),
        check("kernels match the matrix exponential", expm, 1e-10),
    ]
}

fn random_posterior(dim: usize, rng: &mut ChaCha8Rng) -> Posterior {
    let grid = RateGrid::uniform(dim, 6.0, if dim == 1 { 41 } else { 13 }).unwrap();
    let support = Arc::new(Support::grid(grid));
    let density = (0..support.len()).map(|_| rng.gen::<f64>().powi(3)).collect();
    Posterior::from_density(support, density).unwrap()
}

/// Expected posterior variance (one rate) and the predictive-weighted
/// determinant (two rates) never exceed their current values.
pub fn contraction_checks(seed: u64, cases: usize) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uni = ChainModel::new(ModelKind::TwoStateUnidirectional).unwrap();
    let bi = ChainModel::new(ModelKind::TwoStateBidirectional).unwrap();
    let mut var = f64::NEG_INFINITY;
    let mut det = f64::NEG_INFINITY;
    for _ in 0..cases {
        let p = random_posterior(1, &mut rng);
        let t = 10f64.powf(rng.gen_range(-2.0..1.5));
        var = var.max(expected_variance(&p, &uni, t).unwrap() - p.variance());
        let p = random_posterior(2, &mut rng);
        let x = rng.gen_range(0..2);
        let c = expected_covariance(&p, &bi, x, t, ObjectiveWeighting::StandardPredictive).unwrap();
        det = det.max(c.det() - convergence_metric(&p));
    }
    vec![
        check("expected variance does not exceed current", var.max(0.0), 1e-10),
        check("expected determinant does not exceed current", det.max(0.0), 1e-10),
    ]
}

pub fn run_all(seed: u64) -> Vec<Check> {
    let mut out = transition_checks(seed);
    out.extend(contraction_checks(seed, 200));
    out
}
