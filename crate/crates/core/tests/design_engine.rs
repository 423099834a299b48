#![allow(clippy::needless_range_loop)]

use std::sync::Arc;

use adaptrate_core::design::{
    choose_next_time, expected_covariance, expected_variance, objective, objective_curve, run_adaptive, run_periodic,
    FnObserver, SimulatedObserver,
};
use adaptrate_core::posterior::mae;
use adaptrate_core::{
    default_prior, prior_on_grid, ChainModel, DesignConfig, ModelKind, ObjectiveWeighting, Observation, Posterior,
    PriorSpec, RateGrid, Support,
};
use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uni() -> ChainModel {
    ChainModel::new(ModelKind::TwoStateUnidirectional).unwrap()
}

fn bi() -> ChainModel {
    ChainModel::new(ModelKind::TwoStateBidirectional).unwrap()
}

fn gamma_prior() -> Posterior {
    default_prior(&PriorSpec::default_gamma()).unwrap()
}

/// Posterior with the given atom masses on a grid built from `axes`.
fn on_axes(axes: Vec<Vec<f64>>, mass: impl Fn(&[f64]) -> f64) -> Posterior {
    let s = Arc::new(Support::grid(RateGrid::from_axes(axes).unwrap()));
    let d = (0..s.len()).map(|i| mass(s.point(i)) / s.weights()[i]).collect();
    Posterior::from_density(s, d).unwrap()
}

fn point_mass(dim: usize, index: usize) -> Posterior {
    let s = Arc::new(Support::grid(RateGrid::uniform(dim, 10.0, 21).unwrap()));
    let mut d = vec![0.0; s.len()];
    d[index] = 1.0;
    Posterior::from_density(s, d).unwrap()
}

/// Expected covariance by direct enumeration of atoms and next states:
/// `Σ_k Σ_i b_i p(k|h_i) (h_i - m_k)(h_i - m_k)ᵀ` with `m_k` the
/// `b p(k|h)`-weighted mean and `b = w p` or `w p²`.
fn brute_force_covariance(
    post: &Posterior,
    model: &ChainModel,
    x_prev: usize,
    dt: f64,
    weighting: ObjectiveWeighting,
) -> DMatrix<f64> {
    let s = post.support();
    let d = post.dim();
    let n = model.n_states();
    let base: Vec<f64> = (0..s.len())
        .map(|i| {
            let p = post.density()[i];
            match weighting {
                ObjectiveWeighting::StandardPredictive => s.weights()[i] * p,
                ObjectiveWeighting::LiteralSquared => s.weights()[i] * p * p,
            }
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..s.len())
        .map(|i| {
            let mut row = vec![0.0; n];
            if base[i] > 0.0 {
                model.transition_row(s.point(i), x_prev, dt, &mut row).unwrap();
            }
            row
        })
        .collect();
    let mut out = DMatrix::zeros(d, d);
    for k in 0..n {
        let z: f64 = (0..s.len()).map(|i| base[i] * rows[i][k]).sum();
        if z <= 0.0 {
            continue;
        }
        let mean: Vec<f64> =
            (0..d).map(|a| (0..s.len()).map(|i| base[i] * rows[i][k] * s.point(i)[a]).sum::<f64>() / z).collect();
        for i in 0..s.len() {
            let w = base[i] * rows[i][k];
            let h = s.point(i);
            for a in 0..d {
                for b in 0..d {
                    out[(a, b)] += w * (h[a] - mean[a]) * (h[b] - mean[b]);
                }
            }
        }
    }
    out
}

fn assert_matches(got: &adaptrate_core::CovarianceMatrix, want: &DMatrix<f64>, rel: f64, what: &str) {
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for a in 0..want.nrows() {
        for b in 0..want.ncols() {
            let diff = (got.get(a, b) - want[(a, b)]).abs();
            assert!(diff <= rel * scale, "{what} entry ({a},{b}): {} vs {}", got.get(a, b), want[(a, b)]);
        }
    }
}

/// Prior on a coarse grid after a few observations, so the density is not
/// symmetric or separable.
fn informed(model: &ChainModel, spec: &PriorSpec, nodes: usize, obs: &[(f64, usize)]) -> Posterior {
    let mut post = prior_on_grid(spec, 10.0, nodes).unwrap();
    let mut prev = model.origin();
    for &(t, x) in obs {
        let next = Observation::new(t, x);
        post = post.bayes_update(model, &prev, &next).unwrap();
        prev = next;
    }
    post
}

#[test]
fn expected_variance_of_point_mass_is_zero() {
    let post = point_mass(1, 2);
    for &t in &[1e-3, 0.1, 1.0, 10.0, 100.0] {
        assert_eq!(expected_variance(&post, &uni(), t).unwrap(), 0.0);
    }
}

#[test]
fn expected_variance_two_atoms() {
    let post = on_axes(vec![vec![0.0, 1.0, 2.0]], |h| if h[0] > 0.0 { 1.0 } else { 0.0 });
    assert_abs_diff_eq!(post.variance(), 0.25, epsilon = 1e-15);
    assert_abs_diff_eq!(expected_variance(&post, &uni(), 1e-9).unwrap(), 0.25, epsilon = 1e-6);

    // Enumerate X ∈ {0, 1} at t = 1 over atoms {1, 2} with mass 1/2 each.
    let t = 1.0f64;
    let atoms = [1.0f64, 2.0];
    let mut want = 0.0;
    for x in 0..2 {
        let like = |h: f64| if x == 0 { (-h * t).exp() } else { 1.0 - (-h * t).exp() };
        let z: f64 = atoms.iter().map(|&h| 0.5 * like(h)).sum();
        let m: f64 = atoms.iter().map(|&h| 0.5 * like(h) * h).sum::<f64>() / z;
        want += atoms.iter().map(|&h| 0.5 * like(h) * (h - m).powi(2)).sum::<f64>();
    }
    assert_abs_diff_eq!(expected_variance(&post, &uni(), t).unwrap(), want, epsilon = 1e-14);
}

#[test]
fn expected_variance_limits_recover_current_variance() {
    let post = gamma_prior();
    let v = post.variance();
    assert_abs_diff_eq!(expected_variance(&post, &uni(), 1e-10).unwrap(), v, epsilon = 1e-6);
    assert_abs_diff_eq!(expected_variance(&post, &uni(), 1e4).unwrap(), v, epsilon = 1e-6);
}

#[test]
fn expected_variance_requires_one_rate() {
    let post = prior_on_grid(&PriorSpec::default_bivariate(), 10.0, 11).unwrap();
    assert!(expected_variance(&post, &uni(), 1.0).is_err());
}

#[test]
fn expected_covariance_of_point_mass_is_zero() {
    let post = point_mass(2, 5 * 21 + 9);
    for w in [ObjectiveWeighting::LiteralSquared, ObjectiveWeighting::StandardPredictive] {
        let c = expected_covariance(&post, &bi(), 0, 0.7, w).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(c.get(a, b), 0.0);
            }
        }
    }
}

#[test]
fn expected_covariance_two_atoms_per_rate() {
    // h₀ ∈ {0.5, 2} with masses (0.3, 0.7), h₁ ∈ {1, 3} with (0.6, 0.4).
    let p0 = [0.3, 0.7];
    let p1 = [0.6, 0.4];
    let h0 = [0.5, 2.0];
    let h1 = [1.0, 3.0];
    let post = on_axes(vec![vec![0.0, h0[0], h0[1]], vec![0.0, h1[0], h1[1]]], |h| {
        if h[0] == 0.0 || h[1] == 0.0 {
            return 0.0;
        }
        let i = usize::from(h[0] == 2.0);
        let j = usize::from(h[1] == 3.0);
        p0[i] * p1[j]
    });
    let dt = 1.0f64;
    // closed-form bidirectional row from state 0
    let p_to = |a: f64, b: f64, k: usize| {
        let s = a + b;
        let leave = a / s * (1.0 - (-s * dt).exp());
        if k == 0 {
            1.0 - leave
        } else {
            leave
        }
    };
    let mut want = DMatrix::zeros(2, 2);
    for k in 0..2 {
        let mut z = 0.0;
        let mut m = [0.0; 2];
        for i in 0..2 {
            for j in 0..2 {
                let w = p0[i] * p1[j] * p_to(h0[i], h1[j], k);
                z += w;
                m[0] += w * h0[i];
                m[1] += w * h1[j];
            }
        }
        m[0] /= z;
        m[1] /= z;
        for i in 0..2 {
            for j in 0..2 {
                let w = p0[i] * p1[j] * p_to(h0[i], h1[j], k);
                let e = [h0[i] - m[0], h1[j] - m[1]];
                for a in 0..2 {
                    for b in 0..2 {
                        want[(a, b)] += w * e[a] * e[b];
                    }
                }
            }
        }
    }
    let got = expected_covariance(&post, &bi(), 0, dt, ObjectiveWeighting::StandardPredictive).unwrap();
    assert_matches(&got, &want, 1e-13, "two-atom");
}

#[test]
fn ring_exchange_symmetry() {
    let model = ChainModel::new(ModelKind::Ring { m: 4 }).unwrap();
    let post = prior_on_grid(&PriorSpec::default_bivariate(), 10.0, 31).unwrap();
    for w in [ObjectiveWeighting::LiteralSquared, ObjectiveWeighting::StandardPredictive] {
        for x_prev in [0, 2] {
            let c = expected_covariance(&post, &model, x_prev, 0.4f64, w).unwrap();
            assert!((c.get(0, 0) - c.get(1, 1)).abs() <= 1e-12 * c.get(0, 0));
            assert_eq!(c.get(0, 1), c.get(1, 0));
        }
    }
}

#[test]
fn fast_evaluation_matches_brute_force() {
    let bivariate = PriorSpec::default_bivariate();
    let cases: Vec<(ChainModel, Posterior)> = vec![
        (uni(), informed(&uni(), &PriorSpec::default_gamma(), 41, &[(0.5, 1), (0.2, 0)])),
        (bi(), informed(&bi(), &bivariate, 21, &[(0.4, 1), (0.9, 1), (2.0, 0)])),
        (
            ChainModel::new(ModelKind::Ring { m: 3 }).unwrap(),
            informed(&ChainModel::new(ModelKind::Ring { m: 3 }).unwrap(), &bivariate, 21, &[(0.3, 1), (0.5, 0)]),
        ),
        (
            ChainModel::new(ModelKind::Ring { m: 4 }).unwrap(),
            informed(&ChainModel::new(ModelKind::Ring { m: 4 }).unwrap(), &bivariate, 21, &[(0.3, 3)]),
        ),
        (
            ChainModel::new(ModelKind::Ring { m: 7 }).unwrap(),
            informed(&ChainModel::new(ModelKind::Ring { m: 7 }).unwrap(), &bivariate, 15, &[(0.6, 2)]),
        ),
        (
            ChainModel::new(ModelKind::Mm1Queue { state_cap: 20 }).unwrap(),
            informed(
                &ChainModel::new(ModelKind::Mm1Queue { state_cap: 20 }).unwrap(),
                &PriorSpec::default_truncated(),
                11,
                &[(0.5, 1), (1.0, 2)],
            ),
        ),
        (
            ChainModel::new(ModelKind::BinaryDigraph { m: 3 }).unwrap(),
            informed(
                &ChainModel::new(ModelKind::BinaryDigraph { m: 3 }).unwrap(),
                &PriorSpec::BernoulliStructure { p: 0.4, m: 3 },
                0,
                &[(0.5, 1), (1.5, 1)],
            ),
        ),
    ];
    for (model, post) in &cases {
        for w in [ObjectiveWeighting::LiteralSquared, ObjectiveWeighting::StandardPredictive] {
            for x_prev in [0, 1] {
                for dt in [0.01f64, 0.3, 2.0, 40.0] {
                    let got = expected_covariance(post, model, x_prev, dt, w).unwrap();
                    let want = brute_force_covariance(post, model, x_prev, dt, w);
                    assert_matches(&got, &want, 1e-10, &format!("{:?} {w:?} x={x_prev} dt={dt}", model.kind()));
                }
            }
        }
    }
}

#[test]
fn default_pruning_leaves_objective_unchanged() {
    let model = bi();
    let post = informed(&model, &PriorSpec::default_bivariate(), 101, &[(0.4, 1), (0.9, 0), (1.4, 1)]);
    let config = DesignConfig::default();
    let exact = DesignConfig { prune_below: 0.0, ..DesignConfig::default() };
    for &dt in &[0.05, 0.5, 5.0] {
        let a = objective(&post, &model, 1, dt, &config).unwrap();
        let b = objective(&post, &model, 1, dt, &exact).unwrap();
        assert!((a - b).abs() <= 1e-10 * b.abs(), "{a} vs {b}");
    }
}

#[test]
fn objective_is_variance_or_determinant() {
    let config = DesignConfig::default();
    assert_eq!(objective(&point_mass(1, 4), &uni(), 0, 1.0, &config).unwrap(), 0.0);

    let post = informed(&bi(), &PriorSpec::default_bivariate(), 31, &[(0.5, 1)]);
    let c = expected_covariance(&post, &bi(), 1, 0.8, config.weighting).unwrap();
    assert_abs_diff_eq!(objective(&post, &bi(), 1, 0.8, &config).unwrap(), c.det(), epsilon = 1e-15);

    // h₁ known exactly: the covariance is diag(v, 0).
    let pinned = on_axes(vec![vec![0.0, 0.5, 1.0, 2.0], vec![0.0, 1.5]], |h| if h[1] > 0.0 { h[0] } else { 0.0 });
    let c = expected_covariance(&pinned, &bi(), 0, 0.8, config.weighting).unwrap();
    assert_eq!(c.get(0, 1), 0.0);
    assert_eq!(objective(&pinned, &bi(), 0, 0.8, &config).unwrap(), c.get(0, 0) * c.get(1, 1));
}

#[test]
fn binary_pair_restricts_to_single_rate() {
    // Structure over (h₀₁, h₁₀) with h₁₀ pinned to 0 by the prior.
    let model = ChainModel::new(ModelKind::BinaryDigraph { m: 2 }).unwrap();
    let support = Arc::new(Support::structure(2).unwrap());
    let density = (0..4).map(|i| if support.point(i)[1] == 0.0 { 1.0 } else { 0.0 }).collect();
    let post = Posterior::from_density(support, density).unwrap();
    let single = on_axes(vec![vec![0.0, 1.0]], |_| 1.0);
    for &t in &[0.1, 0.7, 3.0] {
        let c = expected_covariance(&post, &model, 0, t, ObjectiveWeighting::StandardPredictive).unwrap();
        let v = expected_variance(&single, &uni(), t).unwrap();
        assert_abs_diff_eq!(c.get(0, 0), v, epsilon = 1e-15);
        assert_eq!(c.get(1, 1), 0.0);
    }
}

#[test]
fn point_mass_schedules_the_earliest_time() {
    let config = DesignConfig::default();
    let choice = choose_next_time(&point_mass(1, 3), &uni(), 0, &config).unwrap();
    assert_eq!(choice.offset, config.delta_min);
    assert_eq!(choice.objective, 0.0);
}

#[test]
fn chosen_time_beats_every_candidate() {
    let post = gamma_prior();
    for refine in [false, true] {
        let config = DesignConfig { refine, ..DesignConfig::default() };
        let choice = choose_next_time(&post, &uni(), 0, &config).unwrap();
        let curve = objective_curve(&post, &uni(), 0, &config).unwrap();
        let best = curve.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        assert!(choice.objective <= best);
        assert!(choice.offset >= config.delta_min && choice.offset <= config.delta_max);
        if !refine {
            assert!(curve.iter().any(|c| c.0 == choice.offset && c.1 == choice.objective));
        }
        let direct = expected_variance(&post, &uni(), choice.offset).unwrap();
        assert_abs_diff_eq!(direct, choice.objective, epsilon = 1e-15);
    }
}

#[test]
fn doubling_candidates_barely_moves_the_optimum() {
    let post = gamma_prior();
    let base = DesignConfig { refine: false, ..DesignConfig::default() };
    let fine = DesignConfig { n_candidates: 2 * base.n_candidates, ..base.clone() };
    let a = choose_next_time(&post, &uni(), 0, &base).unwrap().objective;
    let b = choose_next_time(&post, &uni(), 0, &fine).unwrap().objective;
    assert!((a - b).abs() < 0.01 * b, "{a} vs {b}");
}

#[test]
fn time_choice_is_scale_consistent() {
    let c = 4.0;
    let base = DesignConfig { refine: false, ..DesignConfig::default() };
    let scaled_cfg = DesignConfig { delta_min: base.delta_min / c, delta_max: base.delta_max / c, ..base.clone() };
    for (model, spec) in [(uni(), PriorSpec::default_gamma()), (bi(), PriorSpec::default_bivariate())] {
        let post = prior_on_grid(&spec, 10.0, 41).unwrap();
        let scaled = prior_on_grid(&spec, 10.0 * c, 41).unwrap();
        // same densities on the stretched grid
        let scaled = Posterior::from_density(Arc::clone(scaled.support()), post.density().to_vec()).unwrap();
        let a = choose_next_time(&post, &model, 0, &base).unwrap();
        let b = choose_next_time(&scaled, &model, 0, &scaled_cfg).unwrap();
        assert!((a.offset - b.offset * c).abs() <= 1e-12 * a.offset, "{} vs {}", a.offset, b.offset * c);
    }
}

#[test]
fn loose_threshold_needs_no_samples() {
    let prior = gamma_prior();
    let config = DesignConfig::with_theta(prior.variance() + 0.01);
    let mut obs = SimulatedObserver::new(vec![1.0], 0);
    let trace = run_adaptive(&uni(), &prior, &config, &mut obs).unwrap();
    assert_eq!(trace.n_samples(), 0);
    assert!(trace.converged);
    let trace = run_periodic(&uni(), &prior, &config, 1.0, &mut obs).unwrap();
    assert_eq!(trace.n_samples(), 0);
    assert_eq!(trace.to_csv_string(), "n,t_n,x_n,objective,det_cov,map_h0,mean_h0\n");
}

#[test]
fn unidirectional_run_reaches_threshold() {
    let prior = gamma_prior();
    let config = DesignConfig::with_theta(0.1);
    let mut obs = SimulatedObserver::new(vec![1.0], 7);
    let trace = run_adaptive(&uni(), &prior, &config, &mut obs).unwrap();
    assert!(trace.converged && !trace.capped);
    assert!(trace.final_metric() <= 0.1);
    assert_eq!(trace.n_samples(), 18);
    for s in &trace.steps {
        assert!(s.t >= config.delta_min && s.objective.is_finite());
    }
}

#[test]
fn binary_pair_with_no_edges_is_recovered() {
    let model = ChainModel::new(ModelKind::BinaryDigraph { m: 2 }).unwrap();
    let prior = default_prior(&PriorSpec::BernoulliStructure { p: 0.5, m: 2 }).unwrap();
    let config = DesignConfig::with_theta(1e-2);
    let mut obs = SimulatedObserver::new(vec![0.0, 0.0], 3);
    let trace = run_adaptive(&model, &prior, &config, &mut obs).unwrap();
    assert!(trace.converged);
    assert!(trace.steps.iter().all(|s| s.x == 0));
    let map = &trace.steps.last().unwrap().map;
    assert_eq!(mae(map, &[0.0, 0.0], 2), 0.0);
}

#[test]
fn long_period_only_sees_absorbed_state() {
    let prior = gamma_prior();
    let config = DesignConfig { step_cap: 200, ..DesignConfig::with_theta(0.1) };
    let mut periodic_total = 0;
    let mut adaptive_total = 0;
    for seed in 0..6 {
        let mut obs = SimulatedObserver::new(vec![1.0], seed);
        let p = run_periodic(&uni(), &prior, &config, 100.0, &mut obs).unwrap();
        assert!(p.steps.iter().all(|s| s.x == 1));
        periodic_total += p.n_samples();
        let mut obs = SimulatedObserver::new(vec![1.0], seed);
        adaptive_total += run_adaptive(&uni(), &prior, &config, &mut obs).unwrap().n_samples();
    }
    assert!(periodic_total > adaptive_total);
}

#[test]
fn periodic_and_adaptive_both_meet_threshold() {
    let prior = gamma_prior();
    let config = DesignConfig::with_theta(0.1);
    for seed in 0..4 {
        let mut obs = SimulatedObserver::new(vec![1.3], seed);
        let a = run_adaptive(&uni(), &prior, &config, &mut obs).unwrap();
        let mut obs = SimulatedObserver::new(vec![1.3], seed);
        let p = run_periodic(&uni(), &prior, &config, 0.5, &mut obs).unwrap();
        assert!(a.converged && p.converged);
        assert!(a.final_metric() <= 0.1 && p.final_metric() <= 0.1);
        for (k, s) in p.steps.iter().enumerate() {
            assert_eq!(s.t, 0.5);
            assert_eq!(s.n, k + 1);
        }
    }
}

#[test]
fn continuous_trajectory_times_increase() {
    let prior = prior_on_grid(&PriorSpec::default_bivariate(), 10.0, 41).unwrap();
    let config = DesignConfig::with_theta(0.05);
    let mut obs = SimulatedObserver::new(vec![1.0, 2.0], 5);
    let trace = run_adaptive(&bi(), &prior, &config, &mut obs).unwrap();
    assert!(trace.converged);
    assert!(trace.steps.windows(2).all(|w| w[1].t > w[0].t));
    let header = trace.to_csv_string().lines().next().unwrap().to_string();
    assert_eq!(header, "n,t_n,x_n,objective,det_cov,map_h0,map_h1,mean_h0,mean_h1");
}

#[test]
fn callback_observer_drives_the_loop() {
    let prior = gamma_prior();
    let config = DesignConfig::with_theta(0.3);
    let mut seen = Vec::new();
    let mut obs = FnObserver(|from: usize, t: f64| {
        seen.push((from, t));
        Ok(usize::from(t > 0.5))
    });
    let trace = run_adaptive(&uni(), &prior, &config, &mut obs).unwrap();
    assert_eq!(seen.len(), trace.n_samples());
    assert!(seen.iter().all(|&(from, _)| from == 0));
}

#[test]
fn single_precision_run() {
    let prior = adaptrate_core::prior_on_grid::<f32>(&PriorSpec::default_gamma(), 10.0, 101).unwrap();
    let config = DesignConfig::with_theta(0.1);
    let mut obs = adaptrate_core::design::SimulatedObserver::<f32>::new(vec![1.0], 1);
    let trace = run_adaptive(&uni(), &prior, &config, &mut obs).unwrap();
    assert!(trace.converged);
    assert!(trace.final_metric() <= 0.1);
}

fn random_density(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // mixture of a few bumps plus sparse zeros
    let centres: Vec<(f64, f64)> = (0..3).map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.02..0.4))).collect();
    (0..n)
        .map(|i| {
            if rng.gen_bool(0.1) {
                return 0.0;
            }
            let x = i as f64 / (n - 1) as f64;
            centres.iter().map(|&(c, w)| (-((x - c) / w).powi(2)).exp()).sum::<f64>() + 1e-3
        })
        .collect()
}

#[test]
fn expected_variance_never_exceeds_current() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let support = Arc::new(Support::grid(RateGrid::uniform(1, 10.0, 61).unwrap()));
    for _ in 0..1000 {
        let post = Posterior::from_density(Arc::clone(&support), random_density(&mut rng, 61)).unwrap();
        let t = 10f64.powf(rng.gen_range(-3.0..2.0));
        let ev = expected_variance(&post, &uni(), t).unwrap();
        assert!(ev <= post.variance() + 1e-10, "{ev} > {}", post.variance());
        assert!(ev >= 0.0);
    }
}

#[test]
fn predictive_determinant_never_exceeds_current() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let support = Arc::new(Support::grid(RateGrid::uniform(2, 10.0, 15).unwrap()));
    let models =
        [bi(), ChainModel::new(ModelKind::Ring { m: 4 }).unwrap(), ChainModel::new(ModelKind::Ring { m: 5 }).unwrap()];
    for n in 0..300 {
        let model = &models[n % models.len()];
        let post = Posterior::from_density(Arc::clone(&support), random_density(&mut rng, support.len())).unwrap();
        let t = 10f64.powf(rng.gen_range(-3.0..2.0));
        let x_prev = rng.gen_range(0..model.n_states());
        let c = expected_covariance(&post, model, x_prev, t, ObjectiveWeighting::StandardPredictive).unwrap();
        assert!(c.det() <= post.covariance().det() + 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn convergence_flag_matches_threshold(seed in any::<u64>(), theta in 0.05..0.5f64, h in 0.2..4.0f64) {
        let prior = prior_on_grid(&PriorSpec::default_gamma(), 10.0, 101).unwrap();
        let config = DesignConfig { step_cap: 60, ..DesignConfig::with_theta(theta) };
        let mut obs = SimulatedObserver::new(vec![h], seed);
        let trace = run_adaptive(&uni(), &prior, &config, &mut obs).unwrap();
        prop_assert_eq!(trace.converged, trace.final_metric() <= trace.threshold);
        prop_assert_eq!(trace.capped, !trace.converged);
        let mut obs = SimulatedObserver::new(vec![h], seed);
        let again = run_adaptive(&uni(), &prior, &config, &mut obs).unwrap();
        prop_assert_eq!(trace, again);
    }
}
