//! Ground-truth rates for simulated replicates.

use adaptrate_core::{Posterior, PriorSpec};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

/// Draws true rates from `spec`.
///
/// Gamma rates come from the continuous law, truncated to the grid range.
/// Bivariate priors are sampled through their discretization: an atom is
/// picked by quadrature mass and then spread uniformly over its cell, so
/// the draw is continuous and matches the grid prior's law. Structure
/// priors draw each rate from `{0, 1}` independently.
pub fn draw_rates<R: Rng + ?Sized>(spec: &PriorSpec, prior: &Posterior, rng: &mut R) -> Vec<f64> {
    match *spec {
        PriorSpec::Gamma { alpha, beta } => {
            let h_max = prior.support().as_grid().map_or(f64::INFINITY, |g| g.h_max(0));
            let law = rand_distr::Gamma::new(alpha, 1.0 / beta).expect("validated gamma parameters");
            loop {
                let h: f64 = law.sample(rng);
                if h <= h_max {
                    return vec![h];
                }
            }
        }
        PriorSpec::BernoulliStructure { p, .. } => {
            (0..spec.dim()).map(|_| if rng.gen_bool(p) { 1.0 } else { 0.0 }).collect()
        }
        PriorSpec::BivariateGamma { .. } | PriorSpec::TruncatedBivariateGamma { .. } => {
            let truncated = matches!(spec, PriorSpec::TruncatedBivariateGamma { .. });
            let support = prior.support();
            let grid = support.as_grid().expect("continuous prior on a grid");
            let masses: Vec<f64> = prior.atom_masses().collect();
            let pick = WeightedIndex::new(&masses).expect("prior has positive mass");
            let shape = grid.shape();
            loop {
                let atom = pick.sample(rng);
                let mut rest = atom;
                let mut idx = vec![0; shape.len()];
                for k in (0..shape.len()).rev() {
                    idx[k] = rest % shape[k];
                    rest /= shape[k];
                }
                let h: Vec<f64> = idx
                    .iter()
                    .enumerate()
                    .map(|(k, &i)| {
                        let axis = grid.axis(k);
                        let lo = if i > 0 { 0.5 * (axis[i - 1] + axis[i]) } else { axis[i] };
                        let hi = if i + 1 < axis.len() { 0.5 * (axis[i] + axis[i + 1]) } else { axis[i] };
                        rng.gen_range(lo..=hi)
                    })
                    .collect();
                if !truncated || h[0] < h[1] {
                    return h;
                }
            }
        }
    }
}
