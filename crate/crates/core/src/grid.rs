//! Discretized supports for rate posteriors: tensor-product trapezoidal
//! grids on `[0, h_max]^d` and exhaustive binary configuration spaces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_H_MAX: f64 = 10.0;
pub const DEFAULT_NODES: usize = 201;
/// `2^12` configurations: the binary digraph with `m = 4`.
pub const MAX_STRUCTURE_DIM: usize = 12;

/// Per-dimension node arrays with trapezoidal weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateGrid<S> {
    axes: Vec<Vec<S>>,
    weights: Vec<Vec<S>>,
}

impl<S: Scalar> RateGrid<S> {
    /// `n_nodes` equispaced nodes on `[0, h_max]` in each of `dim` dimensions.
    pub fn uniform(dim: usize, h_max: S, n_nodes: usize) -> Result<Self> {
        if n_nodes < 2 || !(h_max > S::zero()) {
            return Err(Error::InvalidConfig(format!(
                "grid needs at least 2 nodes and h_max > 0 (got {n_nodes}, {h_max})"
            )));
        }
        let step = h_max / S::from_usize_lossy(n_nodes - 1);
        let axis: Vec<S> =
            (0..n_nodes).map(|i| if i == n_nodes - 1 { h_max } else { S::from_usize_lossy(i) * step }).collect();
        Self::from_axes(vec![axis; dim])
    }

    /// Arbitrary strictly increasing axes, each starting at 0.
    pub fn from_axes(axes: Vec<Vec<S>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidConfig("grid needs at least one dimension".into()));
        }
        let mut weights = Vec::with_capacity(axes.len());
        for axis in &axes {
            if axis.len() < 2 || axis[0] != S::zero() || axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidConfig(
                    "grid axes must start at 0 and be strictly increasing with >= 2 nodes".into(),
                ));
            }
            let n = axis.len();
            let half = S::lit(0.5);
            let w = (0..n)
                .map(|i| {
                    let left = if i > 0 { axis[i] - axis[i - 1] } else { S::zero() };
                    let right = if i + 1 < n { axis[i + 1] - axis[i] } else { S::zero() };
                    half * (left + right)
                })
                .collect();
            weights.push(w);
        }
        Ok(Self { axes, weights })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, k: usize) -> &[S] {
        &self.axes[k]
    }

    pub fn axis_weights(&self, k: usize) -> &[S] {
        &self.weights[k]
    }

    pub fn h_max(&self, k: usize) -> S {
        *self.axes[k].last().expect("non-empty axis")
    }

    pub fn n_nodes(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }
}

/// Which kind of space a [`Support`] discretizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SupportKind<S> {
    /// Continuous rates on a tensor grid; atoms are grid nodes in
    /// row-major order (dimension 0 slowest).
    Grid(RateGrid<S>),
    /// Every rate is 0 or 1; atom `c` has rate `k` equal to bit
    /// `d-1-k` of `c`, so atom order is lexicographic order.
    Structure { d: usize },
}

/// Flattened atoms with coordinates and quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Support<S> {
    kind: SupportKind<S>,
    dim: usize,
    points: Vec<S>,
    weights: Vec<S>,
}

impl<S: Scalar> Support<S> {
    pub fn grid(grid: RateGrid<S>) -> Self {
        let dim = grid.dim();
        let shape = grid.shape();
        let n = grid.n_nodes();
        let mut points = Vec::with_capacity(n * dim);
        let mut weights = Vec::with_capacity(n);
        let mut idx = vec![0usize; dim];
        for _ in 0..n {
            let mut w = S::one();
            for k in 0..dim {
                points.push(grid.axes[k][idx[k]]);
                w *= grid.weights[k][idx[k]];
            }
            weights.push(w);
            for k in (0..dim).rev() {
                idx[k] += 1;
                if idx[k] < shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Self { kind: SupportKind::Grid(grid), dim, points, weights }
    }

    pub fn structure(d: usize) -> Result<Self> {
        if d == 0 || d > MAX_STRUCTURE_DIM {
            return Err(Error::InvalidConfig(format!(
                "structure dimension must be in 1..={MAX_STRUCTURE_DIM}, got {d}"
            )));
        }
        let n = 1usize << d;
        let mut points = Vec::with_capacity(n * d);
        for c in 0..n {
            for k in 0..d {
                points.push(if (c >> (d - 1 - k)) & 1 == 1 { S::one() } else { S::zero() });
            }
        }
        Ok(Self { kind: SupportKind::Structure { d }, dim: d, points, weights: vec![S::one(); n] })
    }

    pub fn kind(&self) -> &SupportKind<S> {
        &self.kind
    }

    pub fn is_structure(&self) -> bool {
        matches!(self.kind, SupportKind::Structure { .. })
    }

    pub fn as_grid(&self) -> Option<&RateGrid<S>> {
        match &self.kind {
            SupportKind::Grid(g) => Some(g),
            SupportKind::Structure { .. } => None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[S] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    /// All atom coordinates, `dim` per atom.
    pub fn points(&self) -> &[S] {
        &self.points
    }
}
