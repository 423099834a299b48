//! Small dense square matrices: products, LU determinant/solve and the
//! matrix exponential used for generator matrices.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Row-major dense `n x n` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix<S> {
    n: usize,
    data: Vec<S>,
}

impl<S: Scalar> SquareMatrix<S> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![S::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    /// Builds from row-major data. Panics if `data.len() != n * n`.
    pub fn from_row_major(n: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), n * n, "row-major data must have n*n entries");
        Self { n, data }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n, "matrix rows must be square");
            data.extend_from_slice(r);
        }
        Self { n, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[S]> {
        self.data.chunks(self.n.max(1))
    }

    pub fn scaled(&self, c: S) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&x| x * c).collect() }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == S::zero() {
                    continue;
                }
                let rrow = &rhs.data[k * n..(k + 1) * n];
                let orow = &mut out.data[i * n..(i + 1) * n];
                for (o, &r) in orow.iter_mut().zip(rrow) {
                    *o += a * r;
                }
            }
        }
        out
    }

    /// `self + c * rhs`
    fn axpy(&self, c: S, rhs: &Self) -> Self {
        Self { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + c * b).collect() }
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> S {
        (0..self.n).map(|j| (0..self.n).map(|i| self[(i, j)].abs()).sum::<S>()).fold(S::zero(), S::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        self.data.iter().zip(&other.data).map(|(&a, &b)| (a - b).abs()).fold(S::zero(), S::max)
    }

    /// Determinant by LU decomposition with partial pivoting.
    pub fn det(&self) -> S {
        let n = self.n;
        let mut a = self.data.clone();
        let mut det = S::one();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| {
                    a[x * n + col].abs().partial_cmp(&a[y * n + col].abs()).unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(col);
            let p = a[pivot * n + col];
            if p == S::zero() {
                return S::zero();
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                }
                det = -det;
            }
            det *= p;
            for r in col + 1..n {
                let f = a[r * n + col] / p;
                if f == S::zero() {
                    continue;
                }
                for j in col..n {
                    let v = a[col * n + j];
                    a[r * n + j] -= f * v;
                }
            }
        }
        det
    }

    /// Solves `self * X = rhs` by Gaussian elimination with partial pivoting.
    /// Returns `None` when the matrix is numerically singular.
    pub fn solve(&self, rhs: &Self) -> Option<Self> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut b = rhs.data.clone();
        for col in 0..n {
            let pivot = (col..n).max_by(|&x, &y| {
                a[x * n + col].abs().partial_cmp(&a[y * n + col].abs()).unwrap_or(std::cmp::Ordering::Equal)
            })?;
            let p = a[pivot * n + col];
            if p == S::zero() || !p.is_finite() {
                return None;
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                    b.swap(col * n + j, pivot * n + j);
                }
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col] / p;
                if f == S::zero() {
                    continue;
                }
                for j in col..n {
                    let v = a[col * n + j];
                    a[r * n + j] -= f * v;
                }
                for j in 0..n {
                    let v = b[col * n + j];
                    b[r * n + j] -= f * v;
                }
            }
        }
        for r in 0..n {
            let p = a[r * n + r];
            for j in 0..n {
                b[r * n + j] /= p;
            }
        }
        Some(Self { n, data: b })
    }
}

impl<S> Index<(usize, usize)> for SquareMatrix<S> {
    type Output = S;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.n + j]
    }
}

impl<S> IndexMut<(usize, usize)> for SquareMatrix<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.n + j]
    }
}

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371_920_351_148_152;

/// Matrix exponential by scaling and squaring with the degree-13 Padé
/// approximant. Returns `None` if the Padé denominator is singular or the
/// result is not finite.
pub fn expm<S: Scalar>(a: &SquareMatrix<S>) -> Option<SquareMatrix<S>> {
    let n = a.dim();
    if n == 0 {
        return Some(a.clone());
    }
    let norm = a.norm1().as_f64();
    if !norm.is_finite() {
        return None;
    }
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a.scaled(S::lit(0.5f64.powi(s)));

    let b = |k: usize| S::lit(PADE13[k]);
    let id = SquareMatrix::<S>::identity(n);
    let a2 = a.matmul(&a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);

    let u_inner = a6.scaled(b(13)).axpy(b(11), &a4).axpy(b(9), &a2);
    let u_inner = a6.matmul(&u_inner).axpy(b(7), &a6).axpy(b(5), &a4).axpy(b(3), &a2).axpy(b(1), &id);
    let u = a.matmul(&u_inner);

    let v_inner = a6.scaled(b(12)).axpy(b(10), &a4).axpy(b(8), &a2);
    let v = a6.matmul(&v_inner).axpy(b(6), &a6).axpy(b(4), &a4).axpy(b(2), &a2).axpy(b(0), &id);

    let p = v.axpy(S::one(), &u);
    let q = v.axpy(-S::one(), &u);
    let mut r = q.solve(&p)?;
    for _ in 0..s {
        r = r.matmul(&r);
    }
    r.data.iter().all(|x| x.is_finite()).then_some(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_of_known_matrices() {
        let m = SquareMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        assert!((m.det() - 5.0_f64).abs() < 1e-14);
        let p = SquareMatrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 4.0]]);
        assert!((p.det() + 4.0_f64).abs() < 1e-14);
        let sing = SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert_eq!(sing.det(), 0.0_f64);
    }

    #[test]
    fn expm_of_diagonal_and_nilpotent() {
        let d = SquareMatrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, 2.0]]);
        let e = expm(&d).unwrap();
        assert!((e[(0, 0)] - (-1.0_f64).exp()).abs() < 1e-14);
        assert!((e[(1, 1)] - 2.0_f64.exp()).abs() < 1e-13);
        assert_eq!(e[(0, 1)], 0.0);
        // exp([[0,t],[0,0]]) = [[1,t],[0,1]]
        let nil = SquareMatrix::from_rows(&[vec![0.0, 3.0], vec![0.0, 0.0]]);
        let e = expm(&nil).unwrap();
        assert!((e[(0, 1)] - 3.0_f64).abs() < 1e-13);
        assert!((e[(0, 0)] - 1.0_f64).abs() < 1e-14);
    }

    #[test]
    fn expm_large_norm_rotation() {
        // exp([[0, w], [-w, 0]]) is a rotation by w.
        let w = 40.0_f64;
        let m = SquareMatrix::from_rows(&[vec![0.0, w], vec![-w, 0.0]]);
        let e = expm(&m).unwrap();
        assert!((e[(0, 0)] - w.cos()).abs() < 1e-9);
        assert!((e[(0, 1)] - w.sin()).abs() < 1e-9);
    }

    #[test]
    fn solve_recovers_inverse() {
        let m = SquareMatrix::from_rows(&[vec![4.0, 1.0], vec![2.0, 3.0]]);
        let inv = m.solve(&SquareMatrix::identity(2)).unwrap();
        let prod = m.matmul(&inv);
        assert!(prod.max_abs_diff(&SquareMatrix::identity(2)) < 1e-14_f64);
    }
}
