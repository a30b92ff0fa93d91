//! Independent reference implementations shared by the integration tests.
//! Everything here uses nalgebra or plain loops, never the crate's own
//! solvers or linear algebra.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};

pub fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn to_na_vec(v: &Array1<f64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().copied())
}

pub fn from_na_vec(v: &DVector<f64>) -> Array1<f64> {
    v.iter().copied().collect()
}

pub fn spectral_norm_sq(a: &DMatrix<f64>) -> f64 {
    let s = a.clone().svd(false, false).singular_values;
    let m = s.iter().fold(0.0f64, |m, v| m.max(*v));
    m * m
}

/// `‖y − A z‖² + λ Σ w_i |z_i|`, evaluated with nalgebra.
pub fn lasso_objective(a: &DMatrix<f64>, y: &DVector<f64>, w: &[f64], lambda: f64, z: &DVector<f64>) -> f64 {
    let r = y - a * z;
    r.norm_squared() + lambda * z.iter().zip(w).map(|(z, w)| (z * w).abs()).sum::<f64>()
}

/// Long-run projected gradient on the split form `z = u − v`, `u, v ≥ 0`,
/// where the objective is smooth. Returns the final point and its cost.
pub fn lasso_oracle(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &[f64],
    lambda: f64,
    iters: usize,
) -> (DVector<f64>, f64) {
    let n = a.ncols();
    let step = 1.0 / (4.0 * spectral_norm_sq(a));
    let at = a.transpose();
    let mut u = DVector::<f64>::zeros(n);
    let mut v = DVector::<f64>::zeros(n);
    let mut best = (DVector::zeros(n), lasso_objective(a, y, w, lambda, &DVector::zeros(n)));
    for k in 0..iters {
        let z = &u - &v;
        let g = &at * (a * &z - y) * 2.0;
        for i in 0..n {
            u[i] = (u[i] - step * (g[i] + lambda * w[i])).max(0.0);
            v[i] = (v[i] - step * (-g[i] + lambda * w[i])).max(0.0);
        }
        if k % 1000 == 999 || k + 1 == iters {
            let z = &u - &v;
            let f = lasso_objective(a, y, w, lambda, &z);
            if f < best.1 {
                best = (z, f);
            }
        }
    }
    best
}

/// Minimizer of `½(x − u)² + t|x|` by scanning a uniform grid.
pub fn prox_grid(u: f64, t: f64, lo: f64, hi: f64, points: usize) -> f64 {
    let mut best = (lo, f64::INFINITY);
    for k in 0..=points {
        let x = lo + (hi - lo) * k as f64 / points as f64;
        let f = 0.5 * (x - u).powi(2) + t * x.abs();
        if f < best.1 {
            best = (x, f);
        }
    }
    best.0
}

/// Minimizer of the Kalman MAP cost
/// `(y − Φx)ᵀ R⁻¹ (y − Φx) + (x − m)ᵀ P⁻¹ (x − m)` with `m = F x̂`,
/// `P = F P̂ Fᵀ + Q`, solved through the dense normal equations.
pub struct KalmanOracle {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl KalmanOracle {
    pub fn step(
        &self,
        y: &DVector<f64>,
        phi: &DMatrix<f64>,
        f: &DMatrix<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
    ) -> KalmanOracle {
        let m = f * &self.mean;
        let p = f * &self.cov * f.transpose() + q;
        let p_inv = p.try_inverse().expect("prior covariance invertible");
        let r_inv = r.clone().try_inverse().expect("noise covariance invertible");
        let h = phi.transpose() * &r_inv * phi + &p_inv;
        let rhs = phi.transpose() * &r_inv * y + &p_inv * m;
        let chol = h.clone().cholesky().expect("MAP Hessian is positive definite");
        KalmanOracle {
            mean: chol.solve(&rhs),
            cov: chol.inverse(),
        }
    }
}

/// Extreme squared singular values over every `k`-column submatrix, by
/// nalgebra SVD on each submatrix.
pub fn rip_extremes(a: &DMatrix<f64>, k: usize) -> (f64, f64) {
    let n = a.ncols();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let sub = a.select_columns(idx.iter());
        for s in sub.svd(false, false).singular_values.iter() {
            lo = lo.min(s * s);
            hi = hi.max(s * s);
        }
        // Lexicographic successor.
        let mut i = k;
        loop {
            if i == 0 {
                return (lo, hi);
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}
