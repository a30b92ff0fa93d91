//! Small dense linear-algebra kernels used by the filters and the RIP
//! enumeration. Everything here operates on desk-scale matrices.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

pub fn norm_sq(v: ArrayView1<f64>) -> f64 {
    v.dot(&v)
}

pub fn norm(v: ArrayView1<f64>) -> f64 {
    norm_sq(v).sqrt()
}

pub fn dist_sq(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let scale = a.diag().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 1e-14 * scale) {
            return Err(Error::numerical(
                format!("matrix is not positive definite (pivot {j} = {d:e})"),
                j,
            ));
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the lower factor.
pub fn cholesky_solve(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[[i, k]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solves `L Lᵀ X = B` column by column.
pub fn cholesky_solve_mat(l: &Array2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(b.raw_dim());
    for (j, col) in b.columns().into_iter().enumerate() {
        out.column_mut(j).assign(&cholesky_solve(l, col));
    }
    out
}

/// Least squares `min ‖A x − b‖` by Householder QR. Fails when `A` is
/// numerically rank deficient.
pub fn least_squares(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    let (m, n) = a.dim();
    if b.len() != m {
        return Err(Error::Dimension(format!(
            "right-hand side has length {}, expected {m}",
            b.len()
        )));
    }
    if n > m {
        return Err(Error::numerical(
            format!("underdetermined system ({m} rows, {n} unknowns)"),
            0,
        ));
    }
    let mut r = a.to_owned();
    let mut rhs = b.to_owned();
    let col_scale = (0..n)
        .map(|j| norm(r.column(j)))
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    for k in 0..n {
        let alpha = norm(r.slice(ndarray::s![k.., k]));
        if alpha <= 1e-12 * col_scale {
            return Err(Error::numerical(
                format!("rank-deficient system at column {k}"),
                k,
            ));
        }
        let alpha = if r[[k, k]] > 0.0 { -alpha } else { alpha };
        let mut v = r.slice(ndarray::s![k.., k]).to_owned();
        v[0] -= alpha;
        let vnorm_sq = norm_sq(v.view());
        if vnorm_sq > 0.0 {
            for j in k..n {
                let proj = v.dot(&r.slice(ndarray::s![k.., j])) * 2.0 / vnorm_sq;
                r.slice_mut(ndarray::s![k.., j]).scaled_add(-proj, &v);
            }
            let proj = v.dot(&rhs.slice(ndarray::s![k..])) * 2.0 / vnorm_sq;
            rhs.slice_mut(ndarray::s![k..]).scaled_add(-proj, &v);
        }
    }
    let mut x = Array1::zeros(n);
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..n {
            s -= r[[i, j]] * x[j];
        }
        x[i] = s / r[[i, i]];
    }
    Ok(x)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: ArrayView2<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.to_owned();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        let diag: f64 = (0..n).map(|i| m[[i, i]] * m[[i, i]]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    eig
}

pub fn symmetrize(m: &mut Array2<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = avg;
            m[[j, i]] = avg;
        }
    }
}
