//! Linear-Gaussian Kalman baseline.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg;

const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: Array1<f64>,
    pub covariance: Array2<f64>,
    pub process_noise: Array2<f64>,
    pub measurement_noise: Array2<f64>,
}

impl KalmanState {
    pub fn new(
        mean: Array1<f64>,
        covariance: Array2<f64>,
        process_noise: Array2<f64>,
        measurement_noise: Array2<f64>,
    ) -> Result<Self> {
        let n = mean.len();
        for (name, m) in [("covariance", &covariance), ("process noise", &process_noise)] {
            if m.dim() != (n, n) {
                return Err(Error::Dimension(format!(
                    "{name} is {:?}, expected {n}x{n}",
                    m.dim()
                )));
            }
        }
        if measurement_noise.nrows() != measurement_noise.ncols() {
            return Err(Error::Dimension("measurement noise must be square".into()));
        }
        for (name, m) in [
            ("covariance", &covariance),
            ("process noise", &process_noise),
            ("measurement noise", &measurement_noise),
        ] {
            if !is_symmetric(m.view()) {
                return Err(Error::Argument(format!("{name} must be symmetric")));
            }
        }
        Ok(Self {
            mean,
            covariance,
            process_noise,
            measurement_noise,
        })
    }

    /// Zero mean, `P₀ = I`, `Q = q I`, `R = r I`.
    pub fn isotropic(dim: usize, measurements: usize, q: f64, r: f64) -> Result<Self> {
        Self::new(
            Array1::zeros(dim),
            Array2::eye(dim),
            Array2::eye(dim) * q,
            Array2::eye(measurements) * r,
        )
    }
}

fn is_symmetric(m: ArrayView2<f64>) -> bool {
    let scale = m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[[i, j]] - m[[j, i]]).abs() <= SYMMETRY_TOL * scale))
}

/// One predict/update cycle. Returns the posterior mean and the new state.
pub fn kalman_step(
    state: &KalmanState,
    y: ArrayView1<f64>,
    phi: ArrayView2<f64>,
    f: ArrayView2<f64>,
) -> Result<(Array1<f64>, KalmanState)> {
    let n = state.mean.len();
    if f.dim() != (n, n) {
        return Err(Error::Dimension(format!(
            "dynamics matrix is {:?}, expected {n}x{n}",
            f.dim()
        )));
    }
    check_len("measurement matrix columns", phi.ncols(), n)?;
    check_len("measurements", y.len(), phi.nrows())?;
    check_len("measurement noise", state.measurement_noise.nrows(), phi.nrows())?;
    check_finite("measurements", &y.to_vec())?;

    let mean_prior = f.dot(&state.mean);
    let mut p_prior = f.dot(&state.covariance).dot(&f.t()) + &state.process_noise;
    linalg::symmetrize(&mut p_prior);

    // S = Φ P⁻ Φᵀ + R, K = P⁻ Φᵀ S⁻¹ computed as (S⁻¹ Φ P⁻)ᵀ.
    let phi_p = phi.dot(&p_prior);
    let mut s = phi_p.dot(&phi.t()) + &state.measurement_noise;
    linalg::symmetrize(&mut s);
    let l = linalg::cholesky(s.view()).map_err(|e| match e {
        Error::Numerical { message, iterations } => Error::Numerical {
            message: format!("singular innovation covariance: {message}"),
            iterations,
        },
        other => other,
    })?;
    let gain_t = linalg::cholesky_solve_mat(&l, phi_p.view());
    let gain = gain_t.t();

    let innovation = &y - &phi.dot(&mean_prior);
    let mean = &mean_prior + &gain.dot(&innovation);
    let mut covariance = &p_prior - &gain.dot(&phi_p);
    linalg::symmetrize(&mut covariance);

    let next = KalmanState {
        mean: mean.clone(),
        covariance,
        process_noise: state.process_noise.clone(),
        measurement_noise: state.measurement_noise.clone(),
    };
    Ok((mean, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn scalar_update_by_hand() {
        let state = KalmanState::new(array![0.0], array![[1.0]], array![[0.0]], array![[1.0]]).unwrap();
        let (mean, next) =
            kalman_step(&state, array![2.0].view(), array![[1.0]].view(), array![[1.0]].view()).unwrap();
        assert_abs_diff_eq!(mean[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(next.covariance[[0, 0]], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn perfect_measurement_limit() {
        let state = KalmanState::new(
            array![0.3, -0.2],
            Array2::eye(2),
            Array2::eye(2) * 0.1,
            Array2::eye(2) * 1e-12,
        )
        .unwrap();
        let y = array![1.5, -4.0];
        let (mean, _) = kalman_step(&state, y.view(), Array2::eye(2).view(), Array2::eye(2).view()).unwrap();
        assert_abs_diff_eq!(mean[0], 1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(mean[1], -4.0, epsilon = 1e-9);
    }

    #[test]
    fn singular_innovation_covariance_is_reported() {
        let state = KalmanState::new(array![0.0], array![[0.0]], array![[0.0]], array![[0.0]]).unwrap();
        let err = kalman_step(&state, array![1.0].view(), array![[1.0]].view(), array![[1.0]].view());
        assert!(matches!(err, Err(Error::Numerical { .. })));
    }

    #[test]
    fn rejects_asymmetric_covariance() {
        assert!(KalmanState::new(
            array![0.0, 0.0],
            array![[1.0, 0.5], [0.0, 1.0]],
            Array2::eye(2),
            Array2::eye(1)
        )
        .is_err());
    }

    #[test]
    fn static_truth_is_recovered() {
        // Q = 0 and F = I: the filter is recursive least squares on the stack
        // of all measurements so far.
        let truth = array![1.0, -2.0, 0.5];
        let phi = array![[1.0, 0.2, 0.0], [0.0, 1.0, -0.3]];
        let mut state = KalmanState::isotropic(3, 2, 0.0, 0.01).unwrap();
        let mut rng_state = 12345u64;
        let mut mean = Array1::zeros(3);
        for k in 0..400 {
            // Rotate the measurement rows so the stacked system has full rank.
            let rows = if k % 2 == 0 {
                phi.clone()
            } else {
                array![[0.0, 0.0, 1.0], [1.0, -1.0, 0.0]]
            };
            let noise: Array1<f64> = (0..2)
                .map(|_| {
                    rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((rng_state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.2
                })
                .collect();
            let y = rows.dot(&truth) + noise;
            let (m, next) = kalman_step(&state, y.view(), rows.view(), Array2::eye(3).view()).unwrap();
            mean = m;
            state = next;
        }
        for i in 0..3 {
            assert_abs_diff_eq!(mean[i], truth[i], epsilon = 2e-2);
        }
    }
}
