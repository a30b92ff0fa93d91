mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_dynfilt::filters::{kalman_step, KalmanState};

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn spd(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = random_matrix(n, n, rng);
    a.dot(&a.t()) * scale + Array2::<f64>::eye(n) * scale
}

fn track(dim: usize, meas: usize, frames: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = random_matrix(dim, dim, &mut rng) * 0.5;
    let q = spd(dim, 0.1, &mut rng);
    let r = spd(meas, 0.05, &mut rng);
    let p0 = spd(dim, 1.0, &mut rng);
    let m0: Array1<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut state = KalmanState::new(m0.clone(), p0.clone(), q.clone(), r.clone()).unwrap();
    let mut oracle = KalmanOracle {
        mean: to_na_vec(&m0),
        cov: to_na(&p0),
    };
    for _ in 0..frames {
        let phi = random_matrix(meas, dim, &mut rng);
        let y: Array1<f64> = (0..meas).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (mean, next) = kalman_step(&state, y.view(), phi.view(), f.view()).unwrap();
        oracle = oracle.step(&to_na_vec(&y), &to_na(&phi), &to_na(&f), &to_na(&q), &to_na(&r));
        let diff: DVector<f64> = to_na_vec(&mean) - &oracle.mean;
        assert!(diff.amax() < 1e-8, "mean differs by {}", diff.amax());
        let cdiff: DMatrix<f64> = to_na(&next.covariance) - &oracle.cov;
        assert!(cdiff.amax() < 1e-8, "covariance differs by {}", cdiff.amax());
        state = next;
    }
}

#[test]
fn scalar_filter_matches_map_estimate() {
    for seed in 0..5 {
        track(1, 1, 20, seed);
    }
}

#[test]
fn five_dimensional_filter_matches_map_estimate() {
    for seed in 10..15 {
        track(5, 3, 20, seed);
    }
}
