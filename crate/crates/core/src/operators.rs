//! Linear operators (measurement maps and dictionaries), random
//! measurement generation and the elementwise shrinkage primitive.

use std::sync::OnceLock;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::linalg;

/// Relative tolerance used when a solver needs a Lipschitz estimate.
pub const DEFAULT_NORM_TOL: f64 = 1e-6;

/// Multiplicative safety margin applied to power-iteration estimates.
pub const NORM_SAFETY_FACTOR: f64 = 1.01;

const POWER_ITERATION_CAP: usize = 10_000;

/// A real linear map `R^cols -> R^rows` with its adjoint.
pub trait LinearOperator: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn forward(&self, x: ArrayView1<f64>) -> Array1<f64>;
    fn adjoint(&self, y: ArrayView1<f64>) -> Array1<f64>;

    /// True only for operators that are exactly the identity; lets callers
    /// skip composing with a trivial dictionary.
    fn is_identity(&self) -> bool {
        false
    }

    /// Safety-scaled estimate of the largest squared singular value.
    fn norm_sq_estimate(&self) -> Result<f64> {
        operator_norm_sq(self, DEFAULT_NORM_TOL)
    }

    /// Materializes the operator by probing it with basis vectors.
    fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows(), self.cols()));
        let mut e = Array1::zeros(self.cols());
        for j in 0..self.cols() {
            e[j] = 1.0;
            out.column_mut(j).assign(&self.forward(e.view()));
            e[j] = 0.0;
        }
        out
    }
}

/// Dense row-major operator. Keeps a contiguous copy of the transpose so the
/// adjoint is as cheap as the forward map.
#[derive(Debug)]
pub struct DenseOperator {
    matrix: Array2<f64>,
    transpose: Array2<f64>,
    norm_sq: OnceLock<f64>,
}

impl DenseOperator {
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "operator must be non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let matrix = matrix.as_standard_layout().into_owned();
        let transpose = matrix.t().as_standard_layout().into_owned();
        Ok(Self {
            matrix,
            transpose,
            norm_sq: OnceLock::new(),
        })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// Columns restricted to `support`, in the given order.
    pub fn select_columns(&self, support: &[usize]) -> Array2<f64> {
        self.matrix.select(Axis(1), support)
    }
}

impl Clone for DenseOperator {
    fn clone(&self) -> Self {
        Self {
            matrix: self.matrix.clone(),
            transpose: self.transpose.clone(),
            norm_sq: self.norm_sq.clone(),
        }
    }
}

impl LinearOperator for DenseOperator {
    fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    fn forward(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.matrix.dot(&x)
    }

    fn adjoint(&self, y: ArrayView1<f64>) -> Array1<f64> {
        self.transpose.dot(&y)
    }

    fn norm_sq_estimate(&self) -> Result<f64> {
        if let Some(v) = self.norm_sq.get() {
            return Ok(*v);
        }
        let v = operator_norm_sq(self, DEFAULT_NORM_TOL)?;
        Ok(*self.norm_sq.get_or_init(|| v))
    }

    fn to_dense(&self) -> Array2<f64> {
        self.matrix.clone()
    }
}

/// The identity on `R^dim`.
#[derive(Debug, Clone, Copy)]
pub struct Identity {
    dim: usize,
}

impl Identity {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl LinearOperator for Identity {
    fn rows(&self) -> usize {
        self.dim
    }

    fn cols(&self) -> usize {
        self.dim
    }

    fn forward(&self, x: ArrayView1<f64>) -> Array1<f64> {
        x.to_owned()
    }

    fn adjoint(&self, y: ArrayView1<f64>) -> Array1<f64> {
        y.to_owned()
    }

    fn is_identity(&self) -> bool {
        true
    }

    fn norm_sq_estimate(&self) -> Result<f64> {
        Ok(NORM_SAFETY_FACTOR)
    }

    fn to_dense(&self) -> Array2<f64> {
        Array2::eye(self.dim)
    }
}

/// `outer ∘ inner`, e.g. the effective operator `Φ W`.
pub struct Composed<'a> {
    outer: &'a dyn LinearOperator,
    inner: &'a dyn LinearOperator,
}

impl<'a> Composed<'a> {
    pub fn new(outer: &'a dyn LinearOperator, inner: &'a dyn LinearOperator) -> Result<Self> {
        if outer.cols() != inner.rows() {
            return Err(Error::Dimension(format!(
                "cannot compose {}x{} with {}x{}",
                outer.rows(),
                outer.cols(),
                inner.rows(),
                inner.cols()
            )));
        }
        Ok(Self { outer, inner })
    }
}

impl LinearOperator for Composed<'_> {
    fn rows(&self) -> usize {
        self.outer.rows()
    }

    fn cols(&self) -> usize {
        self.inner.cols()
    }

    fn forward(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.outer.forward(self.inner.forward(x).view())
    }

    fn adjoint(&self, y: ArrayView1<f64>) -> Array1<f64> {
        self.inner.adjoint(self.outer.adjoint(y).view())
    }
}

/// Effective measurement operator `Φ W`, borrowing `Φ` directly when the
/// dictionary is the identity.
pub enum Effective<'a> {
    Direct(&'a dyn LinearOperator),
    Composed(Composed<'a>),
}

impl<'a> Effective<'a> {
    pub fn new(phi: &'a dyn LinearOperator, w: &'a dyn LinearOperator) -> Result<Self> {
        if w.is_identity() {
            check_len("dictionary", w.rows(), phi.cols())?;
            Ok(Effective::Direct(phi))
        } else {
            Ok(Effective::Composed(Composed::new(phi, w)?))
        }
    }

    fn get(&self) -> &dyn LinearOperator {
        match self {
            Effective::Direct(op) => *op,
            Effective::Composed(c) => c,
        }
    }
}

impl LinearOperator for Effective<'_> {
    fn rows(&self) -> usize {
        self.get().rows()
    }

    fn cols(&self) -> usize {
        self.get().cols()
    }

    fn forward(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.get().forward(x)
    }

    fn adjoint(&self, y: ArrayView1<f64>) -> Array1<f64> {
        self.get().adjoint(y)
    }

    fn is_identity(&self) -> bool {
        self.get().is_identity()
    }

    fn norm_sq_estimate(&self) -> Result<f64> {
        self.get().norm_sq_estimate()
    }
}

/// Strictly positive per-coefficient ℓ1 weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Array1<f64>);

impl WeightVector {
    pub fn new(entries: Array1<f64>) -> Result<Self> {
        if let Some((i, w)) = entries
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::Argument(format!(
                "weight {i} = {w} must be positive and finite"
            )));
        }
        Ok(Self(entries))
    }

    pub fn uniform(len: usize, value: f64) -> Result<Self> {
        Self::new(Array1::from_elem(len, value))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.0
    }
}

/// Dense `m × n` matrix with i.i.d. Gaussian entries and unit-norm columns.
pub fn gaussian_measurement<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    rng: &mut R,
) -> Result<DenseOperator> {
    if m == 0 || n == 0 {
        return Err(Error::Dimension(format!(
            "measurement matrix needs positive dimensions, got {m}x{n}"
        )));
    }
    let mut a = Array2::<f64>::zeros((m, n));
    a.iter_mut()
        .for_each(|v| *v = rng.sample::<f64, _>(StandardNormal));
    for mut col in a.columns_mut() {
        let mut nrm = linalg::norm(col.view());
        // A zero column has probability zero; redraw rather than divide by it.
        while nrm == 0.0 {
            col.iter_mut()
                .for_each(|v| *v = rng.sample::<f64, _>(StandardNormal));
            nrm = linalg::norm(col.view());
        }
        col /= nrm;
    }
    DenseOperator::new(a)
}

/// Shrinkage threshold: one value for every entry or one per entry.
#[derive(Debug, Clone, Copy)]
pub enum Threshold<'a> {
    Scalar(f64),
    PerEntry(ArrayView1<'a, f64>),
}

impl From<f64> for Threshold<'_> {
    fn from(t: f64) -> Self {
        Threshold::Scalar(t)
    }
}

impl<'a> From<ArrayView1<'a, f64>> for Threshold<'a> {
    fn from(t: ArrayView1<'a, f64>) -> Self {
        Threshold::PerEntry(t)
    }
}

impl<'a> From<&'a Array1<f64>> for Threshold<'a> {
    fn from(t: &'a Array1<f64>) -> Self {
        Threshold::PerEntry(t.view())
    }
}

#[inline]
pub(crate) fn shrink(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `sign(u) · max(|u| − t, 0)` elementwise.
pub fn soft_threshold<'a>(u: ArrayView1<f64>, t: impl Into<Threshold<'a>>) -> Result<Array1<f64>> {
    match t.into() {
        Threshold::Scalar(t) => {
            if !(t >= 0.0) {
                return Err(Error::Argument(format!("threshold {t} must be nonnegative")));
            }
            Ok(u.mapv(|x| shrink(x, t)))
        }
        Threshold::PerEntry(t) => {
            check_len("threshold", t.len(), u.len())?;
            if let Some(bad) = t.iter().find(|t| !(**t >= 0.0)) {
                return Err(Error::Argument(format!(
                    "threshold {bad} must be nonnegative"
                )));
            }
            Ok(ndarray::Zip::from(&u).and(&t).map_collect(|&x, &t| shrink(x, t)))
        }
    }
}

/// Largest squared singular value of `op` by power iteration on `opᵀ op`,
/// multiplied by [`NORM_SAFETY_FACTOR`].
pub fn operator_norm_sq<O: LinearOperator + ?Sized>(op: &O, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("tolerance {tol} must be positive")));
    }
    let n = op.cols();
    // Fixed seed: the estimate is a deterministic function of the operator.
    let mut rng = ChaCha8Rng::seed_from_u64(0x005e_ed0f_9e7a);
    let mut v: Array1<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    v /= linalg::norm(v.view());
    let mut estimate = 0.0;
    for iter in 1..=POWER_ITERATION_CAP {
        let av = op.forward(v.view());
        let current = linalg::norm_sq(av.view());
        if !current.is_finite() {
            return Err(Error::numerical("power iteration diverged", iter));
        }
        if current == 0.0 {
            // v lies in the null space; either op is zero or we restart.
            if iter == 1 {
                v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
                continue;
            }
            return Ok(0.0);
        }
        if iter > 1 && (current - estimate).abs() <= tol * current {
            return Ok(current * NORM_SAFETY_FACTOR);
        }
        estimate = current;
        let mut w = op.adjoint(av.view());
        let wn = linalg::norm(w.view());
        w /= wn;
        v = w;
    }
    Err(Error::numerical(
        format!("power iteration did not reach relative tolerance {tol:e}"),
        POWER_ITERATION_CAP,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn single_entry_measurement_has_unit_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let op = gaussian_measurement(1, 1, &mut rng).unwrap();
        assert_eq!(op.matrix()[[0, 0]].abs(), 1.0);
    }

    #[test]
    fn measurement_is_deterministic_and_normalized() {
        let a = gaussian_measurement(80, 576, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = gaussian_measurement(80, 576, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        for col in a.matrix().columns() {
            assert!((linalg::norm(col) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn measurement_rejects_empty_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            gaussian_measurement(0, 4, &mut rng),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(array![0.5].view(), 1.0).unwrap(), array![0.0]);
        assert_eq!(
            soft_threshold(array![2.0, -3.0].view(), 1.0).unwrap(),
            array![1.0, -2.0]
        );
        let u = array![0.3, -7.0, 0.0, 1e-9];
        assert_eq!(soft_threshold(u.view(), 0.0).unwrap(), u);
        let t = array![0.5, 10.0];
        assert_eq!(
            soft_threshold(array![1.0, -3.0].view(), &t).unwrap(),
            array![0.5, 0.0]
        );
    }

    #[test]
    fn soft_threshold_rejects_negative() {
        assert!(matches!(
            soft_threshold(array![1.0].view(), -0.1),
            Err(Error::Argument(_))
        ));
        let t = array![0.1, -0.1];
        assert!(soft_threshold(array![1.0, 1.0].view(), &t).is_err());
    }

    #[test]
    fn norm_of_identity_and_diagonal() {
        let id = DenseOperator::new(Array2::eye(5)).unwrap();
        assert_relative_eq!(operator_norm_sq(&id, 1e-9).unwrap(), 1.01, max_relative = 1e-9);
        let d = DenseOperator::new(array![[3.0, 0.0], [0.0, 1.0]]).unwrap();
        let tol = 1e-9;
        assert!((operator_norm_sq(&d, tol).unwrap() - 9.0 * 1.01).abs() <= 9.0 * 1.01 * tol * 10.0);
        assert_eq!(Identity::new(5).norm_sq_estimate().unwrap(), 1.01);
    }

    #[test]
    fn norm_rejects_nonpositive_tolerance() {
        let id = Identity::new(2);
        assert!(operator_norm_sq(&id, 0.0).is_err());
    }

    #[test]
    fn dense_cache_matches_direct_estimate() {
        let op = gaussian_measurement(20, 50, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let direct = operator_norm_sq(&op, DEFAULT_NORM_TOL).unwrap();
        assert_eq!(op.norm_sq_estimate().unwrap(), direct);
        assert_eq!(op.norm_sq_estimate().unwrap(), direct);
    }

    #[test]
    fn weight_vector_validation() {
        assert!(WeightVector::new(array![1.0, 0.0]).is_err());
        assert!(WeightVector::new(array![1.0, f64::NAN]).is_err());
        assert!(WeightVector::new(array![1.0, 2.0]).is_ok());
    }

    #[test]
    fn effective_operator_skips_identity() {
        let phi = gaussian_measurement(4, 6, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let w = Identity::new(6);
        let eff = Effective::new(&phi, &w).unwrap();
        assert!(matches!(eff, Effective::Direct(_)));
        let wrong = Identity::new(5);
        assert!(Effective::new(&phi, &wrong).is_err());
    }

    fn seeded_operator(seed: u64, m: usize, n: usize) -> DenseOperator {
        gaussian_measurement(m, n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn adjoint_is_consistent(seed in any::<u64>(), m in 1usize..12, n in 1usize..12) {
            let op = seeded_operator(seed, m, n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let u: Array1<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let v: Array1<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
            let lhs = op.forward(u.view()).dot(&v);
            let rhs = u.dot(&op.adjoint(v.view()));
            let scale = linalg::norm(u.view()) * linalg::norm(v.view());
            prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);

            // Composition with an orthonormal dictionary keeps the adjoint pair.
            let w = Identity::new(n);
            let eff = Composed::new(&op, &w).unwrap();
            let lhs = eff.forward(u.view()).dot(&v);
            let rhs = u.dot(&eff.adjoint(v.view()));
            prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
        }

        #[test]
        fn forward_is_linear(seed in any::<u64>(), a in -10.0f64..10.0) {
            let op = seeded_operator(seed, 7, 9);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
            let u: Array1<f64> = (0..9).map(|_| rng.sample(StandardNormal)).collect();
            let w: Array1<f64> = (0..9).map(|_| rng.sample(StandardNormal)).collect();
            let combined = op.forward((&u * a + &w).view());
            let separate = op.forward(u.view()) * a + op.forward(w.view());
            let scale = linalg::norm(separate.view()).max(1e-300);
            prop_assert!(linalg::dist_sq(combined.view(), separate.view()).sqrt() <= 1e-10 * scale.max(1.0));
        }

        #[test]
        fn soft_threshold_is_contraction(
            u in proptest::collection::vec(-5.0f64..5.0, 6),
            v in proptest::collection::vec(-5.0f64..5.0, 6),
            t in 0.0f64..3.0,
        ) {
            let u = Array1::from(u);
            let v = Array1::from(v);
            let tu = soft_threshold(u.view(), t).unwrap();
            let tv = soft_threshold(v.view(), t).unwrap();
            prop_assert!(linalg::dist_sq(tu.view(), tv.view()) <= linalg::dist_sq(u.view(), v.view()) + 1e-15);
        }

        #[test]
        fn measurement_columns_unit_norm(seed in any::<u64>(), m in 1usize..30, n in 1usize..30) {
            let op = seeded_operator(seed, m, n);
            for col in op.matrix().columns() {
                prop_assert!((linalg::norm(col) - 1.0).abs() <= 1e-12);
            }
            let again = seeded_operator(seed, m, n);
            prop_assert_eq!(op.matrix(), again.matrix());
        }
    }
}
