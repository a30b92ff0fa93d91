use ndarray::{Array1, Array2, ArrayView1};

/// Known state-evolution map `x_n ≈ f(x_{n−1}, n)`.
pub trait DynamicsModel: Send + Sync {
    fn apply(&self, x: ArrayView1<f64>, n: usize) -> Array1<f64>;

    /// Lipschitz constant `f*` of the map, when known.
    fn smoothness_bound(&self) -> Option<f64> {
        None
    }

    fn is_linear(&self) -> bool {
        false
    }

    /// Dense matrix of a linear map at frame `n`, probed column by column.
    fn matrix(&self, n: usize, dim: usize) -> Option<Array2<f64>> {
        if !self.is_linear() {
            return None;
        }
        let mut out = Array2::zeros((dim, dim));
        let mut e = Array1::zeros(dim);
        for j in 0..dim {
            e[j] = 1.0;
            out.column_mut(j).assign(&self.apply(e.view(), n));
            e[j] = 0.0;
        }
        Some(out)
    }
}

/// `f(x) = x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDynamics;

impl DynamicsModel for IdentityDynamics {
    fn apply(&self, x: ArrayView1<f64>, _n: usize) -> Array1<f64> {
        x.to_owned()
    }

    fn smoothness_bound(&self) -> Option<f64> {
        Some(1.0)
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn matrix(&self, _n: usize, dim: usize) -> Option<Array2<f64>> {
        Some(Array2::eye(dim))
    }
}

/// `f(x) = ρ x`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledDynamics {
    pub rho: f64,
}

impl DynamicsModel for ScaledDynamics {
    fn apply(&self, x: ArrayView1<f64>, _n: usize) -> Array1<f64> {
        x.mapv(|v| self.rho * v)
    }

    fn smoothness_bound(&self) -> Option<f64> {
        Some(self.rho.abs())
    }

    fn is_linear(&self) -> bool {
        true
    }
}

/// Time-invariant linear dynamics `f(x) = F x`.
#[derive(Debug, Clone)]
pub struct MatrixDynamics {
    f: Array2<f64>,
    bound: Option<f64>,
}

impl MatrixDynamics {
    /// `bound` should be an upper bound on the spectral norm of `f`.
    pub fn new(f: Array2<f64>, bound: Option<f64>) -> Self {
        Self { f, bound }
    }
}

impl DynamicsModel for MatrixDynamics {
    fn apply(&self, x: ArrayView1<f64>, _n: usize) -> Array1<f64> {
        self.f.dot(&x)
    }

    fn smoothness_bound(&self) -> Option<f64> {
        self.bound
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn matrix(&self, _n: usize, _dim: usize) -> Option<Array2<f64>> {
        Some(self.f.clone())
    }
}
