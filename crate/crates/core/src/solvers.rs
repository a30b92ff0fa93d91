//! Proximal-gradient (ISTA) solvers for weighted BPDN and the BPDN-DF
//! objective.
//!
//! Both objectives are written with un-halved quadratics:
//!
//! ```text
//! weighted BPDN:  ‖y − A z‖² + λ0 Σ_i w_i |z_i|
//! BPDN-DF:        ‖y − Φ W z‖² + γ ‖z‖₁ + κ ‖W z − p‖²
//! ```
//!
//! so the shrinkage applied after a gradient step of length `ζ` is
//! `ζ · (ℓ1 weight) / 2`.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg;
use crate::operators::{shrink, Effective, LinearOperator, WeightVector};

/// Relative objective rise treated as floating-point noise.
const ROUNDOFF_RISE: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    /// `1 / L` with `L` the Lipschitz constant of the smooth term's
    /// half-gradient, estimated by power iteration.
    Auto,
    Fixed(f64),
}

/// How the BPDN-DF shrinkage threshold relates to the step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShrinkRule {
    /// Threshold `ζ′ γ / 2`: an exact proximal step for the BPDN-DF cost.
    #[default]
    Proximal,
    /// Threshold `γ` regardless of the step. This is the literal iteration
    /// used in the error-bound analysis; its fixed point minimizes the cost
    /// with `γ` replaced by `2γ/ζ′`. Only the bound verifier uses it.
    Strict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IstaConfig {
    pub step_size: StepSize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub warm_start: Option<Array1<f64>>,
    pub shrink_rule: ShrinkRule,
    /// Use monotone FISTA momentum instead of plain ISTA steps.
    pub accelerated: bool,
}

impl Default for IstaConfig {
    fn default() -> Self {
        Self {
            step_size: StepSize::Auto,
            max_iters: 5000,
            rel_tol: 1e-6,
            warm_start: None,
            shrink_rule: ShrinkRule::Proximal,
            accelerated: false,
        }
    }
}

impl IstaConfig {
    pub fn with_warm_start(mut self, start: Array1<f64>) -> Self {
        self.warm_start = Some(start);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Argument("max_iters must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Argument(format!(
                "rel_tol {} must be positive",
                self.rel_tol
            )));
        }
        if let StepSize::Fixed(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Argument(format!("step size {s} must be positive")));
            }
        }
        Ok(())
    }

    fn start(&self, len: usize) -> Result<Array1<f64>> {
        match &self.warm_start {
            Some(z) => {
                check_len("warm start", z.len(), len)?;
                check_finite("warm start", z.as_slice().unwrap_or(&z.to_vec()))?;
                Ok(z.clone())
            }
            None => Ok(Array1::zeros(len)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub coefficients: Array1<f64>,
    pub iterations: usize,
    /// Objective at the starting point and after every iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl SolverResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }
}

/// Smooth part of an objective, `g(z) = h(L z)` with `L` linear. Keeping
/// `L z` separate lets the loop form images of extrapolated points from
/// images it already has, so each iteration costs one application of `L`
/// and one of its adjoint.
trait Smooth {
    fn image(&self, z: &Array1<f64>) -> Array1<f64>;
    fn value(&self, image: &Array1<f64>) -> f64;
    /// Descent direction `d` such that the gradient step is `z + step · d`.
    fn direction(&self, image: &Array1<f64>) -> Array1<f64>;
}

/// Linear combination `a + c (b − a)` of two vectors.
fn toward(a: &Array1<f64>, b: &Array1<f64>, c: f64) -> Array1<f64> {
    let mut out = a.clone();
    out.scaled_add(c, &(b - a));
    out
}

/// Generic proximal-gradient loop.
///
/// With `cfg.accelerated` the gradient is taken at an extrapolated point and
/// a candidate is only accepted when it does not raise the objective
/// (monotone FISTA), so the trace is non-increasing either way.
fn run_ista<S: Smooth, P: Fn(&Array1<f64>) -> f64>(
    mut z: Array1<f64>,
    step: f64,
    thresholds: &Array1<f64>,
    cfg: &IstaConfig,
    smooth: &S,
    penalty: P,
) -> Result<SolverResult> {
    let mut image_z = smooth.image(&z);
    let mut objective = smooth.value(&image_z) + penalty(&z);
    let mut trace = vec![objective];
    let mut iterations = 0;
    let mut converged = false;
    let mut y = z.clone();
    let mut dir = smooth.direction(&image_z);
    let mut t = 1.0f64;
    for k in 1..=cfg.max_iters {
        let mut u = y.clone();
        ndarray::Zip::from(&mut u)
            .and(&dir)
            .and(thresholds)
            .for_each(|ui, &di, &ti| *ui = shrink(*ui + step * di, ti));
        let change = linalg::dist_sq(u.view(), y.view()).sqrt();
        let scale = linalg::norm(y.view()).max(1e-12);
        iterations = k;
        let image_u = smooth.image(&u);
        let u_objective = smooth.value(&image_u) + penalty(&u);
        if !u_objective.is_finite() {
            return Err(Error::numerical("ISTA iterate became non-finite", k));
        }
        if cfg.accelerated {
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            if u_objective <= objective {
                // y = u + ((t − 1)/t′)(u − z)
                let c = -(t - 1.0) / t_next;
                y = toward(&u, &z, c);
                let image_y = toward(&image_u, &image_z, c);
                dir = smooth.direction(&image_y);
                z = u;
                image_z = image_u;
                objective = u_objective;
            } else {
                // y = z + (t/t′)(u − z)
                y = toward(&z, &u, t / t_next);
                dir = smooth.direction(&toward(&image_z, &image_u, t / t_next));
            }
            t = t_next;
        } else {
            // A valid step cannot raise the objective, so a rise at rounding
            // level means no further descent is representable.
            if u_objective > objective
                && u_objective - objective <= ROUNDOFF_RISE * objective.abs().max(1.0)
            {
                iterations = k - 1;
                converged = true;
                break;
            }
            dir = smooth.direction(&image_u);
            y = u.clone();
            z = u;
            image_z = image_u;
            objective = u_objective;
        }
        trace.push(objective);
        if change <= cfg.rel_tol * scale {
            converged = true;
            break;
        }
    }
    Ok(SolverResult {
        coefficients: z,
        iterations,
        objective_trace: trace,
        converged,
    })
}

/// `‖y − A z‖²`.
struct LeastSquares<'a> {
    a: &'a dyn LinearOperator,
    y: ArrayView1<'a, f64>,
}

impl Smooth for LeastSquares<'_> {
    fn image(&self, z: &Array1<f64>) -> Array1<f64> {
        self.a.forward(z.view())
    }

    fn value(&self, image: &Array1<f64>) -> f64 {
        linalg::dist_sq(self.y, image.view())
    }

    fn direction(&self, image: &Array1<f64>) -> Array1<f64> {
        self.a.adjoint((&self.y - image).view())
    }
}

/// `‖y − Φ W z‖² + κ‖W z − p‖²`; the image stacks `Φ W z` over `W z`.
struct DynamicLeastSquares<'a> {
    phi: &'a dyn LinearOperator,
    w: &'a dyn LinearOperator,
    y: ArrayView1<'a, f64>,
    prediction: ArrayView1<'a, f64>,
    kappa: f64,
}

impl DynamicLeastSquares<'_> {
    fn split<'b>(&self, image: &'b Array1<f64>) -> (ArrayView1<'b, f64>, ArrayView1<'b, f64>) {
        image.view().split_at(ndarray::Axis(0), self.y.len())
    }
}

impl Smooth for DynamicLeastSquares<'_> {
    fn image(&self, z: &Array1<f64>) -> Array1<f64> {
        let x = if self.w.is_identity() {
            z.clone()
        } else {
            self.w.forward(z.view())
        };
        let m = self.phi.forward(x.view());
        ndarray::concatenate![ndarray::Axis(0), m, x]
    }

    fn value(&self, image: &Array1<f64>) -> f64 {
        let (m, x) = self.split(image);
        linalg::dist_sq(self.y, m) + self.kappa * linalg::dist_sq(self.prediction, x)
    }

    fn direction(&self, image: &Array1<f64>) -> Array1<f64> {
        let (m, x) = self.split(image);
        let mut v = self.phi.adjoint((&self.y - &m).view());
        if self.kappa != 0.0 {
            v.scaled_add(self.kappa, &(&self.prediction - &x));
        }
        if self.w.is_identity() {
            v
        } else {
            self.w.adjoint(v.view())
        }
    }
}

fn weighted_l1(z: &Array1<f64>, w: &Array1<f64>) -> f64 {
    z.iter().zip(w.iter()).map(|(z, w)| (z * w).abs()).sum()
}

fn l1(z: &Array1<f64>) -> f64 {
    z.iter().map(|v| v.abs()).sum()
}

/// Approximate minimizer of `‖y − A z‖² + λ0 Σ_i |w_i z_i|`.
pub fn solve_weighted_bpdn(
    a: &dyn LinearOperator,
    y: ArrayView1<f64>,
    weights: &WeightVector,
    lambda0: f64,
    cfg: &IstaConfig,
) -> Result<SolverResult> {
    cfg.validate()?;
    check_len("measurements", y.len(), a.rows())?;
    check_len("weights", weights.len(), a.cols())?;
    check_finite("measurements", &y.to_vec())?;
    if !(lambda0 >= 0.0 && lambda0.is_finite()) {
        return Err(Error::Argument(format!("lambda0 {lambda0} must be nonnegative")));
    }
    let step = match cfg.step_size {
        StepSize::Auto => 1.0 / a.norm_sq_estimate()?,
        StepSize::Fixed(s) => s,
    };
    let w = weights.as_array();
    let thresholds = w.mapv(|wi| step * lambda0 * wi / 2.0);
    let start = cfg.start(a.cols())?;
    run_ista(
        start,
        step,
        &thresholds,
        cfg,
        &LeastSquares { a, y },
        |z| lambda0 * weighted_l1(z, w),
    )
}

/// `‖y − A z‖² + λ0 Σ_i |w_i z_i|`.
pub fn objective_weighted_bpdn(
    z: ArrayView1<f64>,
    a: &dyn LinearOperator,
    y: ArrayView1<f64>,
    weights: &WeightVector,
    lambda0: f64,
) -> Result<f64> {
    check_len("coefficients", z.len(), a.cols())?;
    check_len("measurements", y.len(), a.rows())?;
    check_len("weights", weights.len(), a.cols())?;
    let r = &y - &a.forward(z);
    Ok(linalg::norm_sq(r.view()) + lambda0 * weighted_l1(&z.to_owned(), weights.as_array()))
}

fn check_df_inputs(
    phi: &dyn LinearOperator,
    y: ArrayView1<f64>,
    gamma: f64,
    kappa: f64,
    prediction: ArrayView1<f64>,
    w: &dyn LinearOperator,
) -> Result<()> {
    check_len("measurements", y.len(), phi.rows())?;
    check_len("dictionary rows", w.rows(), phi.cols())?;
    check_len("prediction", prediction.len(), w.rows())?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Argument(format!("gamma {gamma} must be nonnegative")));
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::Argument(format!("kappa {kappa} must be nonnegative")));
    }
    Ok(())
}

/// Approximate minimizer of `‖y − Φ W z‖² + γ‖z‖₁ + κ‖W z − p‖²`.
///
/// The gradient step is `z + ζ′ Wᵀ(Φᵀ(y − Φ W z) + κ(p − W z))` with
/// `ζ′ = ζ / (1 + κ)`, followed by shrinkage chosen by `cfg.shrink_rule`.
pub fn solve_bpdn_df(
    phi: &dyn LinearOperator,
    y: ArrayView1<f64>,
    gamma: f64,
    kappa: f64,
    prediction: ArrayView1<f64>,
    w: &dyn LinearOperator,
    cfg: &IstaConfig,
) -> Result<SolverResult> {
    cfg.validate()?;
    check_df_inputs(phi, y, gamma, kappa, prediction, w)?;
    check_finite("measurements", &y.to_vec())?;
    check_finite("prediction", &prediction.to_vec())?;
    let a = Effective::new(phi, w)?;
    let step = match cfg.step_size {
        StepSize::Auto => {
            let w_norm = if kappa > 0.0 { w.norm_sq_estimate()? } else { 0.0 };
            1.0 / (a.norm_sq_estimate()? + kappa * w_norm)
        }
        StepSize::Fixed(s) => s / (1.0 + kappa),
    };
    let (threshold, l1_weight) = match cfg.shrink_rule {
        ShrinkRule::Proximal => (step * gamma / 2.0, gamma),
        ShrinkRule::Strict => (gamma, 2.0 * gamma / step),
    };
    let thresholds = Array1::from_elem(a.cols(), threshold);
    let start = cfg.start(a.cols())?;
    let smooth = DynamicLeastSquares {
        phi,
        w,
        y,
        prediction,
        kappa,
    };
    run_ista(start, step, &thresholds, cfg, &smooth, |z| l1_weight * l1(z))
}

/// `‖y − Φ W z‖² + γ‖z‖₁ + κ‖W z − p‖²`.
pub fn objective_bpdn_df(
    z: ArrayView1<f64>,
    phi: &dyn LinearOperator,
    y: ArrayView1<f64>,
    gamma: f64,
    kappa: f64,
    prediction: ArrayView1<f64>,
    w: &dyn LinearOperator,
) -> Result<f64> {
    check_df_inputs(phi, y, gamma, kappa, prediction, w)?;
    check_len("coefficients", z.len(), w.cols())?;
    let x = w.forward(z);
    let r = &y - &phi.forward(x.view());
    let mismatch = &x - &prediction;
    Ok(linalg::norm_sq(r.view())
        + gamma * z.iter().map(|v| v.abs()).sum::<f64>()
        + kappa * linalg::norm_sq(mismatch.view()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{gaussian_measurement, DenseOperator, Identity};
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_op(v: f64) -> DenseOperator {
        DenseOperator::new(Array2::from_elem((1, 1), v)).unwrap()
    }

    #[test]
    fn scalar_closed_form() {
        let a = scalar_op(1.0);
        let w = WeightVector::uniform(1, 1.0).unwrap();
        let cfg = IstaConfig {
            rel_tol: 1e-12,
            ..Default::default()
        };
        let res = solve_weighted_bpdn(&a, array![3.0].view(), &w, 2.0, &cfg).unwrap();
        assert_abs_diff_eq!(res.coefficients[0], 2.0, epsilon = 1e-9);
        assert!(res.converged);
    }

    #[test]
    fn zero_data_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = gaussian_measurement(6, 10, &mut rng).unwrap();
        let w = WeightVector::new(Array1::linspace(0.5, 2.0, 10)).unwrap();
        let res =
            solve_weighted_bpdn(&a, Array1::zeros(6).view(), &w, 0.3, &IstaConfig::default())
                .unwrap();
        assert!(res.coefficients.iter().all(|v| *v == 0.0));
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn dimension_and_argument_errors() {
        let a = scalar_op(1.0);
        let w = WeightVector::uniform(1, 1.0).unwrap();
        let cfg = IstaConfig::default();
        assert!(matches!(
            solve_weighted_bpdn(&a, array![1.0, 2.0].view(), &w, 1.0, &cfg),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            solve_weighted_bpdn(&a, array![f64::NAN].view(), &w, 1.0, &cfg),
            Err(Error::Numerical { .. })
        ));
        let id = Identity::new(1);
        assert!(matches!(
            solve_bpdn_df(&a, array![1.0].view(), 1.0, -0.5, array![0.0].view(), &id, &cfg),
            Err(Error::Argument(_))
        ));
        let bad = IstaConfig {
            max_iters: 0,
            ..Default::default()
        };
        assert!(solve_weighted_bpdn(&a, array![1.0].view(), &w, 1.0, &bad).is_err());
    }

    #[test]
    fn df_objective_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = gaussian_measurement(3, 4, &mut rng).unwrap();
        let id = Identity::new(4);
        let z0 = Array1::zeros(4);
        let v = objective_bpdn_df(z0.view(), &phi, Array1::zeros(3).view(), 1.0, 2.0, z0.view(), &id)
            .unwrap();
        assert_eq!(v, 0.0);
        let y = array![1.0, -2.0, 0.5];
        let p = array![0.3, 0.0, -1.0, 2.0];
        let v = objective_bpdn_df(z0.view(), &phi, y.view(), 1.0, 0.7, p.view(), &id).unwrap();
        assert_abs_diff_eq!(v, 5.25 + 0.7 * (0.09 + 1.0 + 4.0), epsilon = 1e-12);
    }

    #[test]
    fn df_reduces_to_bpdn_at_zero_kappa() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let phi = gaussian_measurement(10, 20, &mut rng).unwrap();
        let id = Identity::new(20);
        let y = phi.forward(Array1::from_shape_fn(20, |i| if i % 7 == 0 { 1.0 } else { 0.0 }).view());
        let cfg = IstaConfig::default();
        let w = WeightVector::uniform(20, 1.0).unwrap();
        let a = solve_weighted_bpdn(&phi, y.view(), &w, 0.05, &cfg).unwrap();
        let b = solve_bpdn_df(&phi, y.view(), 0.05, 0.0, Array1::ones(20).view(), &id, &cfg).unwrap();
        for (x, z) in a.coefficients.iter().zip(b.coefficients.iter()) {
            assert!((x - z).abs() <= 1e-8);
        }
    }

    #[test]
    fn ridge_limit_with_identity_operators() {
        let phi = DenseOperator::new(Array2::eye(4)).unwrap();
        let id = Identity::new(4);
        let y = array![1.0, -2.0, 0.5, 3.0];
        let p = array![0.0, 1.0, 0.5, -1.0];
        let cfg = IstaConfig {
            rel_tol: 1e-12,
            ..Default::default()
        };
        let res = solve_bpdn_df(&phi, y.view(), 1e-12, 1.0, p.view(), &id, &cfg).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(res.coefficients[i], (y[i] + p[i]) / 2.0, epsilon = 1e-4);
        }
    }

    #[test]
    fn strict_rule_uses_fixed_threshold() {
        // With Φ = I, κ = 0 and step ζ′ = 1 the strict iteration is a single
        // shrink of y by γ.
        let phi = DenseOperator::new(Array2::eye(3)).unwrap();
        let id = Identity::new(3);
        let y = array![2.0, -0.5, 1.0];
        let cfg = IstaConfig {
            step_size: StepSize::Fixed(1.0),
            shrink_rule: ShrinkRule::Strict,
            rel_tol: 1e-12,
            ..Default::default()
        };
        let res = solve_bpdn_df(&phi, y.view(), 0.75, 0.0, Array1::zeros(3).view(), &id, &cfg).unwrap();
        assert_abs_diff_eq!(res.coefficients[0], 1.25, epsilon = 1e-12);
        assert_abs_diff_eq!(res.coefficients[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(res.coefficients[2], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn converged_solution_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = gaussian_measurement(12, 24, &mut rng).unwrap();
        let x = Array1::from_shape_fn(24, |i| if i % 5 == 0 { 1.0 - 0.1 * i as f64 } else { 0.0 });
        let y = a.forward(x.view());
        let w = WeightVector::uniform(24, 1.0).unwrap();
        let cfg = IstaConfig {
            max_iters: 200_000,
            ..Default::default()
        };
        let first = solve_weighted_bpdn(&a, y.view(), &w, 0.01, &cfg).unwrap();
        assert!(first.converged);
        let again = solve_weighted_bpdn(
            &a,
            y.view(),
            &w,
            0.01,
            &cfg.clone().with_warm_start(first.coefficients.clone()),
        )
        .unwrap();
        let change = linalg::dist_sq(first.coefficients.view(), again.coefficients.view()).sqrt();
        assert!(change <= cfg.rel_tol * linalg::norm(first.coefficients.view()) * 1.01);
    }
}
