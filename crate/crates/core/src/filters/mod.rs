//! Causal filters sharing one per-frame interface: independent BPDN and
//! RWL1, BPDN-DF, RWL1-DF, a Kalman baseline and oracle least squares.

mod dynamics;
mod kalman;

use std::sync::Arc;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

pub use dynamics::{DynamicsModel, IdentityDynamics, MatrixDynamics, ScaledDynamics};
pub use kalman::{kalman_step, KalmanState};

use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg;
use crate::operators::{DenseOperator, Effective, Identity, LinearOperator, WeightVector};
use crate::solvers::{solve_bpdn_df, solve_weighted_bpdn, IstaConfig};

/// Floor on the EM stopping-ratio denominator.
const EM_DENOMINATOR_FLOOR: f64 = 1e-12;

/// Hyperparameters of independent (static) RWL1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rwl1Config {
    pub lambda0: f64,
    pub beta: f64,
    pub eta: f64,
    pub em_rel_tol: f64,
    pub em_max_iters: usize,
}

impl Rwl1Config {
    pub fn validate(&self) -> Result<()> {
        validate_em(
            &[("lambda0", self.lambda0), ("beta", self.beta), ("eta", self.eta)],
            self.em_rel_tol,
            self.em_max_iters,
        )
    }
}

/// Hyperparameters of RWL1-DF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rwl1DfConfig {
    pub lambda0: f64,
    pub tau: f64,
    pub beta: f64,
    pub eta: f64,
    pub em_rel_tol: f64,
    pub em_max_iters: usize,
}

impl Rwl1DfConfig {
    pub fn validate(&self) -> Result<()> {
        validate_em(
            &[
                ("lambda0", self.lambda0),
                ("tau", self.tau),
                ("beta", self.beta),
                ("eta", self.eta),
            ],
            self.em_rel_tol,
            self.em_max_iters,
        )
    }

    /// Upper end of the weight range, `2τ/η`.
    pub fn max_weight(&self) -> f64 {
        2.0 * self.tau / self.eta
    }
}

fn validate_em(params: &[(&str, f64)], rel_tol: f64, max_iters: usize) -> Result<()> {
    for (name, v) in params {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(Error::Argument(format!("{name} = {v} must be positive")));
        }
    }
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::Argument(format!("em_rel_tol {rel_tol} must lie in (0, 1)")));
    }
    if max_iters == 0 {
        return Err(Error::Argument("em_max_iters must be at least 1".into()));
    }
    Ok(())
}

/// Per-frame solver bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Number of weighted-BPDN solves (0 for non-EM filters).
    pub em_iterations: usize,
    /// `‖ẑᵗ − ẑᵗ⁺¹‖² / ‖ẑᵗ‖²` for each consecutive pair of EM iterates.
    pub em_changes: Vec<f64>,
    pub em_converged: bool,
    /// ISTA iterations of each inner solve.
    pub solver_iterations: Vec<usize>,
    pub solver_converged: bool,
    /// Smallest and largest weight produced by any E-step this frame.
    pub weight_range: Option<(f64, f64)>,
}

/// Recursive state carried between frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    /// Previous coefficient estimate `ẑ_{n−1}`.
    pub previous_estimate: Array1<f64>,
    pub last_weights: Option<Array1<f64>>,
    pub kalman: Option<KalmanState>,
}

impl FilterState {
    /// Zero initial estimate.
    pub fn new(dim: usize) -> Self {
        Self {
            previous_estimate: Array1::zeros(dim),
            last_weights: None,
            kalman: None,
        }
    }
}

struct EmOutcome {
    coefficients: Array1<f64>,
    weights: Array1<f64>,
    diagnostics: StepDiagnostics,
}

/// Alternates weighted-BPDN solves with a weight update until the relative
/// squared change of consecutive iterates drops below `rel_tol`.
#[allow(clippy::too_many_arguments)]
fn em_loop<U>(
    a: &dyn LinearOperator,
    y: ArrayView1<f64>,
    lambda0: f64,
    initial_weights: Array1<f64>,
    first_start: Option<Array1<f64>>,
    rel_tol: f64,
    max_iters: usize,
    ista: &IstaConfig,
    update: U,
) -> Result<EmOutcome>
where
    U: Fn(&Array1<f64>) -> Array1<f64>,
{
    let mut diagnostics = StepDiagnostics {
        solver_converged: true,
        ..Default::default()
    };
    let mut weights = initial_weights;
    let track = |w: &Array1<f64>, d: &mut StepDiagnostics| {
        let (lo, hi) = w
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        d.weight_range = Some(match d.weight_range {
            Some((l, h)) => (l.min(lo), h.max(hi)),
            None => (lo, hi),
        });
    };
    let mut previous: Option<Array1<f64>> = None;
    let mut cfg = ista.clone();
    cfg.warm_start = first_start;
    loop {
        let w = WeightVector::new(weights.clone())?;
        let res = solve_weighted_bpdn(a, y, &w, lambda0, &cfg)?;
        diagnostics.em_iterations += 1;
        diagnostics.solver_iterations.push(res.iterations);
        diagnostics.solver_converged &= res.converged;
        let z = res.coefficients;
        if let Some(prev) = &previous {
            let ratio = linalg::dist_sq(prev.view(), z.view())
                / linalg::norm_sq(prev.view()).max(EM_DENOMINATOR_FLOOR);
            diagnostics.em_changes.push(ratio);
            if ratio < rel_tol {
                diagnostics.em_converged = true;
                return Ok(EmOutcome {
                    coefficients: z,
                    weights,
                    diagnostics,
                });
            }
        }
        if diagnostics.em_iterations >= max_iters {
            return Ok(EmOutcome {
                coefficients: z,
                weights,
                diagnostics,
            });
        }
        weights = update(&z);
        track(&weights, &mut diagnostics);
        cfg.warm_start = Some(z.clone());
        previous = Some(z);
    }
}

/// Independent BPDN: uniform-weight BPDN with no temporal coupling.
pub fn bpdn_step(
    y: ArrayView1<f64>,
    phi: &dyn LinearOperator,
    w: &dyn LinearOperator,
    gamma: f64,
    ista: &IstaConfig,
) -> Result<(Array1<f64>, StepDiagnostics)> {
    let a = Effective::new(phi, w)?;
    let weights = WeightVector::uniform(a.cols(), 1.0)?;
    let mut cfg = ista.clone();
    cfg.warm_start = None;
    let res = solve_weighted_bpdn(&a, y, &weights, gamma, &cfg)?;
    let diagnostics = StepDiagnostics {
        solver_iterations: vec![res.iterations],
        solver_converged: res.converged,
        ..Default::default()
    };
    Ok((res.coefficients, diagnostics))
}

/// The RWL1 weight update `β / (|z| + η)`.
pub fn rwl1_weights(z: &Array1<f64>, beta: f64, eta: f64) -> Array1<f64> {
    z.mapv(|v| beta / (v.abs() + eta))
}

/// Independent RWL1 starting from uniform unit weights.
pub fn rwl1_step(
    y: ArrayView1<f64>,
    phi: &dyn LinearOperator,
    w: &dyn LinearOperator,
    cfg: &Rwl1Config,
    ista: &IstaConfig,
) -> Result<(Array1<f64>, StepDiagnostics)> {
    cfg.validate()?;
    let a = Effective::new(phi, w)?;
    let out = em_loop(
        &a,
        y,
        cfg.lambda0,
        Array1::ones(a.cols()),
        None,
        cfg.em_rel_tol,
        cfg.em_max_iters,
        ista,
        |z| rwl1_weights(z, cfg.beta, cfg.eta),
    )?;
    Ok((out.coefficients, out.diagnostics))
}

/// Coefficient-domain prediction `Wᵀ f(W ẑ_{n−1}, n)` for orthonormal `W`.
pub fn predict_coefficients(
    previous: &Array1<f64>,
    n: usize,
    w: &dyn LinearOperator,
    dynamics: &dyn DynamicsModel,
) -> Result<Array1<f64>> {
    check_len("previous estimate", previous.len(), w.cols())?;
    let state = w.forward(previous.view());
    let predicted = dynamics.apply(state.view(), n);
    check_len("dynamics output", predicted.len(), w.rows())?;
    Ok(w.adjoint(predicted.view()))
}

/// BPDN-DF step; the new state carries the estimate forward.
#[allow(clippy::too_many_arguments)]
pub fn bpdn_df_step(
    state: &FilterState,
    n: usize,
    y: ArrayView1<f64>,
    phi: &dyn LinearOperator,
    w: &dyn LinearOperator,
    dynamics: &dyn DynamicsModel,
    gamma: f64,
    kappa: f64,
    ista: &IstaConfig,
) -> Result<(Array1<f64>, FilterState, StepDiagnostics)> {
    check_finite("previous estimate", &state.previous_estimate.to_vec())?;
    let x_prev = w.forward(state.previous_estimate.view());
    let prediction = dynamics.apply(x_prev.view(), n);
    let mut cfg = ista.clone();
    cfg.warm_start = Some(w.adjoint(prediction.view()));
    let res = solve_bpdn_df(phi, y, gamma, kappa, prediction.view(), w, &cfg)?;
    let diagnostics = StepDiagnostics {
        solver_iterations: vec![res.iterations],
        solver_converged: res.converged,
        ..Default::default()
    };
    let next = FilterState {
        previous_estimate: res.coefficients.clone(),
        ..state.clone()
    };
    Ok((res.coefficients, next, diagnostics))
}

/// The RWL1-DF E-step `2τ / (β|z| + |pred| + η)`.
pub fn rwl1_df_weights(z: &Array1<f64>, prediction: &Array1<f64>, cfg: &Rwl1DfConfig) -> Array1<f64> {
    ndarray::Zip::from(z)
        .and(prediction)
        .map_collect(|zi, pi| 2.0 * cfg.tau / (cfg.beta * zi.abs() + pi.abs() + cfg.eta))
}

/// RWL1-DF step: EM with prediction-informed weights.
#[allow(clippy::too_many_arguments)]
pub fn rwl1_df_step(
    state: &FilterState,
    n: usize,
    y: ArrayView1<f64>,
    phi: &dyn LinearOperator,
    w: &dyn LinearOperator,
    dynamics: &dyn DynamicsModel,
    cfg: &Rwl1DfConfig,
    ista: &IstaConfig,
) -> Result<(Array1<f64>, FilterState, StepDiagnostics)> {
    cfg.validate()?;
    check_finite("previous estimate", &state.previous_estimate.to_vec())?;
    let a = Effective::new(phi, w)?;
    let prediction = predict_coefficients(&state.previous_estimate, n, w, dynamics)?;
    let initial = rwl1_df_weights(&Array1::zeros(prediction.len()), &prediction, cfg);
    let mut out = em_loop(
        &a,
        y,
        cfg.lambda0,
        initial.clone(),
        Some(prediction.clone()),
        cfg.em_rel_tol,
        cfg.em_max_iters,
        ista,
        |z| rwl1_df_weights(z, &prediction, cfg),
    )?;
    let (lo, hi) = initial
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    out.diagnostics.weight_range = Some(match out.diagnostics.weight_range {
        Some((l, h)) => (l.min(lo), h.max(hi)),
        None => (lo, hi),
    });
    let next = FilterState {
        previous_estimate: out.coefficients.clone(),
        last_weights: Some(out.weights),
        kalman: state.kalman.clone(),
    };
    Ok((out.coefficients, next, out.diagnostics))
}

/// Least squares restricted to `support`, zero elsewhere.
pub fn oracle_ls_step(
    y: ArrayView1<f64>,
    phi: &DenseOperator,
    support: &[usize],
) -> Result<Array1<f64>> {
    check_len("measurements", y.len(), phi.rows())?;
    let mut estimate = Array1::zeros(phi.cols());
    if support.is_empty() {
        return Ok(estimate);
    }
    if support.len() > phi.rows() {
        return Err(Error::Argument(format!(
            "support of size {} exceeds {} measurements",
            support.len(),
            phi.rows()
        )));
    }
    if let Some(bad) = support.iter().find(|&&i| i >= phi.cols()) {
        return Err(Error::Dimension(format!("support index {bad} out of range")));
    }
    let sub = phi.select_columns(support);
    let coef = linalg::least_squares(sub.view(), y)?;
    for (&i, c) in support.iter().zip(coef.iter()) {
        estimate[i] = *c;
    }
    Ok(estimate)
}

/// Everything a filter may consume at frame `index`.
pub struct FrameInput<'a> {
    pub index: usize,
    pub y: ArrayView1<'a, f64>,
    pub phi: &'a DenseOperator,
    pub dynamics: &'a dyn DynamicsModel,
    /// True support; only the oracle reads it.
    pub support: Option<&'a [usize]>,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Signal-domain estimate `x̂ = W ẑ`.
    pub estimate: Array1<f64>,
    pub coefficients: Array1<f64>,
    pub diagnostics: StepDiagnostics,
}

/// Uniform streaming interface over every algorithm.
pub trait StreamingFilter: Send {
    fn id(&self) -> &'static str;
    fn step(&mut self, frame: &FrameInput<'_>) -> Result<StepOutput>;
}

fn output(w: &dyn LinearOperator, coefficients: Array1<f64>, diagnostics: StepDiagnostics) -> StepOutput {
    StepOutput {
        estimate: w.forward(coefficients.view()),
        coefficients,
        diagnostics,
    }
}

pub type Dictionary = Arc<dyn LinearOperator>;

pub fn identity_dictionary(dim: usize) -> Dictionary {
    Arc::new(Identity::new(dim))
}

pub struct IndependentBpdn {
    pub gamma: f64,
    pub dictionary: Dictionary,
    pub ista: IstaConfig,
}

impl StreamingFilter for IndependentBpdn {
    fn id(&self) -> &'static str {
        "bpdn"
    }

    fn step(&mut self, frame: &FrameInput<'_>) -> Result<StepOutput> {
        let (z, d) = bpdn_step(frame.y, frame.phi, self.dictionary.as_ref(), self.gamma, &self.ista)?;
        Ok(output(self.dictionary.as_ref(), z, d))
    }
}

pub struct IndependentRwl1 {
    pub config: Rwl1Config,
    pub dictionary: Dictionary,
    pub ista: IstaConfig,
}

impl StreamingFilter for IndependentRwl1 {
    fn id(&self) -> &'static str {
        "rwl1"
    }

    fn step(&mut self, frame: &FrameInput<'_>) -> Result<StepOutput> {
        let (z, d) = rwl1_step(frame.y, frame.phi, self.dictionary.as_ref(), &self.config, &self.ista)?;
        Ok(output(self.dictionary.as_ref(), z, d))
    }
}

pub struct BpdnDf {
    pub gamma: f64,
    pub kappa: f64,
    pub dictionary: Dictionary,
    pub ista: IstaConfig,
    pub state: FilterState,
}

impl BpdnDf {
    pub fn new(gamma: f64, kappa: f64, dictionary: Dictionary, ista: IstaConfig) -> Self {
        let state = FilterState::new(dictionary.cols());
        Self {
            gamma,
            kappa,
            dictionary,
            ista,
            state,
        }
    }
}

impl StreamingFilter for BpdnDf {
    fn id(&self) -> &'static str {
        "bpdn-df"
    }

    fn step(&mut self, frame: &FrameInput<'_>) -> Result<StepOutput> {
        let (z, next, d) = bpdn_df_step(
            &self.state,
            frame.index,
            frame.y,
            frame.phi,
            self.dictionary.as_ref(),
            frame.dynamics,
            self.gamma,
            self.kappa,
            &self.ista,
        )?;
        self.state = next;
        Ok(output(self.dictionary.as_ref(), z, d))
    }
}

pub struct Rwl1Df {
    pub config: Rwl1DfConfig,
    pub dictionary: Dictionary,
    pub ista: IstaConfig,
    pub state: FilterState,
}

impl Rwl1Df {
    pub fn new(config: Rwl1DfConfig, dictionary: Dictionary, ista: IstaConfig) -> Self {
        let state = FilterState::new(dictionary.cols());
        Self {
            config,
            dictionary,
            ista,
            state,
        }
    }
}

impl StreamingFilter for Rwl1Df {
    fn id(&self) -> &'static str {
        "rwl1-df"
    }

    fn step(&mut self, frame: &FrameInput<'_>) -> Result<StepOutput> {
        let (z, next, d) = rwl1_df_step(
            &self.state,
            frame.index,
            frame.y,
            frame.phi,
            self.dictionary.as_ref(),
            frame.dynamics,
            &self.config,
            &self.ista,
        )?;
        self.state = next;
        Ok(output(self.dictionary.as_ref(), z, d))
    }
}

/// Kalman baseline in the signal domain. Requires linear dynamics.
pub struct KalmanFilter {
    pub state: KalmanState,
}

impl StreamingFilter for KalmanFilter {
    fn id(&self) -> &'static str {
        "kalman"
    }

    fn step(&mut self, frame: &FrameInput<'_>) -> Result<StepOutput> {
        let dim = self.state.mean.len();
        let f = frame
            .dynamics
            .matrix(frame.index, dim)
            .ok_or_else(|| Error::Argument("Kalman filtering needs linear dynamics".into()))?;
        let (mean, next) = kalman_step(&self.state, frame.y, frame.phi.matrix().view(), f.view())?;
        self.state = next;
        Ok(StepOutput {
            estimate: mean.clone(),
            coefficients: mean,
            diagnostics: StepDiagnostics::default(),
        })
    }
}

/// Least squares on the true support (identity dictionary only).
pub struct OracleLs;

impl StreamingFilter for OracleLs {
    fn id(&self) -> &'static str {
        "oracle-ls"
    }

    fn step(&mut self, frame: &FrameInput<'_>) -> Result<StepOutput> {
        let support = frame
            .support
            .ok_or_else(|| Error::Argument("oracle least squares needs the true support".into()))?;
        let x = oracle_ls_step(frame.y, frame.phi, support)?;
        Ok(StepOutput {
            estimate: x.clone(),
            coefficients: x,
            diagnostics: StepDiagnostics::default(),
        })
    }
}
