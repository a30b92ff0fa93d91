//! Numerical checks of the BPDN-DF steady-state error bound: brute-force
//! RIP constants, the bound's constants and trajectory, the κ ceiling and
//! the step-feasibility inequality, plus an end-to-end verifier.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{bpdn_df_step, DynamicsModel, FilterState, IdentityDynamics, ScaledDynamics};
use crate::linalg;
use crate::operators::{gaussian_measurement, DenseOperator, LinearOperator};
use crate::solvers::{IstaConfig, ShrinkRule};

/// Largest number of column subsets `brute_force_rip` will enumerate.
pub const DEFAULT_SUBSET_CAP: u128 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremInputs {
    pub delta: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub f_star: f64,
    pub q: usize,
    /// Bound on every `‖z_n‖₂` and `‖e_n‖₂`.
    pub b: f64,
    pub eps_max: f64,
    pub nu_max: f64,
    pub e0: f64,
}

impl TheoremInputs {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::Argument(format!("delta {} must lie in [0, 1)", self.delta)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Argument(format!("gamma {} must be positive", self.gamma)));
        }
        if !(self.f_star > 0.0 && self.f_star.is_finite()) {
            return Err(Error::Argument(format!("f_star {} must be positive", self.f_star)));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::Argument(format!("b {} must be positive", self.b)));
        }
        for (name, v) in [
            ("kappa", self.kappa),
            ("eps_max", self.eps_max),
            ("nu_max", self.nu_max),
            ("e0", self.e0),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{name} {v} must be nonnegative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    pub beta: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub contractive: bool,
    pub denominator_positive: bool,
}

impl TheoremConstants {
    pub fn is_valid(&self) -> bool {
        self.denominator_positive && self.contractive
    }

    /// `C1 √q + C2 ε_max + C3 ν_max`.
    pub fn steady_state(&self, inputs: &TheoremInputs) -> f64 {
        self.c1 * (inputs.q as f64).sqrt() + self.c2 * inputs.eps_max + self.c3 * inputs.nu_max
    }
}

pub fn theorem_constants(inputs: &TheoremInputs) -> Result<TheoremConstants> {
    inputs.validate()?;
    let TheoremInputs {
        delta,
        kappa,
        gamma,
        f_star,
        ..
    } = *inputs;
    let beta = kappa * f_star / (1.0 + kappa - delta);
    let denom = 1.0 + kappa - delta - kappa * f_star;
    if denom <= 0.0 {
        return Ok(TheoremConstants {
            beta,
            c1: f64::NAN,
            c2: f64::NAN,
            c3: f64::NAN,
            contractive: false,
            denominator_positive: false,
        });
    }
    Ok(TheoremConstants {
        beta,
        c1: (1.0 + delta) * (1.0 + kappa) * gamma / denom,
        c2: (1.0 + delta).sqrt() / denom,
        c3: kappa / denom,
        contractive: beta < 1.0,
        denominator_positive: true,
    })
}

/// `βⁿ ‖e_0‖ + (1 − βⁿ)(C1 √q + C2 ε_max + C3 ν_max)`.
pub fn error_bound_at(n: usize, inputs: &TheoremInputs, constants: &TheoremConstants) -> Result<f64> {
    if !constants.is_valid() {
        return Err(Error::State(
            "bound constants are invalid (non-positive denominator or beta >= 1)".into(),
        ));
    }
    let bn = match i32::try_from(n) {
        Ok(n) => constants.beta.powi(n),
        Err(_) => 0.0,
    };
    Ok(bn * inputs.e0 + (1.0 - bn) * constants.steady_state(inputs))
}

/// Strict upper bound on κ for `f* > 1`; `None` means unbounded.
pub fn kappa_admissible_max(delta: f64, f_star: f64) -> Option<f64> {
    (f_star > 1.0).then(|| (1.0 - delta) / (f_star - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Check {
    pub lhs: f64,
    pub rhs: f64,
    pub feasible: bool,
}

/// Shrinkage factor `1 − (|ζ_κ(1+κ) − 1| + ζ_κ δ)/(1+κ)` with `ζ_κ = ζ/(1+κ)`.
fn lemma1_factor(inputs: &TheoremInputs, step: f64) -> f64 {
    let zk = step / (1.0 + inputs.kappa);
    1.0 - ((zk * (1.0 + inputs.kappa) - 1.0).abs() + zk * inputs.delta) / (1.0 + inputs.kappa)
}

fn lemma1_lhs(inputs: &TheoremInputs, step: f64) -> f64 {
    let TheoremInputs {
        delta,
        kappa,
        f_star,
        b,
        eps_max,
        nu_max,
        ..
    } = *inputs;
    let zk = step / (1.0 + kappa);
    zk * (kappa + kappa * f_star + 1.0 + delta) * b
        + zk * (1.0 + delta).sqrt() * eps_max
        + zk * kappa * nu_max
}

/// Evaluates both sides of the per-iteration support-size condition.
/// Infeasible whenever `γ ≤ 0` or `q = 0`.
pub fn lemma1_feasible(inputs: &TheoremInputs, step: f64) -> Lemma1Check {
    let lhs = lemma1_lhs(inputs, step);
    let rhs = lemma1_factor(inputs, step) * inputs.gamma * (inputs.q as f64).sqrt();
    Lemma1Check {
        lhs,
        rhs,
        feasible: inputs.gamma > 0.0 && inputs.q > 0 && lhs <= rhs,
    }
}

/// Smallest `γ` for which [`lemma1_feasible`] holds, if any.
pub fn lemma1_min_gamma(inputs: &TheoremInputs, step: f64) -> Option<f64> {
    let factor = lemma1_factor(inputs, step);
    if inputs.q == 0 || factor <= 0.0 {
        return None;
    }
    Some(lemma1_lhs(inputs, step) / (factor * (inputs.q as f64).sqrt()))
}

/// Extreme eigenvalues of `k × k` Gram submatrices of `ΦW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RipEstimate {
    pub k: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Midpoint scale `c`.
    pub scale: f64,
    /// `δ` with respect to the fitted scale.
    pub delta: f64,
    /// `δ` with the scale pinned to 1: `max(λ_max − 1, 1 − λ_min)`.
    pub delta_unit: f64,
    pub subsets: u64,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Advances `idx` to the next combination of `k` indices below `n`.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Brute-force RIP constant of `ΦW` over all `k`-column subsets, with the
/// default enumeration cap.
pub fn brute_force_rip(phi: ArrayView2<f64>, w: ArrayView2<f64>, k: usize) -> Result<RipEstimate> {
    brute_force_rip_capped(phi, w, k, DEFAULT_SUBSET_CAP)
}

pub fn brute_force_rip_capped(
    phi: ArrayView2<f64>,
    w: ArrayView2<f64>,
    k: usize,
    cap: u128,
) -> Result<RipEstimate> {
    if phi.ncols() != w.nrows() {
        return Err(Error::Dimension(format!(
            "Phi has {} columns but W has {} rows",
            phi.ncols(),
            w.nrows()
        )));
    }
    let n = w.ncols();
    if k == 0 || k > n {
        return Err(Error::Argument(format!("sparsity {k} must lie in 1..={n}")));
    }
    let count = binomial(n, k);
    if count > cap {
        return Err(Error::Capacity(format!(
            "C({n}, {k}) = {count} subsets exceeds the cap of {cap}; use fewer columns or a smaller k"
        )));
    }
    let a = phi.dot(&w);
    let gram = a.t().dot(&a);

    let (lo, hi) = (0..=n - k)
        .into_par_iter()
        .map(|first| {
            let mut rest: Vec<usize> = (first + 1..first + k).collect();
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut sub = Array2::zeros((k, k));
            loop {
                let idx = std::iter::once(first).chain(rest.iter().copied());
                for (r, i) in idx.clone().enumerate() {
                    for (c, j) in idx.clone().enumerate() {
                        sub[[r, c]] = gram[[i, j]];
                    }
                }
                let ev = linalg::symmetric_eigenvalues(sub.view());
                lo = lo.min(ev[0]);
                hi = hi.max(ev[k - 1]);
                // Shift the tail combination over first+1..n.
                if rest.is_empty() || !next_tail(&mut rest, first + 1, n) {
                    break;
                }
            }
            (lo, hi)
        })
        .reduce(
            || (f64::INFINITY, f64::NEG_INFINITY),
            |a, b| (a.0.min(b.0), a.1.max(b.1)),
        );
    let lo = lo.max(0.0);
    let scale = (hi + lo) / 2.0;
    Ok(RipEstimate {
        k,
        lambda_min: lo,
        lambda_max: hi,
        scale,
        delta: if scale > 0.0 { (hi - lo) / (hi + lo) } else { 1.0 },
        delta_unit: (hi - 1.0).max(1.0 - lo),
        subsets: count as u64,
    })
}

/// `next_combination` over the index range `offset..n`.
fn next_tail(rest: &mut [usize], offset: usize, n: usize) -> bool {
    for v in rest.iter_mut() {
        *v -= offset;
    }
    let more = next_combination(rest, n - offset);
    for v in rest.iter_mut() {
        *v += offset;
    }
    more
}

/// A fixed-operator sequence the verifier can replay.
pub struct BoundProblem {
    pub phi: DenseOperator,
    pub dictionary: Arc<dyn LinearOperator>,
    pub dynamics: Arc<dyn DynamicsModel>,
    /// True coefficients `z_0 … z_T`; frame 0 is the initial condition.
    pub truth: Vec<Array1<f64>>,
    /// `y_1 … y_T`.
    pub measurements: Vec<Array1<f64>>,
    /// Measurement noise realisations `ε_1 … ε_T`.
    pub noise: Vec<Array1<f64>>,
    /// Initial estimate `ẑ_0`.
    pub initial_estimate: Array1<f64>,
}

impl BoundProblem {
    pub fn num_frames(&self) -> usize {
        self.measurements.len()
    }

    pub fn eps_max(&self) -> f64 {
        self.noise
            .iter()
            .map(|e| linalg::norm(e.view()))
            .fold(0.0, f64::max)
    }

    /// Largest signal-domain innovation `‖x_n − f(x_{n−1})‖₂`.
    pub fn nu_max(&self) -> f64 {
        let w = self.dictionary.as_ref();
        (1..self.truth.len())
            .map(|n| {
                let prev = w.forward(self.truth[n - 1].view());
                let cur = w.forward(self.truth[n].view());
                linalg::norm((&cur - &self.dynamics.apply(prev.view(), n)).view())
            })
            .fold(0.0, f64::max)
    }

    pub fn max_coefficient_norm(&self) -> f64 {
        self.truth
            .iter()
            .map(|z| linalg::norm(z.view()))
            .fold(0.0, f64::max)
    }

    pub fn e0(&self) -> f64 {
        linalg::norm((&self.initial_estimate - &self.truth[0]).view())
    }
}

/// BPDN-DF settings used by the verifier.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundFilterConfig {
    pub gamma: f64,
    pub kappa: f64,
    /// Step `ζ` of the analysed iteration, used only in the feasibility check.
    pub analysis_step: f64,
    pub ista: IstaConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBound {
    pub frame: usize,
    pub empirical_error: f64,
    pub bound: Option<f64>,
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundFlags {
    pub delta_below_one: bool,
    pub denominator_positive: bool,
    pub contractive: bool,
    pub kappa_admissible: bool,
    pub lemma1_feasible: bool,
    /// `‖e_n‖ ≤ b` at every frame; checked after the run.
    pub errors_within_b: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub inputs: TheoremInputs,
    pub constants: TheoremConstants,
    pub lemma1: Lemma1Check,
    pub flags: BoundFlags,
    /// False when any precondition fails; no bound is then asserted.
    pub conditions_met: bool,
    pub frames: Vec<FrameBound>,
    pub bound_holds: Option<bool>,
    pub min_margin: Option<f64>,
}

impl BoundReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs BPDN-DF over `problem` and compares `‖ẑ_n − z_n‖₂` with the bound.
pub fn verify_bound_empirically(
    problem: &BoundProblem,
    filter: &BoundFilterConfig,
    inputs: &TheoremInputs,
) -> Result<BoundReport> {
    let constants = theorem_constants(inputs)?;
    let lemma1 = lemma1_feasible(inputs, filter.analysis_step);
    let kappa_admissible = kappa_admissible_max(inputs.delta, inputs.f_star)
        .is_none_or(|max| inputs.kappa < max);

    let w = problem.dictionary.as_ref();
    let mut state = FilterState::new(w.cols());
    state.previous_estimate = problem.initial_estimate.clone();
    let mut errors = vec![problem.e0()];
    for (i, y) in problem.measurements.iter().enumerate() {
        let n = i + 1;
        let (z, next, _) = bpdn_df_step(
            &state,
            n,
            y.view(),
            &problem.phi,
            w,
            problem.dynamics.as_ref(),
            filter.gamma,
            filter.kappa,
            &filter.ista,
        )?;
        errors.push(linalg::norm((&z - &problem.truth[n]).view()));
        state = next;
    }

    let flags = BoundFlags {
        delta_below_one: inputs.delta < 1.0,
        denominator_positive: constants.denominator_positive,
        contractive: constants.contractive,
        kappa_admissible,
        lemma1_feasible: lemma1.feasible,
        errors_within_b: errors.iter().all(|e| *e <= inputs.b),
    };
    let conditions_met = flags.delta_below_one
        && flags.denominator_positive
        && flags.contractive
        && flags.kappa_admissible
        && flags.lemma1_feasible
        && flags.errors_within_b;

    let frames: Vec<FrameBound> = errors
        .iter()
        .enumerate()
        .map(|(n, &e)| {
            let bound = if conditions_met {
                error_bound_at(n, inputs, &constants).ok()
            } else {
                None
            };
            FrameBound {
                frame: n,
                empirical_error: e,
                bound,
                margin: bound.map(|b| b - e),
            }
        })
        .collect();
    let min_margin = frames
        .iter()
        .filter_map(|f| f.margin)
        .reduce(f64::min);
    Ok(BoundReport {
        inputs: *inputs,
        constants,
        lemma1,
        flags,
        conditions_met,
        bound_holds: min_margin.map(|m| m >= 0.0),
        min_margin,
        frames,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmallDynamics {
    Identity,
    Scaled { rho: f64 },
}

/// Recipe for a small instance that meets the bound's preconditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallInstanceConfig {
    pub num_measurements: usize,
    pub dim: usize,
    pub sparsity: usize,
    pub q: usize,
    pub num_frames: usize,
    pub dynamics: SmallDynamics,
    pub noise_var: f64,
    /// Standard deviation of the on-support innovation entries.
    pub innovation_sd: f64,
    pub kappa: f64,
    /// `γ` is this multiple of the smallest feasible value.
    pub gamma_factor: f64,
    /// Overrides the derived `γ` when set.
    pub gamma: Option<f64>,
    pub shrink_rule: ShrinkRule,
    pub seed: u64,
}

impl Default for SmallInstanceConfig {
    fn default() -> Self {
        Self {
            num_measurements: 44,
            dim: 24,
            sparsity: 2,
            q: 2,
            num_frames: 30,
            dynamics: SmallDynamics::Identity,
            noise_var: 1e-4,
            innovation_sd: 0.05,
            kappa: 0.5,
            gamma_factor: 1.1,
            gamma: None,
            shrink_rule: ShrinkRule::Proximal,
            seed: 0,
        }
    }
}

/// A generated instance together with the derived bound inputs.
pub struct SmallInstance {
    pub problem: BoundProblem,
    pub rip: RipEstimate,
    pub inputs: TheoremInputs,
    pub filter: BoundFilterConfig,
}

/// Draws `Φ`, rescales it so the fitted RIP scale is 1 on `S + 2q`
/// columns, and simulates a sparse sequence under the chosen dynamics.
pub fn build_small_instance(cfg: &SmallInstanceConfig) -> Result<SmallInstance> {
    if cfg.sparsity == 0 || cfg.sparsity > cfg.dim || cfg.num_frames == 0 {
        return Err(Error::Argument("need 1 <= sparsity <= dim and at least one frame".into()));
    }
    if !(cfg.gamma_factor >= 1.0) {
        return Err(Error::Argument("gamma_factor must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let raw = gaussian_measurement(cfg.num_measurements, cfg.dim, &mut rng)?;
    let k = (cfg.sparsity + 2 * cfg.q).min(cfg.dim);
    let eye = Array2::eye(cfg.dim);
    let rip0 = brute_force_rip(raw.matrix().view(), eye.view(), k)?;
    let phi = DenseOperator::new(raw.matrix() / rip0.scale.sqrt())?;
    let rip = brute_force_rip(phi.matrix().view(), eye.view(), k)?;

    let (dynamics, f_star): (Arc<dyn DynamicsModel>, f64) = match cfg.dynamics {
        SmallDynamics::Identity => (Arc::new(IdentityDynamics), 1.0),
        SmallDynamics::Scaled { rho } => {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(Error::Argument(format!("rho {rho} must be positive")));
            }
            (Arc::new(ScaledDynamics { rho }), rho)
        }
    };

    let support = rand::seq::index::sample(&mut rng, cfg.dim, cfg.sparsity).into_vec();
    let mut z = Array1::<f64>::zeros(cfg.dim);
    for &i in &support {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        z[i] = sign * rng.random_range(0.5..1.5);
    }
    let mut truth = vec![z];
    let mut measurements = Vec::with_capacity(cfg.num_frames);
    let mut noise = Vec::with_capacity(cfg.num_frames);
    let sd = cfg.noise_var.sqrt();
    for n in 1..=cfg.num_frames {
        let mut next = dynamics.apply(truth[n - 1].view(), n);
        for &i in &support {
            let v: f64 = rng.sample(StandardNormal);
            next[i] += cfg.innovation_sd * v;
        }
        let eps: Array1<f64> = (0..cfg.num_measurements)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        measurements.push(phi.forward(next.view()) + &eps);
        noise.push(eps);
        truth.push(next);
    }

    let problem = BoundProblem {
        phi,
        dictionary: crate::filters::identity_dictionary(cfg.dim),
        dynamics,
        truth,
        measurements,
        noise,
        initial_estimate: Array1::zeros(cfg.dim),
    };
    let analysis_step = 1.0 / (1.0 + rip.delta_unit);
    let mut inputs = TheoremInputs {
        delta: rip.delta_unit.min(1.0 - f64::EPSILON),
        kappa: cfg.kappa,
        gamma: 1.0,
        f_star,
        q: cfg.q,
        b: 2.0 * problem.max_coefficient_norm(),
        eps_max: problem.eps_max(),
        nu_max: problem.nu_max(),
        e0: problem.e0(),
    };
    inputs.gamma = match cfg.gamma {
        Some(g) => g,
        None => {
            cfg.gamma_factor
                * lemma1_min_gamma(&inputs, analysis_step).ok_or_else(|| {
                    Error::State("no feasible gamma for this instance".into())
                })?
        }
    };
    let filter = BoundFilterConfig {
        gamma: inputs.gamma,
        kappa: cfg.kappa,
        analysis_step,
        ista: IstaConfig {
            max_iters: 20_000,
            rel_tol: 1e-10,
            shrink_rule: cfg.shrink_rule,
            ..IstaConfig::default()
        },
    };
    Ok(SmallInstance {
        problem,
        rip,
        inputs,
        filter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn base() -> TheoremInputs {
        TheoremInputs {
            delta: 0.1,
            kappa: 0.5,
            gamma: 1.0,
            f_star: 1.0,
            q: 4,
            b: 1.0,
            eps_max: 0.1,
            nu_max: 0.2,
            e0: 3.0,
        }
    }

    #[test]
    fn constants_by_hand() {
        let c = theorem_constants(&base()).unwrap();
        assert_abs_diff_eq!(c.beta, 0.5 / 1.4, epsilon = 1e-15);
        assert_abs_diff_eq!(c.c2, 1.1f64.sqrt() / 0.9, epsilon = 1e-14);
        assert!(c.is_valid());
    }

    #[test]
    fn kappa_zero_is_static_form() {
        let inputs = TheoremInputs { kappa: 0.0, ..base() };
        let c = theorem_constants(&inputs).unwrap();
        assert_eq!(c.beta, 0.0);
        assert_eq!(c.c3, 0.0);
        assert_abs_diff_eq!(c.c1, 1.1 / 0.9, epsilon = 1e-14);
    }

    #[test]
    fn boundary_kappa_gives_unit_beta() {
        let delta = 0.2;
        let f_star = 1.5;
        let kappa = kappa_admissible_max(delta, f_star).unwrap();
        let c = theorem_constants(&TheoremInputs {
            delta,
            kappa,
            f_star,
            ..base()
        })
        .unwrap();
        assert_abs_diff_eq!(c.beta, 1.0, epsilon = 1e-14);
        assert!(!c.contractive);
    }

    #[test]
    fn kappa_ceiling_examples() {
        assert_eq!(kappa_admissible_max(0.0, 2.0), Some(1.0));
        assert_eq!(kappa_admissible_max(0.3, 1.0), None);
        assert_abs_diff_eq!(kappa_admissible_max(0.25, 1.5).unwrap(), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn negative_denominator_marks_invalid() {
        let inputs = TheoremInputs {
            delta: 0.5,
            kappa: 2.0,
            f_star: 2.0,
            ..base()
        };
        let c = theorem_constants(&inputs).unwrap();
        assert!(!c.denominator_positive && !c.contractive);
        assert!(matches!(error_bound_at(1, &inputs, &c), Err(Error::State(_))));
    }

    #[test]
    fn bound_endpoints() {
        let inputs = base();
        let c = theorem_constants(&inputs).unwrap();
        assert_eq!(error_bound_at(0, &inputs, &c).unwrap(), 3.0);
        let ss = c.steady_state(&inputs);
        let far = error_bound_at(1_000_000, &inputs, &c).unwrap();
        assert!((far - ss).abs() / ss < 1e-12);
    }

    #[test]
    fn lemma_examples() {
        let zero_gamma = TheoremInputs { gamma: f64::MIN_POSITIVE, ..base() };
        assert!(!lemma1_feasible(&zero_gamma, 1.0 / 1.1).feasible);
        let quiet = TheoremInputs {
            b: f64::MIN_POSITIVE,
            eps_max: 0.0,
            nu_max: 0.0,
            ..base()
        };
        assert!(lemma1_feasible(&quiet, 1.0 / 1.1).feasible);

        let step = 1.0 / 1.1;
        let g = lemma1_min_gamma(&base(), step).unwrap();
        let ok = TheoremInputs { gamma: 1.01 * g, ..base() };
        assert!(lemma1_feasible(&ok, step).feasible);
        let scaled = TheoremInputs { b: 100.0 * ok.b, ..ok };
        assert!(!lemma1_feasible(&scaled, step).feasible);
    }

    #[test]
    fn rip_of_diagonal() {
        let phi = array![[2f64.sqrt(), 0.0], [0.0, 0.5f64.sqrt()]];
        let r = brute_force_rip(phi.view(), Array2::eye(2).view(), 1).unwrap();
        assert_abs_diff_eq!(r.scale, 1.25, epsilon = 1e-12);
        assert_abs_diff_eq!(r.delta, 0.6, epsilon = 1e-12);
        let r = brute_force_rip(Array2::eye(5).view(), Array2::eye(5).view(), 3).unwrap();
        assert_abs_diff_eq!(r.delta, 0.0, epsilon = 1e-12);
        assert_eq!(r.subsets, 10);
    }

    #[test]
    fn rip_cap_is_enforced() {
        let phi = Array2::<f64>::eye(30);
        let err = brute_force_rip_capped(phi.view(), Array2::eye(30).view(), 5, 1000);
        assert!(matches!(err, Err(Error::Capacity(_))));
    }

    #[test]
    fn combinations_enumerate_all() {
        let mut idx = vec![0, 1, 2];
        let mut count = 1;
        while next_combination(&mut idx, 6) {
            count += 1;
        }
        assert_eq!(count, 20);
        assert_eq!(binomial(24, 6), 134_596);
    }

    #[test]
    fn small_instance_meets_conditions() {
        let inst = build_small_instance(&SmallInstanceConfig {
            num_frames: 10,
            ..Default::default()
        })
        .unwrap();
        assert_abs_diff_eq!(inst.rip.scale, 1.0, epsilon = 1e-9);
        let report = verify_bound_empirically(&inst.problem, &inst.filter, &inst.inputs).unwrap();
        assert!(report.conditions_met, "{:?}", report.flags);
        assert_eq!(report.bound_holds, Some(true));
        assert_eq!(report.frames.len(), 11);
    }

    #[test]
    fn unmet_conditions_are_flagged() {
        let inst = build_small_instance(&SmallInstanceConfig {
            num_frames: 3,
            gamma: Some(1e-6),
            ..Default::default()
        })
        .unwrap();
        let report = verify_bound_empirically(&inst.problem, &inst.filter, &inst.inputs).unwrap();
        assert!(!report.conditions_met);
        assert!(report.frames.iter().all(|f| f.bound.is_none()));
        assert_eq!(report.bound_holds, None);
    }
}
