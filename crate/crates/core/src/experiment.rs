//! Monte-Carlo experiment driver: trials, sweeps and presets for the
//! tracking study, plus the small-instance bound verification.

use std::collections::BTreeMap;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{
    identity_dictionary, BpdnDf, FrameInput, IndependentBpdn, IndependentRwl1, KalmanFilter,
    KalmanState, OracleLs, Rwl1Config, Rwl1Df, Rwl1DfConfig, StreamingFilter,
};
use crate::metrics::{self, TrialResult, DEFAULT_BURN_IN};
use crate::operators::{gaussian_measurement, DenseOperator};
use crate::simulation::{generate_scenario, measure_frame, ScenarioConfig, TrackingScenario};
use crate::solvers::IstaConfig;
use crate::theory::{build_small_instance, verify_bound_empirically, BoundReport, RipEstimate, SmallInstanceConfig};

pub const DEFAULT_TRIALS: usize = 40;
pub const DEFAULT_EM_REL_TOL: f64 = 1e-3;
pub const DEFAULT_EM_MAX_ITERS: usize = 25;

/// One algorithm and its hyperparameters. Unset values are derived from the
/// scenario (`σ²`, `p`, `S`) when the trial runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    /// `λ` defaults to `0.55 σ²`.
    Bpdn {
        #[serde(default)]
        lambda: Option<f64>,
    },
    /// Weights `2τ / (|z| + ν)`; defaults `λ0 = 0.0011`, `τ = 1`, `ν = 0.01`.
    Rwl1 {
        #[serde(default)]
        lambda0: Option<f64>,
        #[serde(default)]
        tau: Option<f64>,
        #[serde(default)]
        nu: Option<f64>,
    },
    /// `γ = 0.5 σ²` and `κ = 0.0007 / (p + 1)` by default.
    BpdnDf {
        #[serde(default)]
        gamma: Option<f64>,
        #[serde(default)]
        kappa: Option<f64>,
    },
    /// Weights `2τ / (β|z| + |f(ẑ)| + ν)`; defaults `λ0 = 0.0011`, `τ = 1`,
    /// `β = 1`, `ν = 1 − 2p/S`.
    Rwl1Df {
        #[serde(default)]
        lambda0: Option<f64>,
        #[serde(default)]
        tau: Option<f64>,
        #[serde(default)]
        beta: Option<f64>,
        #[serde(default)]
        nu: Option<f64>,
    },
    /// Signal-domain Kalman filter with `Q = q I`, `R = σ² I`.
    Kalman {
        #[serde(default)]
        q: Option<f64>,
    },
    OracleLs,
}

impl AlgorithmSpec {
    pub fn id(&self) -> &'static str {
        match self {
            AlgorithmSpec::Bpdn { .. } => "bpdn",
            AlgorithmSpec::Rwl1 { .. } => "rwl1",
            AlgorithmSpec::BpdnDf { .. } => "bpdn-df",
            AlgorithmSpec::Rwl1Df { .. } => "rwl1-df",
            AlgorithmSpec::Kalman { .. } => "kalman",
            AlgorithmSpec::OracleLs => "oracle-ls",
        }
    }

    /// Fills every unset parameter from the scenario.
    pub fn resolve(&self, scenario: &ScenarioConfig) -> AlgorithmSpec {
        let var = scenario.noise_var;
        let p = scenario.change_prob;
        let s = scenario.num_targets as f64;
        match *self {
            AlgorithmSpec::Bpdn { lambda } => AlgorithmSpec::Bpdn {
                lambda: Some(lambda.unwrap_or(0.55 * var)),
            },
            AlgorithmSpec::Rwl1 { lambda0, tau, nu } => AlgorithmSpec::Rwl1 {
                lambda0: Some(lambda0.unwrap_or(0.0011)),
                tau: Some(tau.unwrap_or(1.0)),
                nu: Some(nu.unwrap_or(0.01)),
            },
            AlgorithmSpec::BpdnDf { gamma, kappa } => AlgorithmSpec::BpdnDf {
                gamma: Some(gamma.unwrap_or(0.5 * var)),
                kappa: Some(kappa.unwrap_or(0.0007 / (p + 1.0))),
            },
            AlgorithmSpec::Rwl1Df {
                lambda0,
                tau,
                beta,
                nu,
            } => AlgorithmSpec::Rwl1Df {
                lambda0: Some(lambda0.unwrap_or(0.0011)),
                tau: Some(tau.unwrap_or(1.0)),
                beta: Some(beta.unwrap_or(1.0)),
                nu: Some(nu.unwrap_or(1.0 - 2.0 * p / s)),
            },
            AlgorithmSpec::Kalman { q } => AlgorithmSpec::Kalman {
                q: Some(q.unwrap_or(0.1)),
            },
            AlgorithmSpec::OracleLs => AlgorithmSpec::OracleLs,
        }
    }

    fn build(
        &self,
        scenario: &ScenarioConfig,
        em: &EmSettings,
        ista: &IstaConfig,
    ) -> Result<Box<dyn StreamingFilter>> {
        let dim = scenario.signal_dim();
        let dict = identity_dictionary(dim);
        let get = |v: Option<f64>| v.expect("resolved");
        Ok(match self.resolve(scenario) {
            AlgorithmSpec::Bpdn { lambda } => Box::new(IndependentBpdn {
                gamma: get(lambda),
                dictionary: dict,
                ista: ista.clone(),
            }),
            AlgorithmSpec::Rwl1 { lambda0, tau, nu } => {
                let config = Rwl1Config {
                    lambda0: get(lambda0),
                    beta: 2.0 * get(tau),
                    eta: get(nu),
                    em_rel_tol: em.rel_tol,
                    em_max_iters: em.max_iters,
                };
                config.validate()?;
                Box::new(IndependentRwl1 {
                    config,
                    dictionary: dict,
                    ista: ista.clone(),
                })
            }
            AlgorithmSpec::BpdnDf { gamma, kappa } => {
                Box::new(BpdnDf::new(get(gamma), get(kappa), dict, ista.clone()))
            }
            AlgorithmSpec::Rwl1Df {
                lambda0,
                tau,
                beta,
                nu,
            } => {
                let config = Rwl1DfConfig {
                    lambda0: get(lambda0),
                    tau: get(tau),
                    beta: get(beta),
                    eta: get(nu),
                    em_rel_tol: em.rel_tol,
                    em_max_iters: em.max_iters,
                };
                config.validate()?;
                Box::new(Rwl1Df::new(config, dict, ista.clone()))
            }
            AlgorithmSpec::Kalman { q } => Box::new(KalmanFilter {
                state: KalmanState::isotropic(
                    dim,
                    scenario.num_measurements,
                    get(q),
                    scenario.noise_var.max(f64::MIN_POSITIVE),
                )?,
            }),
            AlgorithmSpec::OracleLs => Box::new(OracleLs),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmSettings {
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl Default for EmSettings {
    fn default() -> Self {
        Self {
            rel_tol: DEFAULT_EM_REL_TOL,
            max_iters: DEFAULT_EM_MAX_ITERS,
        }
    }
}

/// ISTA limits shared by every algorithm of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub accelerated: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let d = IstaConfig::default();
        Self {
            max_iters: d.max_iters,
            rel_tol: d.rel_tol,
            accelerated: true,
        }
    }
}

impl SolverSettings {
    fn ista(&self) -> IstaConfig {
        IstaConfig {
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            accelerated: self.accelerated,
            ..IstaConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Number of measurements `M`.
    M,
    /// Expected innovation sparsity `2Sp`; sets `p = value / (2S)`.
    TwoSp,
    /// Direction-change probability `p`.
    P,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

impl Sweep {
    fn apply(&self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut cfg = base.clone();
        match self.parameter {
            SweepParameter::M => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::Argument(format!("M = {value} must be a positive integer")));
                }
                cfg.num_measurements = value as usize;
            }
            SweepParameter::TwoSp => cfg.change_prob = value / (2.0 * cfg.num_targets as f64),
            SweepParameter::P => cfg.change_prob = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Full description of an experiment, serialisable as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default = "default_trials")]
    pub num_trials: usize,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub master_seed: u64,
    /// Reuse one measurement matrix for every frame of a trial.
    #[serde(default)]
    pub fixed_phi: bool,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub em: EmSettings,
    #[serde(default)]
    pub solver: SolverSettings,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

pub const PRESETS: [&str; 3] = ["fig3a", "fig3b-sweep", "fig3c-sweep"];

impl ExperimentSpec {
    pub fn new(scenario: ScenarioConfig, algorithms: Vec<AlgorithmSpec>) -> Self {
        Self {
            scenario,
            algorithms,
            num_trials: DEFAULT_TRIALS,
            sweep: None,
            output_dir: None,
            master_seed: 0,
            fixed_phi: false,
            burn_in: DEFAULT_BURN_IN,
            em: EmSettings::default(),
            solver: SolverSettings::default(),
        }
    }

    /// Named parameter sets for the tracking study.
    ///
    /// * `fig3a`: `M = 80`, `N = 576`, `S = 20`, `p = 0.25`, `σ² = 0.001`.
    /// * `fig3b-sweep`: the same, sweeping `M ∈ {70, 90, 110, 130, 150}`.
    /// * `fig3c-sweep`: `M = 70`, sweeping `2Sp ∈ {2, 4, 6, 8}`.
    pub fn preset(name: &str) -> Result<Self> {
        let mut spec = Self::new(ScenarioConfig::default(), Self::standard_algorithms());
        match name {
            "fig3a" => {}
            "fig3b-sweep" => {
                spec.sweep = Some(Sweep {
                    parameter: SweepParameter::M,
                    values: vec![70.0, 90.0, 110.0, 130.0, 150.0],
                });
            }
            "fig3c-sweep" => {
                spec.scenario.num_measurements = 70;
                spec.sweep = Some(Sweep {
                    parameter: SweepParameter::TwoSp,
                    values: vec![2.0, 4.0, 6.0, 8.0],
                });
            }
            other => {
                return Err(Error::Argument(format!(
                    "unknown preset {other:?}; expected one of {PRESETS:?}"
                )))
            }
        }
        Ok(spec)
    }

    pub fn standard_algorithms() -> Vec<AlgorithmSpec> {
        vec![
            AlgorithmSpec::Bpdn { lambda: None },
            AlgorithmSpec::Rwl1 {
                lambda0: None,
                tau: None,
                nu: None,
            },
            AlgorithmSpec::BpdnDf {
                gamma: None,
                kappa: None,
            },
            AlgorithmSpec::Rwl1Df {
                lambda0: None,
                tau: None,
                beta: None,
                nu: None,
            },
            AlgorithmSpec::OracleLs,
        ]
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.algorithms.is_empty() {
            return Err(Error::Argument("at least one algorithm is required".into()));
        }
        if self.num_trials == 0 {
            return Err(Error::Argument("num_trials must be positive".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::Argument("sweep has no values".into()));
            }
            for &v in &sweep.values {
                sweep.apply(&self.scenario, v)?;
            }
        }
        Ok(())
    }
}

/// Per-trial generator: stream `trial` of a ChaCha8 generator keyed by the
/// master seed.
fn trial_rng(master_seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial as u64);
    rng
}

/// Runs every configured algorithm on one simulated trial. All algorithms
/// see the same `(Φ_n, y_n)` sequence.
pub fn run_trial(spec: &ExperimentSpec, trial: usize) -> Result<Vec<TrialResult>> {
    run_trial_with(spec, &spec.scenario, trial)
}

fn run_trial_with(spec: &ExperimentSpec, base: &ScenarioConfig, trial: usize) -> Result<Vec<TrialResult>> {
    let mut rng = trial_rng(spec.master_seed, trial);
    let scenario_seed: u64 = rng.random();
    let scenario = generate_scenario(&ScenarioConfig {
        seed: scenario_seed,
        ..base.clone()
    })?;
    let frames = draw_measurements(&scenario, spec.fixed_phi, &mut rng)?;
    let ista = spec.solver.ista();

    spec.algorithms
        .iter()
        .map(|alg| {
            let wrap = |frame: usize, e: Error| Error::Trial {
                trial,
                frame,
                algorithm: alg.id().to_string(),
                source: Box::new(e),
            };
            let mut filter = alg
                .build(&scenario.config, &spec.em, &ista)
                .map_err(|e| wrap(0, e))?;
            let mut rmse = Vec::with_capacity(frames.len());
            let mut em_iterations = Vec::with_capacity(frames.len());
            for (n, (phi, y)) in frames.iter().enumerate() {
                let input = FrameInput {
                    index: n,
                    y: y.view(),
                    phi,
                    dynamics: &scenario.dynamics,
                    support: Some(&scenario.supports[n]),
                };
                let out = filter.step(&input).map_err(|e| wrap(n, e))?;
                rmse.push(
                    metrics::rmse(scenario.states[n].view(), out.estimate.view())
                        .map_err(|e| wrap(n, e))?,
                );
                em_iterations.push(out.diagnostics.em_iterations);
            }
            Ok(TrialResult {
                algorithm_id: alg.id().to_string(),
                seed: scenario_seed,
                per_frame_rmse: rmse,
                em_iterations,
                config: serde_json::json!({
                    "trial": trial,
                    "scenario": scenario.config,
                    "algorithm": alg.resolve(&scenario.config),
                }),
            })
        })
        .collect()
}

fn draw_measurements(
    scenario: &TrackingScenario,
    fixed_phi: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(DenseOperator, Array1<f64>)>> {
    let cfg = &scenario.config;
    let mut fixed: Option<DenseOperator> = None;
    scenario
        .states
        .iter()
        .map(|x| {
            let phi = match (&fixed, fixed_phi) {
                (Some(phi), true) => phi.clone(),
                _ => {
                    let phi = gaussian_measurement(cfg.num_measurements, cfg.signal_dim(), rng)?;
                    if fixed_phi {
                        fixed = Some(phi.clone());
                    }
                    phi
                }
            };
            let y = measure_frame(x.view(), &phi, cfg.noise_var, rng)?;
            Ok((phi, y))
        })
        .collect()
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Argument(format!("cannot start {workers} workers: {e}")))
}

/// Runs `spec.num_trials` trials on `workers` threads (0 picks the rayon
/// default). Output is ordered by trial index whatever the worker count.
pub fn run_trials(spec: &ExperimentSpec, workers: usize) -> Result<Vec<Vec<TrialResult>>> {
    spec.validate()?;
    run_trials_on(spec, &spec.scenario, workers)
}

fn run_trials_on(
    spec: &ExperimentSpec,
    scenario: &ScenarioConfig,
    workers: usize,
) -> Result<Vec<Vec<TrialResult>>> {
    pool(workers)?.install(|| {
        (0..spec.num_trials)
            .into_par_iter()
            .map(|t| run_trial_with(spec, scenario, t))
            .collect()
    })
}

/// Steady-state mean rMSE per algorithm for each trial, then averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub mean: BTreeMap<String, f64>,
    pub per_trial: BTreeMap<String, Vec<f64>>,
}

pub fn steady_state(trials: &[Vec<TrialResult>], burn_in: usize) -> Result<SteadyState> {
    let mut per_trial: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for trial in trials {
        for r in trial {
            per_trial
                .entry(r.algorithm_id.clone())
                .or_default()
                .push(r.steady_state(burn_in)?);
        }
    }
    let mean = per_trial
        .iter()
        .map(|(k, v)| (k.clone(), metrics::mean(v)))
        .collect();
    Ok(SteadyState { mean, per_trial })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub scenario: ScenarioConfig,
    pub steady_state: SteadyState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub parameter: SweepParameter,
    pub points: Vec<SweepPoint>,
}

impl SweepSummary {
    /// Mean steady-state rMSE of `algorithm` at each sweep value.
    pub fn series(&self, algorithm: &str) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| p.steady_state.mean.get(algorithm).copied().unwrap_or(f64::NAN))
            .collect()
    }
}

/// Runs `num_trials` trials at every sweep value. Trial `t` uses the same
/// random stream at every value.
pub fn run_sweep(spec: &ExperimentSpec, workers: usize) -> Result<SweepSummary> {
    let sweep = spec
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Argument("the experiment has no sweep".into()))?;
    spec.validate()?;
    let points = sweep
        .values
        .iter()
        .map(|&value| {
            let scenario = sweep.apply(&spec.scenario, value)?;
            let trials = run_trials_on(spec, &scenario, workers)?;
            Ok(SweepPoint {
                value,
                steady_state: steady_state(&trials, spec.burn_in)?,
                scenario,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepSummary {
        parameter: sweep.parameter,
        points,
    })
}

/// Per-frame EM iteration counts of every EM-based algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceProfile {
    /// `counts[alg][trial][frame]`.
    pub counts: BTreeMap<String, Vec<Vec<usize>>>,
    pub median: BTreeMap<String, f64>,
    pub mean: BTreeMap<String, f64>,
}

pub fn convergence_profile(trials: &[Vec<TrialResult>]) -> ConvergenceProfile {
    let mut counts: BTreeMap<String, Vec<Vec<usize>>> = BTreeMap::new();
    for trial in trials {
        for r in trial {
            if r.em_iterations.iter().any(|&c| c > 0) {
                counts
                    .entry(r.algorithm_id.clone())
                    .or_default()
                    .push(r.em_iterations.clone());
            }
        }
    }
    let pooled = |v: &Vec<Vec<usize>>| -> Vec<f64> { v.iter().flatten().map(|&c| c as f64).collect() };
    let median = counts
        .iter()
        .map(|(k, v)| (k.clone(), metrics::median(&pooled(v))))
        .collect();
    let mean = counts
        .iter()
        .map(|(k, v)| (k.clone(), metrics::mean(&pooled(v))))
        .collect();
    ConvergenceProfile { counts, median, mean }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremRun {
    pub instance: SmallInstanceConfig,
    pub rip: RipEstimate,
    pub report: BoundReport,
}

/// Builds the small instance and checks the bound frame by frame.
pub fn verify_theorem(cfg: &SmallInstanceConfig) -> Result<TheoremRun> {
    let inst = build_small_instance(cfg)?;
    let report = verify_bound_empirically(&inst.problem, &inst.filter, &inst.inputs)?;
    Ok(TheoremRun {
        instance: cfg.clone(),
        rip: inst.rip,
        report,
    })
}
