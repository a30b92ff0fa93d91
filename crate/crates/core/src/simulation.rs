//! Stylized tracking scenario: `S` bright pixels moving with constant
//! velocity on a toroidal grid, abruptly changing direction with
//! probability `p` per frame.

use std::collections::HashSet;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::filters::DynamicsModel;
use crate::operators::LinearOperator;

/// The eight unit moves; the zero move is never a velocity.
const VELOCITIES: [(i32, i32); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Random redraws tried before a blocked target falls back to a scan.
const COLLISION_RETRIES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub grid_side: usize,
    pub num_targets: usize,
    pub change_prob: f64,
    pub num_frames: usize,
    pub num_measurements: usize,
    pub noise_var: f64,
    pub amplitude_range: (f64, f64),
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            grid_side: 24,
            num_targets: 20,
            change_prob: 0.25,
            num_frames: 100,
            num_measurements: 80,
            noise_var: 0.001,
            amplitude_range: (0.5, 1.5),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn signal_dim(&self) -> usize {
        self.grid_side * self.grid_side
    }

    /// Expected number of innovation nonzeros per frame, `2 S p`.
    pub fn innovation_sparsity(&self) -> f64 {
        2.0 * self.num_targets as f64 * self.change_prob
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.signal_dim();
        if self.grid_side == 0 || self.num_targets == 0 || self.num_frames == 0 {
            return Err(Error::Argument(
                "grid_side, num_targets and num_frames must be positive".into(),
            ));
        }
        if self.num_targets > n {
            return Err(Error::Capacity(format!(
                "{} targets do not fit on a {}x{} grid",
                self.num_targets, self.grid_side, self.grid_side
            )));
        }
        if self.num_measurements == 0 || self.num_measurements > n {
            return Err(Error::Argument(format!(
                "num_measurements must lie in 1..={n}, got {}",
                self.num_measurements
            )));
        }
        if !(0.0..=0.5).contains(&self.change_prob) {
            return Err(Error::Argument(format!(
                "change_prob {} must lie in [0, 0.5]",
                self.change_prob
            )));
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::Argument(format!(
                "noise_var {} must be nonnegative",
                self.noise_var
            )));
        }
        let (lo, hi) = self.amplitude_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Argument(format!(
                "amplitude range ({lo}, {hi}) must be positive and ordered"
            )));
        }
        Ok(())
    }
}

/// Known constant-motion map. Frame `n ≥ 1` relocates the value at each
/// source cell to its destination and zeroes every other cell; frame 0 is the
/// identity. Destinations are distinct, so the map never increases norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantMotion {
    dim: usize,
    /// `moves[n − 1]` holds the `(source, destination)` pairs of frame `n`.
    moves: Vec<Vec<(usize, usize)>>,
}

impl ConstantMotion {
    pub fn moves(&self, n: usize) -> Option<&[(usize, usize)]> {
        if n == 0 {
            None
        } else {
            self.moves.get(n - 1).map(|m| m.as_slice())
        }
    }
}

impl DynamicsModel for ConstantMotion {
    fn apply(&self, x: ArrayView1<f64>, n: usize) -> Array1<f64> {
        match self.moves(n) {
            Some(moves) => {
                let mut out = Array1::zeros(x.len());
                for &(src, dst) in moves {
                    out[dst] = x[src];
                }
                out
            }
            None => x.to_owned(),
        }
    }

    fn smoothness_bound(&self) -> Option<f64> {
        Some(1.0)
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn matrix(&self, n: usize, dim: usize) -> Option<Array2<f64>> {
        if dim != self.dim {
            return None;
        }
        Some(match self.moves(n) {
            Some(moves) => {
                let mut f = Array2::zeros((dim, dim));
                for &(src, dst) in moves {
                    f[[dst, src]] = 1.0;
                }
                f
            }
            None => Array2::eye(dim),
        })
    }
}

/// Ground truth for one simulated video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingScenario {
    pub config: ScenarioConfig,
    /// `x_0 … x_{T−1}`.
    pub states: Vec<Array1<f64>>,
    /// `ν_n = x_n − F_n(x_{n−1})` for `n = 1 … T−1`.
    pub innovations: Vec<Array1<f64>>,
    pub dynamics: ConstantMotion,
    /// Sorted support of each state.
    pub supports: Vec<Vec<usize>>,
    /// Targets that changed direction at each frame `n = 1 … T−1`.
    pub direction_changes: Vec<usize>,
    /// Per-target velocity after each frame, for replay.
    pub velocities: Vec<Vec<(i32, i32)>>,
}

impl TrackingScenario {
    pub fn signal_dim(&self) -> usize {
        self.config.signal_dim()
    }

    pub fn num_frames(&self) -> usize {
        self.states.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn step_cell(cell: usize, v: (i32, i32), side: usize) -> usize {
    let s = side as i64;
    let r = (cell / side) as i64;
    let c = (cell % side) as i64;
    let r = (r + v.0 as i64).rem_euclid(s);
    let c = (c + v.1 as i64).rem_euclid(s);
    (r * s + c) as usize
}

fn random_velocity<R: Rng>(rng: &mut R) -> (i32, i32) {
    VELOCITIES[rng.random_range(0..VELOCITIES.len())]
}

/// Generates a scenario. Deterministic in `cfg.seed`.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<TrackingScenario> {
    cfg.validate()?;
    let side = cfg.grid_side;
    let n_cells = cfg.signal_dim();
    let s = cfg.num_targets;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut positions: Vec<usize> = index::sample(&mut rng, n_cells, s).into_vec();
    let (lo, hi) = cfg.amplitude_range;
    let amplitudes: Vec<f64> = (0..s)
        .map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo })
        .collect();
    let mut velocities: Vec<(i32, i32)> = (0..s).map(|_| random_velocity(&mut rng)).collect();

    let render = |positions: &[usize]| {
        let mut x = Array1::zeros(n_cells);
        for (&p, &a) in positions.iter().zip(&amplitudes) {
            x[p] = a;
        }
        x
    };

    let mut states = vec![render(&positions)];
    let mut innovations = Vec::with_capacity(cfg.num_frames.saturating_sub(1));
    let mut moves_all = Vec::with_capacity(cfg.num_frames.saturating_sub(1));
    let mut direction_changes = Vec::with_capacity(cfg.num_frames.saturating_sub(1));
    let mut velocity_log = vec![velocities.clone()];

    for _frame in 1..cfg.num_frames {
        let mut occupied: HashSet<usize> = HashSet::with_capacity(s);
        let mut next_positions = vec![0usize; s];
        let mut model_dest = vec![0usize; s];
        let mut changed = vec![false; s];

        for i in 0..s {
            let old_v = velocities[i];
            let mut v = old_v;
            if cfg.change_prob > 0.0 && rng.random_bool(cfg.change_prob) {
                changed[i] = true;
                loop {
                    v = random_velocity(&mut rng);
                    if v != old_v {
                        break;
                    }
                }
            }
            let mut dest = step_cell(positions[i], v, side);
            let mut retries = 0;
            while occupied.contains(&dest) && retries < COLLISION_RETRIES {
                v = random_velocity(&mut rng);
                dest = step_cell(positions[i], v, side);
                retries += 1;
            }
            if occupied.contains(&dest) {
                // Stay put for this frame and keep the velocity; failing that,
                // take the first free neighbouring cell.
                dest = std::iter::once(positions[i])
                    .chain(VELOCITIES.iter().map(|&u| step_cell(positions[i], u, side)))
                    .find(|c| !occupied.contains(c))
                    .ok_or_else(|| {
                        Error::Capacity(format!(
                            "target {i} is boxed in; use a sparser configuration"
                        ))
                    })?;
            } else {
                velocities[i] = v;
            }
            occupied.insert(dest);
            next_positions[i] = dest;
            // Collision handling is part of the known dynamics; only random
            // direction changes are model errors.
            model_dest[i] = if changed[i] {
                step_cell(positions[i], old_v, side)
            } else {
                dest
            };
        }

        // Realized (unchanged) moves claim their destination first; a changed
        // target whose predicted cell is already claimed is dropped from F_n.
        let mut claimed: HashSet<usize> = HashSet::with_capacity(s);
        let mut moves = Vec::with_capacity(s);
        for pass_changed in [false, true] {
            for i in (0..s).filter(|&i| changed[i] == pass_changed) {
                if claimed.insert(model_dest[i]) {
                    moves.push((positions[i], model_dest[i]));
                }
            }
        }
        moves.sort_unstable();

        let prev = states.last().expect("at least one state");
        let mut predicted = Array1::zeros(n_cells);
        for &(src, dst) in &moves {
            predicted[dst] = prev[src];
        }
        let next = render(&next_positions);
        innovations.push(&next - &predicted);
        states.push(next);
        moves_all.push(moves);
        direction_changes.push(changed.iter().filter(|c| **c).count());
        velocity_log.push(velocities.clone());
        positions = next_positions;
    }

    let supports = states
        .iter()
        .map(|x| {
            x.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    Ok(TrackingScenario {
        config: cfg.clone(),
        states,
        innovations,
        dynamics: ConstantMotion {
            dim: n_cells,
            moves: moves_all,
        },
        supports,
        direction_changes,
        velocities: velocity_log,
    })
}

/// `y = Φ x + ε` with `ε ~ N(0, noise_var I)`. Always consumes `rows` normal
/// draws so streams stay aligned across noise levels.
pub fn measure_frame<R: Rng + ?Sized>(
    x: ArrayView1<f64>,
    phi: &dyn LinearOperator,
    noise_var: f64,
    rng: &mut R,
) -> Result<Array1<f64>> {
    check_len("state", x.len(), phi.cols())?;
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::Argument(format!("noise_var {noise_var} must be nonnegative")));
    }
    let sd = noise_var.sqrt();
    let mut y = phi.forward(x);
    for v in y.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += sd * e;
    }
    Ok(y)
}
