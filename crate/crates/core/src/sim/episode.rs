//! One closed-loop run: sequencer, event-triggered law, plant and noise.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{step_rk4, Plant, SimError};
use crate::controller::{
    compute_trigger_radius, Actuation, ControllerError, ControllerState, TriggerCause,
    TriggerConfig, TriggerEvent,
};
use crate::funnel::Synthesis;
use crate::sequencer::{init_sequencer, HybridState, Jump, SequencerConfig, SequencerError};
use crate::stl::{monitor_sequential_with, Semantics, SequentialFormula, Signal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Time simulated after the last task is done and its window has closed.
    pub tail: f64,
    pub seed: u64,
    /// Scalar gain `k` in `u = -k eps g^T grad rho`.
    pub gain: f64,
    pub trigger: TriggerConfig,
    pub sequencer: SequencerConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            horizon: 100.0,
            tail: 0.0,
            seed: 0,
            gain: 1.0,
            trigger: TriggerConfig::default(),
            sequencer: SequencerConfig::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon = {} must be finite and >= 0", self.horizon));
        }
        if !(self.tail >= 0.0 && self.tail.is_finite()) {
            return bad(format!("tail = {} must be finite and >= 0", self.tail));
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return bad(format!("gain = {} must be positive", self.gain));
        }
        self.trigger
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    /// Every task done and the run reached its end time.
    Completed,
    FunnelViolation { t: f64, mode: usize, rho: f64, xi: f64 },
    TaskFailure { t: f64, error: SequencerError },
    SynthesisFailure { t: f64, error: SequencerError },
    TriggerFailure { t: f64, error: ControllerError },
    HorizonReached,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Completed => "completed",
            Outcome::FunnelViolation { .. } => "funnel_violation",
            Outcome::TaskFailure { .. } => "task_failure",
            Outcome::SynthesisFailure { .. } => "synthesis_failure",
            Outcome::TriggerFailure { .. } => "trigger_failure",
            Outcome::HorizonReached => "horizon_reached",
        }
    }

    pub fn time(&self) -> Option<f64> {
        match *self {
            Outcome::FunnelViolation { t, .. }
            | Outcome::TaskFailure { t, .. }
            | Outcome::SynthesisFailure { t, .. }
            | Outcome::TriggerFailure { t, .. } => Some(t),
            _ => None,
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::FunnelViolation { t, mode, rho, xi } => write!(
                f,
                "funnel violated in mode {mode} at t = {t}: rho = {rho}, xi = {xi}"
            ),
            Outcome::TaskFailure { error, .. } | Outcome::SynthesisFailure { error, .. } => {
                write!(f, "{error}")
            }
            Outcome::TriggerFailure { error, .. } => write!(f, "{error}"),
            other => f.write_str(other.label()),
        }
    }
}

/// Sampled closed-loop data, one row per sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub dt: f64,
    pub dim: usize,
    pub input_dim: usize,
    pub times: Vec<f64>,
    /// Row-major, `dim` per sample.
    pub states: Vec<f64>,
    /// Held input, `input_dim` per sample.
    pub inputs: Vec<f64>,
    /// Smoothed robustness of the active task.
    pub rho: Vec<f64>,
    pub gamma: Vec<f64>,
    pub rho_max: Vec<f64>,
    pub mode: Vec<usize>,
    /// `||u(x, t) - u_held||_inf`
    pub law_gap: Vec<f64>,
}

impl Trajectory {
    fn new(dt: f64, dim: usize, input_dim: usize) -> Self {
        Self {
            dt,
            dim,
            input_dim,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn input(&self, k: usize) -> &[f64] {
        &self.inputs[k * self.input_dim..(k + 1) * self.input_dim]
    }

    pub fn signal(&self) -> Signal<'_> {
        Signal::new(&self.times, &self.states, self.dim)
    }

    /// Distance of `rho` to the nearer funnel boundary at sample `k`.
    pub fn funnel_margin(&self, k: usize) -> f64 {
        let upper = self.rho_max[k] - self.rho[k];
        let lower = self.rho[k] - (self.rho_max[k] - self.gamma[k]);
        upper.min(lower)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub samples: usize,
    pub triggers: usize,
    /// `1 - triggers / samples`
    pub reduction: f64,
    pub satisfied: bool,
    /// Exact robustness of the whole formula at time zero; NaN if the
    /// trajectory does not cover every window.
    pub rho_theta: f64,
    pub rho_theta_smooth: f64,
    pub min_funnel_margin: f64,
    pub max_law_gap: f64,
    /// Samples with `||u - u_held||_inf > delta_u`.
    pub law_gap_violations: usize,
    pub min_inter_event: f64,
    pub min_delta: f64,
    /// Smallest eigenvalue of `g g^T` over the initial state and event states.
    pub min_gram_eigenvalue: f64,
    pub duration: f64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub outcome: Outcome,
    pub trajectory: Trajectory,
    pub events: Vec<TriggerEvent>,
    pub jumps: Vec<Jump>,
    pub syntheses: Vec<Synthesis>,
    pub metrics: RunMetrics,
}

impl EpisodeResult {
    /// Completed, satisfied, and no sample broke the funnel, the input bound
    /// or the actuation rank check.
    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Completed
            && self.metrics.satisfied
            && self.metrics.law_gap_violations == 0
            && self.metrics.min_funnel_margin > 0.0
            && self.metrics.min_gram_eigenvalue > 0.0
    }
}

fn time_tol(t: f64) -> f64 {
    1e-9 * t.abs().max(1.0)
}

struct Runner<'a> {
    plant: &'a Plant,
    cfg: &'a EpisodeConfig,
    traj: Trajectory,
    events: Vec<TriggerEvent>,
    cs: ControllerState,
    gram_min: f64,
    grad: Vec<f64>,
}

impl Runner<'_> {
    fn log(&mut self, z: &HybridState, x: &[f64], t: f64, gap: f64) {
        let psi = z.active_psi();
        let fp = z.funnel();
        let tf = z.funnel_time(t);
        self.traj.times.push(t);
        self.traj.states.extend_from_slice(x);
        self.traj.inputs.extend_from_slice(self.cs.held_input());
        self.traj
            .rho
            .push(psi.smooth_value(x, &self.cfg.sequencer.smoothing));
        self.traj.gamma.push(fp.gamma(tf));
        self.traj.rho_max.push(fp.rho_max);
        self.traj.mode.push(z.q);
        self.traj.law_gap.push(gap);
    }

    fn trigger(
        &mut self,
        z: &HybridState,
        x: &[f64],
        t: f64,
        cause: TriggerCause,
    ) -> Result<(), ControllerError> {
        let law = z.control_law(self.cfg.sequencer.smoothing, self.cfg.gain);
        let tf = z.funnel_time(t);
        let u = law.eval(self.plant, x, tf)?;
        let radius = compute_trigger_radius(&law, self.plant, x, tf, &self.cfg.trigger)?;
        let ev = self.cs.record(t, x, u, radius, cause).clone();
        self.events.push(ev);
        self.gram_min = self.gram_min.min(self.plant.min_gram_eigenvalue(x));
        Ok(())
    }

    fn law_gap(&mut self, z: &HybridState, x: &[f64], t: f64) -> Result<f64, ControllerError> {
        let law = z.control_law(self.cfg.sequencer.smoothing, self.cfg.gain);
        let mut u = vec![0.0; self.plant.input_dim()];
        law.eval_into(self.plant, x, z.funnel_time(t), &mut self.grad, &mut u)?;
        Ok(u
            .iter()
            .zip(self.cs.held_input())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Runs one episode from `x0`. Errors only on invalid configuration; every
/// runtime failure is reported through [`Outcome`] with the trajectory so far.
pub fn run_episode(
    theta: &SequentialFormula,
    plant: &Plant,
    x0: &[f64],
    cfg: &EpisodeConfig,
) -> Result<EpisodeResult, SimError> {
    let started = Instant::now();
    cfg.validate()?;
    let n = plant.state_dim();
    if x0.len() != n {
        return Err(SimError::Config(format!(
            "initial state has {} components, plant expects {n}",
            x0.len()
        )));
    }
    theta
        .check_dimension(n)
        .map_err(|e| SimError::Config(e.to_string()))?;

    let mut run = Runner {
        plant,
        cfg,
        traj: Trajectory::new(cfg.dt, n, plant.input_dim()),
        events: Vec::new(),
        cs: ControllerState::new(),
        gram_min: plant.min_gram_eigenvalue(x0),
        grad: vec![0.0; n],
    };
    let mut z = match init_sequencer(theta, x0, &cfg.sequencer) {
        Ok(z) => z,
        Err(error) => {
            let outcome = Outcome::SynthesisFailure { t: 0.0, error };
            return Ok(finish(theta, run, None, outcome, started));
        }
    };
    let window_end = z
        .tasks()
        .iter()
        .map(|task| task.window.hi)
        .fold(0.0, f64::max);
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = vec![0.0; n];
    let mut x = x0.to_vec();

    let outcome = 'run: {
        for k in 0..=steps {
            let t = k as f64 * cfg.dt;

            let fp = z.funnel();
            let rho = z.active_psi().smooth_value(&x, &cfg.sequencer.smoothing);
            let xi = fp.xi(rho, z.funnel_time(t));
            if !(xi > -1.0 && xi < 0.0) {
                break 'run Outcome::FunnelViolation {
                    t,
                    mode: z.q,
                    rho,
                    xi,
                };
            }

            let mut switched = false;
            loop {
                match z.jump_if_due(&x, t, &cfg.sequencer) {
                    Ok(Some(next)) => {
                        switched |= !next.is_terminal();
                        z = next;
                    }
                    Ok(None) => break,
                    Err(error @ SequencerError::Deadline { .. }) => {
                        break 'run Outcome::TaskFailure { t, error }
                    }
                    Err(error) => break 'run Outcome::SynthesisFailure { t, error },
                }
            }

            let cause = if k == 0 {
                Some(TriggerCause::Initial)
            } else if switched {
                Some(TriggerCause::ModeSwitch)
            } else {
                run.cs.should_trigger(&x, t)
            };
            if let Some(cause) = cause {
                if let Err(error) = run.trigger(&z, &x, t, cause) {
                    break 'run Outcome::TriggerFailure { t, error };
                }
            }

            let gap = match run.law_gap(&z, &x, t) {
                Ok(g) => g,
                Err(error) => break 'run Outcome::TriggerFailure { t, error },
            };
            run.log(&z, &x, t, gap);

            if z.is_terminal() {
                let done_at = z.delta.max(window_end) + cfg.tail;
                if t >= done_at - time_tol(done_at) {
                    break 'run Outcome::Completed;
                }
            }
            if k == steps {
                break 'run if z.is_terminal() {
                    Outcome::Completed
                } else {
                    Outcome::HorizonReached
                };
            }

            if plant.noise_bound > 0.0 {
                let b = plant.noise_bound;
                w.iter_mut().for_each(|wi| *wi = rng.random_range(-b..=b));
            }
            x = step_rk4(plant, &x, run.cs.held_input(), &w, cfg.dt);
        }
        unreachable!("loop exits through the horizon check")
    };
    Ok(finish(theta, run, Some(&z), outcome, started))
}

fn finish(
    theta: &SequentialFormula,
    run: Runner<'_>,
    z: Option<&HybridState>,
    outcome: Outcome,
    started: Instant,
) -> EpisodeResult {
    let Runner {
        traj,
        events,
        gram_min,
        cfg,
        ..
    } = run;
    let samples = traj.len();
    let triggers = events.len();
    let sig = traj.signal();
    let smooth = Semantics::Smooth(cfg.sequencer.smoothing);
    let rho_theta = monitor_sequential_with(theta, &sig, 0.0, Semantics::Exact).unwrap_or(f64::NAN);
    let rho_theta_smooth = monitor_sequential_with(theta, &sig, 0.0, smooth).unwrap_or(f64::NAN);
    let min_inter_event = events
        .windows(2)
        .map(|p| p[1].t - p[0].t)
        .fold(f64::INFINITY, f64::min);
    let delta_u = cfg.trigger.delta_u;
    let metrics = RunMetrics {
        samples,
        triggers,
        reduction: if samples == 0 {
            0.0
        } else {
            1.0 - triggers as f64 / samples as f64
        },
        satisfied: rho_theta > 0.0,
        rho_theta,
        rho_theta_smooth,
        min_funnel_margin: (0..samples)
            .map(|k| traj.funnel_margin(k))
            .fold(f64::INFINITY, f64::min),
        max_law_gap: traj.law_gap.iter().copied().fold(0.0, f64::max),
        law_gap_violations: traj
            .law_gap
            .iter()
            .filter(|&&g| g > delta_u * (1.0 + 1e-12))
            .count(),
        min_inter_event,
        min_delta: events.iter().map(|e| e.delta).fold(f64::INFINITY, f64::min),
        min_gram_eigenvalue: gram_min,
        duration: traj.times.last().copied().unwrap_or(0.0),
        wall_time: started.elapsed(),
    };
    EpisodeResult {
        outcome,
        trajectory: traj,
        events,
        jumps: z.map(|z| z.jumps().to_vec()).unwrap_or_default(),
        syntheses: z.map(|z| z.syntheses().to_vec()).unwrap_or_default(),
        metrics,
    }
}

/// Runs the same episode once per seed, in parallel; results keep seed order.
pub fn run_seeds(
    theta: &SequentialFormula,
    plant: &Plant,
    x0: &[f64],
    cfg: &EpisodeConfig,
    seeds: &[u64],
) -> Vec<Result<EpisodeResult, SimError>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = EpisodeConfig {
                seed,
                ..cfg.clone()
            };
            run_episode(theta, plant, x0, &cfg)
        })
        .collect()
}
