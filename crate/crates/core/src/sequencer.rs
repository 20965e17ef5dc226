//! Sequential processing of the atomic tasks of a sequential formula as a
//! hybrid system with modes `q = 1..=N+1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Actuation, ControlLaw};
use crate::funnel::{synthesize_with, FunnelError, FunnelParams, Synthesis, SynthesisConfig};
use crate::stl::{
    normalize_sequential, AtomicTask, NonTemporalFormula, SequentialFormula, SmoothingConfig,
    StlError, TemporalOp,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SequencerError {
    #[error("task {task}: {source}")]
    Synthesis {
        task: usize,
        #[source]
        source: FunnelError,
    },
    #[error(
        "task {task} failed: deadline passed at t = {t} with robustness {rho} outside ({r}, {rho_max})"
    )]
    Deadline {
        task: usize,
        t: f64,
        rho: f64,
        r: f64,
        rho_max: f64,
    },
    #[error(transparent)]
    Formula(#[from] StlError),
    #[error("{got} synthesis overrides given for {tasks} tasks")]
    Overrides { got: usize, tasks: usize },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequencerConfig {
    pub smoothing: SmoothingConfig,
    /// Applied to every task without its own entry.
    pub synthesis: SynthesisConfig,
    /// Per-task overrides, indexed by task; empty means none.
    pub tasks: Vec<SynthesisConfig>,
}

impl SequencerConfig {
    pub fn for_task(&self, k: usize) -> &SynthesisConfig {
        self.tasks.get(k).unwrap_or(&self.synthesis)
    }
}

/// A recorded jump out of mode `from`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub from: usize,
    /// Global time of the jump.
    pub t: f64,
    /// Local clock value at the jump.
    pub local: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    /// Active mode, 1-based; `N + 1` once every task is done.
    pub q: usize,
    /// Latest switching time.
    pub delta: f64,
    /// Global time at which the active funnel's clock started.
    pub epoch: f64,
    tasks: Vec<AtomicTask>,
    active: Synthesis,
    syntheses: Vec<Synthesis>,
    jumps: Vec<Jump>,
}

fn time_tol(t: f64) -> f64 {
    1e-9 * t.abs().max(1.0)
}

fn synthesize_task(
    tasks: &[AtomicTask],
    k: usize,
    x: &[f64],
    t: f64,
    cfg: &SequencerConfig,
) -> Result<Synthesis, SequencerError> {
    let task = &tasks[k];
    let scfg = cfg.for_task(k);
    let mut offset = f64::from(task.p()) * t;
    let t_star = match task.op {
        TemporalOp::Always => task.timing_window().lo,
        TemporalOp::Eventually => scfg.t_star.unwrap_or(task.timing_window().hi),
    };
    // sampled time landing a hair past an immediate deadline
    if (t_star - offset).abs() <= time_tol(t_star) {
        offset = t_star;
    }
    synthesize_with(task, x, offset, None, scfg, &cfg.smoothing).map_err(|source| {
        SequencerError::Synthesis {
            task: k + 1,
            source,
        }
    })
}

/// Mode 1 with `delta = 0` and the first task's funnel synthesized at `x0`.
pub fn init_sequencer(
    theta: &SequentialFormula,
    x0: &[f64],
    cfg: &SequencerConfig,
) -> Result<HybridState, SequencerError> {
    theta.check_dimension(x0.len())?;
    let tasks = normalize_sequential(theta);
    if cfg.tasks.len() > tasks.len() {
        return Err(SequencerError::Overrides {
            got: cfg.tasks.len(),
            tasks: tasks.len(),
        });
    }
    let active = synthesize_task(&tasks, 0, x0, 0.0, cfg)?;
    Ok(HybridState {
        q: 1,
        delta: 0.0,
        epoch: 0.0,
        syntheses: vec![active.clone()],
        tasks,
        active,
        jumps: Vec::new(),
    })
}

impl HybridState {
    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn tasks(&self) -> &[AtomicTask] {
        &self.tasks
    }

    pub fn is_terminal(&self) -> bool {
        self.q > self.tasks.len()
    }

    /// Index into `tasks` of the task whose law is applied (task N in mode N+1).
    pub fn active_index(&self) -> usize {
        self.q.min(self.tasks.len()) - 1
    }

    pub fn active_task(&self) -> &AtomicTask {
        &self.tasks[self.active_index()]
    }

    pub fn active_psi(&self) -> &NonTemporalFormula {
        &self.active_task().psi
    }

    pub fn active_synthesis(&self) -> &Synthesis {
        &self.active
    }

    pub fn funnel(&self) -> &FunnelParams {
        &self.active.params
    }

    /// All funnels synthesized so far, in task order.
    pub fn syntheses(&self) -> &[Synthesis] {
        &self.syntheses
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// Hybrid clock `t - delta`.
    pub fn local_time(&self, t: f64) -> f64 {
        t - self.delta
    }

    /// Clock of the active funnel.
    pub fn funnel_time(&self, t: f64) -> f64 {
        t - self.epoch
    }

    /// Returns the post-jump state if `(x, t)` lies in the jump set of the
    /// active mode, `None` if the run should keep flowing.
    pub fn jump_if_due(
        &self,
        x: &[f64],
        t: f64,
        cfg: &SequencerConfig,
    ) -> Result<Option<HybridState>, SequencerError> {
        if self.is_terminal() {
            return Ok(None);
        }
        let k = self.q - 1;
        let task = &self.tasks[k];
        let fp = &self.active.params;
        let rho = task.psi.smooth_value(x, &cfg.smoothing);
        let inside = rho > fp.r && rho < fp.rho_max;
        let tau = self.local_time(t);
        let shift = f64::from(task.p()) * self.delta;
        let window = task.timing_window();
        let deadline_fail = || SequencerError::Deadline {
            task: self.q,
            t,
            rho,
            r: fp.r,
            rho_max: fp.rho_max,
        };
        let due = match task.op {
            TemporalOp::Eventually => {
                let lo = window.lo - shift;
                let hi = fp.t_star + self.active.offset - shift;
                if tau > hi + time_tol(hi) {
                    return Err(deadline_fail());
                }
                inside && tau >= lo - time_tol(lo)
            }
            TemporalOp::Always => {
                let end = window.hi - shift;
                if tau < end - time_tol(end) {
                    false
                } else if inside {
                    true
                } else {
                    return Err(deadline_fail());
                }
            }
        };
        if !due {
            return Ok(None);
        }

        let mut next = self.clone();
        next.jumps.push(Jump {
            from: self.q,
            t,
            local: tau,
            rho,
        });
        next.delta += tau;
        next.q += 1;
        if !next.is_terminal() {
            let syn = synthesize_task(&next.tasks, next.q - 1, x, next.delta, cfg)?;
            next.syntheses.push(syn.clone());
            next.active = syn;
            next.epoch = t;
        }
        Ok(Some(next))
    }

    pub fn control_law(&self, smoothing: SmoothingConfig, gain: f64) -> ControlLaw<'_> {
        ControlLaw::new(self.active_psi(), self.funnel())
            .with_smoothing(smoothing)
            .with_gain(gain)
    }
}

/// Input of the active mode at global time `t`.
pub fn active_control(
    z: &HybridState,
    x: &[f64],
    t: f64,
    plant: &dyn Actuation,
    smoothing: &SmoothingConfig,
    gain: f64,
) -> Result<Vec<f64>, FunnelError> {
    z.control_law(*smoothing, gain)
        .eval(plant, x, z.funnel_time(t))
}
