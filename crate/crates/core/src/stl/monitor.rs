//! Offline robustness monitoring over sampled trajectories.

use thiserror::Error;

use super::formula::{
    normalize_sequential, NonTemporalFormula, SequentialFormula, SmoothingConfig,
    TemporalFormula, TemporalOp,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonitorError {
    #[error("samples span [{first}, {last}] but the window [{lo}, {hi}] is required")]
    WindowNotCovered {
        lo: f64,
        hi: f64,
        first: f64,
        last: f64,
    },
    #[error("no sample falls inside [{lo}, {hi}]")]
    EmptyWindow { lo: f64, hi: f64 },
}

/// Borrowed view of a sampled signal: strictly increasing timestamps and a
/// row-major state matrix.
#[derive(Debug, Clone, Copy)]
pub struct Signal<'a> {
    times: &'a [f64],
    states: &'a [f64],
    dim: usize,
}

impl<'a> Signal<'a> {
    pub fn new(times: &'a [f64], states: &'a [f64], dim: usize) -> Self {
        assert_eq!(times.len() * dim, states.len(), "state matrix shape");
        Self { times, states, dim }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn state(&self, k: usize) -> &'a [f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    /// Index range of samples whose timestamps lie in `[lo, hi]`, with a
    /// relative slack of 1e-9 to absorb grid rounding.
    fn window(&self, lo: f64, hi: f64) -> Result<std::ops::Range<usize>, MonitorError> {
        let tol = |v: f64| 1e-9 * v.abs().max(1.0);
        let (first, last) = match (self.times.first(), self.times.last()) {
            (Some(&f), Some(&l)) => (f, l),
            _ => return Err(MonitorError::EmptyWindow { lo, hi }),
        };
        if first > lo + tol(lo) || last < hi - tol(hi) {
            return Err(MonitorError::WindowNotCovered {
                lo,
                hi,
                first,
                last,
            });
        }
        let start = self.times.partition_point(|&t| t < lo - tol(lo));
        let end = self.times.partition_point(|&t| t <= hi + tol(hi));
        if start >= end {
            return Err(MonitorError::EmptyWindow { lo, hi });
        }
        Ok(start..end)
    }
}

/// How conjunctions inside a window are scored.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Semantics {
    /// Minimum over literals.
    #[default]
    Exact,
    /// Log-sum-exp under-approximation.
    Smooth(SmoothingConfig),
}

impl Semantics {
    fn value(&self, psi: &NonTemporalFormula, x: &[f64]) -> f64 {
        match self {
            Semantics::Exact => psi.exact_value(x),
            Semantics::Smooth(cfg) => psi.smooth_value(x, cfg),
        }
    }
}

fn fold_window(
    psi: &NonTemporalFormula,
    op: TemporalOp,
    sig: &Signal<'_>,
    lo: f64,
    hi: f64,
    sem: Semantics,
) -> Result<f64, MonitorError> {
    let range = sig.window(lo, hi)?;
    let values = range.map(|k| sem.value(psi, sig.state(k)));
    Ok(match op {
        TemporalOp::Always => values.fold(f64::INFINITY, f64::min),
        TemporalOp::Eventually => values.fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Exact robustness of `G[a,b] psi` / `F[a,b] psi` at time `t`.
pub fn monitor_temporal(
    f: &TemporalFormula,
    sig: &Signal<'_>,
    t: f64,
) -> Result<f64, MonitorError> {
    monitor_temporal_with(f, sig, t, Semantics::Exact)
}

pub fn monitor_temporal_with(
    f: &TemporalFormula,
    sig: &Signal<'_>,
    t: f64,
    sem: Semantics,
) -> Result<f64, MonitorError> {
    fold_window(&f.body, f.op, sig, t + f.interval.lo, t + f.interval.hi, sem)
}

/// Exact robustness of a sequential formula at time `t`: the minimum over its
/// atomic tasks. Chains are evaluated through their cumulative windows.
pub fn monitor_sequential(
    theta: &SequentialFormula,
    sig: &Signal<'_>,
    t: f64,
) -> Result<f64, MonitorError> {
    monitor_sequential_with(theta, sig, t, Semantics::Exact)
}

pub fn monitor_sequential_with(
    theta: &SequentialFormula,
    sig: &Signal<'_>,
    t: f64,
    sem: Semantics,
) -> Result<f64, MonitorError> {
    let mut rho = f64::INFINITY;
    for task in normalize_sequential(theta) {
        rho = rho.min(fold_window(
            &task.psi,
            task.op,
            sig,
            t + task.window.lo,
            t + task.window.hi,
            sem,
        )?);
    }
    Ok(rho)
}

#[derive(Debug, Clone, Copy)]
pub enum Monitored<'a> {
    Temporal(&'a TemporalFormula),
    Sequential(&'a SequentialFormula),
}

impl<'a> From<&'a TemporalFormula> for Monitored<'a> {
    fn from(f: &'a TemporalFormula) -> Self {
        Monitored::Temporal(f)
    }
}

impl<'a> From<&'a SequentialFormula> for Monitored<'a> {
    fn from(f: &'a SequentialFormula) -> Self {
        Monitored::Sequential(f)
    }
}

pub fn monitor_robustness<'a>(
    f: impl Into<Monitored<'a>>,
    sig: &Signal<'_>,
    t: f64,
) -> Result<f64, MonitorError> {
    monitor_robustness_with(f, sig, t, Semantics::Exact)
}

pub fn monitor_robustness_with<'a>(
    f: impl Into<Monitored<'a>>,
    sig: &Signal<'_>,
    t: f64,
    sem: Semantics,
) -> Result<f64, MonitorError> {
    match f.into() {
        Monitored::Temporal(f) => monitor_temporal_with(f, sig, t, sem),
        Monitored::Sequential(f) => monitor_sequential_with(f, sig, t, sem),
    }
}
