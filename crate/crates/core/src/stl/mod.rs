//! The STL fragment: syntax, robustness (exact and smoothed), and monitoring.

mod formula;
mod monitor;
mod parse;
mod robustness;

pub use formula::{
    normalize_sequential, AtomicTask, Interval, Literal, NonTemporalFormula, Predicate,
    SequenceKind, SequentialFormula, SmoothingConfig, TemporalFormula, TemporalOp,
};
pub use monitor::{
    monitor_robustness, monitor_robustness_with, monitor_sequential, monitor_sequential_with,
    monitor_temporal, monitor_temporal_with, MonitorError, Monitored, Semantics, Signal,
};
pub use parse::{parse_formula, parse_formula_with, ParseError, ParseErrorKind, ParseOptions};
pub use robustness::{
    exact_psi_value, predicate_value_and_grad, smooth_psi_hessian, smooth_psi_value_and_grad,
    softmin_weights,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StlError {
    #[error("interval [{lo}, {hi}] must satisfy 0 <= a <= b")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("interval [{lo}, {hi}] must be finite")]
    UnboundedInterval { lo: f64, hi: f64 },
    #[error("atoms {index} and {} overlap: b = {prev_end} > a = {next_start}", index + 1)]
    Ordering {
        index: usize,
        prev_end: f64,
        next_start: f64,
    },
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("malformed predicate: {0}")]
    Shape(String),
    #[error("conjunction must contain at least one literal")]
    EmptyConjunction,
    #[error("state index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("smoothing parameter must be positive, got {0}")]
    InvalidEta(f64),
}
