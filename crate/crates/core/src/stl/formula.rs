//! Abstract syntax for the supported STL fragment.
//!
//! Non-temporal formulas are flat conjunctions of (possibly negated) predicate
//! literals. Temporal formulas wrap one conjunction in a bounded `G` or `F`.
//! Sequential formulas are either a time-ordered conjunction of temporal atoms
//! or a nested chain of eventually-operators.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::StlError;

/// A closed time interval `[lo, hi]` with `0 <= lo <= hi < inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, StlError> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(StlError::UnboundedInterval { lo, hi });
        }
        if lo < 0.0 || lo > hi {
            return Err(StlError::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t <= self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

/// Concave predicate functions `h : R^n -> R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Predicate {
    /// `h(x) = radius - ||x[selector] - center||_2`
    Ball {
        selector: Vec<usize>,
        center: Vec<f64>,
        radius: f64,
    },
    /// `h(x) = radius - ||x[a] - x[b]||_2`
    Join {
        a: Vec<usize>,
        b: Vec<usize>,
        radius: f64,
    },
    /// `h(x) = b - a^T x`; coefficients beyond `a.len()` are zero.
    Affine { a: Vec<f64>, b: f64 },
}

impl Predicate {
    /// Interval sugar `|x_k - center| < halfwidth` as a one-dimensional ball.
    pub fn band(index: usize, center: f64, halfwidth: f64) -> Result<Self, StlError> {
        Self::ball(vec![index], vec![center], halfwidth)
    }

    pub fn ball(selector: Vec<usize>, center: Vec<f64>, radius: f64) -> Result<Self, StlError> {
        let p = Predicate::Ball {
            selector,
            center,
            radius,
        };
        p.check_shape()?;
        Ok(p)
    }

    pub fn join(a: Vec<usize>, b: Vec<usize>, radius: f64) -> Result<Self, StlError> {
        let p = Predicate::Join { a, b, radius };
        p.check_shape()?;
        Ok(p)
    }

    pub fn affine(a: Vec<f64>, b: f64) -> Result<Self, StlError> {
        let p = Predicate::Affine { a, b };
        p.check_shape()?;
        Ok(p)
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, Predicate::Affine { .. })
    }

    /// Largest state index this predicate reads, if any.
    pub fn max_index(&self) -> Option<usize> {
        match self {
            Predicate::Ball { selector, .. } => selector.iter().copied().max(),
            Predicate::Join { a, b, .. } => a.iter().chain(b).copied().max(),
            Predicate::Affine { a, .. } => a.len().checked_sub(1),
        }
    }

    fn check_shape(&self) -> Result<(), StlError> {
        match self {
            Predicate::Ball {
                selector,
                center,
                radius,
            } => {
                if selector.is_empty() || selector.len() != center.len() {
                    return Err(StlError::Shape(format!(
                        "ball selector has {} entries but center has {}",
                        selector.len(),
                        center.len()
                    )));
                }
                check_radius(*radius)
            }
            Predicate::Join { a, b, radius } => {
                if a.is_empty() || a.len() != b.len() {
                    return Err(StlError::Shape(format!(
                        "join selectors must be non-empty and of equal length ({} vs {})",
                        a.len(),
                        b.len()
                    )));
                }
                check_radius(*radius)
            }
            Predicate::Affine { a, b } => {
                if a.iter().chain(std::iter::once(b)).any(|v| !v.is_finite()) {
                    return Err(StlError::Shape("affine coefficients must be finite".into()));
                }
                Ok(())
            }
        }
    }
}

fn check_radius(radius: f64) -> Result<(), StlError> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(StlError::NonPositiveRadius(radius))
    }
}

/// A predicate or its negation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Literal {
    pub predicate: Predicate,
    pub negated: bool,
}

impl Literal {
    pub fn pos(predicate: Predicate) -> Self {
        Self {
            predicate,
            negated: false,
        }
    }

    pub fn neg(predicate: Predicate) -> Self {
        Self {
            predicate,
            negated: true,
        }
    }

    /// Concave iff the literal is a positive predicate or a negated affine one.
    pub fn is_concave(&self) -> bool {
        !self.negated || self.predicate.is_affine()
    }
}

/// A flat conjunction of literals (the non-temporal class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonTemporalFormula {
    literals: Vec<Literal>,
}

impl NonTemporalFormula {
    pub fn new(literals: Vec<Literal>) -> Result<Self, StlError> {
        if literals.is_empty() {
            return Err(StlError::EmptyConjunction);
        }
        Ok(Self { literals })
    }

    pub fn single(predicate: Predicate) -> Self {
        Self {
            literals: vec![Literal::pos(predicate)],
        }
    }

    pub fn and(mut self, other: NonTemporalFormula) -> Self {
        self.literals.extend(other.literals);
        self
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }

    pub fn is_concave(&self) -> bool {
        self.literals.iter().all(Literal::is_concave)
    }

    /// Checks every state index against the plant dimension.
    pub fn check_dimension(&self, dim: usize) -> Result<(), StlError> {
        for lit in &self.literals {
            if let Some(max) = lit.predicate.max_index() {
                if max >= dim {
                    return Err(StlError::IndexOutOfRange { index: max, dim });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemporalOp {
    Always,
    Eventually,
}

impl fmt::Display for TemporalOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemporalOp::Always => "G",
            TemporalOp::Eventually => "F",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalFormula {
    pub op: TemporalOp,
    pub interval: Interval,
    pub body: NonTemporalFormula,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SequentialFormula {
    /// Conjunction of temporal atoms with `b_k <= a_{k+1}`.
    Ordered(Vec<TemporalFormula>),
    /// `F[c1,d1](psi1 and F[c2,d2](psi2 and ...))`
    Chain(Vec<(NonTemporalFormula, Interval)>),
}

impl SequentialFormula {
    pub fn ordered(atoms: Vec<TemporalFormula>) -> Result<Self, StlError> {
        if atoms.is_empty() {
            return Err(StlError::EmptyConjunction);
        }
        for (k, pair) in atoms.windows(2).enumerate() {
            if pair[0].interval.hi > pair[1].interval.lo {
                return Err(StlError::Ordering {
                    index: k,
                    prev_end: pair[0].interval.hi,
                    next_start: pair[1].interval.lo,
                });
            }
        }
        Ok(SequentialFormula::Ordered(atoms))
    }

    pub fn chain(steps: Vec<(NonTemporalFormula, Interval)>) -> Result<Self, StlError> {
        if steps.is_empty() {
            return Err(StlError::EmptyConjunction);
        }
        Ok(SequentialFormula::Chain(steps))
    }

    pub fn check_dimension(&self, dim: usize) -> Result<(), StlError> {
        match self {
            SequentialFormula::Ordered(atoms) => {
                atoms.iter().try_for_each(|a| a.body.check_dimension(dim))
            }
            SequentialFormula::Chain(steps) => {
                steps.iter().try_for_each(|(psi, _)| psi.check_dimension(dim))
            }
        }
    }

    pub fn task_count(&self) -> usize {
        match self {
            SequentialFormula::Ordered(atoms) => atoms.len(),
            SequentialFormula::Chain(steps) => steps.len(),
        }
    }
}

/// Which sequential class a task came from; selects global (`Ordered`) or
/// step-local (`Chain`) time bookkeeping in the sequencer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SequenceKind {
    Ordered,
    Chain,
}

/// One temporal task after normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicTask {
    pub psi: NonTemporalFormula,
    pub op: TemporalOp,
    /// Window in global time (cumulative sums for chains).
    pub window: Interval,
    /// Window relative to the previous task's satisfaction (`[c_k, d_k]`);
    /// equal to `window` for ordered conjunctions.
    pub step: Interval,
    pub kind: SequenceKind,
}

impl AtomicTask {
    /// 1 for `G`, 0 for `F`.
    pub fn m(&self) -> u8 {
        match self.op {
            TemporalOp::Always => 1,
            TemporalOp::Eventually => 0,
        }
    }

    /// 1 for ordered conjunctions, 0 for chains.
    pub fn p(&self) -> u8 {
        match self.kind {
            SequenceKind::Ordered => 1,
            SequenceKind::Chain => 0,
        }
    }

    /// The window the sequencer measures against: global for ordered
    /// conjunctions, step-local for chains.
    pub fn timing_window(&self) -> Interval {
        match self.kind {
            SequenceKind::Ordered => self.window,
            SequenceKind::Chain => self.step,
        }
    }

    pub fn as_temporal(&self) -> TemporalFormula {
        TemporalFormula {
            op: self.op,
            interval: self.window,
            body: self.psi.clone(),
        }
    }
}

/// Splits a sequential formula into its atomic tasks. Chains become eventually
/// tasks with windows `[sum c_k, sum d_k]`.
pub fn normalize_sequential(theta: &SequentialFormula) -> Vec<AtomicTask> {
    match theta {
        SequentialFormula::Ordered(atoms) => atoms
            .iter()
            .map(|atom| AtomicTask {
                psi: atom.body.clone(),
                op: atom.op,
                window: atom.interval,
                step: atom.interval,
                kind: SequenceKind::Ordered,
            })
            .collect(),
        SequentialFormula::Chain(steps) => {
            let mut lo = 0.0;
            let mut hi = 0.0;
            steps
                .iter()
                .map(|(psi, step)| {
                    lo += step.lo;
                    hi += step.hi;
                    AtomicTask {
                        psi: psi.clone(),
                        op: TemporalOp::Eventually,
                        window: Interval { lo, hi },
                        step: *step,
                        kind: SequenceKind::Chain,
                    }
                })
                .collect()
        }
    }
}

/// Smoothing parameter of the log-sum-exp conjunction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingConfig {
    pub eta: f64,
}

impl SmoothingConfig {
    pub fn new(eta: f64) -> Result<Self, StlError> {
        if eta > 0.0 && eta.is_finite() {
            Ok(Self { eta })
        } else {
            Err(StlError::InvalidEta(eta))
        }
    }
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { eta: 1.0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn psi(radius: f64) -> NonTemporalFormula {
        NonTemporalFormula::single(Predicate::ball(vec![0], vec![0.0], radius).unwrap())
    }

    #[test]
    fn chain_windows_are_cumulative() {
        let theta = SequentialFormula::chain(vec![
            (psi(1.0), Interval::new(1.0, 2.0).unwrap()),
            (psi(2.0), Interval::new(3.0, 4.0).unwrap()),
        ])
        .unwrap();
        let tasks = normalize_sequential(&theta);
        assert_eq!(tasks.len(), 2);
        assert_eq!(tasks[0].window, Interval { lo: 1.0, hi: 2.0 });
        assert_eq!(tasks[1].window, Interval { lo: 4.0, hi: 6.0 });
        assert_eq!(tasks[1].step, Interval { lo: 3.0, hi: 4.0 });
        assert!(tasks.iter().all(|t| t.p() == 0 && t.m() == 0));
    }

    #[test]
    fn single_step_chain_keeps_its_window() {
        let theta =
            SequentialFormula::chain(vec![(psi(1.0), Interval::new(2.5, 7.0).unwrap())]).unwrap();
        let tasks = normalize_sequential(&theta);
        assert_eq!(tasks.len(), 1);
        assert_eq!(tasks[0].op, TemporalOp::Eventually);
        assert_eq!(tasks[0].window, Interval { lo: 2.5, hi: 7.0 });
    }

    #[test]
    fn ordered_passthrough_sets_flags() {
        let atoms = vec![
            TemporalFormula {
                op: TemporalOp::Always,
                interval: Interval::new(0.0, 5.0).unwrap(),
                body: psi(1.0),
            },
            TemporalFormula {
                op: TemporalOp::Eventually,
                interval: Interval::new(5.0, 9.0).unwrap(),
                body: psi(2.0),
            },
        ];
        let tasks = normalize_sequential(&SequentialFormula::ordered(atoms).unwrap());
        assert_eq!((tasks[0].p(), tasks[0].m()), (1, 1));
        assert_eq!((tasks[1].p(), tasks[1].m()), (1, 0));
        assert_eq!(tasks[1].window, tasks[1].step);
    }

    #[test]
    fn ordering_violation_is_rejected() {
        let atom = |lo, hi| TemporalFormula {
            op: TemporalOp::Eventually,
            interval: Interval::new(lo, hi).unwrap(),
            body: psi(1.0),
        };
        let err = SequentialFormula::ordered(vec![atom(0.0, 6.0), atom(5.0, 9.0)]).unwrap_err();
        assert!(matches!(err, StlError::Ordering { .. }));
    }

    #[test]
    fn interval_and_radius_validation() {
        assert!(matches!(
            Interval::new(5.0, 2.0),
            Err(StlError::InvalidInterval { .. })
        ));
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
        assert!(Predicate::ball(vec![0], vec![0.0], 0.0).is_err());
        assert!(Predicate::ball(vec![0, 1], vec![0.0], 1.0).is_err());
        assert!(Predicate::join(vec![0], vec![1, 2], 1.0).is_err());
        assert!(SmoothingConfig::new(0.0).is_err());
    }

    #[test]
    fn negated_ball_is_not_concave() {
        let ball = Predicate::ball(vec![0], vec![0.0], 1.0).unwrap();
        assert!(!Literal::neg(ball.clone()).is_concave());
        assert!(Literal::pos(ball).is_concave());
        assert!(Literal::neg(Predicate::affine(vec![1.0], 0.0).unwrap()).is_concave());
    }
}
