//! Feedback law, zero-order hold, trigger radius and triggering rule.

mod law;
mod trigger;

pub use law::{continuous_law, ControlLaw};
pub use trigger::{
    compute_trigger_radius, should_trigger, ControllerState, TriggerCause, TriggerConfig,
    TriggerEvent, TriggerRadius,
};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::funnel::FunnelError;

/// What the controller may know about the plant: the input matrix `g(x)`.
pub trait Actuation: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// `out = g(x) u`
    fn apply(&self, x: &[f64], u: &[f64], out: &mut [f64]);
    /// `out = g(x)^T v`
    fn apply_transpose(&self, x: &[f64], v: &[f64], out: &mut [f64]);
    /// `out = (dg/dx_j)(x)^T v`
    fn apply_transpose_partial(&self, x: &[f64], j: usize, v: &[f64], out: &mut [f64]);

    fn matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let (n, m) = (self.state_dim(), self.input_dim());
        let mut g = DMatrix::zeros(n, m);
        let mut e = vec![0.0; m];
        let mut col = vec![0.0; n];
        for c in 0..m {
            e[c] = 1.0;
            self.apply(x, &e, &mut col);
            g.set_column(c, &nalgebra::DVector::from_column_slice(&col));
            e[c] = 0.0;
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error(transparent)]
    Funnel(#[from] FunnelError),
    #[error("no admissible trigger box at t = {t}: shrank to delta_x = {delta_x}, delta_t = {delta_t}")]
    FloorReached { t: f64, delta_x: f64, delta_t: f64 },
    #[error("invalid trigger configuration: {0}")]
    Config(String),
}
