//! Prescribed-performance funnels: performance functions, the error
//! transformation, robustness maximization, and parameter synthesis.

mod optimize;
mod performance;
mod synthesis;

pub use optimize::{optimize_robustness, OptimizationResult, GRAD_TOL, MAX_ITERATIONS};
pub use performance::{
    gamma_at, transform, transform_derivative, transformed_error, FunnelParams,
    PerformanceFunction, TransformedError,
};
pub use synthesis::{synthesize_funnel, synthesize_with, Synthesis, SynthesisConfig};

use thiserror::Error;

use crate::stl::StlError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FunnelError {
    #[error("invalid performance function: gamma0 = {gamma0}, gamma_inf = {gamma_inf}, l = {l}")]
    InvalidPerformance { gamma0: f64, gamma_inf: f64, l: f64 },
    #[error("funnel violated at t = {t}: robustness {rho} gives xi = {xi} outside (-1, 0)")]
    Violation { t: f64, rho: f64, xi: f64 },
    #[error("robustness grows without bound; the conjunction is not well-posed")]
    Unbounded,
    #[error("optimizer did not converge after {iterations} iterations (gradient norm {grad_norm})")]
    NoConvergence { iterations: usize, grad_norm: f64 },
    #[error("task infeasible: optimal robustness {rho_opt} is not positive")]
    NonPositiveOptimum { rho_opt: f64 },
    #[error("task infeasible: t* = 0 requires initial robustness {rho0} > r = {r}")]
    InitialBelowR { rho0: f64, r: f64 },
    #[error("task infeasible: t* = {t_star} lies in the past")]
    PastDeadline { t_star: f64 },
    #[error("chi = {chi} must lie in (0, {limit})")]
    Chi { chi: f64, limit: f64 },
    #[error("{name} = {value} outside its admissible range {range}")]
    Membership {
        name: &'static str,
        value: f64,
        range: String,
    },
    #[error(transparent)]
    Formula(#[from] StlError),
}
