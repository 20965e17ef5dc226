//! Performance functions, the error transformation, and funnel membership.

use serde::{Deserialize, Serialize};

use super::FunnelError;
use crate::stl::{NonTemporalFormula, SmoothingConfig};

/// `gamma(t) = (gamma0 - gamma_inf) exp(-l t) + gamma_inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceFunction {
    pub gamma0: f64,
    pub gamma_inf: f64,
    pub l: f64,
}

impl PerformanceFunction {
    pub fn new(gamma0: f64, gamma_inf: f64, l: f64) -> Result<Self, FunnelError> {
        let ok = gamma0.is_finite()
            && gamma_inf.is_finite()
            && l.is_finite()
            && gamma_inf > 0.0
            && gamma0 >= gamma_inf
            && l >= 0.0;
        if !ok {
            return Err(FunnelError::InvalidPerformance {
                gamma0,
                gamma_inf,
                l,
            });
        }
        Ok(Self {
            gamma0,
            gamma_inf,
            l,
        })
    }

    pub fn value(&self, t: f64) -> f64 {
        (self.gamma0 - self.gamma_inf) * (-self.l * t).exp() + self.gamma_inf
    }

    pub fn derivative(&self, t: f64) -> f64 {
        -self.l * (self.gamma0 - self.gamma_inf) * (-self.l * t).exp()
    }
}

pub fn gamma_at(pf: &PerformanceFunction, t: f64) -> f64 {
    pf.value(t)
}

/// `S(xi) = ln(-(xi + 1) / (xi - M))` on `(-1, M)`.
pub fn transform(xi: f64, m: f64) -> f64 {
    // ln((1 + xi) / (M - xi)); split so neither factor cancels near the ends
    (1.0 + xi).ln() - (m - xi).ln()
}

/// `dS/dxi = 1/(xi + 1) - 1/(xi - M)`.
pub fn transform_derivative(xi: f64, m: f64) -> f64 {
    1.0 / (xi + 1.0) - 1.0 / (xi - m)
}

/// One funnel for one atomic task, with time measured from the funnel's epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunnelParams {
    pub t_star: f64,
    pub r: f64,
    pub rho_max: f64,
    pub perf: PerformanceFunction,
}

impl FunnelParams {
    pub fn gamma(&self, t: f64) -> f64 {
        self.perf.value(t)
    }

    /// Lower and upper funnel bounds on the robustness at time `t`.
    pub fn bounds(&self, t: f64) -> (f64, f64) {
        (self.rho_max - self.gamma(t), self.rho_max)
    }

    /// Normalized error and whether it lies strictly in `(-1, 0)`.
    pub fn xi(&self, rho: f64, t: f64) -> f64 {
        (rho - self.rho_max) / self.gamma(t)
    }

    pub fn error_from_rho(&self, rho: f64, t: f64) -> Result<TransformedError, FunnelError> {
        let e = rho - self.rho_max;
        let xi = e / self.gamma(t);
        if !(xi > -1.0 && xi < 0.0) {
            return Err(FunnelError::Violation { t, rho, xi });
        }
        Ok(TransformedError {
            e,
            xi,
            eps: transform(xi, 0.0),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformedError {
    pub e: f64,
    pub xi: f64,
    pub eps: f64,
}

pub fn transformed_error(
    psi: &NonTemporalFormula,
    fp: &FunnelParams,
    x: &[f64],
    t: f64,
    cfg: &SmoothingConfig,
) -> Result<TransformedError, FunnelError> {
    fp.error_from_rho(psi.smooth_value(x, cfg), t)
}
