//! Funnel parameter selection for one atomic task.

use serde::{Deserialize, Serialize};

use super::{optimize_robustness, FunnelError, FunnelParams, PerformanceFunction};
use crate::stl::{AtomicTask, SmoothingConfig, TemporalOp};

/// Design choices for funnel synthesis. Every `Option` overrides the
/// corresponding default rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    /// Gap between the optimum and `rho_max`.
    pub chi: Option<f64>,
    /// `chi = chi_frac * (rho_opt - max(0, rho0))` when neither `chi` nor
    /// `rho_max` is given.
    pub chi_frac: f64,
    /// `r = r_frac * rho_max` unless `r` is given.
    pub r_frac: f64,
    /// `gamma_inf = gamma_inf_frac * (rho_max - r)` when the funnel must
    /// decay; must be below 1.
    pub gamma_inf_frac: f64,
    /// Satisfaction deadline in the task's own time frame (window time).
    pub t_star: Option<f64>,
    pub rho_max: Option<f64>,
    pub r: Option<f64>,
    pub gamma0: Option<f64>,
    pub gamma_inf: Option<f64>,
    pub l: Option<f64>,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            chi: None,
            chi_frac: 0.05,
            r_frac: 0.25,
            gamma_inf_frac: 0.5,
            t_star: None,
            rho_max: None,
            r: None,
            gamma0: None,
            gamma_inf: None,
            l: None,
        }
    }
}

/// Synthesized funnel together with the quantities it was derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synthesis {
    pub params: FunnelParams,
    pub rho0: f64,
    pub rho_opt: f64,
    pub chi: f64,
    /// Offset subtracted from window times to get funnel-local times.
    pub offset: f64,
}

fn open(name: &'static str, v: f64, lo: f64, hi: f64) -> Result<(), FunnelError> {
    if v > lo && v < hi {
        Ok(())
    } else {
        Err(FunnelError::Membership {
            name,
            value: v,
            range: format!("({lo}, {hi})"),
        })
    }
}

fn half_open(name: &'static str, v: f64, lo: f64, hi: f64) -> Result<(), FunnelError> {
    if v > lo && v <= hi {
        Ok(())
    } else {
        Err(FunnelError::Membership {
            name,
            value: v,
            range: format!("({lo}, {hi}]"),
        })
    }
}

/// Synthesizes a funnel for `task` starting at state `x0` at time zero.
pub fn synthesize_funnel(
    task: &AtomicTask,
    x0: &[f64],
    cfg: &SynthesisConfig,
    smoothing: &SmoothingConfig,
) -> Result<Synthesis, FunnelError> {
    synthesize_with(task, x0, 0.0, None, cfg, smoothing)
}

/// Synthesizes a funnel whose clock starts when window time equals `offset`.
/// `rho_opt` may be supplied to skip the optimization.
pub fn synthesize_with(
    task: &AtomicTask,
    x0: &[f64],
    offset: f64,
    rho_opt: Option<f64>,
    cfg: &SynthesisConfig,
    smoothing: &SmoothingConfig,
) -> Result<Synthesis, FunnelError> {
    let psi = &task.psi;
    psi.check_dimension(x0.len())?;
    let rho0 = psi.smooth_value(x0, smoothing);
    let rho_opt = match rho_opt {
        Some(v) => v,
        None => optimize_robustness(psi, smoothing, Some(x0))?.rho_opt,
    };
    if rho_opt <= 0.0 {
        return Err(FunnelError::NonPositiveOptimum { rho_opt });
    }

    let window = task.timing_window();
    let t_star_window = match (task.op, cfg.t_star) {
        (TemporalOp::Always, None) => window.lo,
        (TemporalOp::Eventually, None) => window.hi,
        (TemporalOp::Always, Some(t)) => {
            if t != window.lo {
                return Err(FunnelError::Membership {
                    name: "t_star",
                    value: t,
                    range: format!("{{{}}}", window.lo),
                });
            }
            t
        }
        (TemporalOp::Eventually, Some(t)) => {
            if !window.contains(t) {
                return Err(FunnelError::Membership {
                    name: "t_star",
                    value: t,
                    range: window.to_string(),
                });
            }
            t
        }
    };
    let t_star = t_star_window - offset;
    if t_star < 0.0 {
        return Err(FunnelError::PastDeadline { t_star });
    }

    let floor = rho0.max(0.0);
    let limit = rho_opt - floor;
    let chi = match (cfg.chi, cfg.rho_max) {
        (Some(c), _) => c,
        (None, Some(rm)) => rho_opt - rm,
        (None, None) => cfg.chi_frac * limit,
    };
    if !(chi > 0.0 && chi < limit) {
        return Err(FunnelError::Chi { chi, limit });
    }
    let rho_max = cfg.rho_max.unwrap_or(rho_opt - chi);
    let r = cfg.r.unwrap_or(cfg.r_frac * rho_max);
    if t_star == 0.0 && rho0 <= r {
        return Err(FunnelError::InitialBelowR { rho0, r });
    }

    let gamma0 = match cfg.gamma0 {
        Some(g) => g,
        None if t_star > 0.0 => (rho_max - rho0) + 0.5 * rho_max,
        None => rho_max - r,
    };
    let decays = gamma0 > rho_max - r;
    let gamma_inf = match cfg.gamma_inf {
        Some(g) => g,
        None if decays => cfg.gamma_inf_frac * (rho_max - r),
        None => gamma0.min(rho_max - r),
    };
    let l = if decays {
        let l = ((gamma0 - gamma_inf) / (rho_max - r - gamma_inf)).ln() / t_star;
        if let Some(given) = cfg.l {
            if (given - l).abs() > 1e-12 * l.abs().max(1.0) {
                return Err(FunnelError::Membership {
                    name: "l",
                    value: given,
                    range: format!("{{{l}}}"),
                });
            }
        }
        l
    } else {
        cfg.l.unwrap_or(0.0)
    };

    let params = FunnelParams {
        t_star,
        r,
        rho_max,
        perf: PerformanceFunction::new(gamma0, gamma_inf, l)?,
    };
    audit(&params, rho0, rho_opt, chi)?;
    Ok(Synthesis {
        params,
        rho0,
        rho_opt,
        chi,
        offset,
    })
}

/// Re-checks every membership condition on a synthesized funnel.
fn audit(fp: &FunnelParams, rho0: f64, rho_opt: f64, chi: f64) -> Result<(), FunnelError> {
    let floor = rho0.max(0.0);
    open("chi", chi, 0.0, rho_opt - floor)?;
    // rho_opt - chi is recomputed and may round; allow one ulp-scale slack
    let top = rho_opt - chi;
    half_open("rho_max", fp.rho_max, floor, top + 4.0 * f64::EPSILON * top.abs())?;
    open("r", fp.r, 0.0, fp.rho_max)?;
    let PerformanceFunction {
        gamma0,
        gamma_inf,
        l,
    } = fp.perf;
    if fp.t_star > 0.0 {
        open("gamma0", gamma0, fp.rho_max - rho0, f64::INFINITY)?;
    } else {
        if rho0 <= fp.r {
            return Err(FunnelError::InitialBelowR { rho0, r: fp.r });
        }
        half_open("gamma0", gamma0, fp.rho_max - rho0, fp.rho_max - fp.r)?;
    }
    half_open(
        "gamma_inf",
        gamma_inf,
        0.0,
        gamma0.min(fp.rho_max - fp.r),
    )?;
    if gamma0 <= fp.rho_max - fp.r {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(FunnelError::Membership {
                name: "l",
                value: l,
                range: "[0, inf)".into(),
            });
        }
    } else {
        // the decay must bring the lower bound up to r exactly at t*
        let at = fp.gamma(fp.t_star);
        let want = fp.rho_max - fp.r;
        if !(l.is_finite() && l > 0.0) || (at - want).abs() > 1e-9 * want.abs() {
            return Err(FunnelError::Membership {
                name: "l",
                value: l,
                range: format!("gamma(t*) = {want}"),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{normalize_sequential, parse_formula};

    fn task(text: &str) -> AtomicTask {
        normalize_sequential(&parse_formula(text).unwrap()).remove(0)
    }

    #[test]
    fn always_task_deadline_is_window_start() {
        let t = task("G[2,10] ball(0,1;0,0;5)");
        let s = synthesize_funnel(&t, &[6.0, 0.0], &SynthesisConfig::default(), &Default::default())
            .unwrap();
        assert_eq!(s.params.t_star, 2.0);
        assert!((s.rho_opt - 5.0).abs() < 1e-9);
    }

    #[test]
    fn eventually_task_defaults_to_window_end() {
        let t = task("F[2,10] ball(0,1;0,0;5)");
        let s = synthesize_funnel(&t, &[6.0, 0.0], &SynthesisConfig::default(), &Default::default())
            .unwrap();
        assert_eq!(s.params.t_star, 10.0);
        let fp = s.params;
        // decaying branch: lower bound reaches r at t*
        assert!((fp.gamma(fp.t_star) - (fp.rho_max - fp.r)).abs() <= 1e-12 * (fp.rho_max - fp.r));
    }

    #[test]
    fn defaults_follow_rules() {
        let t = task("F[0,10] ball(0;0;4)");
        let s = synthesize_funnel(&t, &[6.0], &SynthesisConfig::default(), &Default::default())
            .unwrap();
        // rho0 = -2, rho_opt = 4, chi = 0.05 * 4
        assert!((s.chi - 0.2).abs() < 1e-9);
        assert!((s.params.rho_max - 3.8).abs() < 1e-9);
        assert!((s.params.r - 0.95).abs() < 1e-9);
        assert!((s.params.perf.gamma0 - (5.8 + 1.9)).abs() < 1e-9);
        assert!((s.params.perf.gamma_inf - 0.5 * 2.85).abs() < 1e-9);
    }

    #[test]
    fn rho_max_override_sets_chi() {
        let t = task("F[0,10] ball(0;0;4)");
        let cfg = SynthesisConfig {
            rho_max: Some(3.9),
            r: Some(1.0),
            ..Default::default()
        };
        let s = synthesize_funnel(&t, &[6.0], &cfg, &Default::default()).unwrap();
        assert!((s.chi - 0.1).abs() < 1e-9);
        assert_eq!(s.params.r, 1.0);
    }

    #[test]
    fn immediate_deadline_needs_margin() {
        let t = task("G[0,10] ball(0;0;4)");
        let err = synthesize_funnel(&t, &[6.0], &SynthesisConfig::default(), &Default::default());
        assert!(matches!(err, Err(FunnelError::InitialBelowR { .. })));
        let s = synthesize_funnel(&t, &[0.5], &SynthesisConfig::default(), &Default::default())
            .unwrap();
        let fp = s.params;
        assert_eq!(fp.t_star, 0.0);
        assert!(fp.perf.gamma0 <= fp.rho_max - fp.r);
        assert_eq!(fp.perf.l, 0.0);
    }

    #[test]
    fn chi_too_large_rejected() {
        let t = task("F[0,10] ball(0;0;4)");
        let cfg = SynthesisConfig {
            chi: Some(5.0),
            ..Default::default()
        };
        assert!(matches!(
            synthesize_funnel(&t, &[6.0], &cfg, &Default::default()),
            Err(FunnelError::Chi { .. })
        ));
    }

    #[test]
    fn offset_shifts_deadline() {
        let t = task("F[5,10] ball(0;0;4)");
        let s = synthesize_with(&t, &[6.0], 3.0, None, &Default::default(), &Default::default())
            .unwrap();
        assert_eq!(s.params.t_star, 7.0);
        assert!(matches!(
            synthesize_with(&t, &[6.0], 11.0, None, &Default::default(), &Default::default()),
            Err(FunnelError::PastDeadline { .. })
        ));
    }

    #[test]
    fn t_star_override_checked() {
        let t = task("F[5,10] ball(0;0;4)");
        let cfg = SynthesisConfig {
            t_star: Some(12.0),
            ..Default::default()
        };
        assert!(synthesize_funnel(&t, &[6.0], &cfg, &Default::default()).is_err());
    }
}
