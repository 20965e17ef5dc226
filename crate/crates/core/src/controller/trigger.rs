//! Event triggering: radius computation, the triggering rule, and the hold.

use serde::{Deserialize, Serialize};

use super::{Actuation, ControlLaw, ControllerError};

const XI_MARGIN: f64 = 1e-3;
const CORNER_CAP: usize = 1024;
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriggerConfig {
    /// Allowed deviation `||u - u_hat||_inf` between events.
    pub delta_u: f64,
    pub lipschitz_safety: f64,
    pub delta_x0: f64,
    pub delta_t0: f64,
    pub shrink: f64,
    pub sample_count: usize,
    pub delta_floor: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self {
            delta_u: 50.0,
            lipschitz_safety: 2.0,
            delta_x0: 0.5,
            delta_t0: 0.5,
            shrink: 0.5,
            sample_count: 256,
            delta_floor: 1e-6,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |what: &str| Err(ControllerError::Config(what.to_string()));
        if !(self.delta_u > 0.0) {
            return bad("delta_u must be positive");
        }
        if !(self.lipschitz_safety >= 1.0) {
            return bad("lipschitz_safety must be at least 1");
        }
        if !(self.delta_x0 > 0.0 && self.delta_t0 > 0.0) {
            return bad("box sizes must be positive");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        if !(self.delta_floor > 0.0) {
            return bad("delta_floor must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriggerCause {
    Initial,
    StateDeviation,
    MaxInterval,
    ModeSwitch,
}

impl std::fmt::Display for TriggerCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TriggerCause::Initial => "Initial",
            TriggerCause::StateDeviation => "StateDeviation",
            TriggerCause::MaxInterval => "MaxInterval",
            TriggerCause::ModeSwitch => "ModeSwitch",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub index: usize,
    /// Global time of the event.
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub delta: f64,
    pub cause: TriggerCause,
    /// Safety-scaled Lipschitz estimate behind `delta`.
    pub lipschitz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerRadius {
    pub delta: f64,
    pub lipschitz: f64,
    pub delta_x: f64,
    pub delta_t: f64,
}

fn radical_inverse(mut k: usize, base: usize) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

fn primes(count: usize) -> Vec<usize> {
    let mut ps = Vec::with_capacity(count);
    let mut c = 2;
    while ps.len() < count {
        if ps.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            ps.push(c);
        }
        c += 1;
    }
    ps
}

/// Sample points of the box `B(x_i, dx) x [t_i, t_i + dt]` in the unit cube:
/// corners (capped) followed by Halton points.
fn unit_samples(dim: usize, halton: usize) -> Vec<Vec<f64>> {
    let total: u128 = if dim >= 127 { u128::MAX } else { 1u128 << dim };
    let take = total.min(CORNER_CAP as u128) as usize;
    let mut pts = Vec::with_capacity(take + halton);
    for j in 0..take {
        let pattern = (j as u128 * (total / take as u128)) as u128;
        pts.push(
            (0..dim)
                .map(|d| if d < 128 && (pattern >> d) & 1 == 1 { 1.0 } else { 0.0 })
                .collect(),
        );
    }
    let bases = primes(dim);
    for k in 1..=halton {
        pts.push(bases.iter().map(|&b| radical_inverse(k, b)).collect());
    }
    pts
}

/// Induced infinity norm of the `(x, t)`-Jacobian of `u` by central
/// differences. `None` when a stencil point leaves the funnel.
fn jacobian_inf_norm(
    law: &ControlLaw<'_>,
    plant: &dyn Actuation,
    z: &[f64],
    grad: &mut [f64],
    up: &mut [f64],
    um: &mut [f64],
    rows: &mut [f64],
) -> Option<f64> {
    let n = z.len() - 1;
    rows.iter_mut().for_each(|r| *r = 0.0);
    let mut p = z.to_vec();
    for j in 0..=n {
        let h = FD_STEP * z[j].abs().max(1.0);
        p[j] = z[j] + h;
        law.eval_into(plant, &p[..n], p[n], grad, up).ok()?;
        p[j] = z[j] - h;
        law.eval_into(plant, &p[..n], p[n], grad, um).ok()?;
        p[j] = z[j];
        for (r, row) in rows.iter_mut().enumerate() {
            *row += ((up[r] - um[r]) / (2.0 * h)).abs();
        }
    }
    Some(rows.iter().copied().fold(0.0, f64::max))
}

enum Probe {
    Lipschitz(f64),
    /// Some sample or stencil point is too close to the funnel boundary.
    Inadmissible,
    /// The estimate already exceeds the requested cap.
    Exceeds,
}

/// Sampled `max ||grad u||_inf` over a box around `(x_i, t_i)`.
struct BoxProbe<'a, 'b> {
    law: &'a ControlLaw<'b>,
    plant: &'a dyn Actuation,
    x_i: &'a [f64],
    t_i: f64,
    unit: Vec<Vec<f64>>,
    grad: Vec<f64>,
    up: Vec<f64>,
    um: Vec<f64>,
    rows: Vec<f64>,
    z: Vec<f64>,
}

impl BoxProbe<'_, '_> {
    fn lipschitz(&mut self, dx: f64, dt: f64, cap: f64) -> Probe {
        let n = self.x_i.len();
        let mut lip: f64 = 0.0;
        for s in &self.unit {
            for k in 0..n {
                self.z[k] = self.x_i[k] + dx * (2.0 * s[k] - 1.0);
            }
            self.z[n] = self.t_i + dt * s[n];
            let rho = self.law.psi.smooth_value(&self.z[..n], &self.law.smoothing);
            let xi = self.law.funnel.xi(rho, self.z[n]);
            if !(xi > -1.0 + XI_MARGIN && xi < -XI_MARGIN) {
                return Probe::Inadmissible;
            }
            let Some(v) = jacobian_inf_norm(
                self.law,
                self.plant,
                &self.z,
                &mut self.grad,
                &mut self.up,
                &mut self.um,
                &mut self.rows,
            ) else {
                return Probe::Inadmissible;
            };
            lip = lip.max(v);
            if lip > cap {
                return Probe::Exceeds;
            }
        }
        Probe::Lipschitz(lip)
    }
}

fn radius_on_box(tc: &TriggerConfig, lip: f64, dx: f64, dt: f64) -> TriggerRadius {
    let lipschitz = tc.lipschitz_safety * lip;
    let delta = if lipschitz > 0.0 {
        (tc.delta_u / lipschitz).min(dx).min(dt)
    } else {
        dx.min(dt)
    };
    TriggerRadius {
        delta,
        lipschitz,
        delta_x: dx,
        delta_t: dt,
    }
}

/// Trigger radius at `(x_i, t_i)`, with `t_i` on the funnel clock.
///
/// The candidate box is shrunk until it is admissible. Smaller nested boxes
/// are then tried as long as they could still give a larger radius, and the
/// largest radius found is returned.
pub fn compute_trigger_radius(
    law: &ControlLaw<'_>,
    plant: &dyn Actuation,
    x_i: &[f64],
    t_i: f64,
    tc: &TriggerConfig,
) -> Result<TriggerRadius, ControllerError> {
    let n = x_i.len();
    let m = plant.input_dim();
    let mut probe = BoxProbe {
        law,
        plant,
        x_i,
        t_i,
        unit: unit_samples(n + 1, tc.sample_count),
        grad: vec![0.0; n],
        up: vec![0.0; m],
        um: vec![0.0; m],
        rows: vec![0.0; m],
        z: vec![0.0; n + 1],
    };
    let (mut dx, mut dt) = (tc.delta_x0, tc.delta_t0);
    let floor_err = |dx, dt| ControllerError::FloorReached {
        t: t_i,
        delta_x: dx,
        delta_t: dt,
    };

    let mut best = loop {
        if dx < tc.delta_floor || dt < tc.delta_floor {
            return Err(floor_err(dx, dt));
        }
        match probe.lipschitz(dx, dt, f64::INFINITY) {
            Probe::Lipschitz(lip) => break radius_on_box(tc, lip, dx, dt),
            _ => {
                dx *= tc.shrink;
                dt *= tc.shrink;
            }
        }
    };
    while dx.min(dt) * tc.shrink > best.delta {
        dx *= tc.shrink;
        dt *= tc.shrink;
        // only a Lipschitz estimate below this can improve on `best`
        let cap = tc.delta_u / (tc.lipschitz_safety * best.delta);
        match probe.lipschitz(dx, dt, cap) {
            Probe::Lipschitz(lip) => {
                let cand = radius_on_box(tc, lip, dx, dt);
                if cand.delta > best.delta {
                    best = cand;
                }
            }
            Probe::Exceeds => {}
            Probe::Inadmissible => break,
        }
    }
    if best.delta < tc.delta_floor {
        return Err(floor_err(best.delta_x, best.delta_t));
    }
    Ok(best)
}

/// Per-episode trigger bookkeeping: the latest event and the running count.
#[derive(Debug, Clone, Default)]
pub struct ControllerState {
    last: Option<TriggerEvent>,
    count: usize,
}

impl ControllerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_event(&self) -> Option<&TriggerEvent> {
        self.last.as_ref()
    }

    pub fn event_count(&self) -> usize {
        self.count
    }

    /// Held input `u(x(t_i), t_i)`.
    pub fn held_input(&self) -> &[f64] {
        &self.last.as_ref().expect("no event recorded yet").u
    }

    /// Stores a new event and returns its index.
    pub fn record(
        &mut self,
        t: f64,
        x: &[f64],
        u: Vec<f64>,
        radius: TriggerRadius,
        cause: TriggerCause,
    ) -> &TriggerEvent {
        let ev = TriggerEvent {
            index: self.count,
            t,
            x: x.to_vec(),
            u,
            delta: radius.delta,
            cause,
            lipschitz: radius.lipschitz,
        };
        self.count += 1;
        self.last.insert(ev)
    }

    pub fn should_trigger(&self, x: &[f64], t: f64) -> Option<TriggerCause> {
        should_trigger(x, t, self)
    }
}

/// `||x - x(t_i)||_inf > delta_i` or `t - t_i > delta_i`; state deviation wins
/// when both hold.
pub fn should_trigger(x: &[f64], t: f64, cs: &ControllerState) -> Option<TriggerCause> {
    let ev = cs.last.as_ref()?;
    let dev = x
        .iter()
        .zip(&ev.x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if dev > ev.delta {
        Some(TriggerCause::StateDeviation)
    } else if t - ev.t > ev.delta {
        Some(TriggerCause::MaxInterval)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funnel::{FunnelParams, PerformanceFunction};
    use crate::stl::{NonTemporalFormula, Predicate};

    struct Scaled(f64);

    impl Actuation for Scaled {
        fn state_dim(&self) -> usize {
            1
        }
        fn input_dim(&self) -> usize {
            1
        }
        fn apply(&self, _x: &[f64], u: &[f64], out: &mut [f64]) {
            out[0] = self.0 * u[0];
        }
        fn apply_transpose(&self, _x: &[f64], v: &[f64], out: &mut [f64]) {
            out[0] = self.0 * v[0];
        }
        fn apply_transpose_partial(&self, _x: &[f64], _j: usize, _v: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
        }
    }

    fn radius_at(x: f64, gain: f64, tc: &TriggerConfig) -> Result<TriggerRadius, ControllerError> {
        let psi = NonTemporalFormula::single(Predicate::ball(vec![0], vec![0.0], 10.0).unwrap());
        let fp = FunnelParams {
            t_star: 5.0,
            r: 1.0,
            rho_max: 9.0,
            perf: PerformanceFunction::new(20.0, 4.0, 0.2).unwrap(),
        };
        let law = ControlLaw::new(&psi, &fp);
        compute_trigger_radius(&law, &Scaled(gain), &[x], 0.0, tc)
    }

    fn state_with(delta: f64) -> ControllerState {
        let mut cs = ControllerState::new();
        let radius = TriggerRadius {
            delta,
            lipschitz: 1.0,
            delta_x: delta,
            delta_t: delta,
        };
        cs.record(1.0, &[0.0, 0.0], vec![3.0], radius, TriggerCause::Initial);
        cs
    }

    #[test]
    fn strict_inequalities() {
        let cs = state_with(0.25);
        assert_eq!(should_trigger(&[0.25, -0.25], 1.1, &cs), None);
        assert_eq!(should_trigger(&[0.0, 0.0], 1.25, &cs), None);
        assert_eq!(
            should_trigger(&[0.0, 0.0], 1.26, &cs),
            Some(TriggerCause::MaxInterval)
        );
        assert_eq!(
            should_trigger(&[0.0, 0.3], 1.1, &cs),
            Some(TriggerCause::StateDeviation)
        );
        assert_eq!(
            should_trigger(&[0.3, 0.0], 2.0, &cs),
            Some(TriggerCause::StateDeviation)
        );
    }

    #[test]
    fn hold_is_constant_until_next_event() {
        let mut cs = state_with(0.5);
        assert_eq!(cs.held_input(), &[3.0]);
        assert_eq!(cs.held_input(), &[3.0]);
        let r = TriggerRadius {
            delta: 0.1,
            lipschitz: 1.0,
            delta_x: 0.1,
            delta_t: 0.1,
        };
        cs.record(2.0, &[1.0, 0.0], vec![-1.0], r, TriggerCause::StateDeviation);
        assert_eq!(cs.held_input(), &[-1.0]);
        assert_eq!(cs.event_count(), 2);
        assert_eq!(cs.last_event().unwrap().index, 1);
    }

    #[test]
    fn flat_law_saturates_on_box() {
        let tc = TriggerConfig {
            delta_x0: 0.3,
            delta_t0: 0.2,
            ..Default::default()
        };
        let r = radius_at(3.0, 1e-9, &tc).unwrap();
        assert_eq!(r.delta, 0.2);
    }

    #[test]
    fn steep_law_is_lipschitz_bound() {
        let tc = TriggerConfig {
            delta_u: 1.0,
            ..Default::default()
        };
        let r = radius_at(3.0, 1e4, &tc).unwrap();
        assert!(r.delta < 0.5);
        assert!((r.delta - 1.0 / r.lipschitz).abs() < 1e-15);
    }

    #[test]
    fn near_boundary_shrinks_box() {
        // rho_max - gamma0 = -11: x = 20.9 gives rho = -10.9, close to the edge
        let r = radius_at(20.9, 1.0, &TriggerConfig::default()).unwrap();
        assert!(r.delta_x < 0.5);
    }

    #[test]
    fn floor_reached_on_boundary() {
        let err = radius_at(21.0 - 1e-9, 1.0, &TriggerConfig::default());
        assert!(matches!(err, Err(ControllerError::FloorReached { .. })));
    }

    #[test]
    fn radius_against_dense_grid() {
        let psi = NonTemporalFormula::single(Predicate::ball(vec![0], vec![0.0], 1.0).unwrap());
        let fp = FunnelParams {
            t_star: 0.0,
            r: 0.1,
            rho_max: 0.5,
            perf: PerformanceFunction::new(1.0, 1.0, 0.0).unwrap(),
        };
        let law = ControlLaw::new(&psi, &fp);
        let tc = TriggerConfig {
            delta_u: 1.0,
            ..Default::default()
        };
        let r = compute_trigger_radius(&law, &Scaled(1.0), &[0.9], 0.0, &tc).unwrap();
        assert!(r.delta <= r.delta_x && r.delta <= r.delta_t);
        // brute-force slope of u over the chosen box
        let u = |x: f64| law.eval(&Scaled(1.0), &[x], 0.0).unwrap()[0];
        let steps = 4000;
        let h = 2.0 * r.delta_x / steps as f64;
        let dense = (0..steps)
            .map(|k| {
                let a = 0.9 - r.delta_x + k as f64 * h;
                ((u(a + h) - u(a)) / h).abs()
            })
            .fold(0.0, f64::max);
        assert!(r.delta <= 1.0 / dense * (1.0 + 1e-6));
        assert!(r.delta >= 1.0 / (tc.lipschitz_safety * dense) * (1.0 - 1e-3) || r.delta == r.delta_x.min(r.delta_t));
    }

    #[test]
    fn refinement_keeps_the_largest_radius() {
        let tc = TriggerConfig {
            delta_u: 1.0,
            ..Default::default()
        };
        let r = radius_at(15.0, 50.0, &tc).unwrap();
        assert!(r.delta_x < tc.delta_x0);
        // the radius on the first admissible box is never better
        let first = TriggerConfig {
            delta_x0: r.delta_x / tc.shrink,
            delta_t0: r.delta_t / tc.shrink,
            shrink: 0.999,
            ..tc.clone()
        };
        let coarse = radius_at(15.0, 50.0, &first).unwrap();
        assert!(r.delta >= coarse.delta || coarse.delta_x < first.delta_x0);
    }

    #[test]
    fn unit_samples_cover_corners() {
        let pts = unit_samples(3, 4);
        assert_eq!(pts.len(), 8 + 4);
        assert_eq!(pts[7], vec![1.0, 1.0, 1.0]);
        assert_eq!(pts[8], vec![0.5, 1.0 / 3.0, 0.2]);
        assert_eq!(unit_samples(12, 0).len(), CORNER_CAP);
    }
}
