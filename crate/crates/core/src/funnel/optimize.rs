//! Global maximization of the smoothed robustness of a concave conjunction.
//!
//! Norm leaves `r - ||M x - c||` are lifted to `r - s` with `s >= ||M x - c||`,
//! which turns the problem into minimizing a log-sum-exp of affine functions
//! over a product of second-order cones. A log-barrier path-following method
//! solves that to a prescribed duality gap. Nonconcave inputs fall back to
//! gradient ascent with backtracking.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::FunnelError;
use crate::stl::{NonTemporalFormula, Predicate, SmoothingConfig};

pub const GRAD_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100_000;
const ESCAPE_NORM: f64 = 1e9;
const GAP_TOL: f64 = 1e-11;
const APEX_SNAP: f64 = 1e-6;
const ARMIJO_SLOPE: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const NEWTON_TOL: f64 = 1e-10;
const MAX_CENTERING: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub x_star: Vec<f64>,
    pub rho_opt: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Certified gap to the supremum (zero when only affine leaves appear).
    pub duality_gap: f64,
}

/// Row of `M x - c`: `x[i] - x[j]` or `x[i] - c`.
#[derive(Debug, Clone, Copy)]
enum Row {
    Anchor(usize, f64),
    Pair(usize, usize),
}

#[derive(Debug, Clone)]
struct Cone {
    rows: Vec<Row>,
}

impl Cone {
    fn residual(&self, x: &[f64], v: &mut Vec<f64>) {
        v.clear();
        v.extend(self.rows.iter().map(|r| match *r {
            Row::Anchor(i, c) => x[i] - c,
            Row::Pair(i, j) => x[i] - x[j],
        }));
    }
}

/// Leaf value as an affine form over `z = (x, s)`.
#[derive(Debug, Clone)]
struct AffineLeaf {
    c0: f64,
    coef: Vec<(usize, f64)>,
}

impl AffineLeaf {
    fn eval(&self, z: &[f64]) -> f64 {
        self.c0 + self.coef.iter().map(|&(i, a)| a * z[i]).sum::<f64>()
    }
}

struct Lifted {
    n: usize,
    cones: Vec<Cone>,
    leaves: Vec<AffineLeaf>,
    eta: f64,
}

impl Lifted {
    fn new(psi: &NonTemporalFormula, n: usize, eta: f64) -> Self {
        let mut cones = Vec::new();
        let mut leaves = Vec::new();
        for lit in psi.literals() {
            match &lit.predicate {
                Predicate::Ball {
                    selector,
                    center,
                    radius,
                } => {
                    let rows = selector
                        .iter()
                        .zip(center)
                        .map(|(&i, &c)| Row::Anchor(i, c))
                        .collect();
                    leaves.push(AffineLeaf {
                        c0: *radius,
                        coef: vec![(n + cones.len(), -1.0)],
                    });
                    cones.push(Cone { rows });
                }
                Predicate::Join { a, b, radius } => {
                    let rows = a.iter().zip(b).map(|(&i, &j)| Row::Pair(i, j)).collect();
                    leaves.push(AffineLeaf {
                        c0: *radius,
                        coef: vec![(n + cones.len(), -1.0)],
                    });
                    cones.push(Cone { rows });
                }
                Predicate::Affine { a, b } => {
                    let sign = if lit.negated { -1.0 } else { 1.0 };
                    leaves.push(AffineLeaf {
                        c0: sign * b,
                        coef: a
                            .iter()
                            .enumerate()
                            .filter(|(_, ai)| **ai != 0.0)
                            .map(|(i, ai)| (i, -sign * ai))
                            .collect(),
                    });
                }
            }
        }
        Self {
            n,
            cones,
            leaves,
            eta,
        }
    }

    fn dim(&self) -> usize {
        self.n + self.cones.len()
    }

    /// Barrier objective `t f0(z) - sum ln(s_k^2 - |v_k|^2)`; `None` outside the domain.
    fn objective(&self, z: &[f64], t: f64, v: &mut Vec<f64>) -> Option<f64> {
        let mut barrier = 0.0;
        for (k, cone) in self.cones.iter().enumerate() {
            let s = z[self.n + k];
            cone.residual(z, v);
            let d = s * s - v.iter().map(|c| c * c).sum::<f64>();
            if s <= 0.0 || d <= 0.0 {
                return None;
            }
            barrier -= d.ln();
        }
        Some(t * self.f0(z) + barrier)
    }

    /// `f0 = (1/eta) ln sum exp(-eta l_i)`, the negated smooth robustness.
    fn f0(&self, z: &[f64]) -> f64 {
        let vals: Vec<f64> = self.leaves.iter().map(|l| l.eval(z)).collect();
        let lmin = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let sum: f64 = vals.iter().map(|l| (-self.eta * (l - lmin)).exp()).sum();
        -lmin + sum.ln() / self.eta
    }

    fn derivatives(&self, z: &[f64], t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let dim = self.dim();
        let mut g = DVector::zeros(dim);
        let mut h = DMatrix::zeros(dim, dim);

        let vals: Vec<f64> = self.leaves.iter().map(|l| l.eval(z)).collect();
        let lmin = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let mut w: Vec<f64> = vals
            .iter()
            .map(|l| (-self.eta * (l - lmin)).exp())
            .collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|wi| *wi /= total);

        // grad f0 = -sum w_i a_i ; hess f0 = eta (sum w_i a_i a_i^T - abar abar^T)
        let mut abar = DVector::zeros(dim);
        for (leaf, wi) in self.leaves.iter().zip(&w) {
            for &(i, a) in &leaf.coef {
                abar[i] += wi * a;
                for &(j, b) in &leaf.coef {
                    h[(i, j)] += t * self.eta * wi * a * b;
                }
            }
        }
        g -= &abar * t;
        h -= (&abar * abar.transpose()) * (t * self.eta);

        let mut v = Vec::new();
        for (k, cone) in self.cones.iter().enumerate() {
            let si = self.n + k;
            let s = z[si];
            cone.residual(z, &mut v);
            let d = s * s - v.iter().map(|c| c * c).sum::<f64>();
            // q = M^T v
            let mut q: Vec<(usize, f64)> = Vec::with_capacity(2 * v.len());
            let mut mtm: Vec<(usize, usize, f64)> = Vec::new();
            for (row, &vr) in cone.rows.iter().zip(&v) {
                match *row {
                    Row::Anchor(i, _) => {
                        q.push((i, vr));
                        mtm.push((i, i, 1.0));
                    }
                    Row::Pair(i, j) => {
                        q.push((i, vr));
                        q.push((j, -vr));
                        mtm.extend([(i, i, 1.0), (j, j, 1.0), (i, j, -1.0), (j, i, -1.0)]);
                    }
                }
            }
            g[si] += -2.0 * s / d;
            h[(si, si)] += -2.0 / d + 4.0 * s * s / (d * d);
            for &(i, qi) in &q {
                g[i] += 2.0 * qi / d;
                h[(si, i)] -= 4.0 * s * qi / (d * d);
                h[(i, si)] -= 4.0 * s * qi / (d * d);
                for &(j, qj) in &q {
                    h[(i, j)] += 4.0 * qi * qj / (d * d);
                }
            }
            for &(i, j, m) in &mtm {
                h[(i, j)] += 2.0 * m / d;
            }
        }
        (g, h)
    }
}

fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> DVector<f64> {
    let scale = h.diagonal().iter().fold(1.0_f64, |m, d| m.max(d.abs()));
    let mut mu = 1e-14 * scale;
    loop {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += mu;
        }
        if let Some(ch) = hr.cholesky() {
            return -ch.solve(g);
        }
        mu *= 100.0;
    }
}

fn default_start(psi: &NonTemporalFormula, n: usize) -> Vec<f64> {
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for lit in psi.literals() {
        if let Predicate::Ball {
            selector, center, ..
        } = &lit.predicate
        {
            for (&i, &c) in selector.iter().zip(center) {
                sum[i] += c;
                count[i] += 1;
            }
        }
    }
    sum.iter()
        .zip(&count)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect()
}

fn escaped(x: &[f64]) -> bool {
    x.iter().map(|c| c * c).sum::<f64>().sqrt() > ESCAPE_NORM
}

/// Moves cone leaves that sit numerically on their apex exactly onto it, so
/// the returned point uses the apex gradient convention.
fn snap_apexes(psi: &NonTemporalFormula, x: &mut [f64]) {
    for lit in psi.literals() {
        match &lit.predicate {
            Predicate::Ball {
                selector, center, ..
            } => {
                let d: f64 = selector
                    .iter()
                    .zip(center)
                    .map(|(&i, c)| (x[i] - c).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if d < APEX_SNAP {
                    for (&i, &c) in selector.iter().zip(center) {
                        x[i] = c;
                    }
                }
            }
            Predicate::Join { a, b, .. } => {
                let d: f64 = a
                    .iter()
                    .zip(b)
                    .map(|(&i, &j)| (x[i] - x[j]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if d < APEX_SNAP {
                    for (&i, &j) in a.iter().zip(b) {
                        x[j] = x[i];
                    }
                }
            }
            Predicate::Affine { .. } => {}
        }
    }
}

fn grad_norm(psi: &NonTemporalFormula, x: &[f64], cfg: &SmoothingConfig) -> (f64, f64) {
    let mut g = vec![0.0; x.len()];
    let rho = psi.smooth_value_and_grad_into(x, cfg, &mut g);
    (rho, g.iter().map(|c| c * c).sum::<f64>().sqrt())
}

/// Maximizes the smoothed robustness of `psi`. The state dimension is taken
/// from `x_init` when given, otherwise from the largest index `psi` reads.
pub fn optimize_robustness(
    psi: &NonTemporalFormula,
    cfg: &SmoothingConfig,
    x_init: Option<&[f64]>,
) -> Result<OptimizationResult, FunnelError> {
    let n = match x_init {
        Some(x) => x.len(),
        None => psi
            .literals()
            .iter()
            .filter_map(|l| l.predicate.max_index())
            .max()
            .map_or(1, |m| m + 1),
    };
    psi.check_dimension(n).map_err(FunnelError::Formula)?;
    let x0 = match x_init {
        Some(x) => x.to_vec(),
        None => default_start(psi, n),
    };
    let rho0 = psi.smooth_value(&x0, cfg);

    let (mut x, iterations, gap) = if psi.is_concave() {
        barrier_method(psi, cfg, &x0)?
    } else {
        let (x, it) = gradient_ascent(psi, cfg, &x0)?;
        (x, it, f64::NAN)
    };

    let (rho_raw, gn_raw) = grad_norm(psi, &x, cfg);
    let mut snapped = x.clone();
    snap_apexes(psi, &mut snapped);
    let (rho_snap, gn_snap) = grad_norm(psi, &snapped, cfg);
    let (mut rho, mut gn) = (rho_raw, gn_raw);
    if rho_snap >= rho_raw - 1e-12 * rho_raw.abs().max(1.0) && gn_snap <= gn_raw {
        x = snapped;
        rho = rho_snap;
        gn = gn_snap;
    }
    if rho < rho0 {
        x = x0;
        let (r, g) = grad_norm(psi, &x, cfg);
        rho = r;
        gn = g;
    }
    Ok(OptimizationResult {
        x_star: x,
        rho_opt: rho,
        iterations,
        grad_norm: gn,
        duality_gap: gap,
    })
}

fn barrier_method(
    psi: &NonTemporalFormula,
    cfg: &SmoothingConfig,
    x0: &[f64],
) -> Result<(Vec<f64>, usize, f64), FunnelError> {
    let prob = Lifted::new(psi, x0.len(), cfg.eta);
    let k = prob.cones.len();
    let mut z: Vec<f64> = x0.to_vec();
    let mut v = Vec::new();
    for cone in &prob.cones {
        cone.residual(x0, &mut v);
        z.push(v.iter().map(|c| c * c).sum::<f64>().sqrt() + 1.0);
    }

    let mut t: f64 = 1.0;
    let mut iterations = 0;
    loop {
        // centering
        for _ in 0..MAX_CENTERING {
            let (g, h) = prob.derivatives(&z, t);
            let d = newton_direction(&g, &h);
            let slope = g.dot(&d);
            if -slope / 2.0 <= NEWTON_TOL {
                break;
            }
            iterations += 1;
            if iterations > MAX_ITERATIONS {
                return Err(FunnelError::NoConvergence {
                    iterations,
                    grad_norm: g.norm(),
                });
            }
            let f = prob.objective(&z, t, &mut v).expect("iterate stays interior");
            let mut step = 1.0;
            let mut trial = vec![0.0; z.len()];
            let accepted = loop {
                for (i, zi) in trial.iter_mut().enumerate() {
                    *zi = z[i] + step * d[i];
                }
                if let Some(ft) = prob.objective(&trial, t, &mut v) {
                    if ft <= f + ARMIJO_SLOPE * step * slope {
                        break true;
                    }
                }
                step *= SHRINK;
                if step < 1e-12 {
                    break false;
                }
            };
            if !accepted {
                // centered as far as rounding allows
                break;
            }
            z = trial;
            if escaped(&z[..x0.len()]) {
                return Err(FunnelError::Unbounded);
            }
        }
        let gap = 2.0 * k as f64 / t;
        if gap < GAP_TOL {
            return Ok((z[..x0.len()].to_vec(), iterations, gap));
        }
        t *= 20.0;
    }
}

fn gradient_ascent(
    psi: &NonTemporalFormula,
    cfg: &SmoothingConfig,
    x0: &[f64],
) -> Result<(Vec<f64>, usize), FunnelError> {
    let mut x = x0.to_vec();
    let mut g = vec![0.0; x.len()];
    let mut trial = vec![0.0; x.len()];
    let mut step = 1.0;
    for it in 0..MAX_ITERATIONS {
        let rho = psi.smooth_value_and_grad_into(&x, cfg, &mut g);
        let gg: f64 = g.iter().map(|c| c * c).sum();
        if gg.sqrt() <= GRAD_TOL {
            return Ok((x, it));
        }
        step *= 4.0;
        loop {
            for i in 0..x.len() {
                trial[i] = x[i] + step * g[i];
            }
            if psi.smooth_value(&trial, cfg) >= rho + ARMIJO_SLOPE * step * gg {
                break;
            }
            step *= SHRINK;
            if step < 1e-300 {
                return Err(FunnelError::NoConvergence {
                    iterations: it,
                    grad_norm: gg.sqrt(),
                });
            }
        }
        std::mem::swap(&mut x, &mut trial);
        if escaped(&x) {
            return Err(FunnelError::Unbounded);
        }
    }
    let gn = grad_norm(psi, &x, cfg).1;
    Err(FunnelError::NoConvergence {
        iterations: MAX_ITERATIONS,
        grad_norm: gn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{parse_formula, parse_formula_with, ParseOptions, SequentialFormula};

    fn psi_of(text: &str) -> NonTemporalFormula {
        match parse_formula(text).unwrap() {
            SequentialFormula::Ordered(atoms) => atoms[0].body.clone(),
            SequentialFormula::Chain(steps) => steps[0].0.clone(),
        }
    }

    #[test]
    fn single_ball_peaks_at_center() {
        let psi = psi_of("G[0,1] ball(0,1;20,30;10)");
        let res = optimize_robustness(&psi, &SmoothingConfig::default(), Some(&[0.0, 0.0]))
            .unwrap();
        assert!((res.rho_opt - 10.0).abs() < 1e-9);
        assert!((res.x_star[0] - 20.0).abs() < 1e-6);
        assert!(res.grad_norm <= GRAD_TOL);
    }

    #[test]
    fn two_balls_balance() {
        // centers 0 and 4, radius 3: optimum at 2 where both leaves are 1
        let psi = psi_of("G[0,1] ball(0;0;3) and ball(0;4;3)");
        let res = optimize_robustness(&psi, &SmoothingConfig::default(), Some(&[-7.0])).unwrap();
        assert!((res.x_star[0] - 2.0).abs() < 1e-8);
        assert!((res.rho_opt - (1.0 - 2f64.ln())).abs() < 1e-9);
        assert!(res.grad_norm <= GRAD_TOL);
    }

    #[test]
    fn affine_only_is_unbounded() {
        let psi = psi_of("G[0,5] aff(1;3)");
        assert!(matches!(
            optimize_robustness(&psi, &SmoothingConfig::default(), Some(&[0.0])),
            Err(FunnelError::Unbounded)
        ));
    }

    #[test]
    fn affine_slab_is_bounded() {
        // 3 - x and x + 1: maximum at x = 1 where both equal 2
        let psi = psi_of("G[0,5] aff(1;3) and aff(-1;1)");
        let res = optimize_robustness(&psi, &SmoothingConfig::default(), Some(&[10.0])).unwrap();
        assert!((res.x_star[0] - 1.0).abs() < 1e-8);
        assert!((res.rho_opt - (2.0 - 2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn never_worse_than_start() {
        let psi = psi_of("G[0,1] ball(0,1;1,1;2) and join(0,1;2,3;1) and aff(0,0,1;4)");
        let x0 = [1.0, 1.0, 1.0, 1.0];
        let rho0 = psi.smooth_value(&x0, &SmoothingConfig::default());
        let res = optimize_robustness(&psi, &SmoothingConfig::default(), Some(&x0)).unwrap();
        assert!(res.rho_opt >= rho0);
    }

    #[test]
    fn nonconcave_uses_ascent() {
        let opts = ParseOptions {
            allow_nonconcave: true,
        };
        let theta = parse_formula_with("G[0,1] ball(0;0;5) and not ball(0;1;1)", opts).unwrap();
        let psi = match theta {
            SequentialFormula::Ordered(a) => a[0].body.clone(),
            _ => unreachable!(),
        };
        let res = optimize_robustness(&psi, &SmoothingConfig::default(), Some(&[-1.0])).unwrap();
        assert!(res.grad_norm <= GRAD_TOL);
        assert!(res.duality_gap.is_nan());
    }
}
