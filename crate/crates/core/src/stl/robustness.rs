//! Space robustness of non-temporal formulas.
//!
//! The exact semantics take the minimum over conjunction literals. The smooth
//! variant replaces the minimum by `-(1/eta) ln sum exp(-eta h_i)`, which
//! under-approximates the minimum by at most `ln(m)/eta`.

use nalgebra::DMatrix;

use super::formula::{Literal, NonTemporalFormula, Predicate, SmoothingConfig};

impl Predicate {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Predicate::Ball {
                selector,
                center,
                radius,
            } => {
                let sq: f64 = selector
                    .iter()
                    .zip(center)
                    .map(|(&i, c)| (x[i] - c).powi(2))
                    .sum();
                radius - sq.sqrt()
            }
            Predicate::Join { a, b, radius } => {
                let sq: f64 = a.iter().zip(b).map(|(&i, &j)| (x[i] - x[j]).powi(2)).sum();
                radius - sq.sqrt()
            }
            Predicate::Affine { a, b } => b - a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>(),
        }
    }

    /// Adds `scale * grad h(x)` into `grad`. Returns `h(x)`.
    ///
    /// At the apex of a ball or join cone the gradient is taken to be zero.
    pub fn accumulate_grad(&self, x: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        match self {
            Predicate::Ball {
                selector,
                center,
                radius,
            } => {
                let norm = selector
                    .iter()
                    .zip(center)
                    .map(|(&i, c)| (x[i] - c).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if norm > 0.0 {
                    for (&i, c) in selector.iter().zip(center) {
                        grad[i] -= scale * (x[i] - c) / norm;
                    }
                }
                radius - norm
            }
            Predicate::Join { a, b, radius } => {
                let norm = a
                    .iter()
                    .zip(b)
                    .map(|(&i, &j)| (x[i] - x[j]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if norm > 0.0 {
                    for (&i, &j) in a.iter().zip(b) {
                        let d = scale * (x[i] - x[j]) / norm;
                        grad[i] -= d;
                        grad[j] += d;
                    }
                }
                radius - norm
            }
            Predicate::Affine { a, b } => {
                let mut dot = 0.0;
                for (i, ai) in a.iter().enumerate() {
                    grad[i] -= scale * ai;
                    dot += ai * x[i];
                }
                b - dot
            }
        }
    }

    /// Adds `scale * hess h(x)` into `hess`.
    pub fn accumulate_hessian(&self, x: &[f64], scale: f64, hess: &mut DMatrix<f64>) {
        // h = r - ||M x - c||, hess = -M^T (I/|v| - v v^T/|v|^3) M
        let (rows, v): (Vec<(usize, Option<usize>)>, Vec<f64>) = match self {
            Predicate::Ball {
                selector, center, ..
            } => selector
                .iter()
                .zip(center)
                .map(|(&i, c)| ((i, None), x[i] - c))
                .unzip(),
            Predicate::Join { a, b, .. } => a
                .iter()
                .zip(b)
                .map(|(&i, &j)| ((i, Some(j)), x[i] - x[j]))
                .unzip(),
            Predicate::Affine { .. } => return,
        };
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            return;
        }
        let n3 = norm.powi(3);
        for (r, &(ri, rj)) in rows.iter().enumerate() {
            for (s, &(si, sj)) in rows.iter().enumerate() {
                let delta = if r == s { 1.0 / norm } else { 0.0 };
                let k = -scale * (delta - v[r] * v[s] / n3);
                hess[(ri, si)] += k;
                if let Some(sj) = sj {
                    hess[(ri, sj)] -= k;
                }
                if let Some(rj) = rj {
                    hess[(rj, si)] -= k;
                    if let Some(sj) = sj {
                        hess[(rj, sj)] += k;
                    }
                }
            }
        }
    }
}

impl Literal {
    pub fn value(&self, x: &[f64]) -> f64 {
        let h = self.predicate.value(x);
        if self.negated {
            -h
        } else {
            h
        }
    }

    fn sign(&self) -> f64 {
        if self.negated {
            -1.0
        } else {
            1.0
        }
    }
}

/// `h(x)` and its gradient over the full state.
pub fn predicate_value_and_grad(p: &Predicate, x: &[f64]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; x.len()];
    let h = p.accumulate_grad(x, 1.0, &mut grad);
    (h, grad)
}

/// Exact robustness: minimum over literals, negated literals flipped.
pub fn exact_psi_value(psi: &NonTemporalFormula, x: &[f64]) -> f64 {
    psi.literals()
        .iter()
        .map(|l| l.value(x))
        .fold(f64::INFINITY, f64::min)
}

/// Softmin weights `w_i = exp(-eta h_i) / sum_j exp(-eta h_j)` and the
/// smoothed value, computed with a max-shift.
pub fn softmin_weights(values: &[f64], eta: f64) -> (f64, Vec<f64>) {
    let (hmin, rest) = shifted_tail(values, eta);
    let s = 1.0 + rest;
    let w = values.iter().map(|h| (-eta * (h - hmin)).exp() / s).collect();
    (hmin - rest.ln_1p() / eta, w)
}

/// Returns `min h` and `sum_{i != argmin} exp(-eta (h_i - min h))`.
fn shifted_tail(values: &[f64], eta: f64) -> (f64, f64) {
    let (arg, hmin) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, h)| if h < acc.1 { (i, h) } else { acc });
    let rest = values
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != arg)
        .map(|(_, h)| (-eta * (h - hmin)).exp())
        .sum();
    (hmin, rest)
}

impl NonTemporalFormula {
    pub fn exact_value(&self, x: &[f64]) -> f64 {
        exact_psi_value(self, x)
    }

    pub fn smooth_value(&self, x: &[f64], cfg: &SmoothingConfig) -> f64 {
        let lits = self.literals();
        if lits.len() == 1 {
            return lits[0].value(x);
        }
        let mut buf = [0.0; 32];
        let heap: Vec<f64>;
        let vals: &[f64] = if lits.len() <= buf.len() {
            for (v, l) in buf.iter_mut().zip(lits) {
                *v = l.value(x);
            }
            &buf[..lits.len()]
        } else {
            heap = lits.iter().map(|l| l.value(x)).collect();
            &heap
        };
        let (hmin, rest) = shifted_tail(vals, cfg.eta);
        hmin - rest.ln_1p() / cfg.eta
    }

    /// Smoothed value and gradient; writes the gradient into `grad`.
    pub fn smooth_value_and_grad_into(
        &self,
        x: &[f64],
        cfg: &SmoothingConfig,
        grad: &mut [f64],
    ) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let lits = self.literals();
        if lits.len() == 1 {
            let l = &lits[0];
            let h = l.predicate.accumulate_grad(x, l.sign(), grad);
            return l.sign() * h;
        }
        let mut buf = [0.0; 32];
        let mut heap: Vec<f64>;
        let vals: &mut [f64] = if lits.len() <= buf.len() {
            &mut buf[..lits.len()]
        } else {
            heap = vec![0.0; lits.len()];
            &mut heap
        };
        for (v, l) in vals.iter_mut().zip(lits) {
            *v = l.value(x);
        }
        let (hmin, rest) = shifted_tail(vals, cfg.eta);
        let s = 1.0 + rest;
        for (l, h) in lits.iter().zip(vals.iter()) {
            let wi = (-cfg.eta * (h - hmin)).exp() / s;
            if wi > 0.0 {
                l.predicate.accumulate_grad(x, wi * l.sign(), grad);
            }
        }
        hmin - rest.ln_1p() / cfg.eta
    }

    /// Hessian of the smoothed robustness.
    pub fn smooth_hessian(&self, x: &[f64], cfg: &SmoothingConfig) -> DMatrix<f64> {
        let n = x.len();
        let lits = self.literals();
        let mut hess = DMatrix::zeros(n, n);
        if lits.len() == 1 {
            let l = &lits[0];
            l.predicate.accumulate_hessian(x, l.sign(), &mut hess);
            return hess;
        }
        let vals: Vec<f64> = lits.iter().map(|l| l.value(x)).collect();
        let (_, w) = softmin_weights(&vals, cfg.eta);
        // sum w_i H_i - eta (sum w_i g_i g_i^T - g g^T)
        let mut gbar = vec![0.0; n];
        let mut gi = vec![0.0; n];
        for (l, wi) in lits.iter().zip(&w) {
            l.predicate.accumulate_hessian(x, wi * l.sign(), &mut hess);
            gi.iter_mut().for_each(|g| *g = 0.0);
            l.predicate.accumulate_grad(x, l.sign(), &mut gi);
            for r in 0..n {
                if gi[r] == 0.0 {
                    continue;
                }
                gbar[r] += wi * gi[r];
                for c in 0..n {
                    hess[(r, c)] -= cfg.eta * wi * gi[r] * gi[c];
                }
            }
        }
        for r in 0..n {
            for c in 0..n {
                hess[(r, c)] += cfg.eta * gbar[r] * gbar[c];
            }
        }
        hess
    }
}

/// Smoothed robustness and gradient over the full state.
pub fn smooth_psi_value_and_grad(
    psi: &NonTemporalFormula,
    x: &[f64],
    cfg: &SmoothingConfig,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; x.len()];
    let rho = psi.smooth_value_and_grad_into(x, cfg, &mut grad);
    (rho, grad)
}

/// Hessian of the smoothed robustness (zero blocks at cone apexes).
pub fn smooth_psi_hessian(
    psi: &NonTemporalFormula,
    x: &[f64],
    cfg: &SmoothingConfig,
) -> DMatrix<f64> {
    psi.smooth_hessian(x, cfg)
}
