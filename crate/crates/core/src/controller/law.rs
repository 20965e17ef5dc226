//! `u(x, t) = -k eps(x, t) g(x)^T grad rho(x)`.

use nalgebra::DMatrix;

use super::Actuation;
use crate::funnel::{transform_derivative, FunnelError, FunnelParams, TransformedError};
use crate::stl::{NonTemporalFormula, SmoothingConfig};

/// The continuous law for one task's funnel. `gain` scales the whole input.
#[derive(Debug, Clone, Copy)]
pub struct ControlLaw<'a> {
    pub psi: &'a NonTemporalFormula,
    pub funnel: &'a FunnelParams,
    pub smoothing: SmoothingConfig,
    pub gain: f64,
}

impl<'a> ControlLaw<'a> {
    pub fn new(psi: &'a NonTemporalFormula, funnel: &'a FunnelParams) -> Self {
        Self {
            psi,
            funnel,
            smoothing: SmoothingConfig::default(),
            gain: 1.0,
        }
    }

    pub fn with_smoothing(mut self, smoothing: SmoothingConfig) -> Self {
        self.smoothing = smoothing;
        self
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    /// Writes `u(x, t)` into `out`; `grad` is scratch of state dimension.
    pub fn eval_into(
        &self,
        plant: &dyn Actuation,
        x: &[f64],
        t: f64,
        grad: &mut [f64],
        out: &mut [f64],
    ) -> Result<TransformedError, FunnelError> {
        let rho = self.psi.smooth_value_and_grad_into(x, &self.smoothing, grad);
        let te = self.funnel.error_from_rho(rho, t)?;
        plant.apply_transpose(x, grad, out);
        let k = -self.gain * te.eps;
        out.iter_mut().for_each(|u| *u *= k);
        Ok(te)
    }

    pub fn eval(&self, plant: &dyn Actuation, x: &[f64], t: f64) -> Result<Vec<f64>, FunnelError> {
        let mut grad = vec![0.0; x.len()];
        let mut u = vec![0.0; plant.input_dim()];
        self.eval_into(plant, x, t, &mut grad, &mut u)?;
        Ok(u)
    }

    /// Jacobian of `u` with respect to `(x, t)`: `m x (n + 1)`, time last.
    pub fn jacobian(
        &self,
        plant: &dyn Actuation,
        x: &[f64],
        t: f64,
    ) -> Result<DMatrix<f64>, FunnelError> {
        let n = x.len();
        let m = plant.input_dim();
        let mut grad = vec![0.0; n];
        let rho = self.psi.smooth_value_and_grad_into(x, &self.smoothing, &mut grad);
        let te = self.funnel.error_from_rho(rho, t)?;
        let hess = self.psi.smooth_hessian(x, &self.smoothing);
        let gamma = self.funnel.gamma(t);
        let ds = transform_derivative(te.xi, 0.0);

        let mut v = vec![0.0; m];
        plant.apply_transpose(x, &grad, &mut v);
        let mut jac = DMatrix::zeros(m, n + 1);
        let mut tmp = vec![0.0; m];
        let mut col = vec![0.0; n];
        let k = -self.gain;
        for j in 0..n {
            let deps = ds / gamma * grad[j];
            plant.apply_transpose_partial(x, j, &grad, &mut tmp);
            for r in 0..m {
                jac[(r, j)] = k * (deps * v[r] + te.eps * tmp[r]);
            }
            for (c, h) in col.iter_mut().enumerate() {
                *h = hess[(c, j)];
            }
            plant.apply_transpose(x, &col, &mut tmp);
            for r in 0..m {
                jac[(r, j)] += k * te.eps * tmp[r];
            }
        }
        // d xi / dt = -e gamma' / gamma^2
        let deps_dt = -ds * te.e * self.funnel.perf.derivative(t) / (gamma * gamma);
        for r in 0..m {
            jac[(r, n)] = k * deps_dt * v[r];
        }
        Ok(jac)
    }
}

/// One-shot evaluation of the law with unit gain.
pub fn continuous_law(
    x: &[f64],
    t: f64,
    psi: &NonTemporalFormula,
    fp: &FunnelParams,
    plant: &dyn Actuation,
    smoothing: &SmoothingConfig,
) -> Result<Vec<f64>, FunnelError> {
    ControlLaw::new(psi, fp)
        .with_smoothing(*smoothing)
        .eval(plant, x, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funnel::PerformanceFunction;
    use crate::stl::{Predicate, SmoothingConfig};

    /// `g = I` in any dimension.
    struct Identity(usize);

    impl Actuation for Identity {
        fn state_dim(&self) -> usize {
            self.0
        }
        fn input_dim(&self) -> usize {
            self.0
        }
        fn apply(&self, _x: &[f64], u: &[f64], out: &mut [f64]) {
            out.copy_from_slice(u);
        }
        fn apply_transpose(&self, _x: &[f64], v: &[f64], out: &mut [f64]) {
            out.copy_from_slice(v);
        }
        fn apply_transpose_partial(&self, _x: &[f64], _j: usize, _v: &[f64], out: &mut [f64]) {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
    }

    fn flat(rho_max: f64, gamma: f64) -> FunnelParams {
        FunnelParams {
            t_star: 1.0,
            r: 0.1,
            rho_max,
            perf: PerformanceFunction::new(gamma, gamma, 0.0).unwrap(),
        }
    }

    #[test]
    fn one_dimensional_example() {
        // h(x) = 1 - x^2 has no predicate form; with g = 1 the law is
        // -eps * h'(x), h'(0.9) = -1.8
        let rho: f64 = 1.0 - 0.81;
        let fp = flat(0.5, 1.0);
        let te = fp.error_from_rho(rho, 0.0).unwrap();
        let u = -te.eps * (-1.8);
        assert!((te.eps - 0.8001193001121129).abs() < 1e-13);
        assert!((u - 1.4402147402018032).abs() < 1e-12);
    }

    #[test]
    fn midline_gives_zero_input() {
        let psi = NonTemporalFormula::single(Predicate::ball(vec![0], vec![0.0], 1.0).unwrap());
        let fp = flat(1.0, 1.0);
        // rho = 0.5 = rho_max - gamma/2
        let u = continuous_law(&[0.5], 0.0, &psi, &fp, &Identity(1), &SmoothingConfig::default())
            .unwrap();
        assert_eq!(u, vec![0.0]);
    }

    #[test]
    fn identity_input_is_scaled_gradient() {
        let psi = NonTemporalFormula::single(
            Predicate::ball(vec![0, 1], vec![0.0, 0.0], 10.0).unwrap(),
        );
        let fp = flat(9.0, 10.0);
        let x = [3.0, 4.0];
        let law = ControlLaw::new(&psi, &fp);
        let u = law.eval(&Identity(2), &x, 0.0).unwrap();
        let te = fp.error_from_rho(5.0, 0.0).unwrap();
        assert!((u[0] - te.eps * 0.6).abs() < 1e-15);
        assert!((u[1] - te.eps * 0.8).abs() < 1e-15);
        let doubled = law.with_gain(2.0).eval(&Identity(2), &x, 0.0).unwrap();
        assert_eq!(doubled[0], 2.0 * u[0]);
    }

    #[test]
    fn violation_propagates() {
        let psi = NonTemporalFormula::single(Predicate::ball(vec![0], vec![0.0], 1.0).unwrap());
        let fp = flat(0.5, 1.0);
        assert!(continuous_law(&[0.0], 0.0, &psi, &fp, &Identity(1), &Default::default()).is_err());
    }

    #[test]
    fn jacobian_matches_differences() {
        let psi = NonTemporalFormula::single(
            Predicate::ball(vec![0, 1], vec![1.0, -2.0], 6.0).unwrap(),
        )
        .and(NonTemporalFormula::single(
            Predicate::join(vec![0], vec![1], 5.0).unwrap(),
        ));
        let fp = FunnelParams {
            t_star: 5.0,
            r: 0.5,
            rho_max: 4.0,
            perf: PerformanceFunction::new(9.0, 1.0, 0.3).unwrap(),
        };
        let law = ControlLaw::new(&psi, &fp).with_gain(3.0);
        let x = [2.0, 0.5];
        let t = 1.2;
        let jac = law.jacobian(&Identity(2), &x, t).unwrap();
        let h = 1e-6;
        for j in 0..3 {
            let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
            let (mut tp, mut tm) = (t, t);
            if j < 2 {
                xp[j] += h;
                xm[j] -= h;
            } else {
                tp += h;
                tm -= h;
            }
            let up = law.eval(&Identity(2), &xp, tp).unwrap();
            let um = law.eval(&Identity(2), &xm, tm).unwrap();
            for r in 0..2 {
                let fd = (up[r] - um[r]) / (2.0 * h);
                assert!((fd - jac[(r, j)]).abs() < 1e-6 * fd.abs().max(1.0), "{r},{j}");
            }
        }
    }
}
