//! Fixed-step integration under a held input and held noise.

use super::Plant;
use crate::controller::Actuation;

fn rhs(plant: &Plant, x: &[f64], u: &[f64], w: &[f64], out: &mut [f64], gu: &mut [f64]) {
    plant.drift_into(x, out);
    plant.apply(x, u, gu);
    for ((o, g), wi) in out.iter_mut().zip(gu.iter()).zip(w) {
        *o += g + wi;
    }
}

/// Classical fourth-order Runge-Kutta step of `dx/dt = f(x) + g(x) u + w`.
pub fn step_rk4(plant: &Plant, x: &[f64], u: &[f64], w: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    let mut gu = vec![0.0; n];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    rhs(plant, x, u, w, &mut k1, &mut gu);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    rhs(plant, &tmp, u, w, &mut k2, &mut gu);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    rhs(plant, &tmp, u, w, &mut k3, &mut gu);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    rhs(plant, &tmp, u, w, &mut k4, &mut gu);
    (0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}
