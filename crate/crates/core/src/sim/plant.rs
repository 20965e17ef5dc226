//! Plant models `dx/dt = f(x) + g(x) u + w`.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::controller::Actuation;

/// `B` for a three-wheeled omnidirectional robot with body radius `l`.
pub fn geometric_matrix(l: f64) -> Matrix3<f64> {
    let (s, c) = (std::f64::consts::FRAC_PI_6.sin(), std::f64::consts::FRAC_PI_6.cos());
    Matrix3::new(0.0, c, -c, -1.0, s, s, l, l, l)
}

/// Team of omnidirectional robots with per-agent state `(x1, x2, heading)`
/// and `g_i(x) = Rot(heading) (B^T)^{-1} R`, stacked block-diagonally.
#[derive(Debug, Clone, PartialEq)]
pub struct OmniRobotTeam {
    pub agents: usize,
    pub body_radius: f64,
    pub wheel_radius: f64,
    /// `(B^T)^{-1} R`
    wheel_map: Matrix3<f64>,
}

impl OmniRobotTeam {
    pub fn new(agents: usize, body_radius: f64, wheel_radius: f64) -> Result<Self, SimError> {
        if agents == 0 || !(wheel_radius > 0.0) {
            return Err(SimError::Plant(
                "need at least one agent and a positive wheel radius".into(),
            ));
        }
        let b = geometric_matrix(body_radius);
        let inv = b
            .transpose()
            .try_inverse()
            .filter(|_| b.determinant().abs() > 1e-12)
            .ok_or_else(|| SimError::Plant(format!("B is singular for L = {body_radius}")))?;
        Ok(Self {
            agents,
            body_radius,
            wheel_radius,
            wheel_map: inv * wheel_radius,
        })
    }

    fn rotation(theta: f64) -> (f64, f64) {
        (theta.cos(), theta.sin())
    }
}

impl Actuation for OmniRobotTeam {
    fn state_dim(&self) -> usize {
        3 * self.agents
    }

    fn input_dim(&self) -> usize {
        3 * self.agents
    }

    fn apply(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let w = &self.wheel_map;
        for a in 0..self.agents {
            let o = 3 * a;
            let b = [
                w[(0, 0)] * u[o] + w[(0, 1)] * u[o + 1] + w[(0, 2)] * u[o + 2],
                w[(1, 0)] * u[o] + w[(1, 1)] * u[o + 1] + w[(1, 2)] * u[o + 2],
                w[(2, 0)] * u[o] + w[(2, 1)] * u[o + 1] + w[(2, 2)] * u[o + 2],
            ];
            let (c, s) = Self::rotation(x[o + 2]);
            out[o] = c * b[0] - s * b[1];
            out[o + 1] = s * b[0] + c * b[1];
            out[o + 2] = b[2];
        }
    }

    fn apply_transpose(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let w = &self.wheel_map;
        for a in 0..self.agents {
            let o = 3 * a;
            let (c, s) = Self::rotation(x[o + 2]);
            let r = [c * v[o] + s * v[o + 1], -s * v[o] + c * v[o + 1], v[o + 2]];
            for k in 0..3 {
                out[o + k] = w[(0, k)] * r[0] + w[(1, k)] * r[1] + w[(2, k)] * r[2];
            }
        }
    }

    fn apply_transpose_partial(&self, x: &[f64], j: usize, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        if j % 3 != 2 {
            return;
        }
        let w = &self.wheel_map;
        let o = j - 2;
        let (c, s) = Self::rotation(x[j]);
        // d Rot^T / d theta applied to v
        let r = [-s * v[o] + c * v[o + 1], -c * v[o] - s * v[o + 1], 0.0];
        for k in 0..3 {
            out[o + k] = w[(0, k)] * r[0] + w[(1, k)] * r[1];
        }
    }
}

/// `g = I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleIntegrator {
    pub dim: usize,
}

impl Actuation for SingleIntegrator {
    fn state_dim(&self) -> usize {
        self.dim
    }
    fn input_dim(&self) -> usize {
        self.dim
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

#[derive(Debug, Clone, PartialEq)]
pub enum PlantModel {
    OmniTeam(OmniRobotTeam),
    SingleIntegrator(SingleIntegrator),
}

impl PlantModel {
    fn inner(&self) -> &dyn Actuation {
        match self {
            PlantModel::OmniTeam(p) => p,
            PlantModel::SingleIntegrator(p) => p,
        }
    }
}

/// Drift term; hidden from the controller.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Drift {
    #[default]
    Zero,
    Linear(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub model: PlantModel,
    pub drift: Drift,
    /// Noise is uniform on `[-noise_bound, noise_bound]^n`.
    pub noise_bound: f64,
}

impl Plant {
    pub fn new(model: PlantModel) -> Self {
        Self {
            model,
            drift: Drift::Zero,
            noise_bound: 0.0,
        }
    }

    pub fn with_drift(mut self, drift: Drift) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_noise(mut self, bound: f64) -> Self {
        self.noise_bound = bound;
        self
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.drift {
            Drift::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Drift::Linear(a) => {
                for (r, o) in out.iter_mut().enumerate() {
                    *o = (0..x.len()).map(|c| a[(r, c)] * x[c]).sum();
                }
            }
        }
    }

    /// Smallest eigenvalue of `g(x) g(x)^T`.
    pub fn min_gram_eigenvalue(&self, x: &[f64]) -> f64 {
        let g = self.matrix(x);
        let gram = &g * g.transpose();
        SymmetricEigen::new(gram)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

impl Actuation for Plant {
    fn state_dim(&self) -> usize {
        self.model.inner().state_dim()
    }
    fn input_dim(&self) -> usize {
        self.model.inner().input_dim()
    }
    fn apply(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        self.model.inner().apply(x, u, out)
    }
    fn apply_transpose(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        self.model.inner().apply_transpose(x, v, out)
    }
    fn apply_transpose_partial(&self, x: &[f64], j: usize, v: &[f64], out: &mut [f64]) {
        self.model.inner().apply_transpose_partial(x, j, v, out)
    }
}

/// Plant selection as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantConfig {
    OmniTeam {
        #[serde(default = "default_agents")]
        agents: usize,
        #[serde(default = "default_body_radius")]
        body_radius: f64,
        #[serde(default = "default_wheel_radius")]
        wheel_radius: f64,
    },
    SingleIntegrator {
        dim: usize,
    },
}

fn default_agents() -> usize {
    3
}
fn default_body_radius() -> f64 {
    0.2
}
fn default_wheel_radius() -> f64 {
    0.02
}

pub fn omni_team_plant(agents: usize, body_radius: f64, wheel_radius: f64) -> Result<Plant, SimError> {
    Ok(Plant::new(PlantModel::OmniTeam(OmniRobotTeam::new(
        agents,
        body_radius,
        wheel_radius,
    )?)))
}

impl PlantConfig {
    pub fn build(&self, noise_bound: f64) -> Result<Plant, SimError> {
        let plant = match *self {
            PlantConfig::OmniTeam {
                agents,
                body_radius,
                wheel_radius,
            } => omni_team_plant(agents, body_radius, wheel_radius)?,
            PlantConfig::SingleIntegrator { dim } => {
                if dim == 0 {
                    return Err(SimError::Plant("dimension must be positive".into()));
                }
                Plant::new(PlantModel::SingleIntegrator(SingleIntegrator { dim }))
            }
        };
        if !(noise_bound >= 0.0 && noise_bound.is_finite()) {
            return Err(SimError::Plant(format!("noise bound {noise_bound} must be >= 0")));
        }
        Ok(plant.with_noise(noise_bound))
    }
}
