//! Benchmark simulators and their priors.

mod dataset;
mod glm;
mod ode;

pub use dataset::{generate_dataset, read_csv, write_csv, Dataset, StandardScaler};
pub use glm::{glm_smoothness_matrix, GlmContext, GLM_BIAS_PRIOR_VAR, GLM_BINS, GLM_DESIGN_SEED};
pub use ode::{
    lotka_volterra_observations, sir_trajectory, SirState, LV_HORIZON, LV_INITIAL, LV_NOISE_SCALE, LV_STEP,
    SIR_HORIZON, SIR_POPULATION, SIR_SAMPLE_SIZE, SIR_STEP,
};

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Likelihood variance of both Gaussian linear tasks.
pub const GAUSSIAN_LINEAR_LIK_VAR: f64 = 0.1;
/// Prior variance of the Gaussian linear task.
pub const GAUSSIAN_LINEAR_PRIOR_VAR: f64 = 0.1;
/// Component standard deviations of the Gaussian mixture likelihood.
pub const MIXTURE_STDS: [f64; 2] = [1.0, 0.1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    TwoMoons,
    GaussianLinear,
    GaussianLinearUniform,
    GaussianMixture,
    BernoulliGlm,
    BernoulliGlmRaw,
    Sir,
    LotkaVolterra,
}

impl TaskId {
    pub const ALL: [TaskId; 8] = [
        TaskId::TwoMoons,
        TaskId::GaussianLinear,
        TaskId::GaussianLinearUniform,
        TaskId::GaussianMixture,
        TaskId::BernoulliGlm,
        TaskId::BernoulliGlmRaw,
        TaskId::Sir,
        TaskId::LotkaVolterra,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::TwoMoons => "two_moons",
            TaskId::GaussianLinear => "gaussian_linear",
            TaskId::GaussianLinearUniform => "gaussian_linear_uniform",
            TaskId::GaussianMixture => "gaussian_mixture",
            TaskId::BernoulliGlm => "bernoulli_glm",
            TaskId::BernoulliGlmRaw => "bernoulli_glm_raw",
            TaskId::Sir => "sir",
            TaskId::LotkaVolterra => "lotka_volterra",
        }
    }

    /// `(theta_dim, y_dim)`.
    pub fn dims(self) -> (usize, usize) {
        match self {
            TaskId::TwoMoons => (2, 2),
            TaskId::GaussianLinear => (10, 10),
            TaskId::GaussianLinearUniform => (10, 10),
            TaskId::GaussianMixture => (2, 2),
            TaskId::BernoulliGlm => (10, 10),
            TaskId::BernoulliGlmRaw => (10, 100),
            TaskId::Sir => (2, 10),
            TaskId::LotkaVolterra => (4, 20),
        }
    }

    /// Box support of a uniform prior, if the task has one.
    pub fn uniform_bounds(self) -> Option<(f64, f64)> {
        match self {
            TaskId::TwoMoons | TaskId::GaussianLinearUniform => Some((-1.0, 1.0)),
            TaskId::GaussianMixture => Some((-10.0, 10.0)),
            _ => None,
        }
    }

    /// Whether θ and y are standardized on a log scale. Lotka-Volterra has a log-normal prior
    /// and multiplicative noise, and its populations span many orders of magnitude.
    pub fn log_scaled(self) -> bool {
        matches!(self, TaskId::LotkaVolterra)
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        TaskId::ALL
            .into_iter()
            .find(|t| t.name() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown task '{s}'")))
    }
}

/// A benchmark problem: prior, simulator, and any fixed context.
#[derive(Clone, Debug)]
pub struct SimTask {
    id: TaskId,
    glm: Option<GlmContext>,
}

impl SimTask {
    pub fn new(id: TaskId) -> Self {
        let glm = matches!(id, TaskId::BernoulliGlm | TaskId::BernoulliGlmRaw).then(GlmContext::standard);
        Self { id, glm }
    }

    pub fn id(&self) -> TaskId {
        self.id
    }

    pub fn theta_dim(&self) -> usize {
        self.id.dims().0
    }

    pub fn y_dim(&self) -> usize {
        self.id.dims().1
    }

    pub fn glm_context(&self) -> Option<&GlmContext> {
        self.glm.as_ref()
    }

    pub fn prior_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut normal = || -> f64 { rng.sample(StandardNormal) };
        match self.id {
            TaskId::TwoMoons | TaskId::GaussianLinearUniform | TaskId::GaussianMixture => {
                let (lo, hi) = self.id.uniform_bounds().unwrap();
                (0..self.theta_dim()).map(|_| rng.random_range(lo..hi)).collect()
            }
            TaskId::GaussianLinear => {
                let sd = GAUSSIAN_LINEAR_PRIOR_VAR.sqrt();
                (0..10).map(|_| sd * normal()).collect()
            }
            TaskId::BernoulliGlm | TaskId::BernoulliGlmRaw => self.glm.as_ref().unwrap().prior_sample(rng),
            TaskId::Sir => vec![
                (0.4f64.ln() + 0.5 * normal()).exp(),
                ((1.0f64 / 8.0).ln() + 0.2 * normal()).exp(),
            ],
            TaskId::LotkaVolterra => [-0.125, -3.0, -0.125, -3.0]
                .iter()
                .map(|loc| (loc + 0.5 * normal()).exp())
                .collect(),
        }
    }

    pub fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        if theta.len() != self.theta_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.theta_dim(),
                actual: theta.len(),
            });
        }
        let y = match self.id {
            TaskId::TwoMoons => {
                let a = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
                let r = 0.1 + 0.01 * rng.sample::<f64, _>(StandardNormal);
                two_moons_map(theta, r, a).to_vec()
            }
            TaskId::GaussianLinear | TaskId::GaussianLinearUniform => {
                let sd = GAUSSIAN_LINEAR_LIK_VAR.sqrt();
                theta
                    .iter()
                    .map(|t| t + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
            TaskId::GaussianMixture => {
                let sd = if rng.random_bool(0.5) {
                    MIXTURE_STDS[0]
                } else {
                    MIXTURE_STDS[1]
                };
                theta
                    .iter()
                    .map(|t| t + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
            TaskId::BernoulliGlm => {
                let glm = self.glm.as_ref().unwrap();
                glm.summarize(&glm.spikes(theta, rng))
            }
            TaskId::BernoulliGlmRaw => {
                let glm = self.glm.as_ref().unwrap();
                glm.spikes(theta, rng).iter().map(|&z| z as f64).collect()
            }
            TaskId::Sir => {
                let traj = sir_trajectory(theta[0], theta[1], false)?;
                let mut y = Vec::with_capacity(10);
                for s in traj.observed {
                    let p = (s.infected / SIR_POPULATION).clamp(0.0, 1.0);
                    let b = Binomial::new(SIR_SAMPLE_SIZE, p).map_err(|e| Error::Simulator {
                        theta: theta.to_vec(),
                        reason: e.to_string(),
                    })?;
                    y.push(b.sample(rng) as f64);
                }
                y
            }
            TaskId::LotkaVolterra => {
                let states = lotka_volterra_observations(theta)?;
                let mut y = vec![0.0; 20];
                for (k, (lx, ly)) in states.iter().enumerate() {
                    y[k] = (lx + LV_NOISE_SCALE * rng.sample::<f64, _>(StandardNormal)).exp();
                    y[10 + k] = (ly + LV_NOISE_SCALE * rng.sample::<f64, _>(StandardNormal)).exp();
                }
                y
            }
        };
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulator {
                theta: theta.to_vec(),
                reason: "non-finite observation".into(),
            });
        }
        Ok(y)
    }
}

/// Two Moons observation for a pinned radius `r` and angle `a`.
pub fn two_moons_map(theta: &[f64], r: f64, a: f64) -> [f64; 2] {
    [
        r * a.cos() + 0.25 - FRAC_1_SQRT_2 * (theta[0] + theta[1]).abs(),
        r * a.sin() - FRAC_1_SQRT_2 * (theta[0] - theta[1]),
    ]
}
