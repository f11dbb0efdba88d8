//! Fixed-step RK4 integration of the SIR and Lotka-Volterra systems.

use crate::error::{Error, Result};

pub const SIR_POPULATION: f64 = 1_000_000.0;
pub const SIR_HORIZON: f64 = 160.0;
pub const SIR_STEP: f64 = 0.1;
/// Binomial sample size of the infectious-count observation.
pub const SIR_SAMPLE_SIZE: u64 = 1000;
const OBSERVATIONS: usize = 10;

pub const LV_INITIAL: [f64; 2] = [30.0, 1.0];
pub const LV_HORIZON: f64 = 20.0;
pub const LV_STEP: f64 = 0.01;
/// Log-scale standard deviation of the multiplicative observation noise.
pub const LV_NOISE_SCALE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SirState {
    pub susceptible: f64,
    pub infected: f64,
    pub recovered: f64,
}

impl SirState {
    pub fn total(&self) -> f64 {
        self.susceptible + self.infected + self.recovered
    }

    fn from_array(a: [f64; 3]) -> Self {
        Self {
            susceptible: a[0],
            infected: a[1],
            recovered: a[2],
        }
    }
}

pub struct SirTrajectory {
    /// States at the 10 evenly spaced observation times `t_k = k·horizon/10`.
    pub observed: Vec<SirState>,
    /// Every integrator state, when requested.
    pub steps: Vec<SirState>,
}

fn rk4<const N: usize>(y: [f64; N], h: f64, f: impl Fn(&[f64; N]) -> [f64; N]) -> [f64; N] {
    let add = |a: &[f64; N], b: &[f64; N], s: f64| -> [f64; N] { std::array::from_fn(|i| a[i] + s * b[i]) };
    let k1 = f(&y);
    let k2 = f(&add(&y, &k1, h / 2.0));
    let k3 = f(&add(&y, &k2, h / 2.0));
    let k4 = f(&add(&y, &k3, h));
    std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Standard SIR dynamics: `S' = −βSI/N`, `I' = βSI/N − γI`, `R' = γI`.
pub fn sir_trajectory(beta: f64, gamma: f64, record_steps: bool) -> Result<SirTrajectory> {
    let n = SIR_POPULATION;
    let total_steps = (SIR_HORIZON / SIR_STEP).round() as usize;
    let every = total_steps / OBSERVATIONS;
    let mut y = [n - 1.0, 1.0, 0.0];
    let mut observed = Vec::with_capacity(OBSERVATIONS);
    let mut steps = Vec::new();
    if record_steps {
        steps.push(SirState::from_array(y));
    }
    for step in 1..=total_steps {
        y = rk4(y, SIR_STEP, |s| {
            let infection = beta * s[0] * s[1] / n;
            let recovery = gamma * s[1];
            [-infection, infection - recovery, recovery]
        });
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulator {
                theta: vec![beta, gamma],
                reason: format!("SIR state became non-finite at step {step}"),
            });
        }
        if record_steps {
            steps.push(SirState::from_array(y));
        }
        if step % every == 0 {
            observed.push(SirState::from_array(y));
        }
    }
    debug_assert_eq!(observed.len(), OBSERVATIONS);
    Ok(SirTrajectory { observed, steps })
}

/// Log-populations `(ln X, ln Y)` at the 10 observation times.
///
/// Integrated in log coordinates (`u' = α − βe^v`, `v' = −γ + δe^u`), which keeps
/// both populations positive for any step size.
pub fn lotka_volterra_observations(theta: &[f64]) -> Result<Vec<(f64, f64)>> {
    let (alpha, beta, gamma, delta) = (theta[0], theta[1], theta[2], theta[3]);
    let total_steps = (LV_HORIZON / LV_STEP).round() as usize;
    let every = total_steps / OBSERVATIONS;
    let mut y = [LV_INITIAL[0].ln(), LV_INITIAL[1].ln()];
    let mut out = Vec::with_capacity(OBSERVATIONS);
    for step in 1..=total_steps {
        y = rk4(y, LV_STEP, |s| [alpha - beta * s[1].exp(), -gamma + delta * s[0].exp()]);
        if y.iter().any(|v| !v.is_finite() || v.abs() > 700.0) {
            return Err(Error::Simulator {
                theta: theta.to_vec(),
                reason: format!("Lotka-Volterra state diverged at step {step}"),
            });
        }
        if step % every == 0 {
            out.push((y[0], y[1]));
        }
    }
    Ok(out)
}
