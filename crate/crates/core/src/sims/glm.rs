//! Bernoulli GLM: smoothness prior, fixed design matrix, spiking simulator.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::nn::Matrix;
use crate::rng;

pub const GLM_BINS: usize = 100;
const FILTER_LEN: usize = 9;
/// Seed of the frozen covariate matrix shared by every simulation.
pub const GLM_DESIGN_SEED: u64 = 0x61_6d_72_74_67_6c_6d;
/// Variance of the bias prior.
pub const GLM_BIAS_PRIOR_VAR: f64 = 2.0;

/// Second-order difference penalty: 1 at `j = i−2`, −2 at `j = i−1`,
/// `1 + sqrt((i−1)/9)` on the diagonal (1-based `i`).
pub fn glm_smoothness_matrix() -> [[f64; FILTER_LEN]; FILTER_LEN] {
    let mut f = [[0.0; FILTER_LEN]; FILTER_LEN];
    for i in 0..FILTER_LEN {
        f[i][i] = 1.0 + (i as f64 / 9.0).sqrt();
        if i >= 1 {
            f[i][i - 1] = -2.0;
        }
        if i >= 2 {
            f[i][i - 2] = 1.0;
        }
    }
    f
}

#[derive(Clone, Debug)]
pub struct GlmContext {
    /// `T × 9` white-noise covariates, one row per time bin.
    pub design: Matrix,
    pub smoothness: [[f64; FILTER_LEN]; FILTER_LEN],
}

impl GlmContext {
    pub fn standard() -> Self {
        let mut r = rng::seeded(GLM_DESIGN_SEED);
        let design = Matrix::from_vec(
            GLM_BINS,
            FILTER_LEN,
            (0..GLM_BINS * FILTER_LEN).map(|_| r.sample(StandardNormal)).collect(),
        )
        .unwrap();
        Self {
            design,
            smoothness: glm_smoothness_matrix(),
        }
    }

    /// `[β, f]` with `β ~ N(0, 2)` and `f ~ N(0, (FᵀF)⁻¹)`, i.e. `f = F⁻¹ε`.
    pub fn prior_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let beta = GLM_BIAS_PRIOR_VAR.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let eps: Vec<f64> = (0..FILTER_LEN).map(|_| rng.sample(StandardNormal)).collect();
        let mut theta = Vec::with_capacity(FILTER_LEN + 1);
        theta.push(beta);
        theta.extend(self.solve_lower(&eps));
        theta
    }

    /// Forward substitution `F x = b` (F is lower triangular).
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let f = &self.smoothness;
        let mut x = vec![0.0; FILTER_LEN];
        for i in 0..FILTER_LEN {
            let mut s = b[i];
            for j in 0..i {
                s -= f[i][j] * x[j];
            }
            x[i] = s / f[i][i];
        }
        x
    }

    pub fn spikes<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Vec<u8> {
        let (beta, filter) = (theta[0], &theta[1..]);
        (0..GLM_BINS)
            .map(|t| {
                let eta: f64 = beta + self.design.row(t).iter().zip(filter).map(|(v, f)| v * f).sum::<f64>();
                let p = 1.0 / (1.0 + (-eta).exp());
                u8::from(rng.random::<f64>() < p)
            })
            .collect()
    }

    /// Spike count followed by the spike-triggered covariate average
    /// (zero when there are no spikes).
    pub fn summarize(&self, spikes: &[u8]) -> Vec<f64> {
        let count: f64 = spikes.iter().map(|&z| z as f64).sum();
        let mut y = vec![0.0; FILTER_LEN + 1];
        y[0] = count;
        if count > 0.0 {
            for (t, &z) in spikes.iter().enumerate() {
                if z == 1 {
                    for (acc, v) in y[1..].iter_mut().zip(self.design.row(t)) {
                        *acc += v;
                    }
                }
            }
            y[1..].iter_mut().for_each(|v| *v /= count);
        }
        y
    }
}
