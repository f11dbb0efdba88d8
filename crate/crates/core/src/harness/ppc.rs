use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::sims::{SimTask, StandardScaler};

pub const MIN_PPC_SAMPLES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpcResult {
    pub n_posterior: usize,
    pub n_prior: usize,
    pub posterior_median_dist: f64,
    pub prior_median_dist: f64,
    /// posterior / prior; below 1 means posterior draws reproduce y₀ better than prior draws.
    pub ratio: f64,
    pub posterior_failures: usize,
    pub prior_failures: usize,
    pub failure_fraction: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Distances from y₀ of one simulation per θ, in scaled units. Failed simulations are skipped.
fn distances<R: Rng + ?Sized>(
    task: &SimTask,
    thetas: impl Iterator<Item = Vec<f64>>,
    y0: &[f64],
    scaler: &StandardScaler,
    rng: &mut R,
) -> Result<(Vec<f64>, usize)> {
    let mut out = Vec::new();
    let mut failures = 0;
    for theta in thetas {
        let y = match task.simulate(&theta, rng) {
            Ok(y) if y.iter().all(|v| v.is_finite()) => y,
            Ok(_) | Err(Error::Simulator { .. }) => {
                failures += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let ys = scaler.apply_row(&y)?;
        out.push(ys.iter().zip(y0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
    }
    Ok((out, failures))
}

/// Compares how closely data simulated from posterior draws and from an equal number of prior
/// draws land near the observation.
pub fn posterior_predictive_check<R: Rng + ?Sized>(
    task: &SimTask,
    posterior: &Matrix,
    y0: &[f64],
    y_scaler: &StandardScaler,
    rng: &mut R,
) -> Result<PpcResult> {
    let n = posterior.rows();
    if n < MIN_PPC_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "posterior predictive check needs at least {MIN_PPC_SAMPLES} samples, got {n}"
        )));
    }
    if posterior.cols() != task.theta_dim() {
        return Err(Error::DimensionMismatch {
            expected: task.theta_dim(),
            actual: posterior.cols(),
        });
    }
    if y0.len() != task.y_dim() {
        return Err(Error::DimensionMismatch {
            expected: task.y_dim(),
            actual: y0.len(),
        });
    }
    let y0s = y_scaler.apply_row(y0)?;
    let (post, post_fail) = distances(task, posterior.iter_rows().map(<[f64]>::to_vec), &y0s, y_scaler, rng)?;
    let priors: Vec<Vec<f64>> = (0..n).map(|_| task.prior_sample(rng)).collect();
    let (prior, prior_fail) = distances(task, priors.into_iter(), &y0s, y_scaler, rng)?;
    if post.is_empty() || prior.is_empty() {
        return Err(Error::InvalidArgument("every predictive simulation failed".into()));
    }
    let (n_posterior, n_prior) = (post.len(), prior.len());
    let pm = median(post);
    let qm = median(prior);
    if qm <= 0.0 {
        return Err(Error::InvalidArgument("prior predictive distances are all zero".into()));
    }
    Ok(PpcResult {
        n_posterior,
        n_prior,
        posterior_median_dist: pm,
        prior_median_dist: qm,
        ratio: pm / qm,
        posterior_failures: post_fail,
        prior_failures: prior_fail,
        failure_fraction: (post_fail + prior_fail) as f64 / (2 * n) as f64,
    })
}
