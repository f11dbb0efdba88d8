//! Reference posteriors: conjugate Gaussian, truncated normal, exact 2-D grids, rejection ABC.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use rand::distr::Distribution;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::StandardNormal;
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::gauss::DiagGaussian;
use crate::nn::Matrix;
use crate::rng;
use crate::sims::{SimTask, TaskId, GAUSSIAN_LINEAR_LIK_VAR, GAUSSIAN_LINEAR_PRIOR_VAR, MIXTURE_STDS};

pub const DEFAULT_GRID_RESOLUTION: usize = 512;
const MIN_RATE: f64 = 1e-7;
const RATE_CHECK_TRIALS: u64 = 10_000_000;

/// Per-dimension posterior of `θ ~ N(0, τ²)`, `y | θ ~ N(θ, σ²)`.
pub fn conjugate_gaussian_posterior(y0: &[f64], prior_var: f64, lik_var: f64) -> Result<DiagGaussian> {
    if !(prior_var > 0.0 && lik_var > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "variances must be positive, got prior {prior_var}, likelihood {lik_var}"
        )));
    }
    let shrink = prior_var / (prior_var + lik_var);
    let var = 1.0 / (1.0 / prior_var + 1.0 / lik_var);
    DiagGaussian::new(y0.iter().map(|y| y * shrink).collect(), vec![var; y0.len()])
}

/// `m` rows drawn from a diagonal Gaussian.
pub fn sample_gaussian<R: Rng + ?Sized>(g: &DiagGaussian, m: usize, rng: &mut R) -> Matrix {
    let sd: Vec<f64> = g.var().iter().map(|v| v.sqrt()).collect();
    let mut data = Vec::with_capacity(m * g.dim());
    for _ in 0..m {
        for (mu, s) in g.mean().iter().zip(&sd) {
            data.push(mu + s * rng.sample::<f64, _>(StandardNormal));
        }
    }
    Matrix::from_vec(m, g.dim(), data).unwrap()
}

#[inline]
fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

#[inline]
fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `Φ⁻¹(p)` for `p ≤ ½`, polished by Newton steps on `ln Φ` so deep-tail values keep
/// full relative accuracy.
fn lower_tail_quantile(p: f64) -> f64 {
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..3 {
        let c = std_normal_cdf(x);
        if c <= 0.0 || !x.is_finite() {
            break;
        }
        let step = (c.ln() - p.ln()) * c / std_normal_pdf(x);
        if !step.is_finite() {
            break;
        }
        x -= step;
    }
    x
}

/// One draw from the standard normal restricted to `[a, b]`.
fn truncated_std_normal(a: f64, b: f64, u: f64) -> Result<f64> {
    // Work in whichever tail keeps the CDF values away from 1.
    let (lo, hi, flip) = if a > 0.0 { (-b, -a, true) } else { (a, b, false) };
    let (cl, ch) = (std_normal_cdf(lo), std_normal_cdf(hi));
    if ch - cl <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "interval [{a}, {b}] has no normal mass in double precision"
        )));
    }
    let p = cl + u * (ch - cl);
    let x = if p <= 0.5 {
        lower_tail_quantile(p)
    } else {
        -lower_tail_quantile(1.0 - p)
    };
    let x = x.clamp(lo, hi);
    Ok(if flip { -x } else { x })
}

/// `m` draws from `∏ᵢ N(y₀ᵢ, σ²)` truncated to `[lowerᵢ, upperᵢ]`.
pub fn truncated_normal_posterior<R: Rng + ?Sized>(
    y0: &[f64],
    lik_var: f64,
    lower: &[f64],
    upper: &[f64],
    rng: &mut R,
    m: usize,
) -> Result<Matrix> {
    if lower.len() != y0.len() || upper.len() != y0.len() {
        return Err(Error::shape(format!("{} bounds", y0.len()), format!("{} / {}", lower.len(), upper.len())));
    }
    if !(lik_var > 0.0) {
        return Err(Error::InvalidArgument(format!("likelihood variance must be positive, got {lik_var}")));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
        return Err(Error::InvalidArgument("every lower bound must lie below its upper bound".into()));
    }
    let sd = lik_var.sqrt();
    let std_bounds: Vec<(f64, f64)> = y0
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(y, (l, u))| ((l - y) / sd, (u - y) / sd))
        .collect();
    for &(a, b) in &std_bounds {
        truncated_std_normal(a, b, 0.5)?;
    }
    let mut data = Vec::with_capacity(m * y0.len());
    for _ in 0..m {
        for (i, &(a, b)) in std_bounds.iter().enumerate() {
            let x = y0[i] + sd * truncated_std_normal(a, b, rng.random::<f64>())?;
            data.push(x.clamp(lower[i], upper[i]));
        }
    }
    Matrix::from_vec(m, y0.len(), data)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub low: f64,
    pub high: f64,
    pub cells: usize,
}

impl Axis {
    pub fn width(&self) -> f64 {
        (self.high - self.low) / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.low + (self.high - self.low) * (2 * i + 1) as f64 / (2 * self.cells) as f64
    }
}

/// Normalized weights over the cells of a regular grid (last axis fastest).
#[derive(Clone, Debug)]
pub struct GridPosterior {
    axes: Vec<Axis>,
    weights: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
}

impl GridPosterior {
    /// Evaluates `log_density` at every cell center and normalizes.
    pub fn from_log_density(axes: Vec<Axis>, log_density: impl Fn(&[f64]) -> f64) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|a| a.cells == 0 || !(a.low < a.high)) {
            return Err(Error::InvalidArgument("grid axes need positive cell counts and low < high".into()));
        }
        let total: usize = axes.iter().map(|a| a.cells).product();
        let mut logs = Vec::with_capacity(total);
        let mut point = vec![0.0; axes.len()];
        for flat in 0..total {
            let mut rem = flat;
            for (k, ax) in axes.iter().enumerate().rev() {
                point[k] = ax.center(rem % ax.cells);
                rem /= ax.cells;
            }
            let l = log_density(&point);
            logs.push(if l.is_nan() { f64::NEG_INFINITY } else { l });
        }
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::InvalidArgument("grid density is zero or infinite everywhere".into()));
        }
        let mut weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        let alias =
            WeightedAliasIndex::new(weights.clone()).map_err(|e| Error::InvalidArgument(format!("alias table: {e}")))?;
        Ok(Self { axes, weights, alias })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Per-axis cell indices of a flat cell index.
    pub fn cell_index(&self, flat: usize) -> Vec<usize> {
        let mut rem = flat;
        let mut idx = vec![0; self.axes.len()];
        for (k, ax) in self.axes.iter().enumerate().rev() {
            idx[k] = rem % ax.cells;
            rem /= ax.cells;
        }
        idx
    }

    /// Center of the heaviest cell.
    pub fn mode(&self) -> Vec<f64> {
        let (flat, _) = self
            .weights
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &w)| if w > best.1 { (i, w) } else { best });
        self.cell_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, ax)| ax.center(i))
            .collect()
    }

    /// Alias-method cell draws with uniform jitter inside each cell.
    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Matrix {
        let d = self.axes.len();
        let mut data = Vec::with_capacity(m * d);
        for _ in 0..m {
            let flat = self.alias.sample(rng);
            for (i, ax) in self.cell_index(flat).into_iter().zip(&self.axes) {
                data.push(ax.low + (i as f64 + rng.random::<f64>()) * ax.width());
            }
        }
        Matrix::from_vec(m, d, data).unwrap()
    }
}

/// Log-likelihood of a Two Moons observation under `θ`, including the polar Jacobian.
pub fn two_moons_log_likelihood(y0: &[f64], theta: &[f64]) -> f64 {
    let px = y0[0] + FRAC_1_SQRT_2 * (theta[0] + theta[1]).abs() - 0.25;
    let py = y0[1] + FRAC_1_SQRT_2 * (theta[0] - theta[1]);
    let r = px.hypot(py);
    // Angles outside (−π/2, π/2) have zero density; tiny radii are excluded.
    if px <= 0.0 || r < 1e-9 {
        return f64::NEG_INFINITY;
    }
    let z = (r - 0.1) / 0.01;
    -0.5 * z * z - (0.01 * (2.0 * PI).sqrt()).ln() - PI.ln() - r.ln()
}

pub fn two_moons_grid_posterior(y0: &[f64], resolution: usize) -> Result<GridPosterior> {
    check_grid_inputs(y0, resolution)?;
    let ax = Axis {
        low: -1.0,
        high: 1.0,
        cells: resolution,
    };
    GridPosterior::from_log_density(vec![ax, ax], |t| two_moons_log_likelihood(y0, t))
}

pub fn gmm_grid_posterior(y0: &[f64], resolution: usize) -> Result<GridPosterior> {
    check_grid_inputs(y0, resolution)?;
    let ax = Axis {
        low: -10.0,
        high: 10.0,
        cells: resolution,
    };
    GridPosterior::from_log_density(vec![ax, ax], |t| {
        let d2 = (y0[0] - t[0]).powi(2) + (y0[1] - t[1]).powi(2);
        let terms = MIXTURE_STDS.map(|s| (0.5f64).ln() - 2.0 * s.ln() - 0.5 * d2 / (s * s));
        let m = terms[0].max(terms[1]);
        m + ((terms[0] - m).exp() + (terms[1] - m).exp()).ln()
    })
}

fn check_grid_inputs(y0: &[f64], resolution: usize) -> Result<()> {
    if y0.len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: y0.len(),
        });
    }
    if resolution < 100 {
        return Err(Error::InvalidArgument(format!("grid resolution {resolution} is below 100")));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct AbcResult {
    pub samples: Matrix,
    pub trials: u64,
    pub acceptance_rate: f64,
}

/// Prior draws whose simulated data lie within `epsilon` (Euclidean) of `y0`.
pub fn rejection_abc<R: Rng + ?Sized>(
    task: &SimTask,
    y0: &[f64],
    epsilon: f64,
    n_accept: usize,
    max_trials: u64,
    rng: &mut R,
) -> Result<AbcResult> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if y0.len() != task.y_dim() {
        return Err(Error::DimensionMismatch {
            expected: task.y_dim(),
            actual: y0.len(),
        });
    }
    let eps2 = epsilon * epsilon;
    let mut accepted = Vec::with_capacity(n_accept * task.theta_dim());
    let mut count = 0usize;
    let mut trials = 0u64;
    while count < n_accept {
        let theta = task.prior_sample(rng);
        trials += 1;
        // Failed simulations count as rejections.
        if let Ok(y) = task.simulate(&theta, rng) {
            let d2: f64 = y.iter().zip(y0).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 <= eps2 {
                accepted.extend(theta);
                count += 1;
            }
        }
        let rate = count as f64 / trials as f64;
        if trials >= max_trials || (trials >= RATE_CHECK_TRIALS && trials % RATE_CHECK_TRIALS == 0 && rate < MIN_RATE)
        {
            if count < n_accept {
                return Err(Error::AbcStarved { rate, trials });
            }
        }
    }
    Ok(AbcResult {
        samples: Matrix::from_vec(count, task.theta_dim(), accepted)?,
        trials,
        acceptance_rate: count as f64 / trials as f64,
    })
}

/// Lloyd's 2-means with a deterministic farthest-point start; returns centers and labels.
pub fn two_means(x: &Matrix, iterations: usize) -> ([Vec<f64>; 2], Vec<usize>) {
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    let far = |from: &[f64]| {
        x.iter_rows()
            .fold((x.row(0), -1.0), |best, r| {
                let d = d2(r, from);
                if d > best.1 {
                    (r, d)
                } else {
                    best
                }
            })
            .0
            .to_vec()
    };
    let c0 = far(&x.column_means());
    let c1 = far(&c0);
    let mut centers = [c0, c1];
    let mut labels = vec![0; x.rows()];
    for _ in 0..iterations {
        for (l, r) in labels.iter_mut().zip(x.iter_rows()) {
            *l = usize::from(d2(r, &centers[1]) < d2(r, &centers[0]));
        }
        let mut sums = [vec![0.0; x.cols()], vec![0.0; x.cols()]];
        let mut counts = [0usize; 2];
        for (&l, r) in labels.iter().zip(x.iter_rows()) {
            counts[l] += 1;
            sums[l].iter_mut().zip(r).for_each(|(s, v)| *s += v);
        }
        let mut moved = false;
        for k in 0..2 {
            if counts[k] > 0 {
                let c: Vec<f64> = sums[k].iter().map(|s| s / counts[k] as f64).collect();
                moved |= c != centers[k];
                centers[k] = c;
            }
        }
        if !moved {
            break;
        }
    }
    (centers, labels)
}

/// Reference-posterior samples for tasks with a desk-scale oracle, tagged with its kind.
pub fn oracle_samples(task: TaskId, y0: &[f64], m: usize, seed: u64) -> Option<Result<(Matrix, &'static str)>> {
    let mut r = rng::seeded(seed);
    let out = match task {
        TaskId::GaussianLinear => conjugate_gaussian_posterior(y0, GAUSSIAN_LINEAR_PRIOR_VAR, GAUSSIAN_LINEAR_LIK_VAR)
            .map(|g| (sample_gaussian(&g, m, &mut r), "conjugate_gaussian")),
        TaskId::GaussianLinearUniform => {
            let (lo, hi) = task.uniform_bounds().unwrap();
            let d = y0.len();
            truncated_normal_posterior(y0, GAUSSIAN_LINEAR_LIK_VAR, &vec![lo; d], &vec![hi; d], &mut r, m)
                .map(|s| (s, "truncated_normal"))
        }
        TaskId::TwoMoons => {
            two_moons_grid_posterior(y0, DEFAULT_GRID_RESOLUTION).map(|g| (g.sample(m, &mut r), "grid_two_moons"))
        }
        TaskId::GaussianMixture => {
            gmm_grid_posterior(y0, DEFAULT_GRID_RESOLUTION).map(|g| (g.sample(m, &mut r), "grid_gaussian_mixture"))
        }
        _ => return None,
    };
    Some(out)
}
