//! Sample-based posterior comparison: squared MMD and the classifier two-sample test.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Adjoint, AdamW, Head, Matrix, Network, OptimizerState};
use crate::rng;

/// Rows used for the median-heuristic bandwidth.
pub const MEDIAN_SUBSAMPLE: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub value: f64,
    /// All subsampled rows coincided and the fallback 1.0 was used.
    pub degenerate: bool,
}

fn check_pair(p: &Matrix, q: &Matrix) -> Result<()> {
    if p.rows() == 0 || q.rows() == 0 {
        return Err(Error::InvalidArgument("sample sets must be nonempty".into()));
    }
    if p.cols() != q.cols() {
        return Err(Error::DimensionMismatch {
            expected: p.cols(),
            actual: q.cols(),
        });
    }
    Ok(())
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median pairwise Euclidean distance over evenly strided rows (at most [`MEDIAN_SUBSAMPLE`]).
pub fn median_heuristic_bandwidth(samples: &Matrix) -> Result<Bandwidth> {
    if samples.rows() < 2 {
        return Err(Error::InvalidArgument("median heuristic needs at least 2 rows".into()));
    }
    let n = samples.rows();
    let m = n.min(MEDIAN_SUBSAMPLE);
    let rows: Vec<&[f64]> = (0..m).map(|i| samples.row(i * n / m)).collect();
    let mut d = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in 0..i {
            d.push(sq_dist(rows[i], rows[j]));
        }
    }
    let mid = d.len() / 2;
    let (_, &mut upper, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let median_sq = if d.len() % 2 == 1 {
        upper
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower.sqrt() + upper.sqrt()).powi(2)
    };
    let value = median_sq.sqrt();
    Ok(if value > 0.0 && value.is_finite() {
        Bandwidth { value, degenerate: false }
    } else {
        Bandwidth {
            value: 1.0,
            degenerate: true,
        }
    })
}

/// Mean over all row pairs of `Σ_{s ∈ {h/2, h, 2h}} exp(−‖a−b‖²/(2s²))`.
fn mean_kernel(a: &Matrix, b: &Matrix, h: f64) -> f64 {
    let c = -1.0 / (8.0 * h * h);
    let mut total = 0.0;
    for x in a.iter_rows() {
        let mut row = 0.0;
        for y in b.iter_rows() {
            // t is the 2h kernel; t⁴ and t¹⁶ are the h and h/2 kernels.
            let t = (c * sq_dist(x, y)).exp();
            let t4 = (t * t) * (t * t);
            let t16 = (t4 * t4) * (t4 * t4);
            row += t + t4 + t16;
        }
        total += row;
    }
    total / (a.rows() as f64 * b.rows() as f64)
}

fn canonical_order(a: &Matrix, b: &Matrix) -> Ordering {
    a.rows().cmp(&b.rows()).then_with(|| {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mmd {
    pub value: f64,
    pub bandwidth: Bandwidth,
    /// The raw estimate was negative by rounding and has been set to 0.
    pub clamped: bool,
}

/// Biased (V-statistic) squared MMD with the three-scale Gaussian kernel around `h`.
///
/// Arguments are put in a canonical order first, so the result is bitwise symmetric.
pub fn mmd2(p: &Matrix, q: &Matrix, h: f64) -> Result<f64> {
    Ok(mmd2_raw(p, q, h)?.0)
}

fn mmd2_raw(p: &Matrix, q: &Matrix, h: f64) -> Result<(f64, bool)> {
    check_pair(p, q)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }
    let (a, b) = if canonical_order(p, q).is_le() { (p, q) } else { (q, p) };
    let v = mean_kernel(a, a, h) + mean_kernel(b, b, h) - 2.0 * mean_kernel(a, b, h);
    Ok(if v < 0.0 { (0.0, true) } else { (v, false) })
}

/// [`mmd2`] with the bandwidth chosen by the median heuristic on the pooled samples.
pub fn mmd2_median(p: &Matrix, q: &Matrix) -> Result<Mmd> {
    check_pair(p, q)?;
    let (a, b) = if canonical_order(p, q).is_le() { (p, q) } else { (q, p) };
    let bandwidth = median_heuristic_bandwidth(&interleave(a, b))?;
    let (value, clamped) = mmd2_raw(a, b, bandwidth.value)?;
    Ok(Mmd {
        value,
        bandwidth,
        clamped,
    })
}

/// Rows of `a` and `b` alternated, so a strided subsample draws from both sets.
fn interleave(a: &Matrix, b: &Matrix) -> Matrix {
    let mut data = Vec::with_capacity(a.as_slice().len() + b.as_slice().len());
    for i in 0..a.rows().max(b.rows()) {
        if i < a.rows() {
            data.extend_from_slice(a.row(i));
        }
        if i < b.rows() {
            data.extend_from_slice(b.row(i));
        }
    }
    Matrix::from_vec(a.rows() + b.rows(), a.cols(), data).unwrap()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct C2stConfig {
    pub folds: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Hidden width as a multiple of the sample dimension.
    pub width_factor: usize,
}

impl Default for C2stConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            epochs: 200,
            batch_size: 256,
            lr: 1e-3,
            width_factor: 10,
        }
    }
}

/// Jointly z-scored copy of `p` stacked on `q`.
fn zscore_joint(p: &Matrix, q: &Matrix) -> Matrix {
    let x = Matrix::vstack(&[p.clone(), q.clone()]).unwrap();
    let means = x.column_means();
    let n = x.rows() as f64;
    let mut sd = vec![0.0; x.cols()];
    for r in x.iter_rows() {
        for ((s, v), m) in sd.iter_mut().zip(r).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    let sd: Vec<f64> = sd
        .iter()
        .map(|s| {
            let v = (s / n).sqrt();
            if v > 0.0 {
                v
            } else {
                1.0
            }
        })
        .collect();
    let mut out = x;
    for i in 0..out.rows() {
        for ((v, m), s) in out.row_mut(i).iter_mut().zip(&means).zip(&sd) {
            *v = (*v - m) / s;
        }
    }
    out
}

/// Binary cross-entropy with logits; returns the batch mean and its adjoint.
fn bce_with_logits(logits: &Matrix, labels: &[f64]) -> (f64, Matrix) {
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = logits.clone();
    for ((g, &s), &y) in grad.as_mut_slice().iter_mut().zip(logits.as_slice()).zip(labels) {
        loss += s.max(0.0) - s * y + (-s.abs()).exp().ln_1p();
        *g = (1.0 / (1.0 + (-s).exp()) - y) / n;
    }
    (loss / n, grad)
}

fn fit_classifier(x: &Matrix, labels: &[f64], train: &[usize], cfg: &C2stConfig, seed: u64) -> Result<Network> {
    let d = x.cols();
    let w = cfg.width_factor * d;
    let mut net = Network::new(&[d, w, w, 1], Activation::Relu, Head::Plain, rng::derive(seed, 0))?;
    let mut opt = OptimizerState::new(&net, AdamW::with_lr(cfg.lr));
    let mut order = train.to_vec();
    let shuffle_seed = rng::derive(seed, 1);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(shuffle_seed, epoch as u64));
        for rows in order.chunks(cfg.batch_size) {
            let xb = x.select_rows(rows);
            let yb: Vec<f64> = rows.iter().map(|&i| labels[i]).collect();
            let (out, cache) = net.forward_cached(&xb)?;
            let (_, adj) = bce_with_logits(&out.into_plain(), &yb);
            let (grads, _) = net.backward(&cache, &Adjoint::Plain(adj))?;
            if !grads.all_finite() {
                return Err(Error::NonFiniteGradient);
            }
            opt.step(&mut net, &grads)?;
        }
    }
    Ok(net)
}

/// Mean held-out accuracy of an MLP classifier separating `p` (label 0) from `q` (label 1)
/// under stratified k-fold cross-validation.
pub fn c2st(p: &Matrix, q: &Matrix, seed: u64) -> Result<f64> {
    c2st_with(p, q, seed, &C2stConfig::default())
}

pub fn c2st_with(p: &Matrix, q: &Matrix, seed: u64, cfg: &C2stConfig) -> Result<f64> {
    check_pair(p, q)?;
    if cfg.folds < 2 || cfg.epochs == 0 || cfg.batch_size == 0 || cfg.width_factor == 0 {
        return Err(Error::InvalidArgument("invalid C2ST settings".into()));
    }
    let min_rows = 10.max(cfg.folds);
    if p.rows() < min_rows || q.rows() < min_rows {
        return Err(Error::InvalidArgument(format!(
            "C2ST needs at least {min_rows} rows per class, got {} and {}",
            p.rows(),
            q.rows()
        )));
    }
    let x = zscore_joint(p, q);
    let labels: Vec<f64> = (0..x.rows()).map(|i| if i < p.rows() { 0.0 } else { 1.0 }).collect();

    // Stratified folds: one shared shuffle of row positions, dealt round-robin within each class.
    // Row i of p and row i of q always share a fold, so duplicated rows never leak across folds.
    let mut perm: Vec<usize> = (0..p.rows().max(q.rows())).collect();
    perm.shuffle(&mut rng::seeded(rng::derive(seed, 0xF01D)));
    let mut fold_of = vec![0usize; x.rows()];
    for (offset, n) in [(0, p.rows()), (p.rows(), q.rows())] {
        for (pos, &i) in perm.iter().filter(|&&i| i < n).enumerate() {
            fold_of[offset + i] = pos % cfg.folds;
        }
    }

    let mut acc_sum = 0.0;
    for fold in 0..cfg.folds {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..x.rows()).partition(|&i| fold_of[i] == fold);
        let net = fit_classifier(&x, &labels, &train, cfg, rng::derive(seed, fold as u64 + 1))?;
        let logits = net.forward(&x.select_rows(&test))?.into_plain();
        let correct = test
            .iter()
            .zip(logits.as_slice())
            .filter(|(&i, &s)| (s > 0.0) == (labels[i] == 1.0))
            .count();
        acc_sum += correct as f64 / test.len() as f64;
    }
    Ok(acc_sum / cfg.folds as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub c2st_accuracy: Option<f64>,
    pub mmd2: Option<f64>,
    pub mmd_bandwidth: Option<Bandwidth>,
    pub mmd_clamped: bool,
    pub mmd_estimator: String,
    pub mmd_kernel_scales: [f64; 3],
    pub n_model: usize,
    pub n_reference: usize,
    pub classifier_seed: u64,
}

/// C2ST and median-heuristic MMD² of `model` samples against `reference` samples.
pub fn compare(model: &Matrix, reference: &Matrix, seed: u64) -> Result<MetricReport> {
    compare_with(model, reference, seed, &C2stConfig::default())
}

pub fn compare_with(model: &Matrix, reference: &Matrix, seed: u64, cfg: &C2stConfig) -> Result<MetricReport> {
    let mmd = mmd2_median(model, reference)?;
    let acc = c2st_with(model, reference, seed, cfg)?;
    Ok(MetricReport {
        c2st_accuracy: Some(acc),
        mmd2: Some(mmd.value),
        mmd_bandwidth: Some(mmd.bandwidth),
        mmd_clamped: mmd.clamped,
        mmd_estimator: "v_statistic".into(),
        mmd_kernel_scales: [0.5, 1.0, 2.0],
        n_model: model.rows(),
        n_reference: reference.rows(),
        classifier_seed: seed,
    })
}
