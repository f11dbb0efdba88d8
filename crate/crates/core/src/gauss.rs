//! Diagonal Gaussians: densities, closed-form KL divergences, reparameterized
//! draws, and the positive variance parameterizations used by the networks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                actual: var.len(),
            });
        }
        if let Some(v) = var.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidArgument(format!("variance must be positive and finite, got {v}")));
        }
        Ok(Self { mean, var })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    fn same_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: d,
            });
        }
        Ok(())
    }
}

/// `log N(x; μ, diag σ²)`, including the `2π` constant.
pub fn log_density(x: &[f64], g: &DiagGaussian) -> Result<f64> {
    g.same_dim(x.len())?;
    let k = g.dim() as f64;
    let mut acc = k * LN_2PI;
    for ((xi, mi), vi) in x.iter().zip(&g.mean).zip(&g.var) {
        acc += vi.ln() + (xi - mi).powi(2) / vi;
    }
    Ok(-0.5 * acc)
}

/// Per-coordinate `KL(N(mq, e^lq) ‖ N(mp, e^lp))` from log-variances.
#[inline]
pub(crate) fn kl_term_logvar(mq: f64, lq: f64, mp: f64, lp: f64) -> f64 {
    0.5 * (lp - lq - 1.0 + (lq - lp).exp() + (mp - mq).powi(2) * (-lp).exp())
}

/// Partial derivatives of the per-coordinate KL w.r.t. `(mq, vq, mp, vp)`.
#[inline]
pub(crate) fn kl_term_grad(mq: f64, vq: f64, mp: f64, vp: f64) -> (f64, f64, f64, f64) {
    let diff = mp - mq;
    let d_mq = -diff / vp;
    let d_vq = 0.5 * (1.0 / vp - 1.0 / vq);
    let d_mp = diff / vp;
    let d_vp = 0.5 * (1.0 / vp - vq / (vp * vp) - diff * diff / (vp * vp));
    (d_mq, d_vq, d_mp, d_vp)
}

/// `KL(q ‖ p)` for diagonal Gaussians.
pub fn kl_diag(q: &DiagGaussian, p: &DiagGaussian) -> Result<f64> {
    p.same_dim(q.dim())?;
    let mut acc = 0.0;
    for i in 0..q.dim() {
        acc += kl_term_logvar(q.mean[i], q.var[i].ln(), p.mean[i], p.var[i].ln());
    }
    Ok(acc)
}

/// `KL(q ‖ N(0, I))`.
pub fn kl_vs_standard(q: &DiagGaussian) -> f64 {
    q.mean
        .iter()
        .zip(&q.var)
        .map(|(m, v)| kl_term_logvar(*m, v.ln(), 0.0, 0.0))
        .sum()
}

/// `μ + sqrt(σ²) ⊙ noise`.
pub fn reparam_sample(g: &DiagGaussian, noise: &[f64]) -> Result<Vec<f64>> {
    g.same_dim(noise.len())?;
    Ok(g.mean
        .iter()
        .zip(&g.var)
        .zip(noise)
        .map(|((m, v), e)| m + v.sqrt() * e)
        .collect())
}

/// `exp(p)` for `p ≤ 0`, `p + 1` above.
#[inline]
pub fn explin(p: f64) -> f64 {
    if p <= 0.0 {
        p.exp()
    } else {
        p + 1.0
    }
}

#[inline]
pub fn explin_derivative(p: f64) -> f64 {
    if p <= 0.0 {
        p.exp()
    } else {
        1.0
    }
}

#[inline]
fn sigmoid(p: f64) -> f64 {
    if p >= 0.0 {
        1.0 / (1.0 + (-p).exp())
    } else {
        let e = p.exp();
        e / (1.0 + e)
    }
}

/// `α + (ω − α)·sigmoid(p)`.
pub fn upbounded_sigmoid(p: f64, lower: f64, upper: f64) -> Result<f64> {
    check_bounds(lower, upper)?;
    Ok(lower + (upper - lower) * sigmoid(p))
}

fn check_bounds(lower: f64, upper: f64) -> Result<()> {
    if !(lower > 0.0 && lower < upper && upper.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "variance bounds need 0 < lower < upper, got [{lower}, {upper}]"
        )));
    }
    Ok(())
}

/// Map from a raw network output to a strictly positive variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarianceActivation {
    ExpLin,
    UpBounded { lower: f64, upper: f64 },
}

impl VarianceActivation {
    /// Decoder default: std between 0.01 and 2 in scaled units.
    pub const DECODER: VarianceActivation = VarianceActivation::UpBounded { lower: 1e-4, upper: 4.0 };

    pub fn validate(self) -> Result<Self> {
        if let VarianceActivation::UpBounded { lower, upper } = self {
            check_bounds(lower, upper)?;
        }
        Ok(self)
    }

    #[inline]
    pub fn apply(self, p: f64) -> f64 {
        match self {
            VarianceActivation::ExpLin => explin(p),
            VarianceActivation::UpBounded { lower, upper } => lower + (upper - lower) * sigmoid(p),
        }
    }

    /// `ln(apply(p))` without the round trip through `exp` for the ExpLin branch.
    #[inline]
    pub fn log_apply(self, p: f64) -> f64 {
        match self {
            VarianceActivation::ExpLin if p <= 0.0 => p,
            VarianceActivation::ExpLin => p.ln_1p(),
            _ => self.apply(p).ln(),
        }
    }

    #[inline]
    pub fn derivative(self, p: f64) -> f64 {
        match self {
            VarianceActivation::ExpLin => explin_derivative(p),
            VarianceActivation::UpBounded { lower, upper } => {
                let s = sigmoid(p);
                (upper - lower) * s * (1.0 - s)
            }
        }
    }

    /// Raw value that maps to `variance`; `None` if it is out of range.
    pub fn inverse(self, variance: f64) -> Option<f64> {
        match self {
            VarianceActivation::ExpLin if variance > 0.0 && variance <= 1.0 => Some(variance.ln()),
            VarianceActivation::ExpLin if variance > 1.0 => Some(variance - 1.0),
            VarianceActivation::UpBounded { lower, upper } if variance > lower && variance < upper => {
                let q = (variance - lower) / (upper - lower);
                Some((q / (1.0 - q)).ln())
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn g(mean: &[f64], var: &[f64]) -> DiagGaussian {
        DiagGaussian::new(mean.to_vec(), var.to_vec()).unwrap()
    }

    #[test]
    fn log_density_at_mode() {
        let v = log_density(&[0.0], &DiagGaussian::standard(1)).unwrap();
        assert!((v - (-0.918_938_533_204_672_7)).abs() < 1e-12);
        let k = 7;
        let mu: Vec<f64> = (0..k).map(|i| i as f64 * 0.3 - 1.0).collect();
        let v = log_density(&mu, &g(&mu, &vec![1.0; k])).unwrap();
        assert!((v + 0.5 * k as f64 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn log_density_matches_product_of_univariate_densities() {
        // Independent route: product of 1-D densities written out directly.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mean: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let var: Vec<f64> = (0..5).map(|_| rng.random_range(0.1..3.0)).collect();
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let density: f64 = (0..5)
            .map(|i| {
                let sd = var[i].sqrt();
                (-(x[i] - mean[i]).powi(2) / (2.0 * var[i])).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            })
            .product();
        let lp = log_density(&x, &g(&mean, &var)).unwrap();
        assert!((lp - density.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_density_integrates_to_one() {
        let gg = g(&[0.7], &[2.5]);
        let sd = 2.5f64.sqrt();
        let (a, b) = (0.7 - 6.0 * sd, 0.7 + 6.0 * sd);
        // Composite Simpson on a fine grid.
        let n = 20_000;
        let h = (b - a) / n as f64;
        let f = |x: f64| log_density(&[x], &gg).unwrap().exp();
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        let integral = s * h / 3.0;
        assert!((integral - 1.0).abs() < 1e-6, "{integral}");
    }

    #[test]
    fn kl_examples() {
        let p = g(&[0.2, -0.4], &[0.5, 1.5]);
        assert_eq!(kl_diag(&p, &p).unwrap(), 0.0);
        assert!((kl_diag(&g(&[1.0, 1.0], &[1.0, 1.0]), &DiagGaussian::standard(2)).unwrap() - 1.0).abs() < 1e-15);
        let v = kl_diag(&g(&[0.0], &[2.0]), &DiagGaussian::standard(1)).unwrap();
        assert!((v - 0.5 * (1.0 - 2f64.ln())).abs() < 1e-12);
        assert!((v - 0.153_426_4).abs() < 1e-7);
    }

    #[test]
    fn kl_vs_standard_examples() {
        assert_eq!(kl_vs_standard(&DiagGaussian::standard(3)), 0.0);
        assert!((kl_vs_standard(&g(&[3.0, 4.0], &[1.0, 1.0])) - 12.5).abs() < 1e-12);
    }

    #[test]
    fn kl_dimension_mismatch() {
        assert!(kl_diag(&DiagGaussian::standard(2), &DiagGaussian::standard(3)).is_err());
        assert!(log_density(&[0.0], &DiagGaussian::standard(2)).is_err());
        assert!(DiagGaussian::new(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let (mq, vq, mp, vp) = (0.3, 0.7, -0.2, 1.9);
        let f = |a: f64, b: f64, c: f64, d: f64| kl_term_logvar(a, b.ln(), c, d.ln());
        let (g1, g2, g3, g4) = kl_term_grad(mq, vq, mp, vp);
        let h = 1e-6;
        let fd = [
            (f(mq + h, vq, mp, vp) - f(mq - h, vq, mp, vp)) / (2.0 * h),
            (f(mq, vq + h, mp, vp) - f(mq, vq - h, mp, vp)) / (2.0 * h),
            (f(mq, vq, mp + h, vp) - f(mq, vq, mp - h, vp)) / (2.0 * h),
            (f(mq, vq, mp, vp + h) - f(mq, vq, mp, vp - h)) / (2.0 * h),
        ];
        for (a, b) in [g1, g2, g3, g4].iter().zip(fd) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn reparam_examples() {
        let gg = g(&[1.0, -2.0], &[4.0, 0.25]);
        assert_eq!(reparam_sample(&gg, &[0.0, 0.0]).unwrap(), vec![1.0, -2.0]);
        assert_eq!(reparam_sample(&DiagGaussian::standard(2), &[0.3, -0.9]).unwrap(), vec![0.3, -0.9]);
        assert!(reparam_sample(&gg, &[0.0]).is_err());
        assert_eq!(reparam_sample(&gg, &[1.0, 1.0]).unwrap(), vec![3.0, -1.5]);
    }

    #[test]
    fn reparam_monte_carlo_moments() {
        let gg = g(&[2.0], &[9.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let e: f64 = rng.sample(StandardNormal);
            let x = reparam_sample(&gg, &[e]).unwrap()[0];
            s += x;
            s2 += x * x;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((mean - 2.0).abs() < 0.02, "{mean}");
        assert!((var - 9.0).abs() / 9.0 < 0.02, "{var}");
    }

    #[test]
    fn reparam_gradient_path() {
        // d/dμ is exactly one; d/dσ² is ε / (2σ) by finite differences.
        let (m, v, e) = (0.4, 1.7, -0.8);
        let f = |m: f64, v: f64| reparam_sample(&g(&[m], &[v]), &[e]).unwrap()[0];
        assert!((f(m + 1.0, v) - f(m, v) - 1.0).abs() < 1e-15);
        let h = 1e-6;
        let fd = (f(m, v + h) - f(m, v - h)) / (2.0 * h);
        assert!((fd - e / (2.0 * v.sqrt())).abs() < 1e-8);
    }

    #[test]
    fn explin_examples() {
        assert_eq!(explin(0.0), 1.0);
        assert_eq!(explin(1.0), 2.0);
        assert!((explin(-1.0) - 0.367_879).abs() < 1e-6);
        assert_eq!((0f64).exp() - (0.0 + 1.0), 0.0);
    }

    #[test]
    fn upbounded_examples() {
        assert!((upbounded_sigmoid(0.0, 0.2, 1.0).unwrap() - 0.6).abs() < 1e-15);
        assert!((upbounded_sigmoid(-30.0, 0.01, 1.0).unwrap() - 0.01).abs() < 1e-9);
        assert!((upbounded_sigmoid(30.0, 0.01, 1.0).unwrap() - 1.0).abs() < 1e-9);
        assert!(upbounded_sigmoid(0.0, 1.0, 1.0).is_err());
        assert!(upbounded_sigmoid(0.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn activation_inverse_round_trips() {
        for act in [VarianceActivation::ExpLin, VarianceActivation::DECODER] {
            for v in [0.01, 0.5, 1.0, 1.0 + 1e-9, 3.0] {
                let p = act.inverse(v).unwrap();
                assert!((act.apply(p) - v).abs() < 1e-12, "{act:?} {v}");
                assert!((act.log_apply(p) - v.ln()).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative(
            mq in prop::collection::vec(-3.0f64..3.0, 4),
            mp in prop::collection::vec(-3.0f64..3.0, 4),
            vq in prop::collection::vec(0.05f64..5.0, 4),
            vp in prop::collection::vec(0.05f64..5.0, 4),
        ) {
            let q = g(&mq, &vq);
            let p = g(&mp, &vp);
            prop_assert!(kl_diag(&q, &p).unwrap() >= -1e-15);
            prop_assert!((kl_vs_standard(&q) - kl_diag(&q, &DiagGaussian::standard(4)).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn variance_maps_are_increasing(a in -40.0f64..40.0, d in 1e-6f64..5.0) {
            let b = a + d;
            prop_assert!(explin(a) < explin(b));
            prop_assert!(explin(a) > 0.0);
            let act = VarianceActivation::DECODER;
            let (va, vb) = (act.apply(a), act.apply(b));
            prop_assert!(va <= vb);
            prop_assert!(va >= 1e-4 && vb <= 4.0);
        }
    }
}
