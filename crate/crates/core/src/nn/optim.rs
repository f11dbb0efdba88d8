use serde::{Deserialize, Serialize};

use super::{GradientSet, Network};
use crate::error::{Error, Result};

/// Decoupled-weight-decay Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

impl AdamW {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Moment buffers for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: AdamW,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn new(net: &Network, config: AdamW) -> Self {
        let n = net.param_count();
        Self {
            config,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step_count: 0,
        }
    }

    /// One AdamW update of `net` in place.
    pub fn step(&mut self, net: &mut Network, grads: &GradientSet) -> Result<()> {
        let n = net.param_count();
        if self.first_moment.len() != n || grads.len() != n {
            return Err(Error::shape(
                format!("{} parameters", self.first_moment.len()),
                format!("{n} parameters, {} gradients", grads.len()),
            ));
        }
        self.step_count += 1;
        let AdamW {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let decay = 1.0 - lr * weight_decay;
        let (m, v) = (&mut self.first_moment, &mut self.second_moment);
        net.zip_params_mut(grads, |i, p, g| {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *p = *p * decay - lr * m_hat / (v_hat.sqrt() + eps);
        })
    }
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`.
///
/// Returns the pre-clip norm. Non-finite gradients are an error.
pub fn clip_global_norm_all(grads: &mut [GradientSet], max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(Error::InvalidArgument(format!("max_norm must be positive, got {max_norm}")));
    }
    if grads.iter().any(|g| !g.all_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    let norm = grads.iter().map(GradientSet::norm_sq).sum::<f64>().sqrt();
    if norm > max_norm {
        let factor = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale(factor));
    }
    Ok(norm)
}

pub fn clip_global_norm(grads: &mut GradientSet, max_norm: f64) -> Result<f64> {
    clip_global_norm_all(std::slice::from_mut(grads), max_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseGrad, Head};

    fn net() -> Network {
        Network::new(&[2, 3, 1], Activation::LeakyRelu(0.1), Head::Plain, 11).unwrap()
    }

    fn filled(net: &Network, v: f64) -> GradientSet {
        let mut g = GradientSet::zeros_like(net);
        g.values_mut().for_each(|x| *x = v);
        g
    }

    #[test]
    fn clip_leaves_small_gradients_alone() {
        let mut g = GradientSet {
            layers: vec![DenseGrad { weights: vec![0.6, 0.8], bias: vec![] }],
        };
        let before = g.clone();
        let norm = clip_global_norm(&mut g, 3.0).unwrap();
        assert!((norm - 1.0).abs() < 1e-15);
        assert_eq!(g, before);
    }

    #[test]
    fn clip_halves_when_norm_is_double() {
        let mut g = GradientSet {
            layers: vec![DenseGrad { weights: vec![3.6, 4.8], bias: vec![0.0] }],
        };
        clip_global_norm(&mut g, 3.0).unwrap();
        assert!((g.layers[0].weights[0] - 1.8).abs() < 1e-12);
        assert!((g.layers[0].weights[1] - 2.4).abs() < 1e-12);
        assert!(g.norm_sq().sqrt() <= 3.0 + 1e-9);
    }

    #[test]
    fn clip_rejects_nan() {
        let mut g = GradientSet {
            layers: vec![DenseGrad { weights: vec![1.0, f64::NAN], bias: vec![] }],
        };
        assert!(matches!(clip_global_norm(&mut g, 3.0), Err(Error::NonFiniteGradient)));
    }

    #[test]
    fn zero_gradient_without_decay_keeps_params() {
        let mut n = net();
        let before = n.clone();
        let mut st = OptimizerState::new(&n, AdamW { weight_decay: 0.0, ..AdamW::default() });
        let g = filled(&n, 0.0);
        st.step(&mut n, &g).unwrap();
        st.step(&mut n, &g).unwrap();
        assert_eq!(n, before);
        assert_eq!(st.step_count, 2);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // With bias correction the first update is lr·g/(|g| + eps).
        let mut n = net();
        let before: Vec<f64> = n.params().collect();
        let cfg = AdamW { lr: 1e-3, weight_decay: 0.0, ..AdamW::default() };
        let mut st = OptimizerState::new(&n, cfg);
        let g = 0.37;
        let grads = filled(&n, g);
        st.step(&mut n, &grads).unwrap();
        let want = cfg.lr * g / (g + cfg.eps);
        for (a, b) in before.iter().zip(n.params()) {
            assert!(((a - b) - want).abs() < 1e-15, "delta {}", a - b);
        }
    }

    #[test]
    fn weight_decay_shrinks_params() {
        let mut n = net();
        let before: Vec<f64> = n.params().collect();
        let cfg = AdamW { lr: 0.01, weight_decay: 0.5, ..AdamW::default() };
        let mut st = OptimizerState::new(&n, cfg);
        let grads = filled(&n, 0.0);
        st.step(&mut n, &grads).unwrap();
        for (a, b) in before.iter().zip(n.params()) {
            assert!((a * (1.0 - 0.01 * 0.5) - b).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut n = net();
        let other = Network::new(&[2, 4, 1], Activation::Relu, Head::Plain, 1).unwrap();
        let mut st = OptimizerState::new(&n, AdamW::default());
        assert!(st.step(&mut n, &filled(&other, 1.0)).is_err());
    }
}
