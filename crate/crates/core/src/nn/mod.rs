//! Dense multilayer networks with exact reverse-mode gradients.
//!
//! A [`Network`] is a stack of "trunk" layers, each followed by the hidden
//! activation, and one or two linear "head" layers reading the trunk output.
//! With [`Head::MeanVar`] the two heads emit a mean and a raw (pre-activation)
//! variance of equal width; mapping the raw value to a positive variance is
//! the caller's job (see [`crate::gauss`]).

mod checkpoint;
mod matrix;
mod optim;

pub use checkpoint::{decode_network, encode_network, read_networks, write_networks, MAGIC};
pub use matrix::Matrix;
pub use optim::{clip_global_norm, clip_global_norm_all, AdamW, OptimizerState};

pub(crate) use matrix::gemm;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Negative slope used between hidden layers.
pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    LeakyRelu(f64),
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu(s) => {
                if x >= 0.0 {
                    x
                } else {
                    s * x
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu(s) => {
                if x >= 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    Plain,
    MeanVar,
}

impl Head {
    fn count(self) -> usize {
        match self {
            Head::Plain => 1,
            Head::MeanVar => 2,
        }
    }
}

/// Fully connected layer, `out = in · Wᵀ + b` with `W` stored out×in row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::repeat_row(&self.bias, x.rows());
        gemm(
            x.as_slice(),
            x.rows(),
            x.cols(),
            false,
            &self.weights,
            self.outputs,
            self.inputs,
            true,
            out.as_mut_slice(),
            true,
        );
        out
    }

    /// Accumulates parameter gradients into `grad`, returns the input adjoint.
    fn backward(&self, x: &Matrix, d_out: &Matrix, grad: &mut DenseGrad, want_input: bool) -> Option<Matrix> {
        gemm(
            d_out.as_slice(),
            d_out.rows(),
            d_out.cols(),
            true,
            x.as_slice(),
            x.rows(),
            x.cols(),
            false,
            &mut grad.weights,
            true,
        );
        for r in d_out.iter_rows() {
            for (g, v) in grad.bias.iter_mut().zip(r) {
                *g += v;
            }
        }
        if !want_input {
            return None;
        }
        let mut d_in = Matrix::zeros(x.rows(), self.inputs);
        gemm(
            d_out.as_slice(),
            d_out.rows(),
            d_out.cols(),
            false,
            &self.weights,
            self.outputs,
            self.inputs,
            false,
            d_in.as_mut_slice(),
            false,
        );
        Some(d_in)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// One gradient buffer per parameter buffer of the owning network.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<DenseGrad>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| DenseGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn norm_sq(&self) -> f64 {
        self.values().map(|v| v * v).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    pub fn scale(&mut self, factor: f64) {
        self.values_mut().for_each(|v| *v *= factor);
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn congruent(&self, net: &Network) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.bias.len() == l.bias.len())
    }
}

/// Network output: a plain matrix, or the (mean, raw variance) pair.
#[derive(Clone, Debug, PartialEq)]
pub enum Output {
    Plain(Matrix),
    MeanVar { mean: Matrix, raw_var: Matrix },
}

impl Output {
    pub fn into_plain(self) -> Matrix {
        match self {
            Output::Plain(m) => m,
            Output::MeanVar { .. } => panic!("network has a mean/variance head"),
        }
    }

    pub fn into_mean_var(self) -> (Matrix, Matrix) {
        match self {
            Output::MeanVar { mean, raw_var } => (mean, raw_var),
            Output::Plain(_) => panic!("network has a plain head"),
        }
    }
}

/// Loss adjoints w.r.t. the network outputs, shaped like [`Output`].
#[derive(Clone, Debug)]
pub enum Adjoint {
    Plain(Matrix),
    MeanVar { mean: Matrix, raw_var: Matrix },
}

/// Intermediate values recorded by [`Network::forward_cached`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    version: u64,
    /// Input of every trunk layer followed by the trunk output.
    hidden: Vec<Matrix>,
    /// Pre-activation values of every trunk layer.
    pre: Vec<Matrix>,
}

impl ForwardCache {
    pub fn rows(&self) -> usize {
        self.hidden[0].rows()
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    sizes: Vec<usize>,
    activation: Activation,
    head: Head,
    layers: Vec<Dense>,
    version: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes
            && self.activation == other.activation
            && self.head == other.head
            && self.layers == other.layers
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidLayerSizes(sizes.to_vec()));
    }
    Ok(())
}

impl Network {
    /// Kaiming-normal weights (std `sqrt(2 / fan_in)`), zero biases.
    pub fn new(sizes: &[usize], activation: Activation, head: Head, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes, activation, head)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let std = (2.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = std * z;
            }
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], activation: Activation, head: Head) -> Result<Self> {
        validate_sizes(sizes)?;
        let n = sizes.len();
        let mut layers: Vec<Dense> = Vec::new();
        for w in sizes[..n - 1].windows(2) {
            layers.push(Dense::zeros(w[0], w[1]));
        }
        let (last_in, out) = (sizes[n - 2], sizes[n - 1]);
        for _ in 0..head.count() {
            layers.push(Dense::zeros(last_in, out));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            head,
            layers,
            version: 0,
        })
    }

    /// Builds a network from explicit layers; trunk first, then the head layer(s).
    pub fn from_layers(activation: Activation, head: Head, layers: Vec<Dense>) -> Result<Self> {
        let heads = head.count();
        if layers.len() < heads {
            return Err(Error::InvalidLayerSizes(vec![]));
        }
        let trunk = layers.len() - heads;
        let mut sizes = vec![layers[0].inputs];
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::shape(
                    format!("layer {i} buffers for {}x{}", l.outputs, l.inputs),
                    format!("{} weights, {} biases", l.weights.len(), l.bias.len()),
                ));
            }
            let expected_in = sizes[i.min(trunk)];
            if l.inputs != expected_in {
                return Err(Error::shape(
                    format!("layer {i} input width {expected_in}"),
                    l.inputs,
                ));
            }
            if i < trunk {
                sizes.push(l.outputs);
            }
        }
        let out = layers[trunk].outputs;
        if layers[trunk..].iter().any(|l| l.outputs != out) {
            return Err(Error::shape("heads of identical width", "differing head widths"));
        }
        sizes.push(out);
        validate_sizes(&sizes)?;
        Ok(Self {
            sizes,
            activation,
            head,
            layers,
            version: 0,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable parameter access. Invalidates outstanding forward caches.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.version += 1;
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn all_finite(&self) -> bool {
        self.params().all(f64::is_finite)
    }

    fn trunk_len(&self) -> usize {
        self.layers.len() - self.head.count()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_width() {
            return Err(Error::DimensionMismatch {
                expected: self.input_width(),
                actual: x.cols(),
            });
        }
        Ok(())
    }

    fn heads(&self, h: &Matrix) -> Output {
        let trunk = self.trunk_len();
        match self.head {
            Head::Plain => Output::Plain(self.layers[trunk].forward(h)),
            Head::MeanVar => Output::MeanVar {
                mean: self.layers[trunk].forward(h),
                raw_var: self.layers[trunk + 1].forward(h),
            },
        }
    }

    /// Forward pass without recording intermediates.
    pub fn forward(&self, x: &Matrix) -> Result<Output> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers[..self.trunk_len()] {
            let act = self.activation;
            h = layer.forward(&h).map(|v| act.apply(v));
        }
        Ok(self.heads(&h))
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Output, ForwardCache)> {
        self.check_input(x)?;
        let trunk = self.trunk_len();
        let mut hidden = Vec::with_capacity(trunk + 1);
        let mut pre = Vec::with_capacity(trunk);
        hidden.push(x.clone());
        for layer in &self.layers[..trunk] {
            let z = layer.forward(hidden.last().unwrap());
            let act = self.activation;
            hidden.push(z.map(|v| act.apply(v)));
            pre.push(z);
        }
        let out = self.heads(hidden.last().unwrap());
        Ok((
            out,
            ForwardCache {
                version: self.version,
                hidden,
                pre,
            },
        ))
    }

    /// Reverse-mode pass: parameter gradients and the adjoint of the input.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Adjoint) -> Result<(GradientSet, Matrix)> {
        let trunk = self.trunk_len();
        if cache.version != self.version || cache.pre.len() != trunk || cache.hidden[0].cols() != self.input_width() {
            return Err(Error::StaleCache);
        }
        let rows = cache.rows();
        let mut grads = GradientSet::zeros_like(self);
        let h_top = &cache.hidden[trunk];
        let check = |m: &Matrix| -> Result<()> {
            if m.rows() != rows || m.cols() != self.output_width() {
                return Err(Error::StaleCache);
            }
            Ok(())
        };
        let mut d_h = match (self.head, upstream) {
            (Head::Plain, Adjoint::Plain(d)) => {
                check(d)?;
                let (_, g) = grads.layers.split_at_mut(trunk);
                self.layers[trunk].backward(h_top, d, &mut g[0], true).unwrap()
            }
            (Head::MeanVar, Adjoint::MeanVar { mean, raw_var }) => {
                check(mean)?;
                check(raw_var)?;
                let (_, g) = grads.layers.split_at_mut(trunk);
                let (gm, gv) = g.split_at_mut(1);
                let mut d = self.layers[trunk].backward(h_top, mean, &mut gm[0], true).unwrap();
                let dv = self.layers[trunk + 1].backward(h_top, raw_var, &mut gv[0], true).unwrap();
                d.as_mut_slice()
                    .iter_mut()
                    .zip(dv.as_slice())
                    .for_each(|(a, b)| *a += b);
                d
            }
            _ => return Err(Error::shape(format!("{:?} adjoint", self.head), "other adjoint kind")),
        };
        for i in (0..trunk).rev() {
            let act = self.activation;
            d_h.as_mut_slice()
                .iter_mut()
                .zip(cache.pre[i].as_slice())
                .for_each(|(d, &z)| *d *= act.derivative(z));
            d_h = self.layers[i]
                .backward(&cache.hidden[i], &d_h, &mut grads.layers[i], true)
                .unwrap();
        }
        Ok((grads, d_h))
    }

    /// Calls `f(param, grad)` for every parameter, in layer order.
    pub(crate) fn zip_params_mut(&mut self, grads: &GradientSet, mut f: impl FnMut(usize, &mut f64, f64)) -> Result<()> {
        if !grads.congruent(self) {
            return Err(Error::shape(
                format!("{} gradient entries", self.param_count()),
                grads.len(),
            ));
        }
        self.version += 1;
        let mut idx = 0;
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (p, &d) in l.weights.iter_mut().zip(&g.weights).chain(l.bias.iter_mut().zip(&g.bias)) {
                f(idx, p, d);
                idx += 1;
            }
        }
        Ok(())
    }

    /// Flat parameter access for finite-difference checks.
    pub fn param_mut(&mut self, flat_index: usize) -> &mut f64 {
        self.version += 1;
        let mut i = flat_index;
        for l in &mut self.layers {
            if i < l.weights.len() {
                return &mut l.weights[i];
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                return &mut l.bias[i];
            }
            i -= l.bias.len();
        }
        panic!("parameter index {flat_index} out of range");
    }
}
