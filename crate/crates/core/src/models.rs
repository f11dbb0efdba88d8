//! Conditional-prior (CP-VAE) and unconditional-prior (UP-VAE) posterior estimators.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{kl_term_grad, kl_term_logvar, VarianceActivation};
use crate::nn::{Activation, Adjoint, GradientSet, Head, Matrix, Network, LEAKY_SLOPE};
use crate::rng;
use crate::sims::TaskId;

const SAMPLE_CHUNK: usize = 8192;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    CpVae,
    UpVae,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::CpVae, ModelKind::UpVae];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::CpVae => "cp_vae",
            ModelKind::UpVae => "up_vae",
        }
    }

    /// Roles of the three sub-networks, in storage order.
    pub fn network_names(self) -> [&'static str; 3] {
        match self {
            ModelKind::CpVae => ["encoder", "prior", "decoder"],
            ModelKind::UpVae => ["encoder", "theta_decoder", "data_decoder"],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cp_vae" | "cpvae" => Ok(ModelKind::CpVae),
            "up_vae" | "upvae" => Ok(ModelKind::UpVae),
            _ => Err(Error::InvalidArgument(format!("unknown model '{s}'"))),
        }
    }
}

/// Relative weights of the UP-VAE loss terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub kl: f64,
    pub theta: f64,
    pub recon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            kl: 0.4,
            theta: 0.4,
            recon: 0.2,
        }
    }
}

impl LossWeights {
    pub fn validate(self) -> Result<Self> {
        let w = [self.kl, self.theta, self.recon];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be non-negative and sum to 1, got {w:?}"
            )));
        }
        Ok(self)
    }
}

/// Hidden-layer widths of the three sub-networks, in [`ModelKind::network_names`] order.
pub fn default_hidden(task: TaskId, kind: ModelKind) -> [Vec<usize>; 3] {
    use TaskId::*;
    let r = |w: usize, n: usize| vec![w; n];
    match kind {
        ModelKind::CpVae => match task {
            GaussianLinear | GaussianLinearUniform | GaussianMixture => [r(64, 3), r(64, 2), r(64, 3)],
            BernoulliGlm => [r(128, 3), r(128, 2), r(128, 3)],
            BernoulliGlmRaw => [r(256, 4), r(128, 2), r(256, 4)],
            TwoMoons => [r(128, 3), r(128, 2), r(128, 3)],
            Sir => [r(100, 2), r(100, 2), r(100, 3)],
            LotkaVolterra => [r(128, 4), r(64, 2), r(128, 4)],
        },
        ModelKind::UpVae => match task {
            GaussianLinear | GaussianLinearUniform | GaussianMixture => [r(64, 3), r(64, 3), r(64, 3)],
            BernoulliGlm => [r(128, 3), r(128, 3), r(128, 3)],
            BernoulliGlmRaw => [r(128, 4), r(128, 4), r(128, 4)],
            TwoMoons => {
                let w = vec![256, 128, 64];
                [w.clone(), w.clone(), w]
            }
            Sir => [r(100, 3), r(100, 3), r(100, 3)],
            LotkaVolterra => [r(128, 4), r(128, 3), r(128, 3)],
        },
    }
}

/// Latent width: the θ dimension except for a few tasks with fixed overrides.
pub fn default_latent_dim(task: TaskId) -> usize {
    match task {
        TaskId::GaussianLinear | TaskId::BernoulliGlmRaw => 5,
        TaskId::LotkaVolterra => 8,
        t => t.dims().0,
    }
}

/// Everything needed to rebuild a model around stored network parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub theta_dim: usize,
    pub y_dim: usize,
    pub latent_dim: usize,
    pub hidden: [Vec<usize>; 3],
    pub latent_variance: VarianceActivation,
    pub decoder_variance: VarianceActivation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_weights: Option<LossWeights>,
}

impl ModelSpec {
    pub fn for_task(task: TaskId, kind: ModelKind) -> Self {
        let (theta_dim, y_dim) = task.dims();
        Self {
            kind,
            theta_dim,
            y_dim,
            latent_dim: default_latent_dim(task),
            hidden: default_hidden(task, kind),
            latent_variance: VarianceActivation::ExpLin,
            decoder_variance: VarianceActivation::DECODER,
            loss_weights: (kind == ModelKind::UpVae).then(LossWeights::default),
        }
    }

    /// Input and output widths of each sub-network.
    pub fn io_widths(&self) -> [(usize, usize); 3] {
        let (t, y, k) = (self.theta_dim, self.y_dim, self.latent_dim);
        match self.kind {
            ModelKind::CpVae => [(y + t, k), (y, k), (y + k, t)],
            ModelKind::UpVae => [(y + t, k), (y + k, t), (k, y)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_dim == 0 || self.y_dim == 0 || self.latent_dim == 0 {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        self.latent_variance.validate()?;
        self.decoder_variance.validate()?;
        match (self.kind, self.loss_weights) {
            (ModelKind::UpVae, Some(w)) => {
                w.validate()?;
            }
            (ModelKind::UpVae, None) => return Err(Error::InvalidArgument("UP-VAE needs loss weights".into())),
            (ModelKind::CpVae, _) => {}
        }
        Ok(())
    }

    fn layer_sizes(&self, i: usize) -> Vec<usize> {
        let (input, output) = self.io_widths()[i];
        let mut s = vec![input];
        s.extend(&self.hidden[i]);
        s.push(output);
        s
    }
}

/// Mean and variance of a diagonal Gaussian head, row-major over a batch.
struct GaussBatch {
    mean: Matrix,
    raw: Matrix,
    var: Vec<f64>,
    logvar: Vec<f64>,
}

impl GaussBatch {
    fn new(out: crate::nn::Output, act: VarianceActivation) -> Self {
        let (mean, raw) = out.into_mean_var();
        let var = raw.as_slice().iter().map(|&p| act.apply(p)).collect();
        let logvar = raw.as_slice().iter().map(|&p| act.log_apply(p)).collect();
        Self { mean, raw, var, logvar }
    }

    /// `mean + sqrt(var) ⊙ noise`.
    fn reparam(&self, noise: &Matrix) -> Matrix {
        let mut z = self.mean.clone();
        for ((v, var), e) in z.as_mut_slice().iter_mut().zip(&self.var).zip(noise.as_slice()) {
            *v += var.sqrt() * e;
        }
        z
    }
}

/// Per-row `Σ ½ln σ² + ½(x−μ)²/σ²` and, if requested, the adjoint of `scale · Σ rows`.
fn gaussian_nll(
    target: &Matrix,
    head: &GaussBatch,
    act: VarianceActivation,
    scale: f64,
    want_grad: bool,
) -> (Vec<f64>, Option<Adjoint>) {
    let (rows, cols) = target.shape();
    let mut per_row = vec![0.0; rows];
    let mut d_mean = if want_grad { Matrix::zeros(rows, cols) } else { Matrix::zeros(0, 0) };
    let mut d_raw = d_mean.clone();
    for i in 0..rows {
        let mut acc = 0.0;
        for j in 0..cols {
            let k = i * cols + j;
            let r = target.as_slice()[k] - head.mean.as_slice()[k];
            let v = head.var[k];
            acc += 0.5 * head.logvar[k] + 0.5 * r * r / v;
            if want_grad {
                d_mean.as_mut_slice()[k] = -scale * r / v;
                let d_v = 0.5 / v - 0.5 * r * r / (v * v);
                d_raw.as_mut_slice()[k] = scale * d_v * act.derivative(head.raw.as_slice()[k]);
            }
        }
        per_row[i] = acc;
    }
    let adj = want_grad.then(|| Adjoint::MeanVar {
        mean: d_mean,
        raw_var: d_raw,
    });
    (per_row, adj)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn finite_or(v: f64, term: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss { term })
    }
}

/// Batch-mean loss broken into its terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub kl: f64,
    pub theta_nll: f64,
    /// Data reconstruction term; zero for the CP-VAE.
    pub y_nll: f64,
}

#[derive(Clone, Debug)]
pub struct LossEval {
    pub terms: LossTerms,
    /// One gradient set per sub-network, in storage order. Empty when not requested.
    pub grads: Vec<GradientSet>,
}

fn check_batch(theta: &Matrix, y: &Matrix, noise: &Matrix, spec: &ModelSpec) -> Result<()> {
    if theta.rows() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    for (m, cols) in [(theta, spec.theta_dim), (y, spec.y_dim), (noise, spec.latent_dim)] {
        if m.rows() != theta.rows() || m.cols() != cols {
            return Err(Error::shape(
                format!("{} x {cols}", theta.rows()),
                format!("{} x {}", m.rows(), m.cols()),
            ));
        }
    }
    Ok(())
}

fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Adds `d_z` pushed through `z = μ + sqrt(σ²)·ε` into the encoder-head adjoints
/// (both stored per unit variance; the raw-variance chain rule is applied later).
fn accumulate_reparam(d_z: &Matrix, q: &GaussBatch, noise: &Matrix, d_mean: &mut [f64], d_var: &mut [f64]) {
    for (k, &dz) in d_z.as_slice().iter().enumerate() {
        d_mean[k] += dz;
        d_var[k] += dz * noise.as_slice()[k] / (2.0 * q.var[k].sqrt());
    }
}

fn head_adjoint(q: &GaussBatch, act: VarianceActivation, d_mean: Vec<f64>, d_var: Vec<f64>) -> Adjoint {
    let (rows, cols) = q.mean.shape();
    let d_raw = d_var
        .iter()
        .zip(q.raw.as_slice())
        .map(|(d, &p)| d * act.derivative(p))
        .collect();
    Adjoint::MeanVar {
        mean: Matrix::from_vec(rows, cols, d_mean).unwrap(),
        raw_var: Matrix::from_vec(rows, cols, d_raw).unwrap(),
    }
}

/// An amortized posterior estimator: three networks plus the spec describing them.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    networks: [Network; 3],
}

impl Model {
    /// Fresh model with Kaiming-initialized networks.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let act = Activation::LeakyRelu(LEAKY_SLOPE);
        let build = |i: usize| Network::new(&spec.layer_sizes(i), act, Head::MeanVar, rng::derive(seed, i as u64));
        let networks = [build(0)?, build(1)?, build(2)?];
        Ok(Self { spec, networks })
    }

    pub fn from_networks(spec: ModelSpec, networks: Vec<Network>) -> Result<Self> {
        spec.validate()?;
        let networks: [Network; 3] = networks
            .try_into()
            .map_err(|v: Vec<Network>| Error::shape("3 networks", v.len()))?;
        for (i, (net, (input, output))) in networks.iter().zip(spec.io_widths()).enumerate() {
            if net.head() != Head::MeanVar || net.input_width() != input || net.output_width() != output {
                return Err(Error::shape(
                    format!("{} mapping {input} -> {output}", spec.kind.network_names()[i]),
                    format!("{} -> {}", net.input_width(), net.output_width()),
                ));
            }
        }
        Ok(Self { spec, networks })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn networks(&self) -> &[Network; 3] {
        &self.networks
    }

    pub fn networks_mut(&mut self) -> &mut [Network; 3] {
        &mut self.networks
    }

    pub fn all_finite(&self) -> bool {
        self.networks.iter().all(Network::all_finite)
    }

    /// Loss on a scaled batch, drawing one latent noise row per batch row.
    pub fn loss<R: Rng + ?Sized>(&self, theta: &Matrix, y: &Matrix, rng: &mut R, want_grad: bool) -> Result<LossEval> {
        let noise = standard_normal_matrix(theta.rows(), self.spec.latent_dim, rng);
        self.loss_with_noise(theta, y, &noise, want_grad)
    }

    /// Loss with the reparameterization noise supplied by the caller.
    pub fn loss_with_noise(&self, theta: &Matrix, y: &Matrix, noise: &Matrix, want_grad: bool) -> Result<LossEval> {
        check_batch(theta, y, noise, &self.spec)?;
        match self.spec.kind {
            ModelKind::CpVae => self.cpvae_loss(theta, y, noise, want_grad),
            ModelKind::UpVae => self.upvae_loss(theta, y, noise, want_grad),
        }
    }

    fn cpvae_loss(&self, theta: &Matrix, y: &Matrix, noise: &Matrix, want_grad: bool) -> Result<LossEval> {
        let [enc, prior, dec] = &self.networks;
        let (lat_act, dec_act) = (self.spec.latent_variance, self.spec.decoder_variance);
        let n = theta.rows();
        let scale = 1.0 / n as f64;

        let (q_out, q_cache) = enc.forward_cached(&y.hcat(theta)?)?;
        let q = GaussBatch::new(q_out, lat_act);
        let (p_out, p_cache) = prior.forward_cached(y)?;
        let p = GaussBatch::new(p_out, lat_act);
        let z = q.reparam(noise);
        let (d_out, d_cache) = dec.forward_cached(&y.hcat(&z)?)?;
        let d = GaussBatch::new(d_out, dec_act);

        let k = self.spec.latent_dim;
        let mut kl_rows = vec![0.0; n];
        for (i, acc) in kl_rows.iter_mut().enumerate() {
            for j in i * k..(i + 1) * k {
                *acc += kl_term_logvar(q.mean.as_slice()[j], q.logvar[j], p.mean.as_slice()[j], p.logvar[j]);
            }
        }
        let (nll_rows, d_adj) = gaussian_nll(theta, &d, dec_act, scale, want_grad);
        let kl = finite_or(mean(&kl_rows), "kl")?;
        let theta_nll = finite_or(mean(&nll_rows), "theta_nll")?;
        let terms = LossTerms {
            total: kl + theta_nll,
            kl,
            theta_nll,
            y_nll: 0.0,
        };
        if !want_grad {
            return Ok(LossEval { terms, grads: vec![] });
        }

        let (g_dec, d_input) = dec.backward(&d_cache, &d_adj.unwrap())?;
        let d_z = d_input.columns(self.spec.y_dim, self.spec.y_dim + k);
        let mut dq_mean = vec![0.0; n * k];
        let mut dq_var = vec![0.0; n * k];
        let mut dp_mean = vec![0.0; n * k];
        let mut dp_var = vec![0.0; n * k];
        for j in 0..n * k {
            let (a, b, c, e) = kl_term_grad(q.mean.as_slice()[j], q.var[j], p.mean.as_slice()[j], p.var[j]);
            dq_mean[j] = scale * a;
            dq_var[j] = scale * b;
            dp_mean[j] = scale * c;
            dp_var[j] = scale * e;
        }
        accumulate_reparam(&d_z, &q, noise, &mut dq_mean, &mut dq_var);
        let (g_enc, _) = enc.backward(&q_cache, &head_adjoint(&q, lat_act, dq_mean, dq_var))?;
        let (g_prior, _) = prior.backward(&p_cache, &head_adjoint(&p, lat_act, dp_mean, dp_var))?;
        Ok(LossEval {
            terms,
            grads: vec![g_enc, g_prior, g_dec],
        })
    }

    fn upvae_loss(&self, theta: &Matrix, y: &Matrix, noise: &Matrix, want_grad: bool) -> Result<LossEval> {
        let [enc, theta_dec, data_dec] = &self.networks;
        let (lat_act, dec_act) = (self.spec.latent_variance, self.spec.decoder_variance);
        let w = self.spec.loss_weights.unwrap_or_default();
        let n = theta.rows();
        let scale = 1.0 / n as f64;
        let k = self.spec.latent_dim;

        let (q_out, q_cache) = enc.forward_cached(&y.hcat(theta)?)?;
        let q = GaussBatch::new(q_out, lat_act);
        let z = q.reparam(noise);
        let (t_out, t_cache) = theta_dec.forward_cached(&y.hcat(&z)?)?;
        let t = GaussBatch::new(t_out, dec_act);

        let mut kl_rows = vec![0.0; n];
        for (i, acc) in kl_rows.iter_mut().enumerate() {
            for j in i * k..(i + 1) * k {
                *acc += kl_term_logvar(q.mean.as_slice()[j], q.logvar[j], 0.0, 0.0);
            }
        }
        let (t_rows, t_adj) = gaussian_nll(theta, &t, dec_act, w.theta * scale, want_grad);
        let kl = finite_or(mean(&kl_rows), "kl")?;
        let theta_nll = finite_or(mean(&t_rows), "theta_nll")?;

        // A zero reconstruction weight removes the data decoder from the graph entirely.
        let recon = if w.recon > 0.0 {
            let (y_out, y_cache) = data_dec.forward_cached(&z)?;
            let yh = GaussBatch::new(y_out, dec_act);
            let (y_rows, y_adj) = gaussian_nll(y, &yh, dec_act, w.recon * scale, want_grad);
            Some((finite_or(mean(&y_rows), "y_nll")?, y_cache, y_adj))
        } else {
            None
        };
        let y_nll = recon.as_ref().map_or(0.0, |r| r.0);
        let terms = LossTerms {
            total: w.kl * kl + w.theta * theta_nll + w.recon * y_nll,
            kl,
            theta_nll,
            y_nll,
        };
        if !want_grad {
            return Ok(LossEval { terms, grads: vec![] });
        }

        let (g_theta, d_input) = theta_dec.backward(&t_cache, &t_adj.unwrap())?;
        let mut d_z = d_input.columns(self.spec.y_dim, self.spec.y_dim + k);
        let g_data = match recon {
            Some((_, cache, adj)) => {
                let (g, d_z_data) = data_dec.backward(&cache, &adj.unwrap())?;
                d_z.as_mut_slice()
                    .iter_mut()
                    .zip(d_z_data.as_slice())
                    .for_each(|(a, b)| *a += b);
                g
            }
            None => GradientSet::zeros_like(data_dec),
        };
        let mut dq_mean = vec![0.0; n * k];
        let mut dq_var = vec![0.0; n * k];
        for j in 0..n * k {
            let (a, b, _, _) = kl_term_grad(q.mean.as_slice()[j], q.var[j], 0.0, 1.0);
            dq_mean[j] = w.kl * scale * a;
            dq_var[j] = w.kl * scale * b;
        }
        accumulate_reparam(&d_z, &q, noise, &mut dq_mean, &mut dq_var);
        let (g_enc, _) = enc.backward(&q_cache, &head_adjoint(&q, lat_act, dq_mean, dq_var))?;
        Ok(LossEval {
            terms,
            grads: vec![g_enc, g_theta, g_data],
        })
    }

    /// `m` posterior draws (scaled θ-space) for one scaled observation.
    ///
    /// Only the generative path is evaluated: the prior network (CP-VAE) or the
    /// standard normal (UP-VAE) feeds the θ-decoder.
    pub fn sample_posterior<R: Rng + ?Sized>(&self, y0: &[f64], m: usize, rng: &mut R) -> Result<Matrix> {
        if y0.len() != self.spec.y_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.y_dim,
                actual: y0.len(),
            });
        }
        if m == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        let k = self.spec.latent_dim;
        let decoder = match self.spec.kind {
            ModelKind::CpVae => &self.networks[2],
            ModelKind::UpVae => &self.networks[1],
        };
        let latent = match self.spec.kind {
            ModelKind::CpVae => {
                let p = self.networks[1].forward(&Matrix::from_vec(1, y0.len(), y0.to_vec())?)?;
                let p = GaussBatch::new(p, self.spec.latent_variance);
                Some((p.mean.into_vec(), p.var))
            }
            ModelKind::UpVae => None,
        };
        let mut parts = Vec::with_capacity(m.div_ceil(SAMPLE_CHUNK));
        let mut done = 0;
        while done < m {
            let c = SAMPLE_CHUNK.min(m - done);
            let mut z = standard_normal_matrix(c, k, rng);
            if let Some((mu, var)) = &latent {
                for i in 0..c {
                    for ((v, mu), var) in z.row_mut(i).iter_mut().zip(mu).zip(var) {
                        *v = mu + var.sqrt() * *v;
                    }
                }
            }
            let out = decoder.forward(&Matrix::repeat_row(y0, c).hcat(&z)?)?;
            let d = GaussBatch::new(out, self.spec.decoder_variance);
            let eps = standard_normal_matrix(c, self.spec.theta_dim, rng);
            let theta = d.reparam(&eps);
            if !theta.all_finite() {
                return Err(Error::NonFiniteOutput("posterior sampler"));
            }
            parts.push(theta);
            done += c;
        }
        Matrix::vstack(&parts)
    }
}
