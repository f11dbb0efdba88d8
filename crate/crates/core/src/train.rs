//! Minibatch training with validation-based early stopping, plus model checkpoints.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Model, ModelKind, ModelSpec};
use crate::nn::{clip_global_norm_all, read_networks, write_networks, AdamW, Matrix, OptimizerState};
use crate::rng;
use crate::sims::{Dataset, StandardScaler, TaskId};

const VAL_CHUNK: usize = 2048;
const SIDECAR_VERSION: u32 = 1;

// Tags separating the random streams drawn from one training seed.
const TAG_INIT: u64 = 1;
const TAG_SPLIT: u64 = 2;
const TAG_SHUFFLE: u64 = 3;
const TAG_NOISE: u64 = 4;
const TAG_VAL_NOISE: u64 = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub val_fraction: f64,
    /// Minimum drop in validation loss that resets the patience counter.
    pub min_delta: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            batch_size: 32,
            max_epochs: 1000,
            patience: 20,
            clip_norm: 3.0,
            seed: 0,
            val_fraction: 0.1,
            min_delta: 1e-6,
            weight_decay: AdamW::default().weight_decay,
        }
    }
}

impl TrainConfig {
    /// Defaults with the per-task learning-rate and batch-size overrides.
    pub fn for_task(task: TaskId, kind: ModelKind) -> Self {
        let mut c = Self::default();
        match (task, kind) {
            (TaskId::LotkaVolterra, _) => {
                c.lr = 1e-4;
                c.batch_size = 128;
            }
            (TaskId::TwoMoons, ModelKind::UpVae) => c.batch_size = 50,
            _ => {}
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        if !(self.min_delta >= 0.0) || !(self.weight_decay >= 0.0) {
            return bad("min_delta and weight_decay must be non-negative");
        }
        Ok(())
    }
}

/// Shuffled disjoint split of `0..n` into `⌈n(1−f)⌉` training and remaining validation rows.
pub fn split_dataset(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("val_fraction {val_fraction} outside (0, 1)")));
    }
    let n_train = (n as f64 * (1.0 - val_fraction)).ceil() as usize;
    if n < 2 || n_train == 0 || n_train >= n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} rows with validation fraction {val_fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let val = idx.split_off(n_train);
    Ok((idx, val))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Improved,
    Continue,
    Stop,
}

/// Patience-based stopping on a validation-loss sequence (epochs are 1-based).
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    /// Loss that the next epoch must beat by `min_delta` to reset patience.
    reference: f64,
    last_reset: usize,
    best: f64,
    best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            reference: f64::INFINITY,
            last_reset: 0,
            best: f64::INFINITY,
            best_epoch: 0,
        }
    }

    /// `Improved` means `loss` is the lowest seen so far and its parameters should be kept.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> Decision {
        if loss < self.reference - self.min_delta {
            self.reference = loss;
            self.last_reset = epoch;
        }
        let improved = loss < self.best;
        if improved {
            self.best = loss;
            self.best_epoch = epoch;
        }
        if epoch - self.last_reset >= self.patience {
            Decision::Stop
        } else if improved {
            Decision::Improved
        } else {
            Decision::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub clipped_step_count: u64,
    pub total_steps: u64,
    pub wall_time_secs: f64,
    pub seed: u64,
    pub config: TrainConfig,
    pub spec: ModelSpec,
}

/// A model together with the scalers that map native units to its inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub task: TaskId,
    pub model: Model,
    pub theta_scaler: StandardScaler,
    pub y_scaler: StandardScaler,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format_version: u32,
    task: TaskId,
    networks: Vec<String>,
    spec: ModelSpec,
    theta_scaler: StandardScaler,
    y_scaler: StandardScaler,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

/// JSON sidecar path stored next to a checkpoint (`checkpoint.bin` → `checkpoint.json`).
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

impl TrainedModel {
    /// Posterior draws in native θ units for a native-unit observation.
    pub fn sample_native<R: Rng + ?Sized>(&self, y0: &[f64], m: usize, rng: &mut R) -> Result<Matrix> {
        let y = self.y_scaler.apply_row(y0)?;
        let scaled = self.model.sample_posterior(&y, m, rng)?;
        self.theta_scaler.invert(&scaled)
    }

    pub fn save(&self, path: &Path, config_hash: Option<&str>) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let nets: Vec<_> = self.model.networks().iter().collect();
        write_networks(path, &nets)?;
        let side = Sidecar {
            format_version: SIDECAR_VERSION,
            task: self.task,
            networks: self.model.kind().network_names().iter().map(|s| s.to_string()).collect(),
            spec: self.model.spec().clone(),
            theta_scaler: self.theta_scaler.clone(),
            y_scaler: self.y_scaler.clone(),
            config_hash: config_hash.map(str::to_owned),
        };
        let sp = sidecar_path(path);
        fs::write(&sp, serde_json::to_string_pretty(&side)? + "\n").map_err(|e| Error::io(&sp, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let sp = sidecar_path(path);
        let text = fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
        let side: Sidecar = serde_json::from_str(&text)?;
        if side.format_version != SIDECAR_VERSION {
            return Err(Error::Checkpoint(format!("unsupported sidecar version {}", side.format_version)));
        }
        let nets = read_networks(path)?;
        let model = Model::from_networks(side.spec, nets).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if side.theta_scaler.dim() != model.spec().theta_dim || side.y_scaler.dim() != model.spec().y_dim {
            return Err(Error::Checkpoint("scaler widths disagree with the model".into()));
        }
        Ok(Self {
            task: side.task,
            model,
            theta_scaler: side.theta_scaler,
            y_scaler: side.y_scaler,
        })
    }

    /// Config hash recorded in a checkpoint sidecar, if any.
    pub fn stored_config_hash(path: &Path) -> Result<Option<String>> {
        let sp = sidecar_path(path);
        let text = fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
        Ok(serde_json::from_str::<Sidecar>(&text)?.config_hash)
    }
}

fn validation_loss(model: &Model, theta: &Matrix, y: &Matrix, seed: u64, epoch: usize) -> Result<f64> {
    let mut r = rng::stream(seed, epoch as u64);
    let n = theta.rows();
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + VAL_CHUNK).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let eval = model.loss(&theta.select_rows(&idx), &y.select_rows(&idx), &mut r, false)?;
        total += eval.terms.total * (end - start) as f64;
        start = end;
    }
    Ok(total / n as f64)
}

/// Reorders the training rows for `epoch`; each epoch permutes the previous order.
fn shuffle_epoch(order: &mut [usize], seed: u64, epoch: usize) {
    order.shuffle(&mut rng::stream(rng::derive(seed, TAG_SHUFFLE), epoch as u64));
}

/// Trains a freshly initialized model of `spec` on `dataset`.
///
/// The returned model carries the parameters of the epoch with the lowest validation loss.
pub fn train_model(spec: ModelSpec, dataset: &Dataset, config: &TrainConfig) -> Result<(TrainedModel, TrainReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let started = Instant::now();
    let seed = config.seed;
    let mut model = Model::new(spec.clone(), rng::derive(seed, TAG_INIT))?;
    let (train_idx, val_idx) = split_dataset(dataset.len(), config.val_fraction, rng::derive(seed, TAG_SPLIT))?;
    let theta = dataset.scaled_thetas();
    let y = dataset.scaled_ys();
    let (val_theta, val_y) = (theta.select_rows(&val_idx), y.select_rows(&val_idx));

    let adam = AdamW {
        lr: config.lr,
        weight_decay: config.weight_decay,
        ..AdamW::default()
    };
    let mut optim: Vec<OptimizerState> = model.networks().iter().map(|n| OptimizerState::new(n, adam)).collect();
    let mut noise_rng = rng::seeded(rng::derive(seed, TAG_NOISE));
    let val_seed = rng::derive(seed, TAG_VAL_NOISE);
    let mut stopper = EarlyStopping::new(config.patience, config.min_delta);
    let mut best = model.clone();
    let mut epochs = Vec::new();
    let mut clipped = 0u64;
    let mut steps = 0u64;
    let mut order = train_idx;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        shuffle_epoch(&mut order, seed, epoch);
        let mut train_sum = 0.0;
        for (b, rows) in order.chunks(config.batch_size).enumerate() {
            let diverged = |e: Error| Error::Diverged {
                epoch,
                batch: b,
                source: Box::new(e),
            };
            let eval = model
                .loss(&theta.select_rows(rows), &y.select_rows(rows), &mut noise_rng, true)
                .map_err(diverged)?;
            let mut grads = eval.grads;
            let norm = clip_global_norm_all(&mut grads, config.clip_norm).map_err(diverged)?;
            if norm > config.clip_norm {
                clipped += 1;
            }
            for ((net, st), g) in model.networks_mut().iter_mut().zip(&mut optim).zip(&grads) {
                st.step(net, g)?;
            }
            train_sum += eval.terms.total * rows.len() as f64;
            steps += 1;
        }
        let val_loss = validation_loss(&model, &val_theta, &val_y, val_seed, epoch).map_err(|e| Error::Diverged {
            epoch,
            batch: usize::MAX,
            source: Box::new(e),
        })?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: train_sum / order.len() as f64,
            val_loss,
        });
        let decision = stopper.observe(epoch, val_loss);
        if stopper.best_epoch() == epoch {
            best = model.clone();
        }
        if decision == Decision::Stop {
            stopped_early = epoch < config.max_epochs;
            break;
        }
    }

    let report = TrainReport {
        epochs,
        best_epoch: stopper.best_epoch(),
        best_val_loss: stopper.best_loss(),
        stopped_early,
        clipped_step_count: clipped,
        total_steps: steps,
        wall_time_secs: started.elapsed().as_secs_f64(),
        seed,
        config: config.clone(),
        spec,
    };
    let trained = TrainedModel {
        task: dataset.task,
        model: best,
        theta_scaler: dataset.theta_scaler.clone(),
        y_scaler: dataset.y_scaler.clone(),
    };
    Ok((trained, report))
}
