use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::C2stConfig;
use crate::models::ModelKind;
use crate::sims::TaskId;
use crate::train::TrainConfig;

pub const OUT_ENV: &str = "AMORTIS_OUT";
pub const DEFAULT_OUT: &str = "runs";
pub const DEFAULT_OBSERVATION_SEED: u64 = 1;
pub const DEFAULT_NUM_SAMPLES: usize = 10_000;
pub const DEFAULT_PPC_SAMPLES: usize = 1000;
const MIN_BUDGET: usize = 100;

/// Flat key-value settings as read from a TOML file or assembled from CLI flags.
/// Every key is optional; [`ConfigFile::overlay`] lets flags win over the file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub task: Option<TaskId>,
    pub model: Option<String>,
    pub budget: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub observation_seed: Option<u64>,
    pub num_samples: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub clip_norm: Option<f64>,
    pub val_fraction: Option<f64>,
    pub min_delta: Option<f64>,
    pub weight_decay: Option<f64>,
    pub c2st_epochs: Option<usize>,
    pub c2st_folds: Option<usize>,
    pub ppc_samples: Option<usize>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl ConfigFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// `top`'s set keys replace this file's.
    pub fn overlay(mut self, top: ConfigFile) -> Self {
        overlay_fields!(
            self,
            top,
            task,
            model,
            budget,
            seeds,
            observation_seed,
            num_samples,
            out_dir,
            lr,
            batch_size,
            max_epochs,
            patience,
            clip_norm,
            val_fraction,
            min_delta,
            weight_decay,
            c2st_epochs,
            c2st_folds,
            ppc_samples
        );
        self
    }

    pub fn resolve(self) -> Result<ExperimentConfig> {
        let task = self.task.ok_or_else(|| Error::Config("missing 'task'".into()))?;
        let model: ModelKind = self
            .model
            .as_deref()
            .ok_or_else(|| Error::Config("missing 'model'".into()))?
            .parse()
            .map_err(|e: Error| Error::Config(e.to_string()))?;
        let budget = self.budget.ok_or_else(|| Error::Config("missing 'budget'".into()))?;
        if budget < MIN_BUDGET {
            return Err(Error::Config(format!("budget must be at least {MIN_BUDGET}, got {budget}")));
        }
        let seeds = self.seeds.unwrap_or_else(|| vec![1]);
        if seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        let mut train = TrainConfig::for_task(task, model);
        train.lr = self.lr.unwrap_or(train.lr);
        train.batch_size = self.batch_size.unwrap_or(train.batch_size);
        train.max_epochs = self.max_epochs.unwrap_or(train.max_epochs);
        train.patience = self.patience.unwrap_or(train.patience);
        train.clip_norm = self.clip_norm.unwrap_or(train.clip_norm);
        train.val_fraction = self.val_fraction.unwrap_or(train.val_fraction);
        train.min_delta = self.min_delta.unwrap_or(train.min_delta);
        train.weight_decay = self.weight_decay.unwrap_or(train.weight_decay);
        train.validate()?;
        let mut c2st = C2stConfig::default();
        c2st.epochs = self.c2st_epochs.unwrap_or(c2st.epochs);
        c2st.folds = self.c2st_folds.unwrap_or(c2st.folds);
        if c2st.epochs == 0 || c2st.folds < 2 {
            return Err(Error::Config("c2st_epochs must be ≥ 1 and c2st_folds ≥ 2".into()));
        }
        let num_samples = self.num_samples.unwrap_or(DEFAULT_NUM_SAMPLES);
        let ppc_samples = self.ppc_samples.unwrap_or(DEFAULT_PPC_SAMPLES);
        if num_samples < 10 || ppc_samples < 100 {
            return Err(Error::Config("num_samples must be ≥ 10 and ppc_samples ≥ 100".into()));
        }
        let out_dir = self
            .out_dir
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        Ok(ExperimentConfig {
            task,
            model,
            budget,
            seeds,
            observation_seed: self.observation_seed.unwrap_or(DEFAULT_OBSERVATION_SEED),
            num_samples,
            ppc_samples,
            out_dir,
            train,
            c2st,
        })
    }
}

/// Fully resolved experiment settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: TaskId,
    pub model: ModelKind,
    pub budget: usize,
    pub seeds: Vec<u64>,
    pub observation_seed: u64,
    pub num_samples: usize,
    pub ppc_samples: usize,
    pub out_dir: PathBuf,
    /// Training settings; the seed field is replaced per run.
    pub train: TrainConfig,
    pub c2st: C2stConfig,
}

#[derive(Serialize)]
struct Hashed<'a> {
    format: u32,
    task: TaskId,
    model: ModelKind,
    budget: usize,
    observation_seed: u64,
    num_samples: usize,
    ppc_samples: usize,
    train: &'a TrainConfig,
    c2st: &'a C2stConfig,
}

impl ExperimentConfig {
    /// Hash of every setting that affects results, except the seed list and output location,
    /// so runs over different seeds of one configuration can be aggregated.
    pub fn hash(&self) -> String {
        let train = TrainConfig {
            seed: 0,
            ..self.train.clone()
        };
        let payload = serde_json::to_vec(&Hashed {
            format: 1,
            task: self.task,
            model: self.model,
            budget: self.budget,
            observation_seed: self.observation_seed,
            num_samples: self.num_samples,
            ppc_samples: self.ppc_samples,
            train: &train,
            c2st: &self.c2st,
        })
        .expect("config serializes");
        let digest = Sha256::digest(&payload);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(format!("{}-{}-{}", self.task, self.model, self.budget))
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }
}
