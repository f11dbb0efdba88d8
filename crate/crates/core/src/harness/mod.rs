//! Experiment pipeline: simulate, train, sample, evaluate, report.
//!
//! Everything for one configuration lives under `<out>/<task>-<model>-<budget>/`:
//!
//! ```text
//! observation.json
//! oracle_samples.csv            (tasks with a reference posterior)
//! seed_<s>/dataset/{meta.json,thetas.csv,ys.csv}
//! seed_<s>/checkpoint.bin, checkpoint.json, train_report.json
//! samples_<s>.csv, metrics_<s>.json
//! report.json, plots/*.csv
//! ```
//!
//! Each file records the configuration hash, and stages refuse inputs carrying a different one.

pub mod cli;
pub mod config;
pub mod plots;
pub mod ppc;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{ConfigFile, ExperimentConfig};
pub use plots::{emit_plot_data, PlotInput};
pub use ppc::{posterior_predictive_check, PpcResult};

use crate::error::{Error, Result};
use crate::metrics::{compare_with, MetricReport};
use crate::models::ModelSpec;
use crate::nn::Matrix;
use crate::oracles::{oracle_samples, two_means};
use crate::rng;
use crate::sims::{generate_dataset, read_csv, write_csv, Dataset, SimTask, StandardScaler, TaskId};
use crate::train::{train_model, TrainReport, TrainedModel};

const TAG_OBSERVATION: u64 = 101;
const TAG_DATASET: u64 = 102;
const TAG_SAMPLE: u64 = 103;
const TAG_ORACLE: u64 = 104;
const TAG_C2ST: u64 = 105;
const TAG_PPC: u64 = 106;

const OBSERVATION_ATTEMPTS: u64 = 1000;
const TWO_MEANS_ITERATIONS: usize = 100;

/// File locations inside one run directory.
#[derive(Clone, Debug)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn observation(&self) -> PathBuf {
        self.root.join("observation.json")
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.root.join(format!("seed_{seed}"))
    }

    pub fn dataset(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("dataset")
    }

    pub fn checkpoint(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("checkpoint.bin")
    }

    pub fn train_report(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("train_report.json")
    }

    pub fn samples(&self, seed: u64) -> PathBuf {
        self.root.join(format!("samples_{seed}.csv"))
    }

    pub fn oracle_samples(&self) -> PathBuf {
        self.root.join("oracle_samples.csv")
    }

    pub fn metrics(&self, seed: u64) -> PathBuf {
        self.root.join(format!("metrics_{seed}.json"))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn plots(&self) -> PathBuf {
        self.root.join("plots")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub config_hash: String,
    pub task: TaskId,
    pub observation_seed: u64,
    pub true_theta: Vec<f64>,
    pub y0: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredTrainReport {
    pub config_hash: String,
    pub dataset_hash: String,
    pub report: TrainReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub config_hash: String,
    pub task: TaskId,
    pub seed: u64,
    pub samples_source: String,
    pub n_samples: usize,
    /// Oracle kind the samples were compared against, when the task has one.
    pub reference: Option<String>,
    pub metrics: Option<MetricReport>,
    pub ppc: PpcResult,
    /// Share of model samples nearest each of the two oracle modes (Two Moons only).
    pub mode_fractions: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub wall_time_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub dataset_hash: Option<String>,
    pub train: Option<TrainSummary>,
    pub checkpoint: Option<String>,
    pub metrics: SeedMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation (n − 1); zero for a single seed.
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub observation: Observation,
    pub seeds: Vec<SeedRecord>,
    pub aggregate: BTreeMap<String, Aggregate>,
}

pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(Aggregate { mean, std, n })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn check_hash(path: &Path, found: Option<&str>, expected: &str) -> Result<()> {
    match found {
        Some(h) if h == expected => Ok(()),
        Some(h) => Err(Error::Config(format!(
            "{} was produced by config {h}, current config is {expected}",
            path.display()
        ))),
        None => Err(Error::Config(format!("{} carries no config hash", path.display()))),
    }
}

/// `key=value` pairs from the leading `#` comment lines of a CSV file.
pub fn read_csv_tags(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut tags = BTreeMap::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        for kv in line.trim_start_matches('#').trim().split(',') {
            if let Some((k, v)) = kv.split_once('=') {
                tags.insert(k.trim().to_owned(), v.trim().to_owned());
            }
        }
    }
    Ok(tags)
}

fn theta_header(dim: usize) -> String {
    (1..=dim).map(|j| format!("theta_{j}")).collect::<Vec<_>>().join(",")
}

pub fn write_samples(path: &Path, samples: &Matrix, source: &str, config_hash: &str) -> Result<()> {
    let prefix = format!(
        "# source={source},config_hash={config_hash},units=native\n{}\n",
        theta_header(samples.cols())
    );
    write_csv(path, samples, Some(&prefix))
}

/// Sha256 prefix over the dataset's CSV contents.
pub fn dataset_hash(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    for name in ["thetas.csv", "ys.csv"] {
        let p = dir.join(name);
        h.update(fs::read(&p).map_err(|e| Error::io(&p, e))?);
    }
    Ok(h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect())
}

/// Draws the true θ from the prior with the observation seed and simulates y₀,
/// retrying on simulator failure.
pub fn make_observation(task: &SimTask, observation_seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let base = rng::derive(observation_seed, TAG_OBSERVATION);
    let mut last = None;
    for attempt in 0..OBSERVATION_ATTEMPTS {
        let mut r = rng::stream(base, attempt);
        let theta = task.prior_sample(&mut r);
        match task.simulate(&theta, &mut r) {
            Ok(y) if y.iter().all(|v| v.is_finite()) => return Ok((theta, y)),
            Ok(_) => {}
            Err(e @ Error::Simulator { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::InvalidArgument("could not simulate an observation".into())))
}

/// Loads `observation.json` when it matches the config, otherwise creates it.
pub fn ensure_observation(cfg: &ExperimentConfig) -> Result<Observation> {
    let paths = RunPaths::new(cfg.run_dir());
    let hash = cfg.hash();
    let p = paths.observation();
    if p.exists() {
        let obs: Observation = read_json(&p)?;
        check_hash(&p, Some(&obs.config_hash), &hash)?;
        return Ok(obs);
    }
    let task = SimTask::new(cfg.task);
    let (true_theta, y0) = make_observation(&task, cfg.observation_seed)?;
    let obs = Observation {
        config_hash: hash,
        task: cfg.task,
        observation_seed: cfg.observation_seed,
        true_theta,
        y0,
    };
    write_json(&p, &obs)?;
    Ok(obs)
}

pub fn load_observation(cfg: &ExperimentConfig) -> Result<Observation> {
    let p = RunPaths::new(cfg.run_dir()).observation();
    let obs: Observation = read_json(&p)?;
    check_hash(&p, Some(&obs.config_hash), &cfg.hash())?;
    Ok(obs)
}

pub fn simulate(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    ensure_observation(cfg)?;
    let task = SimTask::new(cfg.task);
    let ds = generate_dataset(&task, cfg.budget, rng::derive(seed, TAG_DATASET))?;
    ds.save(&RunPaths::new(cfg.run_dir()).dataset(seed), Some(&cfg.hash()))?;
    Ok(ds)
}

fn load_dataset(cfg: &ExperimentConfig, dir: &Path) -> Result<Dataset> {
    let meta = dir.join("meta.json");
    let stored: serde_json::Value = read_json(&meta)?;
    check_hash(&meta, stored.get("config_hash").and_then(|v| v.as_str()), &cfg.hash())?;
    let ds = Dataset::load(dir)?;
    if ds.task != cfg.task || ds.len() != cfg.budget {
        return Err(Error::Config(format!(
            "{} holds {} rows of {}, config wants {} rows of {}",
            dir.display(),
            ds.len(),
            ds.task,
            cfg.budget,
            cfg.task
        )));
    }
    Ok(ds)
}

pub fn train(cfg: &ExperimentConfig, seed: u64) -> Result<TrainReport> {
    let paths = RunPaths::new(cfg.run_dir());
    let dir = paths.dataset(seed);
    let ds = load_dataset(cfg, &dir)?;
    let spec = ModelSpec::for_task(cfg.task, cfg.model);
    let (model, report) = train_model(spec, &ds, &cfg.train_config(seed))?;
    let hash = cfg.hash();
    model.save(&paths.checkpoint(seed), Some(&hash))?;
    write_json(
        &paths.train_report(seed),
        &StoredTrainReport {
            config_hash: hash,
            dataset_hash: dataset_hash(&dir)?,
            report: report.clone(),
        },
    )?;
    Ok(report)
}

fn load_model(cfg: &ExperimentConfig, seed: u64) -> Result<TrainedModel> {
    let p = RunPaths::new(cfg.run_dir()).checkpoint(seed);
    check_hash(&p, TrainedModel::stored_config_hash(&p)?.as_deref(), &cfg.hash())?;
    let m = TrainedModel::load(&p)?;
    if m.task != cfg.task || m.model.kind() != cfg.model {
        return Err(Error::Config(format!("{} is not a {} {} model", p.display(), cfg.task, cfg.model)));
    }
    Ok(m)
}

pub fn sample(cfg: &ExperimentConfig, seed: u64) -> Result<Matrix> {
    let obs = ensure_observation(cfg)?;
    let model = load_model(cfg, seed)?;
    let mut r = rng::seeded(rng::derive(seed, TAG_SAMPLE));
    let s = model.sample_native(&obs.y0, cfg.num_samples, &mut r)?;
    let source = format!("model:{}:seed_{seed}", cfg.model);
    write_samples(&RunPaths::new(cfg.run_dir()).samples(seed), &s, &source, &cfg.hash())?;
    Ok(s)
}

/// Reference samples for the run's observation, written to `oracle_samples.csv`.
pub fn reference_samples(cfg: &ExperimentConfig, obs: &Observation) -> Result<Option<(Matrix, &'static str)>> {
    let seed = rng::derive(cfg.observation_seed, TAG_ORACLE);
    let Some(res) = oracle_samples(cfg.task, &obs.y0, cfg.num_samples, seed) else {
        return Ok(None);
    };
    let (m, kind) = res?;
    let p = RunPaths::new(cfg.run_dir()).oracle_samples();
    write_samples(&p, &m, &format!("oracle:{kind}"), &cfg.hash())?;
    Ok(Some((m, kind)))
}

/// Fraction of `model` rows closest to each of the two 2-means centers of `reference`.
pub fn mode_fractions(model: &Matrix, reference: &Matrix) -> [f64; 2] {
    let (centers, _) = two_means(reference, TWO_MEANS_ITERATIONS);
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    let mut counts = [0usize; 2];
    for r in model.iter_rows() {
        counts[usize::from(d2(r, &centers[1]) < d2(r, &centers[0]))] += 1;
    }
    let n = model.rows().max(1) as f64;
    [counts[0] as f64 / n, counts[1] as f64 / n]
}

/// Linear standardization of the seed's simulated y, so predictive distances are in data units
/// even for tasks whose model inputs are log-scaled.
fn predictive_scaler(cfg: &ExperimentConfig, seed: u64) -> Result<StandardScaler> {
    let paths = RunPaths::new(cfg.run_dir());
    if paths.dataset(seed).exists() {
        return StandardScaler::fit(&load_dataset(cfg, &paths.dataset(seed))?.ys);
    }
    let s = load_model(cfg, seed)?.y_scaler;
    if s.log {
        return Err(Error::Config(format!(
            "the predictive check for {} needs the dataset at {}",
            cfg.task,
            paths.dataset(seed).display()
        )));
    }
    Ok(s)
}

/// Scores the seed's samples (or the file at `samples_override`) and writes `metrics_<seed>.json`.
pub fn evaluate(cfg: &ExperimentConfig, seed: u64, samples_override: Option<&Path>) -> Result<SeedMetrics> {
    let paths = RunPaths::new(cfg.run_dir());
    let hash = cfg.hash();
    let obs = load_observation(cfg)?;
    let sp = samples_override.map(Path::to_path_buf).unwrap_or_else(|| paths.samples(seed));
    let tags = read_csv_tags(&sp)?;
    if samples_override.is_none() {
        check_hash(&sp, tags.get("config_hash").map(String::as_str), &hash)?;
    }
    let samples = read_csv(&sp)?;
    let (td, _) = cfg.task.dims();
    if samples.cols() != td {
        return Err(Error::DimensionMismatch {
            expected: td,
            actual: samples.cols(),
        });
    }
    let task = SimTask::new(cfg.task);
    let reference = reference_samples(cfg, &obs)?;
    let metrics = match &reference {
        Some((r, _)) => Some(compare_with(&samples, r, rng::derive(seed, TAG_C2ST), &cfg.c2st)?),
        None => None,
    };
    let mode = match (&reference, cfg.task) {
        (Some((r, _)), TaskId::TwoMoons) => Some(mode_fractions(&samples, r)),
        _ => None,
    };
    let k = cfg.ppc_samples.min(samples.rows());
    let idx: Vec<usize> = (0..k).collect();
    let scaler = predictive_scaler(cfg, seed)?;
    let mut r = rng::seeded(rng::derive(seed, TAG_PPC));
    let ppc = posterior_predictive_check(&task, &samples.select_rows(&idx), &obs.y0, &scaler, &mut r)?;
    let out = SeedMetrics {
        config_hash: hash,
        task: cfg.task,
        seed,
        samples_source: tags.get("source").cloned().unwrap_or_else(|| "external".into()),
        n_samples: samples.rows(),
        reference: reference.map(|(_, k)| k.to_owned()),
        metrics,
        ppc,
        mode_fractions: mode,
    };
    write_json(&paths.metrics(seed), &out)?;
    Ok(out)
}

fn relative(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).display().to_string()
}

/// Collects every seed's metrics into `report.json` with mean and sample std across seeds.
pub fn report(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let paths = RunPaths::new(cfg.run_dir());
    let hash = cfg.hash();
    let observation = load_observation(cfg)?;
    let mut seeds = Vec::new();
    for &seed in &cfg.seeds {
        let mp = paths.metrics(seed);
        let metrics: SeedMetrics = read_json(&mp)?;
        check_hash(&mp, Some(&metrics.config_hash), &hash)?;
        let trp = paths.train_report(seed);
        let (train, dataset_hash) = if trp.exists() {
            let t: StoredTrainReport = read_json(&trp)?;
            check_hash(&trp, Some(&t.config_hash), &hash)?;
            let r = &t.report;
            let s = TrainSummary {
                best_epoch: r.best_epoch,
                best_val_loss: r.best_val_loss,
                epochs_run: r.epochs.len(),
                stopped_early: r.stopped_early,
                wall_time_secs: r.wall_time_secs,
            };
            (Some(s), Some(t.dataset_hash))
        } else {
            (None, None)
        };
        let ck = paths.checkpoint(seed);
        seeds.push(SeedRecord {
            seed,
            dataset_hash,
            train,
            checkpoint: ck.exists().then(|| relative(&paths.root, &ck)),
            metrics,
        });
    }
    let mut agg = BTreeMap::new();
    let series: [(&str, fn(&SeedMetrics) -> Option<f64>); 3] = [
        ("c2st_accuracy", |m| m.metrics.as_ref().and_then(|r| r.c2st_accuracy)),
        ("mmd2", |m| m.metrics.as_ref().and_then(|r| r.mmd2)),
        ("ppc_ratio", |m| Some(m.ppc.ratio)),
    ];
    for (name, get) in series {
        let vals: Vec<f64> = seeds.iter().filter_map(|s| get(&s.metrics)).collect();
        if let Some(a) = aggregate(&vals) {
            agg.insert(name.to_owned(), a);
        }
    }
    let record = RunRecord {
        config_hash: hash,
        config: cfg.clone(),
        observation,
        seeds,
        aggregate: agg,
    };
    write_json(&paths.report(), &record)?;
    Ok(record)
}

/// Histogram CSVs for the first seed's samples, with the oracle overlay when one exists.
pub fn plot(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let paths = RunPaths::new(cfg.run_dir());
    let seed = cfg.seeds[0];
    let sp = paths.samples(seed);
    let tags = read_csv_tags(&sp)?;
    check_hash(&sp, tags.get("config_hash").map(String::as_str), &cfg.hash())?;
    let model = read_csv(&sp)?;
    let op = paths.oracle_samples();
    let oracle = if op.exists() {
        let t = read_csv_tags(&op)?;
        check_hash(&op, t.get("config_hash").map(String::as_str), &cfg.hash())?;
        let kind = t.get("source").and_then(|s| s.strip_prefix("oracle:")).unwrap_or("unknown").to_owned();
        Some((read_csv(&op)?, kind))
    } else {
        None
    };
    let source = format!("model:{}:seed_{seed}", cfg.model);
    let hash = cfg.hash();
    emit_plot_data(
        &paths.plots(),
        &PlotInput {
            model: &model,
            oracle: oracle.as_ref().map(|(m, k)| (m, k.as_str())),
            source: &source,
            config_hash: &hash,
            bounds: cfg.task.uniform_bounds(),
        },
    )
}

/// simulate → train → sample → evaluate for every seed, then report and plot data.
pub fn pipeline(cfg: &ExperimentConfig, mut progress: impl FnMut(&str)) -> Result<RunRecord> {
    ensure_observation(cfg)?;
    for &seed in &cfg.seeds {
        progress(&format!("seed {seed}: simulate"));
        simulate(cfg, seed)?;
        progress(&format!("seed {seed}: train"));
        train(cfg, seed)?;
        progress(&format!("seed {seed}: sample"));
        sample(cfg, seed)?;
        progress(&format!("seed {seed}: evaluate"));
        evaluate(cfg, seed, None)?;
    }
    progress("report");
    let rec = report(cfg)?;
    plot(cfg)?;
    Ok(rec)
}

fn invalid(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Checks that a finished run directory holds every expected file in the expected shape.
pub fn validate_run_dir(cfg: &ExperimentConfig) -> Result<()> {
    let paths = RunPaths::new(cfg.run_dir());
    let hash = cfg.hash();
    let (td, yd) = cfg.task.dims();
    let obs = load_observation(cfg)?;
    if obs.true_theta.len() != td || obs.y0.len() != yd {
        return Err(invalid(&paths.observation(), "wrong observation widths"));
    }
    for &seed in &cfg.seeds {
        let ds = load_dataset(cfg, &paths.dataset(seed))?;
        for name in ["thetas.csv", "ys.csv"] {
            let p = paths.dataset(seed).join(name);
            check_hash(&p, read_csv_tags(&p)?.get("config_hash").map(String::as_str), &hash)?;
        }
        let model = load_model(cfg, seed)?;
        if model.theta_scaler != ds.theta_scaler || model.y_scaler != ds.y_scaler {
            return Err(invalid(&paths.checkpoint(seed), "scalers differ from the dataset's"));
        }
        let t: StoredTrainReport = read_json(&paths.train_report(seed))?;
        check_hash(&paths.train_report(seed), Some(&t.config_hash), &hash)?;
        let sp = paths.samples(seed);
        let tags = read_csv_tags(&sp)?;
        check_hash(&sp, tags.get("config_hash").map(String::as_str), &hash)?;
        let s = read_csv(&sp)?;
        if s.shape() != (cfg.num_samples, td) || !s.all_finite() {
            return Err(invalid(&sp, format!("expected {}x{td} finite samples", cfg.num_samples)));
        }
        let header = fs::read_to_string(&sp)
            .map_err(|e| Error::io(&sp, e))?
            .lines()
            .find(|l| !l.starts_with('#'))
            .map(str::to_owned);
        if header.as_deref() != Some(theta_header(td).as_str()) {
            return Err(invalid(&sp, "missing theta header"));
        }
        let m: SeedMetrics = read_json(&paths.metrics(seed))?;
        check_hash(&paths.metrics(seed), Some(&m.config_hash), &hash)?;
        if m.reference.is_some() != m.metrics.is_some() {
            return Err(invalid(&paths.metrics(seed), "reference and metrics disagree"));
        }
    }
    let rec: RunRecord = read_json(&paths.report())?;
    check_hash(&paths.report(), Some(&rec.config_hash), &hash)?;
    let n_plots = td + td * (td - 1) / 2;
    let mut found = 0;
    for entry in fs::read_dir(paths.plots()).map_err(|e| Error::io(paths.plots(), e))? {
        let p = entry.map_err(|e| Error::io(paths.plots(), e))?.path();
        if p.extension().is_some_and(|e| e == "csv") {
            check_hash(&p, read_csv_tags(&p)?.get("config_hash").map(String::as_str), &hash)?;
            found += 1;
        }
    }
    if found != n_plots {
        return Err(invalid(&paths.plots(), format!("expected {n_plots} plot files, found {found}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_uses_sample_std() {
        let a = aggregate(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(a.mean, 2.5);
        assert!((a.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(aggregate(&[7.0]).unwrap().std, 0.0);
        assert!(aggregate(&[]).is_none());
    }

    #[test]
    fn observation_is_seeded_and_valid() {
        for id in [TaskId::TwoMoons, TaskId::Sir, TaskId::LotkaVolterra] {
            let task = SimTask::new(id);
            let a = make_observation(&task, 1).unwrap();
            assert_eq!(a, make_observation(&task, 1).unwrap());
            assert_ne!(a, make_observation(&task, 2).unwrap());
            assert_eq!((a.0.len(), a.1.len()), id.dims());
        }
    }

    #[test]
    fn csv_tags_parse() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_samples(&p, &Matrix::zeros(3, 2), "model:cp_vae:seed_1", "0123").unwrap();
        let tags = read_csv_tags(&p).unwrap();
        assert_eq!(tags["source"], "model:cp_vae:seed_1");
        assert_eq!(tags["config_hash"], "0123");
        assert_eq!(read_csv(&p).unwrap().shape(), (3, 2));
    }

    #[test]
    fn mode_fractions_split_clusters() {
        let mut rows = vec![vec![-5.0, 0.0]; 30];
        rows.extend(vec![vec![5.0, 0.0]; 70]);
        let reference = Matrix::from_rows(&rows).unwrap();
        let model = Matrix::from_rows(&[vec![-4.0, 0.0], vec![4.0, 1.0], vec![6.0, 0.0], vec![5.0, 0.0]]).unwrap();
        let f = mode_fractions(&model, &reference);
        let mut s = f;
        s.sort_by(f64::total_cmp);
        assert_eq!(s, [0.25, 0.75]);
    }
}
