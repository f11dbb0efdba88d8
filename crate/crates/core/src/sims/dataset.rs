use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SimTask, TaskId};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng;

const FORMAT_VERSION: u32 = 1;

/// Per-column standardization `(x − mean) / std`, optionally of `ln x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Columns whose variance was zero; their std is forced to 1.
    pub degenerate: Vec<bool>,
    /// Standardize `ln x` instead of `x`; inputs must then be strictly positive.
    #[serde(default)]
    pub log: bool,
}

fn log_rows(data: &Matrix) -> Result<Matrix> {
    if let Some(v) = data.as_slice().iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!("log scaling needs positive finite values, got {v}")));
    }
    Ok(data.map(f64::ln))
}

impl StandardScaler {
    /// Fits on `ln x`, for strictly positive columns spread over orders of magnitude.
    pub fn fit_log(data: &Matrix) -> Result<Self> {
        Ok(Self {
            log: true,
            ..Self::fit(&log_rows(data)?)?
        })
    }

    pub fn fit(data: &Matrix) -> Result<Self> {
        if data.rows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "scaler needs at least 2 rows, got {}",
                data.rows()
            )));
        }
        let means = data.column_means();
        let mut var = vec![0.0; data.cols()];
        for r in data.iter_rows() {
            for ((acc, v), m) in var.iter_mut().zip(r).zip(&means) {
                *acc += (v - m) * (v - m);
            }
        }
        let n = data.rows() as f64;
        let mut degenerate = vec![false; data.cols()];
        let stds = var
            .iter()
            .zip(degenerate.iter_mut())
            .map(|(v, flag)| {
                let sd = (v / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    *flag = true;
                    1.0
                }
            })
            .collect();
        Ok(Self {
            means,
            stds,
            degenerate,
            log: false,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            means: vec![0.0; dim],
            stds: vec![1.0; dim],
            degenerate: vec![false; dim],
            log: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    fn check(&self, cols: usize) -> Result<()> {
        if cols != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: cols,
            });
        }
        Ok(())
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        let m = Matrix::from_vec(1, row.len(), row.to_vec())?;
        Ok(self.apply(&m)?.as_slice().to_vec())
    }

    pub fn invert_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        let m = Matrix::from_vec(1, row.len(), row.to_vec())?;
        Ok(self.invert(&m)?.as_slice().to_vec())
    }

    pub fn apply(&self, rows: &Matrix) -> Result<Matrix> {
        self.check(rows.cols())?;
        let mut out = if self.log { log_rows(rows)? } else { rows.clone() };
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.means).zip(&self.stds) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn invert(&self, rows: &Matrix) -> Result<Matrix> {
        self.check(rows.cols())?;
        let mut out = rows.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.means).zip(&self.stds) {
                *v = *v * s + m;
                if self.log {
                    *v = v.exp();
                }
            }
        }
        Ok(out)
    }
}

/// Paired `(θ, y)` simulations with scalers fitted on them.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub task: TaskId,
    pub thetas: Matrix,
    pub ys: Matrix,
    pub theta_scaler: StandardScaler,
    pub y_scaler: StandardScaler,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    task: TaskId,
    theta_dim: usize,
    y_dim: usize,
    n: usize,
    seed: u64,
    theta_scaler: StandardScaler,
    y_scaler: StandardScaler,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

/// Simulates `n` prior draws; row `i` uses stream `i` of `seed`.
pub fn generate_dataset(task: &SimTask, n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("dataset needs at least 2 rows, got {n}")));
    }
    let (td, yd) = (task.theta_dim(), task.y_dim());
    let mut thetas = Vec::with_capacity(n * td);
    let mut ys = Vec::with_capacity(n * yd);
    for row in 0..n {
        let mut r = rng::stream(seed, row as u64);
        let theta = task.prior_sample(&mut r);
        let y = task.simulate(&theta, &mut r).map_err(|e| Error::DatasetRow {
            row,
            source: Box::new(e),
        })?;
        thetas.extend(theta);
        ys.extend(y);
    }
    Dataset::new(task.id(), Matrix::from_vec(n, td, thetas)?, Matrix::from_vec(n, yd, ys)?, seed)
}

/// Writes rows as CSV after an optional verbatim prefix (comment and header lines).
pub fn write_csv(path: &Path, m: &Matrix, header: Option<&str>) -> Result<()> {
    let mut out = String::with_capacity(m.rows() * m.cols() * 20);
    if let Some(h) = header {
        out.push_str(h);
    }
    for r in m.iter_rows() {
        let mut first = true;
        for v in r {
            if !first {
                out.push(',');
            }
            first = false;
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads numeric CSV rows, skipping `#` comments and a non-numeric header line.
pub fn read_csv(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if rows.is_empty() => continue,
            Err(e) => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    reason: format!("line {}: {e}", lineno + 1),
                })
            }
        }
    }
    Matrix::from_rows(&rows).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

impl Dataset {
    pub fn new(task: TaskId, thetas: Matrix, ys: Matrix, seed: u64) -> Result<Self> {
        if thetas.rows() != ys.rows() {
            return Err(Error::shape(format!("{} y rows", thetas.rows()), ys.rows()));
        }
        let (td, yd) = task.dims();
        if thetas.cols() != td || ys.cols() != yd {
            return Err(Error::shape(
                format!("({td}, {yd}) columns"),
                format!("({}, {})", thetas.cols(), ys.cols()),
            ));
        }
        let fit = |m: &Matrix| {
            if task.log_scaled() {
                StandardScaler::fit_log(m)
            } else {
                StandardScaler::fit(m)
            }
        };
        let theta_scaler = fit(&thetas)?;
        let y_scaler = fit(&ys)?;
        Ok(Self {
            task,
            thetas,
            ys,
            theta_scaler,
            y_scaler,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.thetas.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scaled_thetas(&self) -> Matrix {
        self.theta_scaler.apply(&self.thetas).unwrap()
    }

    pub fn scaled_ys(&self) -> Matrix {
        self.y_scaler.apply(&self.ys).unwrap()
    }

    /// Writes `meta.json`, `thetas.csv` and `ys.csv` into `dir`.
    pub fn save(&self, dir: &Path, config_hash: Option<&str>) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = Meta {
            format_version: FORMAT_VERSION,
            task: self.task,
            theta_dim: self.thetas.cols(),
            y_dim: self.ys.cols(),
            n: self.len(),
            seed: self.seed,
            theta_scaler: self.theta_scaler.clone(),
            y_scaler: self.y_scaler.clone(),
            config_hash: config_hash.map(str::to_owned),
        };
        let p = dir.join("meta.json");
        fs::write(&p, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&p, e))?;
        let comment = config_hash.map(|h| format!("# config_hash={h}\n"));
        write_csv(&dir.join("thetas.csv"), &self.thetas, comment.as_deref())?;
        write_csv(&dir.join("ys.csv"), &self.ys, comment.as_deref())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join("meta.json");
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let meta: Meta = serde_json::from_str(&text)?;
        if meta.format_version != FORMAT_VERSION {
            return Err(Error::Format {
                path: p,
                reason: format!("unsupported format version {}", meta.format_version),
            });
        }
        let thetas = read_csv(&dir.join("thetas.csv"))?;
        let ys = read_csv(&dir.join("ys.csv"))?;
        if thetas.rows() != meta.n || ys.rows() != meta.n || thetas.cols() != meta.theta_dim || ys.cols() != meta.y_dim {
            return Err(Error::Format {
                path: dir.to_path_buf(),
                reason: "CSV shapes disagree with meta.json".into(),
            });
        }
        Ok(Self {
            task: meta.task,
            thetas,
            ys,
            theta_scaler: meta.theta_scaler,
            y_scaler: meta.y_scaler,
            seed: meta.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dataset_is_deterministic_and_standardized() {
        let task = SimTask::new(TaskId::TwoMoons);
        let a = generate_dataset(&task, 10_000, 42).unwrap();
        let b = generate_dataset(&task, 10_000, 42).unwrap();
        assert_eq!(a, b);
        for scaled in [a.scaled_thetas(), a.scaled_ys()] {
            let s = StandardScaler::fit(&scaled).unwrap();
            for (m, sd) in s.means.iter().zip(&s.stds) {
                assert!(m.abs() < 1e-9);
                assert!((sd - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_row_is_rejected() {
        assert!(generate_dataset(&SimTask::new(TaskId::TwoMoons), 1, 0).is_err());
    }

    #[test]
    fn constant_column_is_flagged() {
        let m = Matrix::from_vec(3, 2, vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0]).unwrap();
        let s = StandardScaler::fit(&m).unwrap();
        assert_eq!(s.degenerate, vec![false, true]);
        assert_eq!(s.stds[1], 1.0);
        let out = s.apply(&m).unwrap();
        assert!(out.iter_rows().all(|r| r[1] == 0.0));
    }

    #[test]
    fn scaler_column_mismatch() {
        let s = StandardScaler::identity(3);
        assert!(s.apply(&Matrix::zeros(2, 2)).is_err());
        assert!(s.invert_row(&[1.0]).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate_dataset(&SimTask::new(TaskId::Sir), 50, 3).unwrap();
        d.save(dir.path(), Some("abc")).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back, d);
        let first = fs::read(dir.path().join("ys.csv")).unwrap();
        back.save(dir.path(), Some("abc")).unwrap();
        assert_eq!(fs::read(dir.path().join("ys.csv")).unwrap(), first);
    }

    #[test]
    fn log_scaled_task_standardizes_logs() {
        let d = generate_dataset(&SimTask::new(TaskId::LotkaVolterra), 500, 4).unwrap();
        assert!(d.theta_scaler.log && d.y_scaler.log);
        let direct = StandardScaler::fit(&d.ys.map(f64::ln)).unwrap();
        assert_eq!(direct.means, d.y_scaler.means);
        assert_eq!(direct.stds, d.y_scaler.stds);
        let back = d.y_scaler.invert(&d.scaled_ys()).unwrap();
        for (a, b) in back.as_slice().iter().zip(d.ys.as_slice()) {
            assert!((a - b).abs() <= 1e-9 * b.abs());
        }
        assert!(!generate_dataset(&SimTask::new(TaskId::Sir), 50, 4).unwrap().y_scaler.log);
    }

    #[test]
    fn log_scaler_rejects_non_positive_values() {
        let m = Matrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap();
        assert!(StandardScaler::fit_log(&m).is_err());
        let s = StandardScaler::fit_log(&Matrix::from_vec(2, 1, vec![1.0, 4.0]).unwrap()).unwrap();
        assert!(s.apply_row(&[-2.0]).is_err());
        assert!((s.apply_row(&[2.0]).unwrap()[0]).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn apply_then_invert_is_identity(vals in prop::collection::vec(-1e3f64..1e3, 12..60)) {
            let rows = vals.len() / 3;
            let m = Matrix::from_vec(rows, 3, vals[..rows * 3].to_vec()).unwrap();
            let s = StandardScaler::fit(&m).unwrap();
            let back = s.invert(&s.apply(&m).unwrap()).unwrap();
            for (a, b) in back.as_slice().iter().zip(m.as_slice()) {
                prop_assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
            }
        }
    }
}
