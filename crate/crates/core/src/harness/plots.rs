use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const MARGINAL_BINS: usize = 50;
pub const PAIR_BINS: usize = 30;

pub struct PlotInput<'a> {
    pub model: &'a Matrix,
    /// Reference samples and their oracle kind.
    pub oracle: Option<(&'a Matrix, &'a str)>,
    /// Provenance of the model samples, e.g. `model:seed_1`.
    pub source: &'a str,
    pub config_hash: &'a str,
    /// Fixed per-dimension plotting range; the sample range is used otherwise.
    pub bounds: Option<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Bins {
    low: f64,
    high: f64,
    count: usize,
}

impl Bins {
    fn covering(cols: &[&[f64]], bounds: Option<(f64, f64)>, count: usize) -> Self {
        let (mut low, mut high) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in cols {
            for &v in c.iter() {
                low = low.min(v);
                high = high.max(v);
            }
        }
        if let Some((lo, hi)) = bounds {
            low = low.min(lo);
            high = high.max(hi);
        }
        if !(high > low) {
            let c = if low.is_finite() { low } else { 0.0 };
            (low, high) = (c - 0.5, c + 0.5);
        }
        Self { low, high, count }
    }

    fn width(&self) -> f64 {
        (self.high - self.low) / self.count as f64
    }

    fn edge(&self, i: usize) -> f64 {
        if i == self.count {
            self.high
        } else {
            self.low + i as f64 * self.width()
        }
    }

    /// The last bin is closed so the maximum lands inside.
    fn index(&self, v: f64) -> usize {
        let t = ((v - self.low) / (self.high - self.low) * self.count as f64).floor();
        (t.max(0.0) as usize).min(self.count - 1)
    }
}

fn column(m: &Matrix, j: usize) -> Vec<f64> {
    m.iter_rows().map(|r| r[j]).collect()
}

fn histogram(values: &[f64], bins: &Bins) -> Vec<u64> {
    let mut h = vec![0; bins.count];
    for &v in values {
        h[bins.index(v)] += 1;
    }
    h
}

fn histogram2(x: &[f64], y: &[f64], bx: &Bins, by: &Bins) -> Vec<u64> {
    let mut h = vec![0; bx.count * by.count];
    for (&a, &b) in x.iter().zip(y) {
        h[bx.index(a) * by.count + by.index(b)] += 1;
    }
    h
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `marginal_<j>.csv` for every θ dimension and `pair_<i>_<j>.csv` for every pair
/// (1-based, matching the `theta_<j>` sample columns). Returns the written paths.
pub fn emit_plot_data(dir: &Path, input: &PlotInput<'_>) -> Result<Vec<PathBuf>> {
    let d = input.model.cols();
    if input.model.rows() == 0 {
        return Err(Error::InvalidArgument("no samples to histogram".into()));
    }
    if let Some((o, _)) = input.oracle {
        if o.cols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: o.cols(),
            });
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let model_cols: Vec<Vec<f64>> = (0..d).map(|j| column(input.model, j)).collect();
    let oracle_cols: Option<Vec<Vec<f64>>> = input.oracle.map(|(o, _)| (0..d).map(|j| column(o, j)).collect());
    let cols_for = |j: usize| -> Vec<&[f64]> {
        let mut v = vec![model_cols[j].as_slice()];
        if let Some(oc) = &oracle_cols {
            v.push(oc[j].as_slice());
        }
        v
    };
    let header = |bins: &[Bins]| {
        let mut s = format!(
            "# config_hash={},source={},n_model={}",
            input.config_hash,
            input.source,
            input.model.rows()
        );
        if let Some((o, kind)) = input.oracle {
            write!(s, ",oracle=oracle:{kind},n_oracle={}", o.rows()).unwrap();
        }
        for (k, b) in bins.iter().enumerate() {
            write!(s, ",bins_{k}={},low_{k}={:?},high_{k}={:?}", b.count, b.low, b.high).unwrap();
        }
        s.push('\n');
        s
    };
    let counts_header = if oracle_cols.is_some() {
        "model_count,oracle_count"
    } else {
        "model_count"
    };

    let mut written = Vec::new();
    for j in 0..d {
        let b = Bins::covering(&cols_for(j), input.bounds, MARGINAL_BINS);
        let hm = histogram(&model_cols[j], &b);
        let ho = oracle_cols.as_ref().map(|oc| histogram(&oc[j], &b));
        let mut s = header(&[b]);
        writeln!(s, "bin,low,high,{counts_header}").unwrap();
        for i in 0..b.count {
            write!(s, "{i},{:?},{:?},{}", b.edge(i), b.edge(i + 1), hm[i]).unwrap();
            if let Some(ho) = &ho {
                write!(s, ",{}", ho[i]).unwrap();
            }
            s.push('\n');
        }
        let p = dir.join(format!("marginal_{}.csv", j + 1));
        write(&p, &s)?;
        written.push(p);
    }
    for i in 0..d {
        for j in i + 1..d {
            let bx = Bins::covering(&cols_for(i), input.bounds, PAIR_BINS);
            let by = Bins::covering(&cols_for(j), input.bounds, PAIR_BINS);
            let hm = histogram2(&model_cols[i], &model_cols[j], &bx, &by);
            let ho = oracle_cols.as_ref().map(|oc| histogram2(&oc[i], &oc[j], &bx, &by));
            let mut s = header(&[bx, by]);
            writeln!(s, "bin_x,bin_y,x_low,x_high,y_low,y_high,{counts_header}").unwrap();
            for a in 0..bx.count {
                for c in 0..by.count {
                    let k = a * by.count + c;
                    write!(
                        s,
                        "{a},{c},{:?},{:?},{:?},{:?},{}",
                        bx.edge(a),
                        bx.edge(a + 1),
                        by.edge(c),
                        by.edge(c + 1),
                        hm[k]
                    )
                    .unwrap();
                    if let Some(ho) = &ho {
                        write!(s, ",{}", ho[k]).unwrap();
                    }
                    s.push('\n');
                }
            }
            let p = dir.join(format!("pair_{}_{}.csv", i + 1, j + 1));
            write(&p, &s)?;
            written.push(p);
        }
    }
    Ok(written)
}
