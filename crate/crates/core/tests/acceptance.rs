//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs everything by default; `AMORTIS_ACCEPTANCE=6,7,8` selects a subset.
//! Criteria 1-5 train 3 seeds per model at budget 10,000 and take most of the runtime.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use amortis::gauss::{explin, kl_diag, kl_vs_standard, log_density, reparam_sample, DiagGaussian, VarianceActivation};
use amortis::harness::{self, ConfigFile, ExperimentConfig, RunRecord, SeedMetrics};
use amortis::metrics::{c2st, median_heuristic_bandwidth, mmd2};
use amortis::models::{LossWeights, Model, ModelKind, ModelSpec};
use amortis::nn::{Activation, Adjoint, Dense, Head, Matrix, Network, Output, LEAKY_SLOPE};
use amortis::oracles::{rejection_abc, two_moons_grid_posterior, DEFAULT_GRID_RESOLUTION};
use amortis::rng;
use amortis::sims::{generate_dataset, glm_smoothness_matrix, sir_trajectory, SimTask, TaskId, SIR_POPULATION};
use rand::Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn normal_matrix(rows: usize, cols: usize, shift: &[f64], seed: u64) -> Matrix {
    let mut r = rng::seeded(seed);
    let data = (0..rows * cols)
        .map(|i| shift.get(i % cols).copied().unwrap_or(0.0) + r.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

const SEEDS: [u64; 3] = [1, 2, 3];
const BUDGET: usize = 10_000;

/// Full pipeline for one task/model over [`SEEDS`] in a scratch directory.
fn run_experiment(task: TaskId, model: ModelKind, out: &Path) -> (ExperimentConfig, RunRecord) {
    let cfg = ConfigFile {
        task: Some(task),
        model: Some(model.name().to_owned()),
        budget: Some(BUDGET),
        seeds: Some(SEEDS.to_vec()),
        out_dir: Some(out.to_path_buf()),
        ..Default::default()
    }
    .resolve()
    .unwrap();
    let t = Instant::now();
    let rec = harness::pipeline(&cfg, |msg| eprintln!("  [{task} {model}] {msg} ({:.0}s)", t.elapsed().as_secs_f64()))
        .unwrap();
    (cfg, rec)
}

fn per_seed<T>(rec: &RunRecord, f: impl Fn(&SeedMetrics) -> T) -> Vec<T> {
    rec.seeds.iter().map(|s| f(&s.metrics)).collect()
}

fn c2st_values(rec: &RunRecord) -> Vec<f64> {
    per_seed(rec, |m| m.metrics.as_ref().and_then(|r| r.c2st_accuracy).unwrap())
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn criterion_1(out: &Path) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for kind in ModelKind::ALL {
        let (_, rec) = run_experiment(TaskId::TwoMoons, kind, &out.join("c1"));
        let acc = c2st_values(&rec);
        let min_mode: Vec<f64> = per_seed(&rec, |m| {
            let f = m.mode_fractions.unwrap();
            f[0].min(f[1])
        });
        let minutes: Vec<f64> = rec
            .seeds
            .iter()
            .map(|s| s.train.as_ref().unwrap().wall_time_secs / 60.0)
            .collect();
        let (ma, mm, mt) = (median(acc.clone()), median(min_mode.clone()), median(minutes.clone()));
        ok &= ma <= 0.75 && mm >= 0.10 && mt <= 10.0;
        notes.push(format!(
            "{kind}: c2st median {ma:.4} {} (≤ 0.75), smaller mode share {mm:.3} (≥ 0.10), train {mt:.2} min (≤ 10)",
            fmt(&acc)
        ));
    }
    outcome(ok, notes.join("; "))
}

fn criterion_2(out: &Path) -> Outcome {
    let (_, cp) = run_experiment(TaskId::GaussianLinear, ModelKind::CpVae, &out.join("c2"));
    let (_, up) = run_experiment(TaskId::GaussianLinear, ModelKind::UpVae, &out.join("c2"));
    let cp_acc = c2st_values(&cp);
    let cp_mmd = per_seed(&cp, |m| m.metrics.as_ref().and_then(|r| r.mmd2).unwrap());
    let up_acc = c2st_values(&up);
    let (a, m, u) = (median(cp_acc.clone()), median(cp_mmd.clone()), median(up_acc.clone()));
    outcome(
        a <= 0.75 && m <= 0.1 && u <= 0.85,
        format!(
            "cp_vae c2st {a:.4} {} (≤ 0.75), mmd² {m:.4} {} (≤ 0.1); up_vae c2st {u:.4} {} (≤ 0.85)",
            fmt(&cp_acc),
            fmt(&cp_mmd),
            fmt(&up_acc)
        ),
    )
}

fn criterion_3(out: &Path) -> Outcome {
    let (cfg, rec) = run_experiment(TaskId::GaussianLinearUniform, ModelKind::CpVae, &out.join("c3"));
    let acc = c2st_values(&rec);
    let oracle = amortis::sims::read_csv(&harness::RunPaths::new(cfg.run_dir()).oracle_samples()).unwrap();
    let inside = oracle.as_slice().iter().all(|v| (-1.0..=1.0).contains(v));
    let a = median(acc.clone());
    outcome(
        a <= 0.87 && inside && oracle.rows() == cfg.num_samples,
        format!("cp_vae c2st {a:.4} {} (≤ 0.87); oracle set inside [-1,1]^10: {inside}", fmt(&acc)),
    )
}

fn criterion_4(out: &Path) -> Outcome {
    let (_, rec) = run_experiment(TaskId::GaussianMixture, ModelKind::CpVae, &out.join("c4"));
    let acc = c2st_values(&rec);
    let a = median(acc.clone());
    outcome(a <= 0.85, format!("cp_vae c2st {a:.4} {} (≤ 0.85)", fmt(&acc)))
}

fn criterion_5(out: &Path) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for task in [TaskId::BernoulliGlm, TaskId::Sir, TaskId::LotkaVolterra] {
        let (_, rec) = run_experiment(task, ModelKind::CpVae, &out.join("c5"));
        let ratios = per_seed(&rec, |m| m.ppc.ratio);
        let r = median(ratios.clone());
        ok &= r <= 0.7;
        notes.push(format!("{task}: ppc ratio {r:.4} {} (≤ 0.7)", fmt(&ratios)));
    }
    outcome(ok, notes.join("; "))
}

fn random_gaussian<R: Rng>(d: usize, r: &mut R) -> DiagGaussian {
    let mean = (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
    let var = (0..d).map(|_| r.random_range(-1.0f64..1.0).exp()).collect();
    DiagGaussian::new(mean, var).unwrap()
}

fn criterion_6() -> Outcome {
    const DRAWS: usize = 1_000_000;
    let mut r = rng::seeded(6);
    let mut worst: f64 = 0.0;
    let standard = DiagGaussian::standard(5);
    for _ in 0..20 {
        let q = random_gaussian(5, &mut r);
        let p = random_gaussian(5, &mut r);
        let (mut acc_p, mut acc_std) = (0.0, 0.0);
        let mut eps = [0.0; 5];
        for _ in 0..DRAWS {
            eps.iter_mut().for_each(|e| *e = r.sample(StandardNormal));
            let z = reparam_sample(&q, &eps).unwrap();
            let lq = log_density(&z, &q).unwrap();
            acc_p += lq - log_density(&z, &p).unwrap();
            acc_std += lq - log_density(&z, &standard).unwrap();
        }
        let exact_p = kl_diag(&q, &p).unwrap();
        let exact_std = kl_vs_standard(&q);
        worst = worst.max((acc_p / DRAWS as f64 - exact_p).abs() / exact_p);
        worst = worst.max((acc_std / DRAWS as f64 - exact_std).abs() / exact_std);
    }
    outcome(worst < 0.01, format!("worst relative error {worst:.2e} over 20 pairs × 2 forms (< 1e-2)"))
}

const FD_STEP: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
}

fn model_fd_error(kind: ModelKind) -> f64 {
    let spec = ModelSpec {
        kind,
        theta_dim: 2,
        y_dim: 3,
        latent_dim: 2,
        hidden: [vec![5], vec![4], vec![5]],
        latent_variance: VarianceActivation::ExpLin,
        decoder_variance: VarianceActivation::DECODER,
        loss_weights: (kind == ModelKind::UpVae).then(LossWeights::default),
    };
    let mut m = Model::new(spec, 17).unwrap();
    let (theta, y, noise) = (normal_matrix(4, 2, &[], 1), normal_matrix(4, 3, &[], 2), normal_matrix(4, 2, &[], 3));
    let eval = m.loss_with_noise(&theta, &y, &noise, true).unwrap();
    let mut worst: f64 = 0.0;
    for net in 0..3 {
        let analytic: Vec<f64> = eval.grads[net].values().collect();
        for (i, &a) in analytic.iter().enumerate() {
            let orig = *m.networks_mut()[net].param_mut(i);
            *m.networks_mut()[net].param_mut(i) = orig + FD_STEP;
            let up = m.loss_with_noise(&theta, &y, &noise, false).unwrap().terms.total;
            *m.networks_mut()[net].param_mut(i) = orig - FD_STEP;
            let down = m.loss_with_noise(&theta, &y, &noise, false).unwrap().terms.total;
            *m.networks_mut()[net].param_mut(i) = orig;
            worst = worst.max(rel_err(a, (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

/// Scalar objective Σ c ⊙ outputs, so the adjoint is `c` itself.
fn weighted_output(net: &Network, x: &Matrix, c: &[Matrix]) -> f64 {
    let dot = |a: &Matrix, b: &Matrix| a.as_slice().iter().zip(b.as_slice()).map(|(u, v)| u * v).sum::<f64>();
    match net.forward(x).unwrap() {
        Output::Plain(o) => dot(&o, &c[0]),
        Output::MeanVar { mean, raw_var } => dot(&mean, &c[0]) + dot(&raw_var, &c[1]),
    }
}

fn network_fd_error(act: Activation, head: Head, seed: u64) -> f64 {
    let mut net = Network::new(&[3, 6, 5, 2], act, head, seed).unwrap();
    let x = normal_matrix(7, 3, &[], seed + 100);
    let c = [normal_matrix(7, 2, &[], seed + 200), normal_matrix(7, 2, &[], seed + 300)];
    let adj = match head {
        Head::Plain => Adjoint::Plain(c[0].clone()),
        Head::MeanVar => Adjoint::MeanVar {
            mean: c[0].clone(),
            raw_var: c[1].clone(),
        },
    };
    let (_, cache) = net.forward_cached(&x).unwrap();
    let (grads, dx) = net.backward(&cache, &adj).unwrap();
    let mut worst: f64 = 0.0;
    let analytic: Vec<f64> = grads.values().collect();
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *net.param_mut(i);
        *net.param_mut(i) = orig + FD_STEP;
        let up = weighted_output(&net, &x, &c);
        *net.param_mut(i) = orig - FD_STEP;
        let down = weighted_output(&net, &x, &c);
        *net.param_mut(i) = orig;
        worst = worst.max(rel_err(a, (up - down) / (2.0 * FD_STEP)));
    }
    for i in 0..x.as_slice().len() {
        let mut xp = x.clone();
        xp.as_mut_slice()[i] += FD_STEP;
        let mut xm = x.clone();
        xm.as_mut_slice()[i] -= FD_STEP;
        let n = (weighted_output(&net, &xp, &c) - weighted_output(&net, &xm, &c)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(dx.as_slice()[i], n));
    }
    worst
}

fn criterion_7() -> Outcome {
    let mut notes = Vec::new();
    let mut worst: f64 = 0.0;
    for kind in ModelKind::ALL {
        let e = model_fd_error(kind);
        worst = worst.max(e);
        notes.push(format!("{kind} {e:.1e}"));
    }
    for (name, act) in [
        ("leaky_relu", Activation::LeakyRelu(LEAKY_SLOPE)),
        ("relu", Activation::Relu),
        ("identity", Activation::Identity),
    ] {
        for head in [Head::Plain, Head::MeanVar] {
            let e = network_fd_error(act, head, 40);
            worst = worst.max(e);
            notes.push(format!("{name}/{head:?} {e:.1e}"));
        }
    }
    outcome(worst < 1e-3, format!("max relative error {worst:.2e} (< 1e-3): {}", notes.join(", ")))
}

/// Raw decoder variance that maps to exactly 1.
fn unit_decoder_raw() -> f64 {
    let act = VarianceActivation::DECODER;
    let mut p = act.inverse(1.0).unwrap();
    while act.apply(p) != 1.0 {
        p = if act.apply(p) < 1.0 { p.next_up() } else { p.next_down() };
    }
    p
}

fn linear(inputs: usize, outputs: usize, w_mean: Vec<f64>, b_mean: Vec<f64>, b_var: Vec<f64>) -> Network {
    let mean = Dense {
        inputs,
        outputs,
        weights: w_mean,
        bias: b_mean,
    };
    let var = Dense {
        inputs,
        outputs,
        weights: vec![0.0; inputs * outputs],
        bias: b_var,
    };
    Network::from_layers(Activation::LeakyRelu(LEAKY_SLOPE), Head::MeanVar, vec![mean, var]).unwrap()
}

fn selector(inputs: usize, outputs: usize) -> Vec<f64> {
    let mut w = vec![0.0; inputs * outputs];
    for i in 0..outputs {
        w[i * inputs + i] = 1.0;
    }
    w
}

fn criterion_8() -> Outcome {
    let (t, k) = (2, 2);
    let raw = unit_decoder_raw();
    let spec = |kind| ModelSpec {
        kind,
        theta_dim: t,
        y_dim: t,
        latent_dim: k,
        hidden: [vec![], vec![], vec![]],
        latent_variance: VarianceActivation::ExpLin,
        decoder_variance: VarianceActivation::DECODER,
        loss_weights: (kind == ModelKind::UpVae).then(LossWeights::default),
    };
    // CP-VAE: encoder equal to the prior network, decoder returns θ with unit variance.
    let cp = Model::from_networks(
        spec(ModelKind::CpVae),
        vec![
            linear(2 * t, k, vec![0.0; 2 * t * k], vec![0.3; k], vec![0.0; k]),
            linear(t, k, vec![0.0; t * k], vec![0.3; k], vec![0.0; k]),
            linear(t + k, t, selector(t + k, t), vec![0.0; t], vec![raw; t]),
        ],
    )
    .unwrap();
    let theta = normal_matrix(6, t, &[], 8);
    let cp_loss = cp.loss(&theta, &theta, &mut rng::seeded(1), false).unwrap().terms.total;
    // UP-VAE: encoder is N(0, I), both decoders return the truth with unit variance.
    let row = [0.7, -1.2];
    let up = Model::from_networks(
        spec(ModelKind::UpVae),
        vec![
            linear(2 * t, k, vec![0.0; 2 * t * k], vec![0.0; k], vec![0.0; k]),
            linear(t + k, t, selector(t + k, t), vec![0.0; t], vec![raw; t]),
            linear(k, t, vec![0.0; k * t], row.to_vec(), vec![raw; t]),
        ],
    )
    .unwrap();
    let rows = Matrix::repeat_row(&row, 5);
    let up_loss = up.loss(&rows, &rows, &mut rng::seeded(2), false).unwrap().terms.total;
    outcome(
        cp_loss.abs() <= 1e-9 && up_loss.abs() <= 1e-9,
        format!("cp_vae loss {cp_loss:e}, up_vae loss {up_loss:e} (|·| ≤ 1e-9)"),
    )
}

fn criterion_9() -> Outcome {
    let a = normal_matrix(10_000, 5, &[], 91);
    let b = normal_matrix(10_000, 5, &[], 92);
    let same = c2st(&a, &b, 1).unwrap();
    let p = normal_matrix(10_000, 2, &[], 93);
    let q = normal_matrix(10_000, 2, &[10.0, 10.0], 94);
    let far = c2st(&p, &q, 2).unwrap();

    let x = normal_matrix(2000, 3, &[], 95);
    let h = median_heuristic_bandwidth(&x).unwrap().value;
    let self_mmd = mmd2(&x, &x, h).unwrap();
    let y = normal_matrix(1500, 3, &[0.5], 96);
    let symmetric = mmd2(&x, &y, h).unwrap() == mmd2(&y, &x, h).unwrap();
    let shifted: Vec<f64> = [0.0, 1.0, 2.0, 4.0]
        .iter()
        .map(|&s| mmd2(&x, &normal_matrix(2000, 3, &[s], 97), h).unwrap())
        .collect();
    let monotone = shifted.windows(2).all(|w| w[0] < w[1]);
    outcome(
        (0.47..=0.53).contains(&same) && far >= 0.99 && self_mmd == 0.0 && symmetric && monotone,
        format!(
            "same-distribution c2st {same:.4} ∈ [0.47, 0.53]; separated c2st {far:.4} ≥ 0.99; mmd²(A,A) = {self_mmd}; \
             symmetric {symmetric}; shifts 0,1,2,4 → {}",
            fmt(&shifted)
        ),
    )
}

fn criterion_10() -> Outcome {
    let task = SimTask::new(TaskId::TwoMoons);
    let y0 = [0.0, 0.0];
    let grid = two_moons_grid_posterior(&y0, DEFAULT_GRID_RESOLUTION).unwrap();
    let g = grid.sample(10_000, &mut rng::seeded(101));
    let abc = rejection_abc(&task, &y0, 0.005, 10_000, u64::MAX, &mut rng::seeded(102)).unwrap();
    let acc = c2st(&g, &abc.samples, 103).unwrap();
    outcome(
        acc <= 0.56,
        format!(
            "grid vs rejection ABC (ε = 0.005, acceptance {:.2e}) c2st {acc:.4} (≤ 0.56)",
            abc.acceptance_rate
        ),
    )
}

fn criterion_11() -> Outcome {
    let mut notes = Vec::new();

    let mut worst_sir: f64 = 0.0;
    for (beta, gamma) in [(0.0, 0.1), (0.4, 0.125), (1.5, 0.05), (3.0, 0.5)] {
        let tr = sir_trajectory(beta, gamma, true).unwrap();
        for s in &tr.steps {
            worst_sir = worst_sir.max((s.total() - SIR_POPULATION).abs() / SIR_POPULATION);
        }
    }
    let sir_ok = worst_sir < 1e-6;
    notes.push(format!("SIR max |S+I+R−N|/N {worst_sir:.1e}"));

    let task = SimTask::new(TaskId::TwoMoons);
    let mut r = rng::seeded(111);
    let (mut radial, mut angles_ok) = (0.0, true);
    const N: usize = 100_000;
    for _ in 0..N {
        let y = task.simulate(&[0.0, 0.0], &mut r).unwrap();
        let (dx, dy) = (y[0] - 0.25, y[1]);
        radial += dx.hypot(dy);
        let a = dy.atan2(dx);
        angles_ok &= a > -std::f64::consts::FRAC_PI_2 && a < std::f64::consts::FRAC_PI_2;
    }
    radial /= N as f64;
    let moons_ok = (radial - 0.1).abs() <= 0.005 && angles_ok;
    notes.push(format!("two moons mean radius {radial:.5}, angles in (−π/2, π/2): {angles_ok}"));

    let f = glm_smoothness_matrix();
    let mut f_ok = true;
    for i in 0..9 {
        for j in 0..9 {
            let expected = if j == i {
                1.0 + (i as f64 / 9.0).sqrt()
            } else if j + 1 == i {
                -2.0
            } else if j + 2 == i {
                1.0
            } else {
                0.0
            };
            f_ok &= (f[i][j] - expected).abs() < 1e-15;
        }
    }
    f_ok &= f[0][0] == 1.0 && f[2][0] == 1.0 && f[2][1] == -2.0 && (f[2][2] - 1.47140).abs() < 1e-5 && f[0][2] == 0.0;
    notes.push(format!("GLM F closed form: {f_ok}"));

    let mut worst_scale: f64 = 0.0;
    for id in TaskId::ALL {
        let ds = generate_dataset(&SimTask::new(id), 1000, 112).unwrap();
        for m in [ds.scaled_thetas(), ds.scaled_ys()] {
            let n = m.rows() as f64;
            for j in 0..m.cols() {
                let col: Vec<f64> = m.iter_rows().map(|r| r[j]).collect();
                let mean = col.iter().sum::<f64>() / n;
                let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
                worst_scale = worst_scale.max(mean.abs()).max((sd - 1.0).abs());
            }
        }
    }
    let scale_ok = worst_scale < 1e-9;
    notes.push(format!("scaled columns worst deviation {worst_scale:.1e}"));

    outcome(sir_ok && moons_ok && f_ok && scale_ok, notes.join("; "))
}

fn criterion_12() -> Outcome {
    let continuity = (explin(0.0) - (0.0 + 1.0)).abs() == 0.0 && (explin(-1e-300) - 1.0).abs() < 1e-15;
    let grid: Vec<f64> = (0..10_000).map(|i| -30.0 + 60.0 * i as f64 / 9_999.0).collect();
    let ex: Vec<f64> = grid.iter().map(|&p| explin(p)).collect();
    let explin_monotone = ex.windows(2).all(|w| w[0] < w[1]) && ex.iter().all(|&v| v > 0.0);
    let VarianceActivation::UpBounded { lower, upper } = VarianceActivation::DECODER else {
        unreachable!()
    };
    let ub: Vec<f64> = grid.iter().map(|&p| VarianceActivation::DECODER.apply(p)).collect();
    let ub_monotone = ub.windows(2).all(|w| w[0] < w[1]);
    let contained = ub.iter().all(|&v| v > lower && v < upper);
    let mid = VarianceActivation::DECODER.apply(0.0) == 0.5 * (lower + upper);
    outcome(
        continuity && explin_monotone && ub_monotone && contained && mid,
        format!(
            "explin continuous at 0: {continuity}, monotone: {explin_monotone}; upbounded monotone: {ub_monotone}, \
             inside ({lower}, {upper}): {contained}, midpoint at 0: {mid}"
        ),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_13(out: &Path) -> Outcome {
    let cfg_in = |o: &Path| {
        ConfigFile {
            task: Some(TaskId::TwoMoons),
            model: Some("cpvae".into()),
            budget: Some(1000),
            seeds: Some(vec![1]),
            out_dir: Some(o.to_path_buf()),
            ..Default::default()
        }
        .resolve()
        .unwrap()
    };
    let a = cfg_in(&out.join("c13a"));
    let t = Instant::now();
    harness::pipeline(&a, |_| {}).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let valid = harness::validate_run_dir(&a);
    let b = cfg_in(&out.join("c13b"));
    harness::pipeline(&b, |_| {}).unwrap();
    // Wall-clock fields live only in the training report and the run report.
    let strip = |mut m: BTreeMap<String, Vec<u8>>| {
        m.retain(|k, _| !k.ends_with("train_report.json") && k != "report.json");
        m
    };
    let sa = strip(snapshot(&a.run_dir()));
    let sb = strip(snapshot(&b.run_dir()));
    let differing: Vec<&String> = sa.keys().filter(|k| sa.get(*k) != sb.get(*k)).collect();
    let identical = differing.is_empty() && sa.len() == sb.len();
    outcome(
        secs <= 60.0 && valid.is_ok() && identical,
        format!(
            "pipeline {secs:.1}s (≤ 60); schema check: {}; re-run byte-identical over {} files: {identical}{}",
            valid.as_ref().map_or_else(|e| e.to_string(), |_| "ok".into()),
            sa.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!(" (differs: {differing:?})")
            }
        ),
    )
}

fn main() {
    let selected: Option<Vec<u32>> = std::env::var("AMORTIS_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|p| p.trim().parse().ok()).collect());
    let scratch = tempfile::tempdir().unwrap();
    let out = scratch.path();
    // Quick checks first so their results show up before the long training runs.
    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (6, "closed-form KL vs Monte Carlo", Box::new(criterion_6)),
        (7, "finite-difference gradients", Box::new(criterion_7)),
        (8, "pinned zero-loss identities", Box::new(criterion_8)),
        (9, "metric sanity", Box::new(criterion_9)),
        (10, "grid vs rejection-ABC oracle", Box::new(criterion_10)),
        (11, "simulator invariants", Box::new(criterion_11)),
        (12, "variance parameterizations", Box::new(criterion_12)),
        (13, "pipeline smoke", Box::new(|| criterion_13(out))),
        (1, "two moons, budget 10k", Box::new(|| criterion_1(out))),
        (2, "gaussian linear, budget 10k", Box::new(|| criterion_2(out))),
        (3, "gaussian linear uniform, budget 10k", Box::new(|| criterion_3(out))),
        (4, "gaussian mixture, budget 10k", Box::new(|| criterion_4(out))),
        (5, "glm / sir / lotka-volterra predictive check", Box::new(|| criterion_5(out))),
    ];
    let mut results = BTreeMap::new();
    for (id, name, check) in &criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(id)) {
            continue;
        }
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let line = format!(
            "criterion {id:>2} {}: {name}: {} [{:.0}s]",
            if res.pass { "PASS" } else { "FAIL" },
            res.detail,
            t.elapsed().as_secs_f64()
        );
        println!("{line}");
        results.insert(*id, (res.pass, line));
    }
    println!("\nsummary:");
    for (_, line) in results.values() {
        println!("{line}");
    }
    let failed = results.values().filter(|(p, _)| !p).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
