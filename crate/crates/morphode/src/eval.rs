//! Batched inference, the pushforward oracle, metrics, timing, and report
//! emission.
//!
//! Rollout of a trained model is three steps: invert the initial condition,
//! solve the base system at every requested time, and push the whole
//! trajectory back through the network in one batched forward pass. The
//! pushforward field (Jacobian times base dynamics at the preimage) exists
//! so tests can integrate the learned ODE the slow way and confirm both
//! routes agree; it is never on the inference path.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ctx::Eager;
use crate::error::{Error, Result};
use crate::integrators::{self, Method, SolverConfig};
use crate::model::{BaselineModel, DiffeoModel};
use crate::nn::mlp_forward;
use crate::systems::TrajectoryDataset;
use crate::tensor::{self, Tensor};

fn normalize_rows(y: &Tensor, norm: &Option<(Vec<f64>, Vec<f64>)>) -> Tensor {
    let Some((mean, std)) = norm else {
        return y.clone();
    };
    let d = y.last_dim();
    let mut out = y.clone();
    for row in out.data_mut().chunks_mut(d) {
        for i in 0..d {
            row[i] = (row[i] - mean[i]) / std[i];
        }
    }
    out
}

fn denormalize_rows(y: &Tensor, norm: &Option<(Vec<f64>, Vec<f64>)>) -> Tensor {
    let Some((mean, std)) = norm else {
        return y.clone();
    };
    let d = y.last_dim();
    let mut out = y.clone();
    for row in out.data_mut().chunks_mut(d) {
        for i in 0..d {
            row[i] = row[i] * std[i] + mean[i];
        }
    }
    out
}

/// Integrate a learned system from `y0` (physical coordinates, `[d]`) at all
/// requested times: one inverse pass, one base solve, one batched forward
/// pass. Returns `[T, d]`.
pub fn rollout(model: &DiffeoModel, y0: &Tensor, times: &[f64]) -> Result<Tensor> {
    if y0.numel() != model.data_dim {
        return Err(Error::ShapeMismatch {
            op: "rollout",
            detail: format!(
                "initial state has {} entries, model expects {}",
                y0.numel(),
                model.data_dim
            ),
        });
    }
    let y0 = tensor::reshape(y0, &[1, model.data_dim])?;
    let y0 = normalize_rows(&y0, &model.normalization);
    let y0_aug = model.augment(&y0)?;

    let mut cx = Eager;
    let (inn_refs, base_refs) = model.bind(&mut cx);
    let x0 = model.inn.inverse_in(&mut cx, &inn_refs, &y0_aug)?;
    let x_rows = model.base.solve_in(&mut cx, &base_refs, &x0, times)?;
    let y_rows = model.inn.forward_in(&mut cx, &inn_refs, &x_rows)?;
    let pred = tensor::slice_last(&y_rows, 0, model.data_dim)?;
    Ok(denormalize_rows(&pred, &model.normalization))
}

/// Rollout in the model's internal (augmented) space: `[n] -> [T, n]`.
/// This is what the relatedness and stability oracles compare against.
pub fn rollout_internal(model: &DiffeoModel, q0: &Tensor, times: &[f64]) -> Result<Tensor> {
    let n = model.aug_dim();
    if q0.numel() != n {
        return Err(Error::ShapeMismatch {
            op: "rollout_internal",
            detail: format!("state has {} entries, expected {n}", q0.numel()),
        });
    }
    let q0 = tensor::reshape(q0, &[1, n])?;
    let mut cx = Eager;
    let (inn_refs, base_refs) = model.bind(&mut cx);
    let x0 = model.inn.inverse_in(&mut cx, &inn_refs, &q0)?;
    let x_rows = model.base.solve_in(&mut cx, &base_refs, &x0, times)?;
    model.inn.forward_in(&mut cx, &inn_refs, &x_rows)
}

/// The learned vector field at a point of the model's internal space:
/// `J_F(F^-1(q)) g(F^-1(q))`, evaluated with one inverse pass, one base
/// dynamics evaluation, and one Jacobian-vector product.
pub fn pushforward_dynamics(model: &DiffeoModel, q: &Tensor) -> Result<Tensor> {
    let n = model.aug_dim();
    if q.numel() != n {
        return Err(Error::ShapeMismatch {
            op: "pushforward_dynamics",
            detail: format!("state has {} entries, expected {n}", q.numel()),
        });
    }
    q.ensure_finite("pushforward_dynamics input")?;
    let q_vec = Tensor::vector(q.data().to_vec());
    let x = model.inn.inverse(&q_vec)?;
    let g = model.base.dynamics_at(&x)?;
    model.inn.jvp(&x, &g)
}

/// Integrate the learned system from `y0` with a direct baseline model.
pub fn baseline_rollout(model: &BaselineModel, y0: &Tensor, times: &[f64]) -> Result<Tensor> {
    if y0.numel() != model.data_dim {
        return Err(Error::ShapeMismatch {
            op: "baseline_rollout",
            detail: format!(
                "initial state has {} entries, model expects {}",
                y0.numel(),
                model.data_dim
            ),
        });
    }
    let y0 = tensor::reshape(y0, &[1, model.data_dim])?;
    let y0 = normalize_rows(&y0, &model.normalization);
    let y0_aug = model.augment(&y0)?;
    let mut cx = Eager;
    let refs = model.dynamics.bind(&mut cx);
    let run = integrators::integrate(
        &mut cx,
        |cx, y| mlp_forward(cx, refs_ref(&refs), y),
        &y0_aug,
        times,
        &model.solver,
    )?;
    let rows = crate::base_ode::rows_from_states(&mut cx, &run.states)?;
    let pred = tensor::slice_last(&rows, 0, model.data_dim)?;
    Ok(denormalize_rows(&pred, &model.normalization))
}

// helper so the closure below borrows refs without moving them
fn refs_ref<R>(r: &crate::nn::MlpRefs<R>) -> &crate::nn::MlpRefs<R> {
    r
}

/// Max relative deviation between the Algorithm-1 rollout and a fine-step
/// RK4 integration of the pushforward field, both from `q0` in internal
/// coordinates: `max_t ||roll - ref||_inf / max_t ||ref||_inf`.
pub fn f_relatedness_error(model: &DiffeoModel, q0: &Tensor, times: &[f64], rk4_step: f64) -> Result<f64> {
    let rolled = rollout_internal(model, q0, times)?;
    let q0_row = tensor::reshape(q0, &[1, model.aug_dim()])?;
    let cfg = SolverConfig::fixed(Method::Rk4, rk4_step);
    let run = integrators::integrate_values(
        |y| {
            let d = pushforward_dynamics(model, &Tensor::vector(y.data().to_vec()))?;
            tensor::reshape(&d, &[1, model.aug_dim()])
        },
        &q0_row,
        times,
        &cfg,
    )?;
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for (t, s) in run.states.iter().enumerate() {
        den = den.max(s.norm_inf());
        for i in 0..s.numel() {
            num = num.max((s.data()[i] - rolled.at(t, i)).abs());
        }
    }
    Ok(num / den.max(1e-12))
}

// ---------------------------------------------------------------------------
// metrics

pub fn mse(a: &Tensor, b: &Tensor) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.numel() as f64
}

pub fn mae(a: &Tensor, b: &Tensor) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.numel() as f64
}

/// Mean absolute error per dimension after `log10(|x| + 1e-10)`; the metric
/// for states spanning many decades.
pub fn log_mae_per_dim(pred: &Tensor, truth: &Tensor) -> Vec<f64> {
    debug_assert_eq!(pred.shape(), truth.shape());
    let d = pred.last_dim();
    let rows = pred.leading();
    let mut acc = vec![0.0; d];
    for r in 0..rows {
        for i in 0..d {
            let p = (pred.at(r, i).abs() + 1e-10).log10();
            let t = (truth.at(r, i).abs() + 1e-10).log10();
            acc[i] += (p - t).abs();
        }
    }
    acc.iter().map(|a| a / rows as f64).collect()
}

// ---------------------------------------------------------------------------
// benchmark methodology

/// A trained system under evaluation.
pub enum Subject<'a> {
    Diffeo(&'a DiffeoModel),
    Baseline(&'a BaselineModel),
}

impl Subject<'_> {
    fn rollout(&self, y0: &Tensor, times: &[f64]) -> Result<Tensor> {
        match self {
            Subject::Diffeo(m) => rollout(m, y0, times),
            Subject::Baseline(m) => baseline_rollout(m, y0, times),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodEval {
    pub method: String,
    pub mse_interp: Option<f64>,
    pub mse_gen: Option<f64>,
    pub mae: Option<f64>,
    pub log_mae: Option<f64>,
    pub time_ms_mean: Option<f64>,
    pub time_ms_std: Option<f64>,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub methods: Vec<MethodEval>,
    pub repeats: usize,
    pub environment: String,
    pub config_hash: String,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    /// Timed repetitions (after 2 warm-ups); at least 5.
    pub repeats: usize,
    /// Output resolution multiplier relative to the data grid.
    pub resolution_multiplier: usize,
    /// Held-out initial conditions sampled from the convex hull of the
    /// training ones.
    pub generalization_count: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            repeats: 5,
            resolution_multiplier: 10,
            generalization_count: 16,
            seed: 0,
        }
    }
}

/// Random points in the convex hull of `points` (exponential weights,
/// normalized).
pub fn sample_convex_hull<R: Rng>(points: &[Vec<f64>], count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let d = points[0].len();
    (0..count)
        .map(|_| {
            let raw: Vec<f64> = points
                .iter()
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect();
            let total: f64 = raw.iter().sum();
            let mut out = vec![0.0; d];
            for (w, p) in raw.iter().zip(points) {
                for i in 0..d {
                    out[i] += w / total * p[i];
                }
            }
            out
        })
        .collect()
}

fn refine_times(times: &[f64], multiplier: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity((times.len() - 1) * multiplier + 1);
    for w in times.windows(2) {
        for k in 0..multiplier {
            out.push(w[0] + (w[1] - w[0]) * k as f64 / multiplier as f64);
        }
    }
    out.push(*times.last().unwrap());
    out
}

/// Wall-clock of `f` in milliseconds: 2 warm-ups, then `repeats` timed runs.
pub fn time_ms<F: FnMut() -> Result<()>>(mut f: F, repeats: usize) -> Result<(f64, f64)> {
    for _ in 0..2 {
        f()?;
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        f()?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / samples.len() as f64;
    Ok((mean, var.sqrt()))
}

fn cpu_identifier() -> String {
    let model = fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|text| {
            text.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|s| s.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    format!("{model} ({threads} hw threads)")
}

/// FNV-1a over a canonical config string; the provenance tag on reports.
pub fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

/// Reference states at `times` for an initial condition, from the dataset's
/// generating system.
fn reference_states(
    dataset: &TrajectoryDataset,
    ic: &[f64],
    times: &[f64],
) -> Result<Option<Tensor>> {
    let Some(spec) = &dataset.meta.spec else {
        return Ok(None);
    };
    let mut one = spec.clone();
    one.initial_conditions = vec![ic.to_vec()];
    one.noise_sigma = 0.0;
    // reuse the generation path at the requested times
    let n = spec.name.dim();
    let solver_times = times.to_vec();
    let y0 = Tensor::matrix(1, n, ic.to_vec())?;
    let (solver, _) = {
        // identical settings as generate()
        let mut probe = one.clone();
        probe.samples = times.len().max(2);
        crate::systems::reference_solver(&probe)
    };
    let run = integrators::integrate_values(
        |y| {
            let d = one.dynamics(&Tensor::vector(y.data().to_vec()))?;
            Tensor::matrix(1, n, d.data().to_vec())
        },
        &y0,
        &solver_times,
        &solver,
    )?;
    let data: Vec<f64> = run.states.iter().flat_map(|s| s.data().to_vec()).collect();
    Ok(Some(Tensor::new(vec![times.len(), n], data)?))
}

/// Run the full accuracy/timing protocol over a set of trained systems.
///
/// Interpolation error compares each method against the reference solution
/// from the training initial conditions at a finer output resolution;
/// generalization error does the same from held-out initial conditions in
/// the convex hull of the training ones. Timing measures full-trajectory
/// inference (for the diffeomorphism models: inverse pass, base solve, one
/// batched forward pass). A method that fails numerically gets its outcome
/// recorded and the remaining methods still run.
pub fn benchmark(
    subjects: &[(String, Subject)],
    dataset: &TrajectoryDataset,
    cfg: &BenchmarkConfig,
) -> Result<EvalReport> {
    if cfg.repeats < 5 {
        return Err(Error::InvalidConfig(format!(
            "timing needs at least 5 repeats, got {}",
            cfg.repeats
        )));
    }
    let times10 = refine_times(&dataset.times, cfg.resolution_multiplier);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train_ics: Vec<Vec<f64>> = dataset
        .trajectories
        .iter()
        .map(|t| t.initial.clone())
        .collect();
    let gen_ics = sample_convex_hull(&train_ics, cfg.generalization_count, &mut rng);

    // reference solutions (None when the dataset has no generating system)
    let mut interp_refs = Vec::new();
    for ic in &train_ics {
        interp_refs.push(reference_states(dataset, ic, &times10)?);
    }
    let mut gen_refs = Vec::new();
    for ic in &gen_ics {
        gen_refs.push(reference_states(dataset, ic, &times10)?);
    }
    let have_truth = interp_refs.iter().all(|r| r.is_some());

    let mut notes = Vec::new();
    if !have_truth {
        notes.push(
            "dataset has no generating system; interpolation error is measured against observed samples and generalization is skipped"
                .to_string(),
        );
    }

    let mut methods = Vec::new();
    for (name, subject) in subjects {
        methods.push(eval_one(
            name,
            subject,
            dataset,
            &times10,
            &train_ics,
            &interp_refs,
            &gen_ics,
            &gen_refs,
            have_truth,
            cfg.repeats,
        ));
    }
    Ok(EvalReport {
        methods,
        repeats: cfg.repeats,
        environment: cpu_identifier(),
        config_hash: String::new(),
        notes,
    })
}

#[allow(clippy::too_many_arguments)]
fn eval_one(
    name: &str,
    subject: &Subject,
    dataset: &TrajectoryDataset,
    times10: &[f64],
    train_ics: &[Vec<f64>],
    interp_refs: &[Option<Tensor>],
    gen_ics: &[Vec<f64>],
    gen_refs: &[Option<Tensor>],
    have_truth: bool,
    repeats: usize,
) -> MethodEval {
    let mut eval = MethodEval {
        method: name.to_string(),
        mse_interp: None,
        mse_gen: None,
        mae: None,
        log_mae: None,
        time_ms_mean: None,
        time_ms_std: None,
        outcome: "completed".to_string(),
    };
    let mut run = || -> Result<()> {
        // interpolation: training initial conditions at fine resolution
        let mut interp_sq = 0.0;
        let mut interp_abs = 0.0;
        let mut interp_log = 0.0;
        let mut count = 0usize;
        for (ic, reference) in train_ics.iter().zip(interp_refs) {
            let pred = subject.rollout(&Tensor::vector(ic.clone()), times10)?;
            pred.ensure_finite("prediction")?;
            let truth = match reference {
                Some(r) => r.clone(),
                None => {
                    // fall back to the observed samples at data resolution
                    let pred_data =
                        subject.rollout(&Tensor::vector(ic.clone()), &dataset.times)?;
                    let obs = dataset.observed_matrix(count.min(dataset.len() - 1));
                    interp_sq += mse(&pred_data, &obs);
                    interp_abs += mae(&pred_data, &obs);
                    count += 1;
                    continue;
                }
            };
            interp_sq += mse(&pred, &truth);
            interp_abs += mae(&pred, &truth);
            let per_dim = log_mae_per_dim(&pred, &truth);
            interp_log += per_dim.iter().sum::<f64>() / per_dim.len() as f64;
            count += 1;
        }
        eval.mse_interp = Some(interp_sq / count as f64);
        eval.mae = Some(interp_abs / count as f64);
        if have_truth {
            eval.log_mae = Some(interp_log / count as f64);
        }

        // generalization: held-out initial conditions
        if have_truth {
            let mut gen_sq = 0.0;
            let mut gen_count = 0usize;
            for (ic, reference) in gen_ics.iter().zip(gen_refs) {
                let pred = subject.rollout(&Tensor::vector(ic.clone()), times10)?;
                pred.ensure_finite("prediction")?;
                gen_sq += mse(&pred, reference.as_ref().expect("have_truth"));
                gen_count += 1;
            }
            eval.mse_gen = Some(gen_sq / gen_count as f64);

            // timing: full-trajectory inference for one held-out start
            let ic = Tensor::vector(gen_ics[0].clone());
            let (mean, std) = time_ms(
                || {
                    subject.rollout(&ic, times10)?;
                    Ok(())
                },
                repeats,
            )?;
            eval.time_ms_mean = Some(mean);
            eval.time_ms_std = Some(std);
        }
        Ok(())
    };
    if let Err(e) = run() {
        eval.outcome = format!("failed: {e}");
    }
    eval
}

// ---------------------------------------------------------------------------
// report emission

impl EvalReport {
    /// Flatten to the `method,metric,value,std,outcome` rows.
    pub fn csv_rows(&self) -> Vec<(String, String, Option<f64>, Option<f64>, String)> {
        let mut rows = Vec::new();
        for m in &self.methods {
            let mut push = |metric: &str, value: Option<f64>, std: Option<f64>| {
                if let Some(v) = value {
                    rows.push((m.method.clone(), metric.to_string(), Some(v), std, m.outcome.clone()));
                }
            };
            push("mse_interpolation", m.mse_interp, None);
            push("mse_generalization", m.mse_gen, None);
            push("mae", m.mae, None);
            push("log_mae", m.log_mae, None);
            push("time_ms", m.time_ms_mean, m.time_ms_std);
            if m.mse_interp.is_none() && m.mse_gen.is_none() && m.time_ms_mean.is_none() {
                rows.push((m.method.clone(), "outcome".to_string(), None, None, m.outcome.clone()));
            }
        }
        rows
    }
}

/// Write `report.csv` (schema `method,metric,value,std,outcome`) and a
/// human-readable `report.txt` next to it.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let csv_path = dir.join("report.csv");
    let mut csv = String::from("method,metric,value,std,outcome\n");
    for (method, metric, value, std, outcome) in report.csv_rows() {
        let v = value.map(|v| v.to_string()).unwrap_or_default();
        let s = std.map(|s| s.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{method},{metric},{v},{s},{outcome}");
    }
    fs::write(&csv_path, csv).map_err(|e| Error::io(csv_path.display().to_string(), e))?;

    let txt_path = dir.join("report.txt");
    let mut txt = String::new();
    let _ = writeln!(txt, "environment: {}", report.environment);
    let _ = writeln!(txt, "config: {}", report.config_hash);
    let _ = writeln!(txt, "timing repeats: {} (2 warm-ups)", report.repeats);
    for note in &report.notes {
        let _ = writeln!(txt, "note: {note}");
    }
    let _ = writeln!(txt);
    let _ = writeln!(
        txt,
        "{:<24} {:>14} {:>14} {:>12} {:>18} outcome",
        "method", "MSE(I)", "MSE(G)", "MAE", "time (ms)"
    );
    for m in &report.methods {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
        let time = match (m.time_ms_mean, m.time_ms_std) {
            (Some(a), Some(s)) => format!("{a:.3} +/- {s:.3}"),
            _ => "-".into(),
        };
        let _ = writeln!(
            txt,
            "{:<24} {:>14} {:>14} {:>12} {:>18} {}",
            m.method,
            fmt(m.mse_interp),
            fmt(m.mse_gen),
            fmt(m.mae),
            time,
            m.outcome
        );
    }
    fs::write(&txt_path, txt).map_err(|e| Error::io(txt_path.display().to_string(), e))
}

// ---------------------------------------------------------------------------
// scaling study

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub rollout_ms_small: f64,
    pub rollout_ms_large: f64,
    pub baseline_ms_small: f64,
    pub baseline_ms_large: f64,
    pub small_points: usize,
    pub large_points: usize,
}

impl ScalingReport {
    pub fn rollout_ratio(&self) -> f64 {
        self.rollout_ms_large / self.rollout_ms_small
    }

    pub fn baseline_ratio(&self) -> f64 {
        self.baseline_ms_large / self.baseline_ms_small
    }

    pub fn speedup_at_large(&self) -> f64 {
        self.baseline_ms_large / self.rollout_ms_large
    }
}

/// Time full-trajectory inference at two output resolutions over the same
/// span for a trained model and a direct baseline.
pub fn scaling_benchmark(
    model: &DiffeoModel,
    baseline: &BaselineModel,
    y0: &Tensor,
    span: (f64, f64),
    small_points: usize,
    large_points: usize,
    repeats: usize,
) -> Result<ScalingReport> {
    let grid = |count: usize| -> Vec<f64> {
        (0..count)
            .map(|i| span.0 + (span.1 - span.0) * i as f64 / (count - 1) as f64)
            .collect()
    };
    let t_small = grid(small_points);
    let t_large = grid(large_points);
    let (rollout_ms_small, _) = time_ms(
        || {
            rollout(model, y0, &t_small)?;
            Ok(())
        },
        repeats,
    )?;
    let (rollout_ms_large, _) = time_ms(
        || {
            rollout(model, y0, &t_large)?;
            Ok(())
        },
        repeats,
    )?;
    let (baseline_ms_small, _) = time_ms(
        || {
            baseline_rollout(baseline, y0, &t_small)?;
            Ok(())
        },
        repeats,
    )?;
    let (baseline_ms_large, _) = time_ms(
        || {
            baseline_rollout(baseline, y0, &t_large)?;
            Ok(())
        },
        repeats,
    )?;
    Ok(ScalingReport {
        rollout_ms_small,
        rollout_ms_large,
        baseline_ms_small,
        baseline_ms_large,
        small_points,
        large_points,
    })
}
