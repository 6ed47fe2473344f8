//! Loss construction, state augmentation, Adam, and the training loops for
//! the diffeomorphism model and the direct-integrator baselines.
//!
//! Training is full batch: every iteration rebuilds the tape over the whole
//! dataset, runs one backward pass, and applies one Adam update. Everything
//! after the seeded initialization is deterministic.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::base_ode::{
    Base, BaseRefs, LinearBase, LinearBaseConfig, NeuralBase, NeuralBaseConfig,
};
use crate::ctx::Ctx;
use crate::error::{Error, Result};
use crate::inn::{Inn, InnConfig, InnRefs};
use crate::integrators::{self, SolverConfig};
use crate::model::{BaselineModel, DiffeoModel};
use crate::nn::{mlp_forward, Mlp, MlpConfig, MlpRefs};
use crate::systems::TrajectoryDataset;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mae,
    Mse,
}

impl LossKind {
    pub fn tag(&self) -> &'static str {
        match self {
            LossKind::Mae => "mae",
            LossKind::Mse => "mse",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "mae" => Ok(LossKind::Mae),
            "mse" => Ok(LossKind::Mse),
            other => Err(Error::InvalidConfig(format!("unknown loss `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    /// Optional multi-phase schedule overriding the single
    /// (iterations, learning_rate) phase.
    pub schedule: Option<Vec<(usize, f64)>>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub loss: LossKind,
    /// Extra zero-initialized dimensions; `None` doubles the state.
    pub augment_dims: Option<usize>,
    pub seed: u64,
    /// Global-norm clip, off by default; 100 is the documented guard value.
    pub grad_clip: Option<f64>,
    /// Compare predictions and observations in signed log space.
    pub log_space: bool,
    /// Standardize observations per dimension before training.
    pub normalize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            iterations: 5000,
            schedule: None,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            loss: LossKind::Mae,
            augment_dims: None,
            seed: 0,
            grad_clip: None,
            log_space: false,
            normalize: false,
        }
    }
}

impl TrainConfig {
    /// The two-phase schedule used for stiff targets: 500 iterations at
    /// 1e-4, then 4500 at 1e-6.
    pub fn stiff_default() -> Self {
        TrainConfig {
            schedule: Some(vec![(500, 1e-4), (4500, 1e-6)]),
            ..TrainConfig::default()
        }
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_loss(mut self, loss: LossKind) -> Self {
        self.loss = loss;
        self
    }

    pub fn phases(&self) -> Vec<(usize, f64)> {
        self.schedule
            .clone()
            .unwrap_or_else(|| vec![(self.iterations, self.learning_rate)])
    }

    pub fn total_iterations(&self) -> usize {
        self.phases().iter().map(|(n, _)| n).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (n, lr) in self.phases() {
            if n == 0 || !(lr > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "bad schedule phase ({n}, {lr})"
                )));
            }
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::InvalidConfig(format!("bad grad clip {c}")));
            }
        }
        Ok(())
    }

    fn augment_for(&self, data_dim: usize) -> usize {
        self.augment_dims.unwrap_or(data_dim)
    }
}

/// Adam with bias correction. State is kept per parameter tensor, in the
/// same order the gradients arrive.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) {
        debug_assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            for i in 0..g.numel() {
                let gi = g.data()[i];
                let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * gi;
                let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                pd[i] -= lr * (mi / bc1) / ((vi / bc2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub loss: f64,
    pub lr: f64,
    pub phase: usize,
}

/// `iter,loss,lr,phase` CSV.
pub fn write_history(rows: &[HistoryRow], path: &Path) -> Result<()> {
    let mut out = String::from("iter,loss,lr,phase\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.iteration, r.loss, r.lr, r.phase);
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// How a training run ended, beyond the loss curve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunOutcome {
    Completed,
    /// The integrator inside the loop failed (step underflow, step budget,
    /// state blow-up); training stopped early and kept the last parameters.
    SolverFailure { iteration: usize, message: String },
}

impl RunOutcome {
    pub fn label(&self) -> String {
        match self {
            RunOutcome::Completed => "completed".to_string(),
            RunOutcome::SolverFailure { iteration, message } => {
                format!("solver-failure@{iteration}: {message}")
            }
        }
    }
}

#[derive(Debug)]
pub struct Trained<M> {
    pub model: M,
    pub history: Vec<HistoryRow>,
    pub outcome: RunOutcome,
}

/// Architecture settings for the invertible network, dimension-independent.
#[derive(Debug, Clone, PartialEq)]
pub struct InnSpec {
    pub blocks: usize,
    pub subnet_hidden: Vec<usize>,
    pub clamp: f64,
}

impl Default for InnSpec {
    fn default() -> Self {
        InnSpec {
            blocks: 5,
            subnet_hidden: vec![1500],
            clamp: 2.0,
        }
    }
}

impl InnSpec {
    pub fn desk() -> Self {
        InnSpec {
            blocks: 5,
            subnet_hidden: vec![64],
            clamp: 2.0,
        }
    }

    fn to_config(&self, dim: usize) -> InnConfig {
        InnConfig::new(dim)
            .with_blocks(self.blocks)
            .with_subnet_hidden(self.subnet_hidden.clone())
            .with_clamp(self.clamp)
    }
}

/// Which base dynamics to learn under the diffeomorphism.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseSpec {
    Linear { stable: bool, epsilon: f64 },
    Neural { hidden: Vec<usize> },
}

impl BaseSpec {
    pub fn linear() -> Self {
        BaseSpec::Linear {
            stable: false,
            epsilon: crate::base_ode::DEFAULT_EPSILON,
        }
    }

    pub fn linear_stable() -> Self {
        BaseSpec::Linear {
            stable: true,
            epsilon: crate::base_ode::DEFAULT_EPSILON,
        }
    }

    pub fn neural() -> Self {
        BaseSpec::Neural {
            hidden: vec![30, 30, 30],
        }
    }
}

/// Per-dimension mean and standard deviation of the observed states.
fn standardization(dataset: &TrajectoryDataset) -> (Vec<f64>, Vec<f64>) {
    let d = dataset.dim();
    let mut mean = vec![0.0; d];
    let mut count = 0usize;
    for traj in &dataset.trajectories {
        for row in &traj.observed {
            for i in 0..d {
                mean[i] += row[i];
            }
            count += 1;
        }
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    let mut var = vec![0.0; d];
    for traj in &dataset.trajectories {
        for row in &traj.observed {
            for i in 0..d {
                let e = row[i] - mean[i];
                var[i] += e * e;
            }
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|v| (v / count as f64).sqrt().max(1e-12))
        .collect();
    (mean, std)
}

fn normalize_row(row: &[f64], norm: &Option<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    match norm {
        None => row.to_vec(),
        Some((mean, std)) => row
            .iter()
            .enumerate()
            .map(|(i, x)| (x - mean[i]) / std[i])
            .collect(),
    }
}

/// Observed states in solver row order (`row = t * B + b`), normalized if
/// requested: `[T * B, d]`.
fn observation_rows(
    dataset: &TrajectoryDataset,
    norm: &Option<(Vec<f64>, Vec<f64>)>,
) -> Tensor {
    let d = dataset.dim();
    let b = dataset.len();
    let t_count = dataset.times.len();
    let mut data = Vec::with_capacity(t_count * b * d);
    for t in 0..t_count {
        for traj in &dataset.trajectories {
            data.extend(normalize_row(&traj.observed[t], norm));
        }
    }
    Tensor::new(vec![t_count * b, d], data).expect("consistent dataset")
}

/// Observed initial states `[B, d]`, normalized if requested.
fn initial_rows(dataset: &TrajectoryDataset, norm: &Option<(Vec<f64>, Vec<f64>)>) -> Tensor {
    let d = dataset.dim();
    let data: Vec<f64> = dataset
        .trajectories
        .iter()
        .flat_map(|t| normalize_row(&t.observed[0], norm))
        .collect();
    Tensor::new(vec![dataset.len(), d], data).expect("consistent dataset")
}

/// Signed log transform used when comparing quantities spanning decades:
/// `ln(|x| + 1e-10)`.
fn log_transform<C: Ctx>(cx: &mut C, x: &C::R) -> Result<C::R> {
    let a = cx.abs(x)?;
    let shifted = cx.add_const(&a, 1e-10)?;
    cx.ln(&shifted)
}

/// Mean elementwise deviation between prediction and observation rows.
pub(crate) fn pointwise_loss<C: Ctx>(
    cx: &mut C,
    pred: &C::R,
    obs: &C::R,
    kind: LossKind,
) -> Result<C::R> {
    let diff = cx.sub(pred, obs)?;
    let dev = match kind {
        LossKind::Mae => cx.abs(&diff)?,
        LossKind::Mse => cx.square(&diff)?,
    };
    cx.mean(&dev)
}

/// Build the training loss of a diffeomorphism model on a dataset inside any
/// context: invert the augmented initial observations, roll the base system
/// across all sample times, push everything back through the network in one
/// batched pass, and compare the first `d` dimensions against the
/// observations.
pub fn diffeo_loss_in<C: Ctx>(
    cx: &mut C,
    model: &DiffeoModel,
    inn_refs: &InnRefs<C::R>,
    base_refs: &BaseRefs<C::R>,
    dataset: &TrajectoryDataset,
    kind: LossKind,
    log_space: bool,
) -> Result<C::R> {
    let d = model.data_dim;
    if dataset.dim() != d {
        return Err(Error::ShapeMismatch {
            op: "diffeo_loss",
            detail: format!("dataset dim {} vs model data dim {d}", dataset.dim()),
        });
    }
    let y0 = model.augment(&initial_rows(dataset, &model.normalization))?;
    let y0 = cx.constant(y0);
    let x0 = model.inn.inverse_in(cx, inn_refs, &y0)?;
    let x_rows = model.base.solve_in(cx, base_refs, &x0, &dataset.times)?;
    let y_rows = model.inn.forward_in(cx, inn_refs, &x_rows)?;
    let pred = cx.slice(&y_rows, 0, d)?;
    let obs = cx.constant(observation_rows(dataset, &model.normalization));
    let (pred, obs) = if log_space {
        (log_transform(cx, &pred)?, log_transform(cx, &obs)?)
    } else {
        (pred, obs)
    };
    let loss = pointwise_loss(cx, &pred, &obs, kind)?;
    ensure_finite_loss(cx, &loss, &pred, dataset)?;
    Ok(loss)
}

/// Same construction for a direct baseline: integrate the learned dynamics
/// over the sample times and compare.
pub fn baseline_loss_in<C: Ctx>(
    cx: &mut C,
    model: &BaselineModel,
    refs: &MlpRefs<C::R>,
    dataset: &TrajectoryDataset,
    kind: LossKind,
    log_space: bool,
) -> Result<C::R> {
    let d = model.data_dim;
    let y0 = model.augment(&initial_rows(dataset, &model.normalization))?;
    let y0 = cx.constant(y0);
    let run = integrators::integrate(
        cx,
        |cx, y| mlp_forward(cx, refs, y),
        &y0,
        &dataset.times,
        &model.solver,
    )?;
    let y_rows = crate::base_ode::rows_from_states(cx, &run.states)?;
    let pred = cx.slice(&y_rows, 0, d)?;
    let obs = cx.constant(observation_rows(dataset, &model.normalization));
    let (pred, obs) = if log_space {
        (log_transform(cx, &pred)?, log_transform(cx, &obs)?)
    } else {
        (pred, obs)
    };
    let loss = pointwise_loss(cx, &pred, &obs, kind)?;
    ensure_finite_loss(cx, &loss, &pred, dataset)?;
    Ok(loss)
}

fn ensure_finite_loss<C: Ctx>(
    cx: &C,
    loss: &C::R,
    pred: &C::R,
    dataset: &TrajectoryDataset,
) -> Result<()> {
    if cx.value(loss).scalar_value().is_finite() {
        return Ok(());
    }
    // find which trajectory produced the first bad row
    let pred = cx.value(pred);
    let b = dataset.len().max(1);
    for r in 0..pred.leading() {
        if pred.row(r).iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("loss of trajectory {} (at time index {})", r % b, r / b),
            });
        }
    }
    Err(Error::NonFinite {
        context: "loss".to_string(),
    })
}

/// Training loss of a model on a dataset, as a plain number.
pub fn loss(model: &DiffeoModel, dataset: &TrajectoryDataset, kind: LossKind) -> Result<f64> {
    let mut cx = crate::ctx::Eager;
    let (inn_refs, base_refs) = model.bind(&mut cx);
    let l = diffeo_loss_in(&mut cx, model, &inn_refs, &base_refs, dataset, kind, false)?;
    Ok(l.scalar_value())
}

fn clip_gradients(grads: &mut [Tensor], clip: f64) {
    let norm: f64 = grads
        .iter()
        .map(|g| g.data().iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > clip {
        let s = clip / norm;
        for g in grads {
            for x in g.data_mut() {
                *x *= s;
            }
        }
    }
}

/// Train a diffeomorphism model on a dataset.
pub fn train_diffeo(
    dataset: &TrajectoryDataset,
    inn_spec: &InnSpec,
    base_spec: &BaseSpec,
    cfg: &TrainConfig,
) -> Result<Trained<DiffeoModel>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("dataset has no trajectories".into()));
    }
    let d = dataset.dim();
    let n = d + cfg.augment_for(d);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let inn = Inn::init(inn_spec.to_config(n), &mut rng)?;
    let base = match base_spec {
        BaseSpec::Linear { stable, epsilon } => {
            let mut bc = LinearBaseConfig::new(n);
            bc.stable = *stable;
            bc.epsilon = *epsilon;
            Base::Linear(LinearBase::init(bc, &mut rng)?)
        }
        BaseSpec::Neural { hidden } => {
            let mut bc = NeuralBaseConfig::new(n);
            bc.hidden = hidden.clone();
            Base::Neural(NeuralBase::init(bc, dataset.min_increment(), &mut rng)?)
        }
    };
    let normalization = cfg.normalize.then(|| standardization(dataset));
    let mut model = DiffeoModel {
        inn,
        base,
        data_dim: d,
        normalization,
    };

    let mut adam = Adam::new(cfg.beta1, cfg.beta2, cfg.adam_eps);
    let mut history = Vec::with_capacity(cfg.total_iterations());
    let mut iteration = 0usize;
    for (phase_idx, (count, lr)) in cfg.phases().into_iter().enumerate() {
        for _ in 0..count {
            let mut tape = Tape::new();
            let (inn_refs, base_refs) = model.bind(&mut tape);
            let loss_node = diffeo_loss_in(
                &mut tape,
                &model,
                &inn_refs,
                &base_refs,
                dataset,
                cfg.loss,
                cfg.log_space,
            )
            .map_err(|e| wrap_divergence(e, iteration))?;
            let loss_val = tape.node_value(loss_node).scalar_value();
            let mut grads = tape.backward(loss_node)?;
            if let Some(clip) = cfg.grad_clip {
                clip_gradients(&mut grads, clip);
            }
            adam.step(&mut model.params_mut(), &grads, lr);
            history.push(HistoryRow {
                iteration,
                loss: loss_val,
                lr,
                phase: phase_idx,
            });
            iteration += 1;
        }
    }
    Ok(Trained {
        model,
        history,
        outcome: RunOutcome::Completed,
    })
}

fn wrap_divergence(e: Error, iteration: usize) -> Error {
    match e {
        Error::NonFinite { context } => Error::Divergence { iteration, context },
        other => other,
    }
}

/// Train a direct neural-dynamics baseline through a differentiable solver.
///
/// Solver failures on stiff data (step underflow, step budget, blow-up) are
/// a *result* of such runs, not a crash: training stops, keeps the last
/// parameters, and reports the failure in the outcome.
pub fn train_baseline(
    dataset: &TrajectoryDataset,
    solver: &SolverConfig,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<Trained<BaselineModel>> {
    cfg.validate()?;
    solver.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("dataset has no trajectories".into()));
    }
    let d = dataset.dim();
    let n = d + cfg.augment_for(d);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mlp_cfg = MlpConfig::new(n, n).with_hidden(hidden.to_vec());
    // derive the fixed step from the data once, so the trained model carries
    // a concrete solver setting
    let mut solver = solver.clone();
    if !solver.method.is_adaptive() && solver.step.is_none() {
        solver.step = Some(dataset.min_increment());
    }
    let normalization = cfg.normalize.then(|| standardization(dataset));
    let mut model = BaselineModel {
        dynamics: Mlp::init(mlp_cfg, &mut rng, false)?,
        data_dim: d,
        solver,
        normalization,
    };

    let mut adam = Adam::new(cfg.beta1, cfg.beta2, cfg.adam_eps);
    let mut history = Vec::with_capacity(cfg.total_iterations());
    let mut iteration = 0usize;
    for (phase_idx, (count, lr)) in cfg.phases().into_iter().enumerate() {
        for _ in 0..count {
            let mut tape = Tape::new();
            let refs = model.dynamics.bind(&mut tape);
            let built = baseline_loss_in(
                &mut tape,
                &model,
                &refs,
                dataset,
                cfg.loss,
                cfg.log_space,
            );
            let loss_node = match built {
                Ok(node) => node,
                Err(e) if is_solver_failure(&e) => {
                    return Ok(Trained {
                        model,
                        history,
                        outcome: RunOutcome::SolverFailure {
                            iteration,
                            message: e.to_string(),
                        },
                    });
                }
                Err(e) => return Err(wrap_divergence(e, iteration)),
            };
            let loss_val = tape.node_value(loss_node).scalar_value();
            let mut grads = tape.backward(loss_node)?;
            if let Some(clip) = cfg.grad_clip {
                clip_gradients(&mut grads, clip);
            }
            adam.step(&mut model.params_mut(), &grads, lr);
            history.push(HistoryRow {
                iteration,
                loss: loss_val,
                lr,
                phase: phase_idx,
            });
            iteration += 1;
        }
    }
    Ok(Trained {
        model,
        history,
        outcome: RunOutcome::Completed,
    })
}

fn is_solver_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::StepUnderflow { .. } | Error::MaxStepsExceeded { .. } | Error::NonFinite { .. }
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::Method;
    use crate::systems::{generate, SystemName, SystemSpec};

    fn constant_dataset(value: Vec<f64>, samples: usize) -> TrajectoryDataset {
        let times: Vec<f64> = (0..samples).map(|i| 0.1 * i as f64).collect();
        let states = vec![value.clone(); samples];
        TrajectoryDataset {
            times,
            trajectories: vec![crate::systems::Trajectory {
                initial: value.clone(),
                clean: states.clone(),
                noise: vec![vec![0.0; value.len()]; samples],
                observed: states,
            }],
            meta: crate::systems::DatasetMeta {
                source: "test".to_string(),
                spec: None,
                solver_note: String::new(),
                note: String::new(),
            },
        }
    }

    fn decay_dataset(samples: usize, trajectories: usize) -> TrajectoryDataset {
        // y' = -y, exact solutions from a few starts
        let times: Vec<f64> = (0..samples).map(|i| 2.0 * i as f64 / (samples - 1) as f64).collect();
        let mut trajs = Vec::new();
        for k in 0..trajectories {
            let y0 = 1.0 + k as f64 * 0.5;
            let states: Vec<Vec<f64>> = times.iter().map(|t| vec![y0 * (-t).exp()]).collect();
            trajs.push(crate::systems::Trajectory {
                initial: vec![y0],
                clean: states.clone(),
                noise: vec![vec![0.0]; samples],
                observed: states,
            });
        }
        TrajectoryDataset {
            times,
            trajectories: trajs,
            meta: crate::systems::DatasetMeta {
                source: "test".to_string(),
                spec: None,
                solver_note: String::new(),
                note: String::new(),
            },
        }
    }

    fn identity_model(d: usize) -> DiffeoModel {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 2 * d;
        let inn = Inn::init(
            InnConfig::new(n).with_blocks(2).with_subnet_hidden(vec![4]),
            &mut rng,
        )
        .unwrap();
        let mut bc = NeuralBaseConfig::new(n);
        bc.hidden = vec![4];
        let base = Base::Neural(NeuralBase::init(bc, 0.1, &mut rng).unwrap());
        DiffeoModel {
            inn,
            base,
            data_dim: d,
            normalization: None,
        }
    }

    #[test]
    fn identity_model_fits_constants_exactly() {
        let model = identity_model(2);
        let ds = constant_dataset(vec![0.7, -1.2], 6);
        let l = loss(&model, &ds, LossKind::Mae).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn offset_loss_definitions() {
        let mut cx = crate::ctx::Eager;
        let pred = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let obs = Tensor::matrix(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let mae = pointwise_loss(&mut cx, &pred, &obs, LossKind::Mae).unwrap();
        assert_eq!(mae.scalar_value(), 1.0);
        let mse = pointwise_loss(&mut cx, &pred, &obs, LossKind::Mse).unwrap();
        assert_eq!(mse.scalar_value(), 1.0);
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut p = Tensor::vector(vec![1.0, -2.0, 3.0]);
        let before = p.clone();
        let mut adam = Adam::new(0.9, 0.999, 1e-8);
        let g = Tensor::zeros(&[3]);
        adam.step(&mut [&mut p], std::slice::from_ref(&g), 1e-2);
        assert_eq!(p, before);
    }

    #[test]
    fn adam_descends_a_quadratic_bowl() {
        for lr in [1e-2, 1e-3] {
            let mut p = Tensor::vector(vec![1.0, -0.5]);
            let mut adam = Adam::new(0.9, 0.999, 1e-8);
            let loss_of = |p: &Tensor| p.data().iter().map(|x| x * x).sum::<f64>();
            let l0 = loss_of(&p);
            let g = Tensor::vector(p.data().iter().map(|x| 2.0 * x).collect());
            adam.step(&mut [&mut p], std::slice::from_ref(&g), lr);
            assert!(loss_of(&p) < l0, "lr={lr}");
        }
    }

    #[test]
    fn loss_invariant_under_trajectory_permutation() {
        let mut spec = SystemSpec::defaults(SystemName::Lv3);
        spec.samples = 10;
        spec.initial_conditions.truncate(3);
        spec.seed = 4;
        let ds = generate(&spec).unwrap();
        let mut reversed = ds.clone();
        reversed.trajectories.reverse();
        let model = identity_model(3);
        let a = loss(&model, &ds, LossKind::Mae).unwrap();
        let b = loss(&model, &reversed, LossKind::Mae).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn tiny_model_end_to_end_gradient_matches_fd() {
        // n = 2 (no augmentation), 1 block, 4 time points
        let ds = decay_dataset(4, 1);
        let cfg = TrainConfig {
            augment_dims: Some(1),
            ..TrainConfig::default()
        };
        let d = ds.dim();
        let n = d + cfg.augment_for(d);
        assert_eq!(n, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let inn = Inn::random(
            InnConfig::new(n).with_blocks(1).with_subnet_hidden(vec![3]),
            &mut rng,
            0.2,
        )
        .unwrap();
        let base = Base::Linear(LinearBase::init(LinearBaseConfig::new(n), &mut rng).unwrap());
        let model = DiffeoModel {
            inn,
            base,
            data_dim: d,
            normalization: None,
        };
        let point: Vec<Tensor> = model.params().into_iter().cloned().collect();
        let inn_param_count = model.inn.params().len();
        let err = crate::autodiff::grad_check(&point, 1e-5, move |tape, ids| {
            let inn_refs = crate::inn::rebind_from_ids(&model.inn, &ids[..inn_param_count]);
            let base_refs = BaseRefs::Linear(crate::base_ode::LinearRefs {
                basis: ids[inn_param_count],
                spectral_re: ids[inn_param_count + 1],
                spectral_im: ids[inn_param_count + 2],
            });
            diffeo_loss_in(tape, &model, &inn_refs, &base_refs, &ds, LossKind::Mse, false)
        })
        .unwrap();
        assert!(err < 1e-4, "end-to-end gradient error {err:.3e}");
    }

    #[test]
    fn training_decreases_loss_on_easy_problem() {
        let ds = decay_dataset(20, 2);
        let cfg = TrainConfig::default()
            .with_iterations(200)
            .with_learning_rate(1e-2)
            .with_loss(LossKind::Mse);
        let inn_spec = InnSpec {
            blocks: 2,
            subnet_hidden: vec![8],
            clamp: 2.0,
        };
        let out = train_diffeo(&ds, &inn_spec, &BaseSpec::linear(), &cfg).unwrap();
        let first = out.history.first().unwrap().loss;
        let last = out.history.last().unwrap().loss;
        assert!(last < first / 5.0, "loss {first} -> {last}");
        assert_eq!(out.outcome, RunOutcome::Completed);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let ds = decay_dataset(10, 1);
        let cfg = TrainConfig::default()
            .with_iterations(20)
            .with_learning_rate(1e-3)
            .with_seed(42);
        let inn_spec = InnSpec {
            blocks: 1,
            subnet_hidden: vec![4],
            clamp: 2.0,
        };
        let a = train_diffeo(&ds, &inn_spec, &BaseSpec::linear(), &cfg).unwrap();
        let b = train_diffeo(&ds, &inn_spec, &BaseSpec::linear(), &cfg).unwrap();
        assert_eq!(a.history, b.history);
        for (x, y) in a.model.params().iter().zip(b.model.params().iter()) {
            for (p, q) in x.data().iter().zip(y.data().iter()) {
                assert_eq!(p.to_bits(), q.to_bits());
            }
        }
    }

    #[test]
    fn baseline_trains_on_easy_problem() {
        let ds = decay_dataset(20, 2);
        let cfg = TrainConfig::default()
            .with_iterations(300)
            .with_learning_rate(1e-2)
            .with_loss(LossKind::Mse);
        let out = train_baseline(&ds, &SolverConfig::from_times(Method::Euler), &[16], &cfg).unwrap();
        assert_eq!(out.outcome, RunOutcome::Completed);
        let last = out.history.last().unwrap().loss;
        assert!(last < 1e-3, "baseline final mse {last}");
    }

    #[test]
    fn baseline_solver_failure_is_an_outcome_not_a_crash() {
        // absurd tolerances with a high step floor force underflow at once
        let ds = decay_dataset(10, 1);
        let solver = SolverConfig::adaptive()
            .with_tolerances(1e-14, 1e-14)
            .with_min_step(0.5);
        let cfg = TrainConfig::default().with_iterations(5);
        let out = train_baseline(&ds, &solver, &[8], &cfg).unwrap();
        match out.outcome {
            RunOutcome::SolverFailure { iteration, .. } => assert_eq!(iteration, 0),
            other => panic!("expected solver failure, got {other:?}"),
        }
    }

    #[test]
    fn bind_order_matches_params_order() {
        // the optimizer pairs `params_mut()[i]` with gradient i from the
        // tape, so binding must register leaves in exactly that order
        let model = identity_model(2);
        let mut tape = Tape::new();
        let _ = model.bind(&mut tape);
        let params = model.params();
        let nodes = tape.param_nodes().to_vec();
        assert_eq!(params.len(), nodes.len());
        for (p, id) in params.iter().zip(nodes) {
            assert_eq!(*p, tape.node_value(id));
        }
    }

    #[test]
    fn history_csv_schema() {
        let rows = vec![HistoryRow {
            iteration: 0,
            loss: 0.5,
            lr: 1e-4,
            phase: 0,
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        write_history(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("iter,loss,lr,phase\n"));
        assert!(text.contains("0,0.5,0.0001,0"));
    }
}
