//! Ground-truth benchmark systems and dataset generation.
//!
//! Three-dimensional Lotka-Volterra, Lorenz, and Robertson dynamics with
//! their conventional spans and initial conditions. The Lorenz and Robertson
//! equations ship in two spellings each: the form used by the benchmark
//! protocol this crate reproduces (`lorenz_paper`, `rober`) and the textbook
//! form (`lorenz_standard`, `rober_classical`). The protocol's Robertson
//! variant mixes a 3e4 and a 1e4 rate, which breaks the usual mass
//! conservation; `rober_matched` restores it for sanity checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::integrators::{integrate_values, Method, SolverConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemName {
    Lv3,
    LorenzPaper,
    LorenzStandard,
    Rober,
    RoberMatched,
    RoberClassical,
}

impl SystemName {
    pub fn tag(&self) -> &'static str {
        match self {
            SystemName::Lv3 => "lv3",
            SystemName::LorenzPaper => "lorenz_paper",
            SystemName::LorenzStandard => "lorenz_standard",
            SystemName::Rober => "rober",
            SystemName::RoberMatched => "rober_matched",
            SystemName::RoberClassical => "rober_classical",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "lv3" => Ok(SystemName::Lv3),
            "lorenz_paper" => Ok(SystemName::LorenzPaper),
            "lorenz_standard" => Ok(SystemName::LorenzStandard),
            "rober" => Ok(SystemName::Rober),
            "rober_matched" => Ok(SystemName::RoberMatched),
            "rober_classical" => Ok(SystemName::RoberClassical),
            other => Err(Error::InvalidConfig(format!("unknown system `{other}`"))),
        }
    }

    pub fn dim(&self) -> usize {
        3
    }

    pub fn is_stiff(&self) -> bool {
        matches!(
            self,
            SystemName::Rober | SystemName::RoberMatched | SystemName::RoberClassical
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub name: SystemName,
    /// Named coefficient overrides; unknown keys are rejected.
    pub overrides: Vec<(String, f64)>,
    pub t_span: (f64, f64),
    pub samples: usize,
    pub initial_conditions: Vec<Vec<f64>>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SystemSpec {
    /// The conventional span, initial conditions, and noise level for a
    /// system, at desk-scale sample counts.
    pub fn defaults(name: SystemName) -> Self {
        let (t_span, initial_conditions, noise_sigma) = match name {
            SystemName::Lv3 => (
                (0.0, 7.0),
                vec![
                    vec![5.0, 5.0, 1.0],
                    vec![2.0, 6.0, 6.0],
                    vec![3.0, 1.0, 4.0],
                    vec![7.0, 1.0, 2.0],
                    vec![6.0, 2.0, 4.0],
                    vec![3.0, 3.0, 1.0],
                    vec![2.0, 2.0, 2.0],
                    vec![4.0, 4.0, 3.0],
                    vec![3.0, 3.0, 4.0],
                    vec![1.0, 1.0, 5.0],
                ],
                0.05,
            ),
            SystemName::LorenzPaper | SystemName::LorenzStandard => {
                ((0.0, 2.0), vec![vec![0.15, 0.15, 0.15]], 0.0)
            }
            SystemName::Rober | SystemName::RoberMatched | SystemName::RoberClassical => {
                ((0.0, 120.0), vec![vec![1.0, 0.0, 0.0]], 0.0)
            }
        };
        SystemSpec {
            name,
            overrides: Vec::new(),
            t_span,
            samples: 50,
            initial_conditions,
            noise_sigma,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_span.1 > self.t_span.0) {
            return Err(Error::InvalidConfig(format!(
                "span must be positive: {:?}",
                self.t_span
            )));
        }
        if self.samples < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 samples, got {}",
                self.samples
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "noise sigma must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        if self.initial_conditions.is_empty() {
            return Err(Error::InvalidConfig("need at least one initial condition".into()));
        }
        for ic in &self.initial_conditions {
            if ic.len() != self.name.dim() || ic.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "initial condition {ic:?} does not fit system `{}`",
                    self.name.tag()
                )));
            }
        }
        for (key, _) in &self.overrides {
            param(self.name, &self.overrides, key)?;
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        let (t0, t1) = self.t_span;
        (0..self.samples)
            .map(|i| t0 + (t1 - t0) * i as f64 / (self.samples - 1) as f64)
            .collect()
    }

    pub fn dynamics(&self, state: &Tensor) -> Result<Tensor> {
        eval_dynamics(self.name, &self.overrides, state)
    }
}

fn param(name: SystemName, overrides: &[(String, f64)], key: &str) -> Result<f64> {
    let defaults: &[(&str, f64)] = match name {
        SystemName::Lv3 => &[("rate", 0.75)],
        SystemName::LorenzPaper | SystemName::LorenzStandard => {
            &[("sigma", 10.0), ("rho", 28.0), ("beta", 8.0 / 3.0)]
        }
        // k1: slow rate; k2: fast quadratic rate; k3: the cross rate in y'
        SystemName::Rober => &[("k1", 0.04), ("k2", 3e4), ("k3", 1e4)],
        SystemName::RoberMatched => &[("k1", 0.04), ("k2", 3e4), ("k3", 3e4)],
        SystemName::RoberClassical => &[("k1", 0.04), ("k2", 3e7), ("k3", 1e4)],
    };
    let default = defaults
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| {
            Error::InvalidConfig(format!(
                "system `{}` has no parameter `{key}`",
                name.tag()
            ))
        })?;
    Ok(overrides
        .iter()
        .rev()
        .find(|(k, _)| k == key)
        .map(|(_, v)| *v)
        .unwrap_or(default))
}

/// Right-hand side of the named system at `state`.
pub fn eval_dynamics(name: SystemName, overrides: &[(String, f64)], state: &Tensor) -> Result<Tensor> {
    if state.numel() != name.dim() {
        return Err(Error::ShapeMismatch {
            op: "eval_dynamics",
            detail: format!("system `{}` is {}-dimensional, state has {} entries", name.tag(), name.dim(), state.numel()),
        });
    }
    state.ensure_finite("eval_dynamics state")?;
    let s = state.data();
    let (x, y, z) = (s[0], s[1], s[2]);
    let d = match name {
        SystemName::Lv3 => {
            let r = param(name, overrides, "rate")?;
            vec![
                x * (r - r * y),
                y * (-r + r * x - r * z),
                z * (-r + r * y),
            ]
        }
        SystemName::LorenzPaper => {
            let sigma = param(name, overrides, "sigma")?;
            let rho = param(name, overrides, "rho")?;
            let beta = param(name, overrides, "beta")?;
            // y-equation as printed in the protocol: x(rho - y) - x
            vec![sigma * (y - x), x * (rho - y) - x, x * y - beta * z]
        }
        SystemName::LorenzStandard => {
            let sigma = param(name, overrides, "sigma")?;
            let rho = param(name, overrides, "rho")?;
            let beta = param(name, overrides, "beta")?;
            vec![sigma * (y - x), x * (rho - z) - y, x * y - beta * z]
        }
        SystemName::Rober | SystemName::RoberMatched => {
            let k1 = param(name, overrides, "k1")?;
            let k2 = param(name, overrides, "k2")?;
            let k3 = param(name, overrides, "k3")?;
            vec![
                -k1 * x + k2 * y * z,
                k1 * x - k2 * y * y - k3 * y * z,
                k2 * y * y,
            ]
        }
        SystemName::RoberClassical => {
            let k1 = param(name, overrides, "k1")?;
            let k2 = param(name, overrides, "k2")?;
            let k3 = param(name, overrides, "k3")?;
            vec![
                -k1 * x + k3 * y * z,
                k1 * x - k3 * y * z - k2 * y * y,
                k2 * y * y,
            ]
        }
    };
    Ok(Tensor::vector(d))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: Vec<f64>,
    /// Reference solution, `[T][n]`.
    pub clean: Vec<Vec<f64>>,
    /// Recorded noise draws, `[T][n]`.
    pub noise: Vec<Vec<f64>>,
    /// `clean + noise`, the training signal.
    pub observed: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    /// "generated" or "external".
    pub source: String,
    pub spec: Option<SystemSpec>,
    pub solver_note: String,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    /// Sample times, shared by every trajectory.
    pub times: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    pub meta: DatasetMeta,
}

impl TrajectoryDataset {
    pub fn dim(&self) -> usize {
        self.trajectories.first().map_or(0, |t| t.initial.len())
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Observed states of one trajectory as `[T, n]`.
    pub fn observed_matrix(&self, traj: usize) -> Tensor {
        let t = &self.trajectories[traj];
        let n = t.initial.len();
        let data: Vec<f64> = t.observed.iter().flatten().copied().collect();
        Tensor::new(vec![self.times.len(), n], data).expect("consistent trajectory")
    }

    /// Keep only the first `count` trajectories.
    pub fn take(mut self, count: usize) -> Self {
        self.trajectories.truncate(count);
        self
    }

    pub fn min_increment(&self) -> f64 {
        crate::integrators::min_increment(&self.times).expect("at least two times")
    }
}

/// Reference solver settings for a system: dense fixed-step RK4 for the
/// nonstiff systems, tightly tolerated adaptive stepping for the stiff ones.
pub(crate) fn reference_solver(spec: &SystemSpec) -> (SolverConfig, String) {
    if spec.name.is_stiff() {
        let cfg = SolverConfig::adaptive()
            .with_tolerances(1e-10, 1e-10)
            .with_min_step(1e-12)
            .with_max_steps(5_000_000);
        (cfg, "dopri5 rtol=1e-10 atol=1e-10 min_step=1e-12".to_string())
    } else {
        let h_data = (spec.t_span.1 - spec.t_span.0) / (spec.samples - 1) as f64;
        // at most min(h_data/100, 1e-3), refined so the grid lands exactly
        // on the sample times
        let target = (h_data / 100.0).min(1e-3);
        let substeps = (h_data / target).ceil() as usize;
        let h = h_data / substeps as f64;
        (
            SolverConfig::fixed(Method::Rk4, h).with_max_steps(50_000_000),
            format!("rk4 h={h:e}"),
        )
    }
}

/// Integrate the reference trajectories and add seeded Gaussian noise.
pub fn generate(spec: &SystemSpec) -> Result<TrajectoryDataset> {
    spec.validate()?;
    let times = spec.times();
    let (solver, solver_note) = reference_solver(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let n = spec.name.dim();

    let mut trajectories = Vec::with_capacity(spec.initial_conditions.len());
    for ic in &spec.initial_conditions {
        let y0 = Tensor::matrix(1, n, ic.clone())?;
        let run = integrate_values(
            |y| {
                let d = spec.dynamics(&Tensor::vector(y.data().to_vec()))?;
                Tensor::matrix(1, n, d.data().to_vec())
            },
            &y0,
            &times,
            &solver,
        )?;
        let clean: Vec<Vec<f64>> = run.states.iter().map(|s| s.data().to_vec()).collect();
        let mut noise = Vec::with_capacity(clean.len());
        let mut observed = Vec::with_capacity(clean.len());
        for row in &clean {
            let draws: Vec<f64> = row
                .iter()
                .map(|_| {
                    if spec.noise_sigma > 0.0 {
                        spec.noise_sigma * normal.sample(&mut rng)
                    } else {
                        0.0
                    }
                })
                .collect();
            observed.push(row.iter().zip(&draws).map(|(c, d)| c + d).collect());
            noise.push(draws);
        }
        trajectories.push(Trajectory {
            initial: ic.clone(),
            clean,
            noise,
            observed,
        });
    }

    let note = match spec.name {
        SystemName::Rober => "mass conservation not applicable (as-printed rates)".to_string(),
        SystemName::RoberMatched | SystemName::RoberClassical => {
            "mass conserving rates".to_string()
        }
        _ => String::new(),
    };
    Ok(TrajectoryDataset {
        times,
        trajectories,
        meta: DatasetMeta {
            source: "generated".to_string(),
            spec: Some(spec.clone()),
            solver_note,
            note,
        },
    })
}

/// Write observed states as `traj_id,t,x1,...,xn`, rows sorted by
/// `(traj_id, t)`, with a key=value metadata sidecar at `<path>.meta`.
pub fn save_csv(dataset: &TrajectoryDataset, path: &Path) -> Result<()> {
    let n = dataset.dim();
    let mut out = String::from("traj_id,t");
    for i in 1..=n {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for (id, traj) in dataset.trajectories.iter().enumerate() {
        for (t, row) in dataset.times.iter().zip(&traj.observed) {
            let _ = write!(out, "{id},{t}");
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))?;

    let mut meta = BTreeMap::new();
    meta.insert("source".to_string(), dataset.meta.source.clone());
    meta.insert("solver".to_string(), dataset.meta.solver_note.clone());
    if !dataset.meta.note.is_empty() {
        meta.insert("note".to_string(), dataset.meta.note.clone());
    }
    if let Some(spec) = &dataset.meta.spec {
        meta.insert("system".to_string(), spec.name.tag().to_string());
        meta.insert("seed".to_string(), spec.seed.to_string());
        meta.insert("samples".to_string(), spec.samples.to_string());
        meta.insert("noise_sigma".to_string(), format!("{}", spec.noise_sigma));
        meta.insert(
            "t_span".to_string(),
            format!("{},{}", spec.t_span.0, spec.t_span.1),
        );
        for (k, v) in &spec.overrides {
            meta.insert(format!("param.{k}"), format!("{v}"));
        }
    }
    let meta_path = sidecar_path(path);
    let mut text = String::new();
    for (k, v) in meta {
        let _ = writeln!(text, "{k}={v}");
    }
    fs::write(&meta_path, text).map_err(|e| Error::io(meta_path.display().to_string(), e))
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    std::path::PathBuf::from(p)
}

/// Read a trajectory CSV produced by [`save_csv`] or by external tooling.
/// The result carries `observed == clean` and zero noise, marked "external".
pub fn load_csv(path: &Path) -> Result<TrajectoryDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file = path.display().to_string();
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        file: file.clone(),
        line: 1,
        msg: "empty file".to_string(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "traj_id" || cols[1] != "t" {
        return Err(Error::Parse {
            file,
            line: 1,
            msg: format!("expected header `traj_id,t,x1,...`, got `{header}`"),
        });
    }
    let n = cols.len() - 2;

    // rows must be grouped by trajectory with strictly increasing times
    let mut order: Vec<u64> = Vec::new();
    let mut rows: BTreeMap<u64, (Vec<f64>, Vec<Vec<f64>>)> = BTreeMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                file,
                line: lineno,
                msg: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::Parse {
                file: file.clone(),
                line: lineno,
                msg: format!("bad {what} `{s}`"),
            })
        };
        let id: u64 = fields[0].trim().parse().map_err(|_| Error::Parse {
            file: file.clone(),
            line: lineno,
            msg: format!("bad traj_id `{}`", fields[0]),
        })?;
        let t = parse_f(fields[1], "time")?;
        let state: Vec<f64> = fields[2..]
            .iter()
            .map(|s| parse_f(s, "state entry"))
            .collect::<Result<_>>()?;
        let entry = rows.entry(id).or_insert_with(|| {
            order.push(id);
            (Vec::new(), Vec::new())
        });
        if let Some(&last) = entry.0.last() {
            if t <= last {
                return Err(Error::Parse {
                    file,
                    line: lineno,
                    msg: format!("times not strictly increasing: {last} then {t}"),
                });
            }
        }
        entry.0.push(t);
        entry.1.push(state);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            file,
            line: 1,
            msg: "no data rows".to_string(),
        });
    }

    let first_times = rows.values().next().unwrap().0.clone();
    if first_times.len() < 2 {
        return Err(Error::Parse {
            file,
            line: 1,
            msg: "trajectories need at least two samples".to_string(),
        });
    }
    let mut trajectories = Vec::with_capacity(rows.len());
    for (id, (times, states)) in &rows {
        if *times != first_times {
            return Err(Error::Parse {
                file,
                line: 1,
                msg: format!("trajectory {id} does not share the common time grid"),
            });
        }
        trajectories.push(Trajectory {
            initial: states[0].clone(),
            clean: states.clone(),
            noise: vec![vec![0.0; n]; states.len()],
            observed: states.clone(),
        });
    }
    Ok(TrajectoryDataset {
        times: first_times,
        trajectories,
        meta: DatasetMeta {
            source: "external".to_string(),
            spec: None,
            solver_note: String::new(),
            note: String::new(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lv3_hand_values() {
        let d = eval_dynamics(SystemName::Lv3, &[], &Tensor::vector(vec![5.0, 5.0, 1.0])).unwrap();
        assert_eq!(d.data(), &[-15.0, 11.25, 3.0]);
    }

    #[test]
    fn rober_hand_values() {
        let d = eval_dynamics(SystemName::Rober, &[], &Tensor::vector(vec![1.0, 0.0, 0.0])).unwrap();
        assert_eq!(d.data(), &[-0.04, 0.04, 0.0]);
    }

    #[test]
    fn lorenz_paper_hand_values() {
        let d = eval_dynamics(
            SystemName::LorenzPaper,
            &[],
            &Tensor::vector(vec![0.15, 0.15, 0.15]),
        )
        .unwrap();
        assert!((d.data()[0] - 0.0).abs() < 1e-15);
        assert!((d.data()[1] - 4.0275).abs() < 1e-12);
        assert!((d.data()[2] + 0.3775).abs() < 1e-12);
    }

    #[test]
    fn unknown_name_and_param_rejected() {
        assert!(SystemName::from_tag("volterra").is_err());
        let mut spec = SystemSpec::defaults(SystemName::Lv3);
        spec.overrides = vec![("sigma".to_string(), 1.0)];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn parameter_override_applies() {
        let ovr = vec![("rate".to_string(), 1.5)];
        let d = eval_dynamics(SystemName::Lv3, &ovr, &Tensor::vector(vec![1.0, 2.0, 0.0])).unwrap();
        // x' = x (1.5 - 1.5 * 2) = -1.5
        assert!((d.data()[0] + 1.5).abs() < 1e-15);
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let mut spec = SystemSpec::defaults(SystemName::Lv3);
        spec.samples = 20;
        spec.initial_conditions.truncate(2);
        spec.seed = 123;
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_noise_observed_equals_clean() {
        let mut spec = SystemSpec::defaults(SystemName::LorenzPaper);
        spec.samples = 10;
        spec.noise_sigma = 0.0;
        let ds = generate(&spec).unwrap();
        for traj in &ds.trajectories {
            assert_eq!(traj.observed, traj.clean);
            assert!(traj.noise.iter().flatten().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn noise_is_recorded_exactly() {
        let mut spec = SystemSpec::defaults(SystemName::Lv3);
        spec.samples = 12;
        spec.initial_conditions.truncate(1);
        spec.seed = 7;
        let ds = generate(&spec).unwrap();
        for traj in &ds.trajectories {
            for ((c, n), o) in traj.clean.iter().zip(&traj.noise).zip(&traj.observed) {
                for i in 0..c.len() {
                    assert_eq!(c[i] + n[i], o[i]);
                }
            }
        }
    }

    #[test]
    fn lv_reference_satisfies_the_ode() {
        let mut spec = SystemSpec::defaults(SystemName::Lv3);
        spec.samples = 1401;
        spec.initial_conditions.truncate(2);
        spec.noise_sigma = 0.0;
        let ds = generate(&spec).unwrap();
        let h = ds.times[1] - ds.times[0];
        for traj in &ds.trajectories {
            for i in 1..ds.times.len() - 1 {
                let fd: Vec<f64> = (0..3)
                    .map(|d| (traj.clean[i + 1][d] - traj.clean[i - 1][d]) / (2.0 * h))
                    .collect();
                let f = spec
                    .dynamics(&Tensor::vector(traj.clean[i].clone()))
                    .unwrap();
                let scale = f.norm_inf().max(1e-9);
                for d in 0..3 {
                    let rel = (fd[d] - f.data()[d]).abs() / scale;
                    assert!(rel < 1e-3, "interior point {i} dim {d}: rel {rel:.2e}");
                }
            }
        }
    }

    #[test]
    fn rober_matched_conserves_mass() {
        let mut spec = SystemSpec::defaults(SystemName::RoberMatched);
        spec.samples = 30;
        let ds = generate(&spec).unwrap();
        let total0: f64 = ds.trajectories[0].clean[0].iter().sum();
        for row in &ds.trajectories[0].clean {
            let total: f64 = row.iter().sum();
            assert!(
                (total - total0).abs() < 1e-6,
                "mass drifted to {total} from {total0}"
            );
        }
    }

    #[test]
    fn rober_as_printed_is_not_conservative() {
        let mut spec = SystemSpec::defaults(SystemName::Rober);
        spec.samples = 30;
        let ds = generate(&spec).unwrap();
        assert!(ds.meta.note.contains("not applicable"));
        let total0: f64 = ds.trajectories[0].clean[0].iter().sum();
        let total_end: f64 = ds.trajectories[0].clean.last().unwrap().iter().sum();
        assert!((total_end - total0).abs() > 1e-3);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lv.csv");
        let mut spec = SystemSpec::defaults(SystemName::Lv3);
        spec.samples = 8;
        spec.initial_conditions.truncate(2);
        spec.seed = 5;
        let ds = generate(&spec).unwrap();
        save_csv(&ds, &path).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back.meta.source, "external");
        assert_eq!(back.len(), 2);
        assert_eq!(back.times, ds.times);
        for (a, b) in back.trajectories.iter().zip(&ds.trajectories) {
            assert_eq!(a.observed, b.observed);
        }
    }

    #[test]
    fn empty_and_malformed_csv_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "").unwrap();
        assert!(load_csv(&path).is_err());

        std::fs::write(&path, "traj_id,t,x1\n0,0.0,1.0\n0,0.5\n").unwrap();
        let err = load_csv(&path).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }

        std::fs::write(&path, "traj_id,t,x1\n0,0.5,1.0\n0,0.2,1.0\n").unwrap();
        assert!(matches!(load_csv(&path), Err(Error::Parse { .. })));
    }
}
