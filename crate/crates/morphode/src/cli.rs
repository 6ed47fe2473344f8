//! Command-line entry points: dataset generation, training, evaluation,
//! benchmarking, and ablation sweeps as reproducible runs.
//!
//! Every run resolves its settings from defaults, an optional flat
//! `key=value` config file, and `--set` overrides, then writes the fully
//! resolved snapshot into the output directory. Re-running any snapshot
//! reproduces all non-timing outputs byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::eval::{
    benchmark, config_hash, emit_report, rollout, BenchmarkConfig, EvalReport, Subject,
};
use crate::integrators::{Method, SolverConfig};
use crate::model::{load_model, save_model, Model};
use crate::plot::{plot_overlay, PlotConfig};
use crate::systems::{generate, load_csv, save_csv, SystemName, SystemSpec, TrajectoryDataset};
use crate::training::{
    train_baseline, train_diffeo, write_history, BaseSpec, InnSpec, LossKind, TrainConfig,
};

#[derive(Parser)]
#[command(name = "morphode", version, about = "Learn ODEs by morphing a simple base system through an invertible network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark dataset (CSV + metadata sidecar)
    Gen(CommonArgs),
    /// Train a model and write it with its loss history
    Train(TrainArgs),
    /// Evaluate a trained model: metrics report and overlay plots
    Eval(EvalArgs),
    /// Train several methods on one dataset and report accuracy and timing
    Bench(CommonArgs),
    /// Ablation grid over invertible-network depth and subnet width
    Sweep(SweepArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Flat key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set train.iterations=500
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Shorthand for --set system=NAME
    #[arg(long)]
    system: Option<String>,
    /// Shorthand for --set seed=N
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Train on an external trajectory CSV instead of a generated dataset
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Trained model file
    #[arg(long)]
    model: PathBuf,
    /// Evaluate against an external trajectory CSV
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Layer counts, e.g. 2..8 or 2,4,6
    #[arg(long)]
    layers: Option<String>,
    /// Subnet hidden sizes, e.g. 500,1000,1500
    #[arg(long)]
    hidden: Option<String>,
}

/// Run the CLI against an argument list; returns the process exit code.
/// 0 success, 2 usage, 3 numerical failure, 4 IO.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                3
            } else if matches!(e, Error::Io { .. } | Error::Parse { .. }) {
                4
            } else {
                2
            }
        }
    }
}

// ---------------------------------------------------------------------------
// configuration

const KNOWN_KEYS: &[(&str, &str)] = &[
    ("command", ""),
    ("system", "lv3"),
    ("seed", "0"),
    ("samples", "50"),
    ("trajectories", "0"), // 0 = every default initial condition
    ("sigma", "auto"),
    ("t0", "auto"),
    ("t1", "auto"),
    ("ics", "default"),
    ("data", ""),
    ("model.kind", "diffeo"),
    ("model.base", "linear"),
    ("model.blocks", "5"),
    ("model.subnet_hidden", "64"),
    ("model.clamp", "2"),
    ("model.epsilon", "0.001"),
    ("model.base_hidden", "30,30,30"),
    ("baseline.method", "rk4"),
    ("baseline.hidden", "150,150,150,150,150"),
    ("bench.baselines", "rk4"),
    ("train.loss", "mae"),
    ("train.iterations", "2000"),
    ("train.lr", "0.0001"),
    ("train.schedule", ""),
    ("train.seed", "0"),
    ("train.augment", ""),
    ("train.clip", ""),
    ("train.log_space", "0"),
    ("train.normalize", "0"),
    ("bench.repeats", "5"),
    ("bench.resolution", "10"),
    ("bench.gen_count", "16"),
    ("plot.log", "auto"),
    ("sweep.layers", "2,3,4,5,6,7,8"),
    ("sweep.hidden", "500,1000,1500,2000,2500"),
];

/// The fully resolved settings of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    fn resolve(command: &str, common: &CommonArgs, data: Option<&Path>) -> Result<Self> {
        let mut values: BTreeMap<String, String> = KNOWN_KEYS
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        if let Some(path) = &common.config {
            let text =
                fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
            for (idx, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                    file: path.display().to_string(),
                    line: idx + 1,
                    msg: format!("expected key=value, got `{line}`"),
                })?;
                let k = k.trim();
                if !values.contains_key(k) {
                    return Err(Error::Parse {
                        file: path.display().to_string(),
                        line: idx + 1,
                        msg: format!("unknown config key `{k}`"),
                    });
                }
                values.insert(k.to_string(), v.trim().to_string());
            }
        }
        for set in &common.sets {
            let (k, v) = set
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("--set needs KEY=VALUE, got `{set}`")))?;
            if !values.contains_key(k) {
                return Err(Error::InvalidConfig(format!("unknown config key `{k}`")));
            }
            values.insert(k.to_string(), v.to_string());
        }
        if let Some(system) = &common.system {
            values.insert("system".to_string(), system.clone());
        }
        if let Some(seed) = common.seed {
            values.insert("seed".to_string(), seed.to_string());
        }
        if let Some(path) = data {
            values.insert("data".to_string(), path.display().to_string());
        }
        values.insert("command".to_string(), command.to_string());
        let cfg = RunConfig { values };
        cfg.resolve_auto()
    }

    /// Replace the "auto" placeholders with the concrete per-system values
    /// so the snapshot is fully explicit.
    fn resolve_auto(mut self) -> Result<Self> {
        let spec = SystemSpec::defaults(self.system()?);
        if self.get("sigma") == "auto" {
            self.values
                .insert("sigma".into(), format!("{}", spec.noise_sigma));
        }
        if self.get("t0") == "auto" {
            self.values.insert("t0".into(), format!("{}", spec.t_span.0));
        }
        if self.get("t1") == "auto" {
            self.values.insert("t1".into(), format!("{}", spec.t_span.1));
        }
        if self.get("ics") == "default" {
            let ics: Vec<String> = spec
                .initial_conditions
                .iter()
                .map(|ic| {
                    ic.iter()
                        .map(|x| x.to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect();
            self.values.insert("ics".into(), ics.join(";"));
        }
        if self.get("plot.log") == "auto" {
            let stiff = self.system()?.is_stiff();
            self.values
                .insert("plot.log".into(), if stiff { "1" } else { "0" }.into());
        }
        Ok(self)
    }

    fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_default()
    }

    fn f64_of(&self, key: &str) -> Result<f64> {
        self.get(key)
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad float `{}` for {key}", self.get(key))))
    }

    fn usize_of(&self, key: &str) -> Result<usize> {
        self.get(key)
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad integer `{}` for {key}", self.get(key))))
    }

    fn u64_of(&self, key: &str) -> Result<u64> {
        self.get(key)
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad integer `{}` for {key}", self.get(key))))
    }

    fn bool_of(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "0" | "false" => Ok(false),
            "1" | "true" => Ok(true),
            other => Err(Error::InvalidConfig(format!("bad flag `{other}` for {key}"))),
        }
    }

    fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        parse_usize_list(self.get(key))
            .ok_or_else(|| Error::InvalidConfig(format!("bad list `{}` for {key}", self.get(key))))
    }

    fn system(&self) -> Result<SystemName> {
        SystemName::from_tag(self.get("system"))
    }

    fn system_spec(&self) -> Result<SystemSpec> {
        let mut spec = SystemSpec::defaults(self.system()?);
        spec.seed = self.u64_of("seed")?;
        spec.samples = self.usize_of("samples")?;
        spec.noise_sigma = self.f64_of("sigma")?;
        spec.t_span = (self.f64_of("t0")?, self.f64_of("t1")?);
        let ics: Result<Vec<Vec<f64>>> = self
            .get("ics")
            .split(';')
            .map(|ic| {
                ic.split(',')
                    .map(|x| {
                        x.trim().parse::<f64>().map_err(|_| {
                            Error::InvalidConfig(format!("bad initial condition entry `{x}`"))
                        })
                    })
                    .collect()
            })
            .collect();
        spec.initial_conditions = ics?;
        let take = self.usize_of("trajectories")?;
        if take > 0 {
            spec.initial_conditions.truncate(take);
        }
        spec.validate()?;
        Ok(spec)
    }

    fn dataset(&self) -> Result<TrajectoryDataset> {
        let data = self.get("data");
        if data.is_empty() {
            generate(&self.system_spec()?)
        } else {
            load_csv(Path::new(data))
        }
    }

    fn inn_spec(&self) -> Result<InnSpec> {
        Ok(InnSpec {
            blocks: self.usize_of("model.blocks")?,
            subnet_hidden: self.usize_list("model.subnet_hidden")?,
            clamp: self.f64_of("model.clamp")?,
        })
    }

    fn base_spec(&self) -> Result<BaseSpec> {
        match self.get("model.base") {
            "linear" => Ok(BaseSpec::Linear {
                stable: false,
                epsilon: self.f64_of("model.epsilon")?,
            }),
            "linear_stable" => Ok(BaseSpec::Linear {
                stable: true,
                epsilon: self.f64_of("model.epsilon")?,
            }),
            "neural" => Ok(BaseSpec::Neural {
                hidden: self.usize_list("model.base_hidden")?,
            }),
            other => Err(Error::InvalidConfig(format!("unknown base `{other}`"))),
        }
    }

    fn train_config(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig {
            learning_rate: self.f64_of("train.lr")?,
            iterations: self.usize_of("train.iterations")?,
            loss: LossKind::from_tag(self.get("train.loss"))?,
            seed: self.u64_of("train.seed")?,
            log_space: self.bool_of("train.log_space")?,
            normalize: self.bool_of("train.normalize")?,
            ..TrainConfig::default()
        };
        let schedule = self.get("train.schedule");
        if !schedule.is_empty() {
            let phases: Result<Vec<(usize, f64)>> = schedule
                .split(',')
                .map(|p| {
                    let (n, lr) = p.split_once('@').ok_or_else(|| {
                        Error::InvalidConfig(format!("bad schedule phase `{p}`, want N@LR"))
                    })?;
                    Ok((
                        n.trim()
                            .parse()
                            .map_err(|_| Error::InvalidConfig(format!("bad phase count `{n}`")))?,
                        lr.trim()
                            .parse()
                            .map_err(|_| Error::InvalidConfig(format!("bad phase lr `{lr}`")))?,
                    ))
                })
                .collect();
            cfg.schedule = Some(phases?);
        }
        if !self.get("train.augment").is_empty() {
            cfg.augment_dims = Some(self.usize_of("train.augment")?);
        }
        if !self.get("train.clip").is_empty() {
            cfg.grad_clip = Some(self.f64_of("train.clip")?);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn baseline_solver(&self, method: Method) -> SolverConfig {
        match method {
            Method::Dopri5 => SolverConfig::adaptive(),
            m => SolverConfig::from_times(m),
        }
    }

    fn bench_config(&self) -> Result<BenchmarkConfig> {
        Ok(BenchmarkConfig {
            repeats: self.usize_of("bench.repeats")?,
            resolution_multiplier: self.usize_of("bench.resolution")?,
            generalization_count: self.usize_of("bench.gen_count")?,
            seed: self.u64_of("seed")?,
        })
    }

    fn snapshot(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Write the snapshot, seed, and tool version into the run directory.
    fn stamp(&self, out: &Path) -> Result<()> {
        fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
        let snap = self.snapshot();
        write_file(&out.join("config.snapshot"), &snap)?;
        write_file(
            &out.join("VERSION"),
            &format!("morphode {}\n", env!("CARGO_PKG_VERSION")),
        )?;
        Ok(())
    }

    fn hash(&self) -> String {
        config_hash(&self.snapshot())
    }
}

fn parse_usize_list(text: &str) -> Option<Vec<usize>> {
    if text.is_empty() {
        return Some(Vec::new());
    }
    if let Some((a, b)) = text.split_once("..") {
        let a: usize = a.trim().parse().ok()?;
        let b: usize = b.trim().parse().ok()?;
        if a > b {
            return None;
        }
        return Some((a..=b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().ok())
        .collect::<Option<Vec<usize>>>()
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

// ---------------------------------------------------------------------------
// subcommands

fn cmd_gen(args: &CommonArgs) -> Result<()> {
    let cfg = RunConfig::resolve("gen", args, None)?;
    let dataset = cfg.dataset()?;
    cfg.stamp(&args.out)?;
    save_csv(&dataset, &args.out.join("dataset.csv"))?;
    println!(
        "wrote {} trajectories x {} samples to {}",
        dataset.len(),
        dataset.times.len(),
        args.out.join("dataset.csv").display()
    );
    Ok(())
}

fn train_from_config(cfg: &RunConfig, dataset: &TrajectoryDataset, out: &Path) -> Result<Model> {
    let train_cfg = cfg.train_config()?;
    match cfg.get("model.kind") {
        "diffeo" => {
            let trained = train_diffeo(dataset, &cfg.inn_spec()?, &cfg.base_spec()?, &train_cfg)?;
            write_history(&trained.history, &out.join("history.csv"))?;
            write_file(&out.join("outcome.txt"), &format!("{}\n", trained.outcome.label()))?;
            Ok(Model::Diffeo(trained.model))
        }
        "baseline" => {
            let method = Method::from_tag(cfg.get("baseline.method"))?;
            let solver = cfg.baseline_solver(method);
            let hidden = cfg.usize_list("baseline.hidden")?;
            let trained = train_baseline(dataset, &solver, &hidden, &train_cfg)?;
            write_history(&trained.history, &out.join("history.csv"))?;
            write_file(&out.join("outcome.txt"), &format!("{}\n", trained.outcome.label()))?;
            Ok(Model::Baseline(trained.model))
        }
        other => Err(Error::InvalidConfig(format!("unknown model.kind `{other}`"))),
    }
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = RunConfig::resolve("train", &args.common, args.data.as_deref())?;
    let dataset = cfg.dataset()?;
    cfg.stamp(&args.common.out)?;
    let model = train_from_config(&cfg, &dataset, &args.common.out)?;
    save_model(&model, &args.common.out.join("model.model"))?;
    println!("model written to {}", args.common.out.join("model.model").display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let cfg = RunConfig::resolve("eval", &args.common, args.data.as_deref())?;
    let dataset = cfg.dataset()?;
    cfg.stamp(&args.common.out)?;
    let model = load_model(&args.model)?;
    let subject = match &model {
        Model::Diffeo(m) => Subject::Diffeo(m),
        Model::Baseline(m) => Subject::Baseline(m),
    };
    let label = match &model {
        Model::Diffeo(_) => "ours",
        Model::Baseline(_) => "baseline",
    };
    let subjects = vec![(label.to_string(), subject)];
    let mut report = benchmark(&subjects, &dataset, &cfg.bench_config()?)?;
    report.config_hash = cfg.hash();
    emit_report(&report, &args.common.out)?;
    emit_overlay_plots(&cfg, &model, &dataset, &args.common.out)?;
    println!("report written to {}", args.common.out.join("report.csv").display());
    Ok(())
}

fn emit_overlay_plots(
    cfg: &RunConfig,
    model: &Model,
    dataset: &TrajectoryDataset,
    out: &Path,
) -> Result<()> {
    let fine: Vec<f64> = {
        let times = &dataset.times;
        let mult = cfg.usize_of("bench.resolution")?.max(1);
        let mut v = Vec::new();
        for w in times.windows(2) {
            for k in 0..mult {
                v.push(w[0] + (w[1] - w[0]) * k as f64 / mult as f64);
            }
        }
        v.push(*times.last().unwrap());
        v
    };
    let count = dataset.len().min(3);
    let mut observed = Vec::with_capacity(count);
    let mut generated = Vec::with_capacity(count);
    for i in 0..count {
        observed.push(dataset.observed_matrix(i));
        let ic = crate::tensor::Tensor::vector(dataset.trajectories[i].initial.clone());
        let pred = match model {
            Model::Diffeo(m) => rollout(m, &ic, &fine)?,
            Model::Baseline(m) => crate::eval::baseline_rollout(m, &ic, &fine)?,
        };
        generated.push(pred);
    }
    let plot_cfg = PlotConfig {
        title: format!("{} ({})", cfg.get("system"), cfg.get("command")),
        log_y: cfg.bool_of("plot.log")?,
        ..PlotConfig::default()
    };
    plot_overlay(
        &out.join("trajectories.svg"),
        &dataset.times,
        &observed,
        &fine,
        &generated,
        &plot_cfg,
    )?;
    Ok(())
}

fn cmd_bench(args: &CommonArgs) -> Result<()> {
    let cfg = RunConfig::resolve("bench", args, None)?;
    let dataset = cfg.dataset()?;
    cfg.stamp(&args.out)?;
    let train_cfg = cfg.train_config()?;

    // our method
    let ours_label = format!("ours-{}", cfg.get("model.base"));
    let ours = train_diffeo(&dataset, &cfg.inn_spec()?, &cfg.base_spec()?, &train_cfg)?;
    write_history(&ours.history, &args.out.join("history_ours.csv"))?;
    save_model(&Model::Diffeo(ours.model.clone()), &args.out.join("model_ours.model"))?;

    // direct baselines
    let mut baselines = Vec::new();
    for tag in cfg.get("bench.baselines").split(',').filter(|s| !s.is_empty()) {
        let method = Method::from_tag(tag.trim())?;
        let solver = cfg.baseline_solver(method);
        let hidden = cfg.usize_list("baseline.hidden")?;
        let trained = train_baseline(&dataset, &solver, &hidden, &train_cfg)?;
        write_history(&trained.history, &args.out.join(format!("history_{tag}.csv")))?;
        save_model(
            &Model::Baseline(trained.model.clone()),
            &args.out.join(format!("model_{tag}.model")),
        )?;
        write_file(
            &args.out.join(format!("outcome_{tag}.txt")),
            &format!("{}\n", trained.outcome.label()),
        )?;
        baselines.push((tag.trim().to_string(), trained));
    }

    let mut subjects: Vec<(String, Subject)> = vec![(ours_label, Subject::Diffeo(&ours.model))];
    for (tag, trained) in &baselines {
        subjects.push((tag.clone(), Subject::Baseline(&trained.model)));
    }
    let mut report = benchmark(&subjects, &dataset, &cfg.bench_config()?)?;
    report.config_hash = cfg.hash();
    for (tag, trained) in &baselines {
        if let crate::training::RunOutcome::SolverFailure { .. } = trained.outcome {
            // training-time failures belong on the report even when the
            // stored model still evaluates
            for m in report.methods.iter_mut().filter(|m| &m.method == tag) {
                m.outcome = format!("training: {}", trained.outcome.label());
            }
        }
    }
    emit_report(&report, &args.out)?;
    println!("benchmark report written to {}", args.out.join("report.csv").display());
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let cfg = RunConfig::resolve("sweep", &args.common, None)?;
    let layers = match &args.layers {
        Some(text) => parse_usize_list(text)
            .ok_or_else(|| Error::InvalidConfig(format!("bad --layers `{text}`")))?,
        None => cfg.usize_list("sweep.layers")?,
    };
    let hidden = match &args.hidden {
        Some(text) => parse_usize_list(text)
            .ok_or_else(|| Error::InvalidConfig(format!("bad --hidden `{text}`")))?,
        None => cfg.usize_list("sweep.hidden")?,
    };
    if layers.is_empty() || hidden.is_empty() {
        return Err(Error::InvalidConfig("sweep needs layer and hidden lists".into()));
    }
    let dataset = cfg.dataset()?;
    cfg.stamp(&args.common.out)?;
    let train_cfg = cfg.train_config()?;
    let bench_cfg = cfg.bench_config()?;

    let mut cells = Vec::new();
    for &l in &layers {
        for &h in &hidden {
            if !cells.contains(&(l, h)) {
                cells.push((l, h));
            }
        }
    }

    let mut rows = String::from("layers,hidden,mse_interpolation,mse_generalization,time_ms,time_ms_std,outcome\n");
    for (l, h) in cells {
        let mut inn_spec = cfg.inn_spec()?;
        inn_spec.blocks = l;
        inn_spec.subnet_hidden = vec![h];
        let cell_dir = args.common.out.join(format!("cell_l{l}_h{h}"));
        fs::create_dir_all(&cell_dir).map_err(|e| Error::io(cell_dir.display().to_string(), e))?;
        let outcome = train_diffeo(&dataset, &inn_spec, &cfg.base_spec()?, &train_cfg);
        match outcome {
            Ok(trained) => {
                write_history(&trained.history, &cell_dir.join("history.csv"))?;
                save_model(&Model::Diffeo(trained.model.clone()), &cell_dir.join("model.model"))?;
                let subjects = vec![("ours".to_string(), Subject::Diffeo(&trained.model))];
                let report = benchmark(&subjects, &dataset, &bench_cfg)?;
                let m = &report.methods[0];
                let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                let _ = writeln!(
                    rows,
                    "{l},{h},{},{},{},{},{}",
                    fmt(m.mse_interp),
                    fmt(m.mse_gen),
                    fmt(m.time_ms_mean),
                    fmt(m.time_ms_std),
                    m.outcome
                );
            }
            Err(e) if e.is_numerical() => {
                let _ = writeln!(rows, "{l},{h},,,,,failed: {e}");
            }
            Err(e) => return Err(e),
        }
    }
    write_file(&args.common.out.join("sweep.csv"), &rows)?;
    println!("sweep written to {}", args.common.out.join("sweep.csv").display());
    Ok(())
}
