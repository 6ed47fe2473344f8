//! Learned-model containers and their on-disk format.
//!
//! Models are stored as a line-oriented text file: configuration scalars in
//! plain decimal (Rust's float formatting round-trips), tensor payloads as
//! hexadecimal f64 bit patterns. Loading a saved file reproduces every
//! parameter bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::base_ode::{Base, LinearBase, LinearBaseConfig, NeuralBase, NeuralBaseConfig};
use crate::ctx::Ctx;
use crate::error::{Error, Result};
use crate::inn::{Inn, InnConfig, InnRefs};
use crate::integrators::{Method, SolverConfig};
use crate::nn::{Activation, Mlp, MlpConfig};
use crate::tensor::Tensor;

/// The learned artifact: diffeomorphism, base dynamics, and augmentation
/// bookkeeping.
#[derive(Debug, Clone)]
pub struct DiffeoModel {
    pub inn: Inn,
    pub base: Base,
    /// Physical (observed) dimension d; the network runs at `aug_dim() >= d`.
    pub data_dim: usize,
    /// Per-dim standardization applied to observations during training,
    /// `(mean, std)`; rollouts undo it.
    pub normalization: Option<(Vec<f64>, Vec<f64>)>,
}

impl DiffeoModel {
    pub fn aug_dim(&self) -> usize {
        self.inn.dim()
    }

    /// Zero-pad observed rows `[B, d]` up to the augmented dimension.
    pub fn augment(&self, y: &Tensor) -> Result<Tensor> {
        let d = self.data_dim;
        let n = self.aug_dim();
        if y.last_dim() != d {
            return Err(Error::ShapeMismatch {
                op: "augment",
                detail: format!("expected last dim {d}, got {}", y.last_dim()),
            });
        }
        if n == d {
            return Ok(y.clone());
        }
        let rows = y.leading();
        let pad = Tensor::zeros(&[rows, n - d]);
        let y2 = crate::tensor::reshape(y, &[rows, d])?;
        crate::tensor::concat(&[&y2, &pad])
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = self.inn.params();
        out.extend(self.base.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.inn.params_mut();
        out.extend(self.base.params_mut());
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.numel()).sum()
    }

    pub fn bind<C: Ctx>(&self, cx: &mut C) -> (InnRefs<C::R>, crate::base_ode::BaseRefs<C::R>) {
        let inn_refs = self.inn.bind(cx);
        let base_refs = self.base.bind(cx);
        (inn_refs, base_refs)
    }
}

/// Direct neural dynamics trained through a differentiable integrator.
#[derive(Debug, Clone)]
pub struct BaselineModel {
    pub dynamics: Mlp,
    pub data_dim: usize,
    pub solver: SolverConfig,
    pub normalization: Option<(Vec<f64>, Vec<f64>)>,
}

impl BaselineModel {
    pub fn aug_dim(&self) -> usize {
        self.dynamics.config.input_dim
    }

    pub fn augment(&self, y: &Tensor) -> Result<Tensor> {
        let d = self.data_dim;
        let n = self.aug_dim();
        if y.last_dim() != d {
            return Err(Error::ShapeMismatch {
                op: "augment",
                detail: format!("expected last dim {d}, got {}", y.last_dim()),
            });
        }
        if n == d {
            return Ok(y.clone());
        }
        let rows = y.leading();
        let pad = Tensor::zeros(&[rows, n - d]);
        let y2 = crate::tensor::reshape(y, &[rows, d])?;
        crate::tensor::concat(&[&y2, &pad])
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.dynamics.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.dynamics.params_mut()
    }

    pub fn param_count(&self) -> usize {
        self.dynamics.param_count()
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    Diffeo(DiffeoModel),
    Baseline(BaselineModel),
}

// ---------------------------------------------------------------------------
// serialization

struct Writer {
    out: String,
}

impl Writer {
    fn new() -> Self {
        Writer {
            out: String::from("morphode-model v1\n"),
        }
    }

    fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.out, "{key} {value}");
    }

    fn list(&mut self, key: &str, values: &[usize]) {
        if values.is_empty() {
            self.kv(key, "-");
        } else {
            let s: Vec<String> = values.iter().map(|v| v.to_string()).collect();
            self.kv(key, s.join(","));
        }
    }

    fn tensor(&mut self, name: &str, t: &Tensor) {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        let _ = write!(self.out, "tensor {name} {} {}", t.rank(), dims.join(" "));
        for v in t.data() {
            let _ = write!(self.out, " {:016x}", v.to_bits());
        }
        self.out.push('\n');
    }

    fn mlp(&mut self, prefix: &str, mlp: &Mlp) {
        self.kv(&format!("{prefix}.in"), mlp.config.input_dim);
        self.list(&format!("{prefix}.hidden"), &mlp.config.hidden);
        self.kv(&format!("{prefix}.out"), mlp.config.output_dim);
        self.kv(&format!("{prefix}.activation"), mlp.config.activation.tag());
        for (i, (w, b)) in mlp.weights.iter().zip(&mlp.biases).enumerate() {
            self.tensor(&format!("{prefix}.w{i}"), w);
            self.tensor(&format!("{prefix}.b{i}"), b);
        }
    }
}

struct Reader<'a> {
    file: String,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Reader<'a> {
    fn new(file: String, text: &'a str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "morphode-model v1")) => Ok(Reader { file, lines }),
            other => Err(Error::Parse {
                file,
                line: 1,
                msg: format!("bad header {:?}", other.map(|(_, l)| l)),
            }),
        }
    }

    fn fail(&self, line: usize, msg: String) -> Error {
        Error::Parse {
            file: self.file.clone(),
            line,
            msg,
        }
    }

    fn next_kv(&mut self, key: &str) -> Result<String> {
        let (idx, line) = self
            .lines
            .next()
            .ok_or_else(|| self.fail(0, format!("missing key `{key}`")))?;
        let lineno = idx + 1;
        let rest = line
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| self.fail(lineno, format!("expected `{key} ...`, got `{line}`")))?;
        Ok(rest.to_string())
    }

    fn usize_kv(&mut self, key: &str) -> Result<usize> {
        let v = self.next_kv(key)?;
        v.parse()
            .map_err(|_| self.fail(0, format!("bad integer for `{key}`: `{v}`")))
    }

    fn f64_kv(&mut self, key: &str) -> Result<f64> {
        let v = self.next_kv(key)?;
        v.parse()
            .map_err(|_| self.fail(0, format!("bad float for `{key}`: `{v}`")))
    }

    fn bool_kv(&mut self, key: &str) -> Result<bool> {
        let v = self.next_kv(key)?;
        match v.as_str() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(self.fail(0, format!("bad bool for `{key}`: `{other}`"))),
        }
    }

    fn list_kv(&mut self, key: &str) -> Result<Vec<usize>> {
        let v = self.next_kv(key)?;
        if v == "-" {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| {
                s.parse()
                    .map_err(|_| self.fail(0, format!("bad list entry `{s}` for `{key}`")))
            })
            .collect()
    }

    fn tensor(&mut self, name: &str) -> Result<Tensor> {
        let (idx, line) = self
            .lines
            .next()
            .ok_or_else(|| self.fail(0, format!("missing tensor `{name}`")))?;
        let lineno = idx + 1;
        let mut parts = line.split(' ');
        if parts.next() != Some("tensor") || parts.next() != Some(name) {
            return Err(self.fail(lineno, format!("expected tensor `{name}`, got `{line}`")));
        }
        let rank: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.fail(lineno, "bad tensor rank".into()))?;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(
                parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| self.fail(lineno, "bad tensor dim".into()))?,
            );
        }
        let data: Vec<f64> = parts
            .map(|s| {
                u64::from_str_radix(s, 16)
                    .map(f64::from_bits)
                    .map_err(|_| self.fail(lineno, format!("bad hex value `{s}`")))
            })
            .collect::<Result<_>>()?;
        Tensor::new(shape, data)
    }

    fn mlp(&mut self, prefix: &str) -> Result<Mlp> {
        let input_dim = self.usize_kv(&format!("{prefix}.in"))?;
        let hidden = self.list_kv(&format!("{prefix}.hidden"))?;
        let output_dim = self.usize_kv(&format!("{prefix}.out"))?;
        let activation = Activation::from_tag(&self.next_kv(&format!("{prefix}.activation"))?)?;
        let config = MlpConfig {
            input_dim,
            hidden: hidden.clone(),
            output_dim,
            activation,
        };
        let layers = hidden.len() + 1;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for i in 0..layers {
            weights.push(self.tensor(&format!("{prefix}.w{i}"))?);
            biases.push(self.tensor(&format!("{prefix}.b{i}"))?);
        }
        Ok(Mlp {
            config,
            weights,
            biases,
        })
    }
}

fn write_normalization(w: &mut Writer, norm: &Option<(Vec<f64>, Vec<f64>)>) {
    match norm {
        None => w.kv("normalization", "0"),
        Some((mean, std)) => {
            w.kv("normalization", "1");
            w.tensor("norm.mean", &Tensor::vector(mean.clone()));
            w.tensor("norm.std", &Tensor::vector(std.clone()));
        }
    }
}

fn read_normalization(r: &mut Reader) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    if r.bool_kv("normalization")? {
        let mean = r.tensor("norm.mean")?;
        let std = r.tensor("norm.std")?;
        Ok(Some((mean.data().to_vec(), std.data().to_vec())))
    } else {
        Ok(None)
    }
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let mut w = Writer::new();
    match model {
        Model::Diffeo(m) => {
            w.kv("kind", "diffeo");
            w.kv("data_dim", m.data_dim);
            write_normalization(&mut w, &m.normalization);
            // invertible network
            w.kv("inn.dim", m.inn.config.dim);
            w.kv("inn.blocks", m.inn.config.blocks);
            w.kv("inn.clamp", m.inn.config.clamp);
            w.list("inn.subnet_hidden", &m.inn.config.subnet_hidden);
            for (i, perm) in m.inn.permutations.iter().enumerate() {
                w.list(&format!("inn.perm{i}"), perm);
            }
            for (i, block) in m.inn.blocks.iter().enumerate() {
                w.mlp(&format!("inn.b{i}.s1"), &block.s1);
                w.mlp(&format!("inn.b{i}.t1"), &block.t1);
                w.mlp(&format!("inn.b{i}.s2"), &block.s2);
                w.mlp(&format!("inn.b{i}.t2"), &block.t2);
            }
            // base
            match &m.base {
                Base::Linear(b) => {
                    w.kv("base.kind", "linear");
                    w.kv("base.dim", b.config.dim);
                    w.kv("base.stable", u8::from(b.config.stable));
                    w.kv("base.epsilon", b.config.epsilon);
                    w.kv("base.cond_bound", b.config.cond_bound);
                    w.tensor("base.basis", &b.basis);
                    w.tensor("base.spectral_re", &b.spectral_re);
                    w.tensor("base.spectral_im", &b.spectral_im);
                }
                Base::Neural(b) => {
                    w.kv("base.kind", "neural");
                    w.kv("base.dim", b.config.dim);
                    w.kv("base.step", b.step);
                    w.mlp("base.g", &b.dynamics);
                }
            }
        }
        Model::Baseline(m) => {
            w.kv("kind", "baseline");
            w.kv("data_dim", m.data_dim);
            write_normalization(&mut w, &m.normalization);
            w.kv("solver.method", m.solver.method.tag());
            match m.solver.step {
                Some(h) => w.kv("solver.step", h),
                None => w.kv("solver.step", "-"),
            }
            w.kv("solver.rtol", m.solver.rtol);
            w.kv("solver.atol", m.solver.atol);
            w.kv("solver.min_step", m.solver.min_step);
            w.kv("solver.max_steps", m.solver.max_steps);
            w.mlp("dynamics", &m.dynamics);
        }
    }
    fs::write(path, w.out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = Reader::new(path.display().to_string(), &text)?;
    let kind = r.next_kv("kind")?;
    match kind.as_str() {
        "diffeo" => {
            let data_dim = r.usize_kv("data_dim")?;
            let normalization = read_normalization(&mut r)?;
            let dim = r.usize_kv("inn.dim")?;
            let blocks = r.usize_kv("inn.blocks")?;
            let clamp = r.f64_kv("inn.clamp")?;
            let subnet_hidden = r.list_kv("inn.subnet_hidden")?;
            let config = InnConfig {
                dim,
                blocks,
                subnet_hidden,
                clamp,
            };
            let mut permutations = Vec::with_capacity(blocks);
            for i in 0..blocks {
                permutations.push(r.list_kv(&format!("inn.perm{i}"))?);
            }
            let mut block_list = Vec::with_capacity(blocks);
            for i in 0..blocks {
                let s1 = r.mlp(&format!("inn.b{i}.s1"))?;
                let t1 = r.mlp(&format!("inn.b{i}.t1"))?;
                let s2 = r.mlp(&format!("inn.b{i}.s2"))?;
                let t2 = r.mlp(&format!("inn.b{i}.t2"))?;
                block_list.push(crate::inn::CouplingBlock {
                    split: dim / 2,
                    s1,
                    t1,
                    s2,
                    t2,
                    clamp,
                });
            }
            let inn = Inn::from_parts(config, block_list, permutations)?;
            let base = match r.next_kv("base.kind")?.as_str() {
                "linear" => {
                    let bdim = r.usize_kv("base.dim")?;
                    let stable = r.bool_kv("base.stable")?;
                    let epsilon = r.f64_kv("base.epsilon")?;
                    let cond_bound = r.f64_kv("base.cond_bound")?;
                    let basis = r.tensor("base.basis")?;
                    let spectral_re = r.tensor("base.spectral_re")?;
                    let spectral_im = r.tensor("base.spectral_im")?;
                    let mut config = LinearBaseConfig::new(bdim);
                    config.stable = stable;
                    config.epsilon = epsilon;
                    config.cond_bound = cond_bound;
                    Base::Linear(LinearBase {
                        config,
                        basis,
                        spectral_re,
                        spectral_im,
                    })
                }
                "neural" => {
                    let bdim = r.usize_kv("base.dim")?;
                    let step = r.f64_kv("base.step")?;
                    let dynamics = r.mlp("base.g")?;
                    let mut config = NeuralBaseConfig::new(bdim);
                    config.hidden = dynamics.config.hidden.clone();
                    Base::Neural(NeuralBase {
                        config,
                        dynamics,
                        step,
                    })
                }
                other => {
                    return Err(Error::Parse {
                        file: path.display().to_string(),
                        line: 0,
                        msg: format!("unknown base kind `{other}`"),
                    })
                }
            };
            Ok(Model::Diffeo(DiffeoModel {
                inn,
                base,
                data_dim,
                normalization,
            }))
        }
        "baseline" => {
            let data_dim = r.usize_kv("data_dim")?;
            let normalization = read_normalization(&mut r)?;
            let method = Method::from_tag(&r.next_kv("solver.method")?)?;
            let step_raw = r.next_kv("solver.step")?;
            let step = if step_raw == "-" {
                None
            } else {
                Some(step_raw.parse().map_err(|_| Error::Parse {
                    file: path.display().to_string(),
                    line: 0,
                    msg: format!("bad step `{step_raw}`"),
                })?)
            };
            let rtol = r.f64_kv("solver.rtol")?;
            let atol = r.f64_kv("solver.atol")?;
            let min_step = r.f64_kv("solver.min_step")?;
            let max_steps = r.usize_kv("solver.max_steps")?;
            let solver = SolverConfig {
                method,
                step,
                rtol,
                atol,
                min_step,
                max_steps,
            };
            let dynamics = r.mlp("dynamics")?;
            Ok(Model::Baseline(BaselineModel {
                dynamics,
                data_dim,
                solver,
                normalization,
            }))
        }
        other => Err(Error::Parse {
            file: path.display().to_string(),
            line: 2,
            msg: format!("unknown model kind `{other}`"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_ode::LinearBaseConfig;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn sample_diffeo(seed: u64) -> DiffeoModel {
        let mut rng = StdRng::seed_from_u64(seed);
        let inn = Inn::random(
            InnConfig::new(4).with_blocks(2).with_subnet_hidden(vec![6]),
            &mut rng,
            0.3,
        )
        .unwrap();
        let base = Base::Linear(LinearBase::init(LinearBaseConfig::new(4).stable(), &mut rng).unwrap());
        DiffeoModel {
            inn,
            base,
            data_dim: 2,
            normalization: None,
        }
    }

    #[test]
    fn diffeo_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        let model = sample_diffeo(3);
        save_model(&Model::Diffeo(model.clone()), &path).unwrap();
        let loaded = match load_model(&path).unwrap() {
            Model::Diffeo(m) => m,
            _ => panic!("wrong kind"),
        };
        assert_eq!(model.data_dim, loaded.data_dim);
        for (a, b) in model.params().iter().zip(loaded.params().iter()) {
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.data().iter().zip(b.data().iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(model.inn.permutations, loaded.inn.permutations);
        // save again: files must be byte-identical
        let path2 = dir.path().join("m2.model");
        save_model(&Model::Diffeo(loaded), &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn baseline_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.model");
        let mut rng = StdRng::seed_from_u64(1);
        let dynamics = Mlp::init(
            MlpConfig::new(4, 4).with_hidden(vec![8, 8]),
            &mut rng,
            false,
        )
        .unwrap();
        let model = BaselineModel {
            dynamics,
            data_dim: 2,
            solver: SolverConfig::from_times(Method::Rk4),
            normalization: Some((vec![0.5, -0.25], vec![2.0, 3.0])),
        };
        save_model(&Model::Baseline(model.clone()), &path).unwrap();
        let loaded = match load_model(&path).unwrap() {
            Model::Baseline(m) => m,
            _ => panic!("wrong kind"),
        };
        assert_eq!(loaded.solver, model.solver);
        assert_eq!(loaded.normalization, model.normalization);
        for (a, b) in model.params().iter().zip(loaded.params().iter()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn augment_pads_with_zeros() {
        let model = sample_diffeo(5);
        let y = Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let a = model.augment(&y).unwrap();
        assert_eq!(a.shape(), &[3, 4]);
        assert_eq!(a.row(1), &[3.0, 4.0, 0.0, 0.0]);
    }
}
