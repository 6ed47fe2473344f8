//! Invertible network built from affine coupling blocks.
//!
//! Each block splits its input into two halves, rescales and shifts one half
//! by functions of the other, then does the same to the second half using the
//! freshly updated first half. Scale-and-shift with an exact algebraic
//! inverse means the whole network inverts without any iterative solve, and
//! no Jacobian determinants are ever needed.
//!
//! Between blocks the coordinates are mixed by a fixed, seeded permutation so
//! every coordinate gets transformed somewhere in the stack.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::ctx::{Ctx, Dual, Eager};
use crate::error::{Error, Result};
use crate::nn::{mlp_forward, Mlp, MlpConfig, MlpRefs};
use crate::tensor::{invert_permutation, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct InnConfig {
    /// Total state dimension n.
    pub dim: usize,
    /// Number of coupling blocks.
    pub blocks: usize,
    /// Hidden layer sizes of every subnetwork.
    pub subnet_hidden: Vec<usize>,
    /// Clamp amplitude for the scale exponents.
    pub clamp: f64,
}

impl InnConfig {
    pub fn new(dim: usize) -> Self {
        InnConfig {
            dim,
            blocks: 5,
            subnet_hidden: vec![1500],
            clamp: 2.0,
        }
    }

    pub fn with_blocks(mut self, blocks: usize) -> Self {
        self.blocks = blocks;
        self
    }

    pub fn with_subnet_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.subnet_hidden = hidden;
        self
    }

    pub fn with_clamp(mut self, clamp: f64) -> Self {
        self.clamp = clamp;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidConfig(format!(
                "coupling blocks need dim >= 2, got {}",
                self.dim
            )));
        }
        if self.blocks == 0 {
            return Err(Error::InvalidConfig("need at least one block".into()));
        }
        if !(self.clamp > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "clamp must be positive, got {}",
                self.clamp
            )));
        }
        Ok(())
    }
}

/// One reversible unit: scale/shift of each half driven by the other.
#[derive(Debug, Clone)]
pub struct CouplingBlock {
    /// Width of the first half, `floor(n / 2)`.
    pub split: usize,
    /// Maps first half -> second half sizes.
    pub s1: Mlp,
    pub t1: Mlp,
    /// Maps second half -> first half sizes.
    pub s2: Mlp,
    pub t2: Mlp,
    pub clamp: f64,
}

#[derive(Debug, Clone)]
pub struct BlockRefs<R> {
    pub s1: MlpRefs<R>,
    pub t1: MlpRefs<R>,
    pub s2: MlpRefs<R>,
    pub t2: MlpRefs<R>,
}

impl CouplingBlock {
    fn init<R: Rng>(dim: usize, hidden: &[usize], clamp: f64, rng: &mut R) -> Result<Self> {
        let k = dim / 2;
        let m = dim - k;
        let sub = |i, o, rng: &mut R| {
            Mlp::init(
                MlpConfig::new(i, o).with_hidden(hidden.to_vec()),
                rng,
                true,
            )
        };
        Ok(CouplingBlock {
            split: k,
            s1: sub(k, m, rng)?,
            t1: sub(k, m, rng)?,
            s2: sub(m, k, rng)?,
            t2: sub(m, k, rng)?,
            clamp,
        })
    }

    fn bind<C: Ctx>(&self, cx: &mut C) -> BlockRefs<C::R> {
        BlockRefs {
            s1: self.s1.bind(cx),
            t1: self.t1.bind(cx),
            s2: self.s2.bind(cx),
            t2: self.t2.bind(cx),
        }
    }

    fn params(&self) -> Vec<&Tensor> {
        let mut out = self.s1.params();
        out.extend(self.t1.params());
        out.extend(self.s2.params());
        out.extend(self.t2.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.s1.params_mut();
        out.extend(self.t1.params_mut());
        out.extend(self.s2.params_mut());
        out.extend(self.t2.params_mut());
        out
    }
}

/// Soft-clamp a raw scale exponent to `(-clamp, clamp)` while staying smooth
/// and exactly reproducible in the inverse pass.
fn clamped<C: Ctx>(cx: &mut C, raw: &C::R, clamp: f64) -> Result<C::R> {
    let scaled = cx.scale(raw, 1.0 / clamp)?;
    let squashed = cx.tanh(&scaled)?;
    cx.scale(&squashed, clamp)
}

pub fn block_forward<C: Ctx>(cx: &mut C, block: &BlockRefs<C::R>, clamp: f64, split: usize, x: &C::R) -> Result<C::R> {
    let (u1, u2) = cx.split(x, split)?;
    let s2u2 = mlp_forward(cx, &block.s2, &u2)?;
    let s2u2 = clamped(cx, &s2u2, clamp)?;
    let t2u2 = mlp_forward(cx, &block.t2, &u2)?;
    let e2 = cx.exp(&s2u2)?;
    let scaled1 = cx.mul(&u1, &e2)?;
    let v1 = cx.add(&scaled1, &t2u2)?;

    let s1v1 = mlp_forward(cx, &block.s1, &v1)?;
    let s1v1 = clamped(cx, &s1v1, clamp)?;
    let t1v1 = mlp_forward(cx, &block.t1, &v1)?;
    let e1 = cx.exp(&s1v1)?;
    let scaled2 = cx.mul(&u2, &e1)?;
    let v2 = cx.add(&scaled2, &t1v1)?;

    cx.concat(&[v1, v2])
}

pub fn block_inverse<C: Ctx>(cx: &mut C, block: &BlockRefs<C::R>, clamp: f64, split: usize, y: &C::R) -> Result<C::R> {
    let (v1, v2) = cx.split(y, split)?;
    let s1v1 = mlp_forward(cx, &block.s1, &v1)?;
    let s1v1 = clamped(cx, &s1v1, clamp)?;
    let t1v1 = mlp_forward(cx, &block.t1, &v1)?;
    let shifted2 = cx.sub(&v2, &t1v1)?;
    let neg_s1 = cx.neg(&s1v1)?;
    let e1 = cx.exp(&neg_s1)?;
    let u2 = cx.mul(&shifted2, &e1)?;

    let s2u2 = mlp_forward(cx, &block.s2, &u2)?;
    let s2u2 = clamped(cx, &s2u2, clamp)?;
    let t2u2 = mlp_forward(cx, &block.t2, &u2)?;
    let shifted1 = cx.sub(&v1, &t2u2)?;
    let neg_s2 = cx.neg(&s2u2)?;
    let e2 = cx.exp(&neg_s2)?;
    let u1 = cx.mul(&shifted1, &e2)?;

    cx.concat(&[u1, u2])
}

/// The diffeomorphism: a stack of coupling blocks with a fixed coordinate
/// permutation applied before each block.
#[derive(Debug)]
pub struct Inn {
    pub config: InnConfig,
    pub blocks: Vec<CouplingBlock>,
    pub permutations: Vec<Vec<usize>>,
    inverse_permutations: Vec<Vec<usize>>,
    batched_forward_calls: AtomicU64,
}

impl Clone for Inn {
    fn clone(&self) -> Self {
        Inn {
            config: self.config.clone(),
            blocks: self.blocks.clone(),
            permutations: self.permutations.clone(),
            inverse_permutations: self.inverse_permutations.clone(),
            batched_forward_calls: AtomicU64::new(0),
        }
    }
}

/// Bound parameter handles for a whole network.
#[derive(Debug, Clone)]
pub struct InnRefs<R> {
    pub blocks: Vec<BlockRefs<R>>,
}

impl Inn {
    /// Identity-initialized network: all subnet output layers start at zero,
    /// so forward and inverse are exactly the identity map.
    pub fn init<R: Rng>(config: InnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::with_capacity(config.blocks);
        let mut permutations = Vec::with_capacity(config.blocks);
        for _ in 0..config.blocks {
            blocks.push(CouplingBlock::init(
                config.dim,
                &config.subnet_hidden,
                config.clamp,
                rng,
            )?);
            let mut perm: Vec<usize> = (0..config.dim).collect();
            perm.shuffle(rng);
            permutations.push(perm);
        }
        let inverse_permutations = permutations.iter().map(|p| invert_permutation(p)).collect();
        Ok(Inn {
            config,
            blocks,
            permutations,
            inverse_permutations,
            batched_forward_calls: AtomicU64::new(0),
        })
    }

    /// Reassemble a network from stored blocks and permutations.
    pub fn from_parts(
        config: InnConfig,
        blocks: Vec<CouplingBlock>,
        permutations: Vec<Vec<usize>>,
    ) -> Result<Self> {
        config.validate()?;
        if blocks.len() != config.blocks || permutations.len() != config.blocks {
            return Err(Error::InvalidConfig(format!(
                "expected {} blocks and permutations, got {} and {}",
                config.blocks,
                blocks.len(),
                permutations.len()
            )));
        }
        for perm in &permutations {
            let mut seen = vec![false; config.dim];
            if perm.len() != config.dim || perm.iter().any(|&p| p >= config.dim || std::mem::replace(&mut seen[p], true)) {
                return Err(Error::InvalidConfig(format!(
                    "permutation {perm:?} is not a bijection on 0..{}",
                    config.dim
                )));
            }
        }
        let inverse_permutations = permutations.iter().map(|p| invert_permutation(p)).collect();
        Ok(Inn {
            config,
            blocks,
            permutations,
            inverse_permutations,
            batched_forward_calls: AtomicU64::new(0),
        })
    }

    /// A generically non-identity network: identity init plus uniform noise
    /// on every parameter. Used by round-trip tests and demos.
    pub fn random<R: Rng>(config: InnConfig, rng: &mut R, amplitude: f64) -> Result<Self> {
        let mut inn = Inn::init(config, rng)?;
        for p in inn.params_mut() {
            for v in p.data_mut() {
                *v += rng.random_range(-amplitude..amplitude);
            }
        }
        Ok(inn)
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn bind<C: Ctx>(&self, cx: &mut C) -> InnRefs<C::R> {
        InnRefs {
            blocks: self.blocks.iter().map(|b| b.bind(cx)).collect(),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.blocks.iter().flat_map(|b| b.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.blocks.iter_mut().flat_map(|b| b.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.numel()).sum()
    }

    fn check_dim(&self, x: &Tensor, what: &'static str) -> Result<()> {
        if x.last_dim() != self.config.dim {
            return Err(Error::ShapeMismatch {
                op: what,
                detail: format!(
                    "network dim is {}, input last axis is {}",
                    self.config.dim,
                    x.last_dim()
                ),
            });
        }
        Ok(())
    }

    /// y = F(x) for a whole batch of row states inside any context.
    /// Each call is one batched pass regardless of batch size.
    ///
    /// Every block works on a permuted view of the coordinates and restores
    /// the original order afterwards, so a zero-weight network is exactly
    /// the identity while different coordinate pairs still meet in every
    /// block.
    pub fn forward_in<C: Ctx>(&self, cx: &mut C, refs: &InnRefs<C::R>, x: &C::R) -> Result<C::R> {
        self.batched_forward_calls.fetch_add(1, Ordering::Relaxed);
        let mut h = x.clone();
        for i in 0..self.blocks.len() {
            let block = &self.blocks[i];
            h = cx.permute(&h, &self.permutations[i])?;
            h = block_forward(cx, &refs.blocks[i], block.clamp, block.split, &h)?;
            h = cx.permute(&h, &self.inverse_permutations[i])?;
        }
        Ok(h)
    }

    /// x = F^-1(y); exact inverse of `forward_in`.
    pub fn inverse_in<C: Ctx>(&self, cx: &mut C, refs: &InnRefs<C::R>, y: &C::R) -> Result<C::R> {
        let mut h = y.clone();
        for i in (0..self.blocks.len()).rev() {
            let block = &self.blocks[i];
            h = cx.permute(&h, &self.permutations[i])?;
            h = block_inverse(cx, &refs.blocks[i], block.clamp, block.split, &h)?;
            h = cx.permute(&h, &self.inverse_permutations[i])?;
        }
        Ok(h)
    }

    /// Eager forward pass; accepts `[n]` or `[rows, n]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_dim(x, "inn::forward")?;
        let (x2, was_vector) = as_rows(x);
        let mut cx = Eager;
        let refs = self.bind(&mut cx);
        let y = self.forward_in(&mut cx, &refs, &x2)?;
        Ok(restore_rank(y, was_vector))
    }

    /// Eager inverse pass; accepts `[n]` or `[rows, n]`.
    pub fn inverse(&self, y: &Tensor) -> Result<Tensor> {
        self.check_dim(y, "inn::inverse")?;
        let (y2, was_vector) = as_rows(y);
        let mut cx = Eager;
        let refs = self.bind(&mut cx);
        let x = self.inverse_in(&mut cx, &refs, &y2)?;
        Ok(restore_rank(x, was_vector))
    }

    /// Jacobian-vector product `J_F(x) v` by a forward-mode pass.
    ///
    /// Exists for the relatedness oracle; trajectory generation never needs
    /// the Jacobian.
    pub fn jvp(&self, x: &Tensor, v: &Tensor) -> Result<Tensor> {
        self.check_dim(x, "inn::jvp")?;
        if x.shape() != v.shape() {
            return Err(Error::ShapeMismatch {
                op: "inn::jvp",
                detail: format!("{:?} vs {:?}", x.shape(), v.shape()),
            });
        }
        let (x2, was_vector) = as_rows(x);
        let (v2, _) = as_rows(v);
        let mut cx = Dual;
        let refs = self.bind(&mut cx);
        let seed = cx.seed(x2, v2)?;
        let out = self.forward_in(&mut cx, &refs, &seed)?;
        out.tangent.ensure_finite("inn::jvp tangent")?;
        out.value.ensure_finite("inn::jvp value")?;
        Ok(restore_rank(out.tangent, was_vector))
    }

    /// How many batched forward passes have run on this network.
    pub fn forward_call_count(&self) -> u64 {
        self.batched_forward_calls.load(Ordering::Relaxed)
    }

    pub fn reset_forward_call_count(&self) {
        self.batched_forward_calls.store(0, Ordering::Relaxed);
    }
}

/// Build `InnRefs` from externally created parameter nodes, in the same
/// order `Inn::params()` reports them. Test support for gradient checks that
/// need to own the parameter leaves.
#[cfg(test)]
pub(crate) fn rebind_from_ids(
    inn: &Inn,
    ids: &[crate::autodiff::NodeId],
) -> InnRefs<crate::autodiff::NodeId> {
    let mut cursor = 0;
    let mut next = || {
        let id = ids[cursor];
        cursor += 1;
        id
    };
    let mut blocks = Vec::with_capacity(inn.blocks.len());
    for block in &inn.blocks {
        let mut take_mlp = |mlp: &Mlp| {
            let weights = (0..mlp.weights.len()).map(|_| next()).collect();
            let biases = (0..mlp.biases.len()).map(|_| next()).collect();
            MlpRefs {
                weights,
                biases,
                activation: mlp.config.activation,
            }
        };
        blocks.push(BlockRefs {
            s1: take_mlp(&block.s1),
            t1: take_mlp(&block.t1),
            s2: take_mlp(&block.s2),
            t2: take_mlp(&block.t2),
        });
    }
    InnRefs { blocks }
}

fn as_rows(t: &Tensor) -> (Tensor, bool) {
    if t.rank() == 1 {
        let n = t.numel();
        (
            Tensor::new(vec![1, n], t.data().to_vec()).expect("rank-1 reshape"),
            true,
        )
    } else {
        (t.clone(), false)
    }
}

fn restore_rank(t: Tensor, was_vector: bool) -> Tensor {
    if was_vector {
        Tensor::vector(t.data().to_vec())
    } else {
        t
    }
}
