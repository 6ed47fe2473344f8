//! Fully connected subnetworks shared by the coupling blocks, the neural
//! base dynamics, and the direct-learning baselines.

use rand::Rng;

use crate::ctx::Ctx;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
}

impl Activation {
    pub fn tag(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidConfig(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpConfig {
    /// One hidden layer of 1500 units, the default subnetwork size.
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        MlpConfig {
            input_dim,
            hidden: vec![1500],
            output_dim,
            activation: Activation::Tanh,
        }
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig(format!(
                "all MLP dims must be positive: in={}, hidden={:?}, out={}",
                self.input_dim, self.hidden, self.output_dim
            )));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }
}

/// Dense network with weights stored as `[fan_in, fan_out]` matrices so a
/// batch of row vectors flows through plain matmuls.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub config: MlpConfig,
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

/// Bound handles for one MLP inside some evaluation context.
#[derive(Debug, Clone)]
pub struct MlpRefs<R> {
    pub weights: Vec<R>,
    pub biases: Vec<R>,
    pub activation: Activation,
}

impl Mlp {
    /// Uniform `±1/sqrt(fan_in)` initialization. With `zero_final` the last
    /// layer starts at exactly zero, so the network's output is zero.
    pub fn init<R: Rng>(config: MlpConfig, rng: &mut R, zero_final: bool) -> Result<Self> {
        config.validate()?;
        let dims = config.layer_dims();
        let last = dims.len() - 1;
        let mut weights = Vec::with_capacity(dims.len());
        let mut biases = Vec::with_capacity(dims.len());
        for (i, (fan_in, fan_out)) in dims.iter().enumerate() {
            if zero_final && i == last {
                weights.push(Tensor::zeros(&[*fan_in, *fan_out]));
                biases.push(Tensor::zeros(&[*fan_out]));
            } else {
                let bound = 1.0 / (*fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                weights.push(Tensor::new(vec![*fan_in, *fan_out], data)?);
                biases.push(Tensor::zeros(&[*fan_out]));
            }
        }
        Ok(Mlp {
            config,
            weights,
            biases,
        })
    }

    pub fn bind<C: Ctx>(&self, cx: &mut C) -> MlpRefs<C::R> {
        MlpRefs {
            weights: self.weights.iter().map(|w| cx.param(w)).collect(),
            biases: self.biases.iter().map(|b| cx.param(b)).collect(),
            activation: self.config.activation,
        }
    }

    /// Parameter tensors in binding order: all weights, then all biases.
    pub fn params(&self) -> Vec<&Tensor> {
        self.weights.iter().chain(self.biases.iter()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Tensor::numel).sum::<usize>()
            + self.biases.iter().map(Tensor::numel).sum::<usize>()
    }
}

/// Run a batch of row vectors `[rows, input_dim]` through the network.
pub fn mlp_forward<C: Ctx>(cx: &mut C, refs: &MlpRefs<C::R>, x: &C::R) -> Result<C::R> {
    let last = refs.weights.len() - 1;
    let mut h = x.clone();
    for i in 0..refs.weights.len() {
        let lin = cx.matmul(&h, &refs.weights[i])?;
        h = cx.add_row(&lin, &refs.biases[i])?;
        if i != last {
            h = match refs.activation {
                Activation::Tanh => cx.tanh(&h)?,
            };
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctx::Eager;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn zero_final_layer_gives_zero_output() {
        let mut rng = StdRng::seed_from_u64(0);
        let mlp = Mlp::init(MlpConfig::new(3, 2).with_hidden(vec![8]), &mut rng, true).unwrap();
        let mut cx = Eager;
        let refs = mlp.bind(&mut cx);
        let x = Tensor::matrix(4, 3, vec![0.5; 12]).unwrap();
        let y = mlp_forward(&mut cx, &refs, &x).unwrap();
        assert_eq!(y.shape(), &[4, 2]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_zero_dims() {
        assert!(MlpConfig::new(0, 2).validate().is_err());
        assert!(MlpConfig::new(2, 2).with_hidden(vec![0]).validate().is_err());
    }

    #[test]
    fn batched_forward_matches_per_row() {
        let mut rng = StdRng::seed_from_u64(1);
        let mlp = Mlp::init(MlpConfig::new(3, 3).with_hidden(vec![6, 5]), &mut rng, false).unwrap();
        let mut cx = Eager;
        let refs = mlp.bind(&mut cx);
        let rows = 7;
        let data: Vec<f64> = (0..rows * 3).map(|i| (i as f64) * 0.1 - 1.0).collect();
        let batch = Tensor::matrix(rows, 3, data.clone()).unwrap();
        let full = mlp_forward(&mut cx, &refs, &batch).unwrap();
        for r in 0..rows {
            let single = Tensor::matrix(1, 3, data[r * 3..(r + 1) * 3].to_vec()).unwrap();
            let y = mlp_forward(&mut cx, &refs, &single).unwrap();
            for c in 0..3 {
                assert_eq!(y.at(0, c).to_bits(), full.at(r, c).to_bits());
            }
        }
    }
}
