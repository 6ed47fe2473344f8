//! Evaluation contexts.
//!
//! Model math (coupling blocks, closed-form linear solutions, integrator
//! steps, losses) is written once, generic over [`Ctx`]. Three interpreters
//! run it:
//!
//! * [`crate::autodiff::Tape`] records operations for reverse-mode gradients,
//! * [`Eager`] just computes values (the inference path),
//! * [`Dual`] carries a tangent alongside each value (forward mode), which
//!   yields exact Jacobian-vector products.
//!
//! Writing the formulas once means the trained model and the deployed model
//! cannot drift apart.

use crate::error::Result;
use crate::tensor::{self, Tensor};

pub trait Ctx {
    /// Handle to a value living in this context.
    type R: Clone;

    /// A trainable leaf. Under the tape it is tracked for gradients; under
    /// the other interpreters it is an ordinary value.
    fn param(&mut self, value: &Tensor) -> Self::R;

    /// An untracked value.
    fn constant(&mut self, value: Tensor) -> Self::R;

    /// Current numeric value of a handle.
    fn value(&self, r: &Self::R) -> Tensor;

    fn add(&mut self, a: &Self::R, b: &Self::R) -> Result<Self::R>;
    fn sub(&mut self, a: &Self::R, b: &Self::R) -> Result<Self::R>;
    fn mul(&mut self, a: &Self::R, b: &Self::R) -> Result<Self::R>;
    fn div(&mut self, a: &Self::R, b: &Self::R) -> Result<Self::R>;
    fn neg(&mut self, a: &Self::R) -> Result<Self::R>;

    fn matmul(&mut self, a: &Self::R, b: &Self::R) -> Result<Self::R>;
    fn transpose(&mut self, a: &Self::R) -> Result<Self::R>;
    fn matinv(&mut self, a: &Self::R) -> Result<Self::R>;

    fn exp(&mut self, a: &Self::R) -> Result<Self::R>;
    fn ln(&mut self, a: &Self::R) -> Result<Self::R>;
    fn sin(&mut self, a: &Self::R) -> Result<Self::R>;
    fn cos(&mut self, a: &Self::R) -> Result<Self::R>;
    fn tanh(&mut self, a: &Self::R) -> Result<Self::R>;
    fn square(&mut self, a: &Self::R) -> Result<Self::R>;
    fn abs(&mut self, a: &Self::R) -> Result<Self::R>;

    fn sum(&mut self, a: &Self::R) -> Result<Self::R>;
    fn mean(&mut self, a: &Self::R) -> Result<Self::R>;

    fn concat(&mut self, parts: &[Self::R]) -> Result<Self::R>;
    fn slice(&mut self, a: &Self::R, start: usize, len: usize) -> Result<Self::R>;
    fn permute(&mut self, a: &Self::R, perm: &[usize]) -> Result<Self::R>;
    fn reshape(&mut self, a: &Self::R, shape: &[usize]) -> Result<Self::R>;

    fn scale(&mut self, a: &Self::R, c: f64) -> Result<Self::R>;
    fn add_const(&mut self, a: &Self::R, c: f64) -> Result<Self::R>;

    /// Multiply by a one-element tracked value.
    fn mul_scalar(&mut self, a: &Self::R, s: &Self::R) -> Result<Self::R>;
    /// Broadcast-add a vector over the rows of a matrix.
    fn add_row(&mut self, a: &Self::R, v: &Self::R) -> Result<Self::R>;

    /// Convenience: split into `[0, at)` and `[at, n)` along the last axis.
    fn split(&mut self, a: &Self::R, at: usize) -> Result<(Self::R, Self::R)> {
        let n = self.value(a).last_dim();
        let left = self.slice(a, 0, at)?;
        let right = self.slice(a, at, n - at)?;
        Ok((left, right))
    }
}

/// Plain value evaluation; no gradient bookkeeping at all.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl Ctx for Eager {
    type R = Tensor;

    fn param(&mut self, value: &Tensor) -> Tensor {
        value.clone()
    }

    fn constant(&mut self, value: Tensor) -> Tensor {
        value
    }

    fn value(&self, r: &Tensor) -> Tensor {
        r.clone()
    }

    fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        tensor::add(a, b)
    }

    fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        tensor::sub(a, b)
    }

    fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        tensor::mul(a, b)
    }

    fn div(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        tensor::div(a, b)
    }

    fn neg(&mut self, a: &Tensor) -> Result<Tensor> {
        Ok(tensor::neg(a))
    }

    fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        tensor::matmul(a, b)
    }

    fn transpose(&mut self, a: &Tensor) -> Result<Tensor> {
        tensor::transpose(a)
    }

    fn matinv(&mut self, a: &Tensor) -> Result<Tensor> {
        tensor::matinv(a)
    }

    fn exp(&mut self, a: &Tensor) -> Result<Tensor> {
        Ok(tensor::exp(a))
    }

    fn ln(&mut self, a: &Tensor) -> Result<Tensor> {
        Ok(tensor::ln(a))
    }

    fn sin(&mut self, a: &Tensor) -> Result<Tensor> {
        Ok(tensor::sin(a))
    }

    fn cos(&mut self, a: &Tensor) -> Result<Tensor> {
        Ok(tensor::cos(a))
    }

    fn tanh(&mut self, a: &Tensor) -> Result<Tensor> {
        Ok(tensor::tanh(a))
    }

    fn square(&mut self, a: &Tensor) -> Result<Tensor> {
        Ok(tensor::square(a))
    }

    fn abs(&mut self, a: &Tensor) -> Result<Tensor> {
        Ok(tensor::abs(a))
    }

    fn sum(&mut self, a: &Tensor) -> Result<Tensor> {
        Ok(tensor::sum(a))
    }

    fn mean(&mut self, a: &Tensor) -> Result<Tensor> {
        Ok(tensor::mean(a))
    }

    fn concat(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        let refs: Vec<&Tensor> = parts.iter().collect();
        tensor::concat(&refs)
    }

    fn slice(&mut self, a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
        tensor::slice_last(a, start, len)
    }

    fn permute(&mut self, a: &Tensor, perm: &[usize]) -> Result<Tensor> {
        tensor::permute_last(a, perm)
    }

    fn reshape(&mut self, a: &Tensor, shape: &[usize]) -> Result<Tensor> {
        tensor::reshape(a, shape)
    }

    fn scale(&mut self, a: &Tensor, c: f64) -> Result<Tensor> {
        Ok(tensor::scale(a, c))
    }

    fn add_const(&mut self, a: &Tensor, c: f64) -> Result<Tensor> {
        Ok(tensor::add_const(a, c))
    }

    fn mul_scalar(&mut self, a: &Tensor, s: &Tensor) -> Result<Tensor> {
        tensor::mul_scalar(a, s)
    }

    fn add_row(&mut self, a: &Tensor, v: &Tensor) -> Result<Tensor> {
        tensor::add_row_vec(a, v)
    }
}

/// A value paired with a directional derivative.
#[derive(Debug, Clone)]
pub struct DualVal {
    pub value: Tensor,
    pub tangent: Tensor,
}

impl DualVal {
    fn lifted(value: Tensor) -> Self {
        let tangent = Tensor::zeros(value.shape());
        DualVal { value, tangent }
    }
}

/// Forward-mode interpreter: every operation propagates `(value, tangent)`.
#[derive(Debug, Default, Clone, Copy)]
pub struct Dual;

impl Dual {
    /// A leaf with an explicit tangent; the seed of a Jacobian-vector product.
    pub fn seed(&mut self, value: Tensor, tangent: Tensor) -> Result<DualVal> {
        if value.shape() != tangent.shape() {
            return Err(crate::error::Error::ShapeMismatch {
                op: "Dual::seed",
                detail: format!("{:?} vs {:?}", value.shape(), tangent.shape()),
            });
        }
        Ok(DualVal { value, tangent })
    }
}

impl Ctx for Dual {
    type R = DualVal;

    fn param(&mut self, value: &Tensor) -> DualVal {
        DualVal::lifted(value.clone())
    }

    fn constant(&mut self, value: Tensor) -> DualVal {
        DualVal::lifted(value)
    }

    fn value(&self, r: &DualVal) -> Tensor {
        r.value.clone()
    }

    fn add(&mut self, a: &DualVal, b: &DualVal) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::add(&a.value, &b.value)?,
            tangent: tensor::add(&a.tangent, &b.tangent)?,
        })
    }

    fn sub(&mut self, a: &DualVal, b: &DualVal) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::sub(&a.value, &b.value)?,
            tangent: tensor::sub(&a.tangent, &b.tangent)?,
        })
    }

    fn mul(&mut self, a: &DualVal, b: &DualVal) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::mul(&a.value, &b.value)?,
            tangent: tensor::add(
                &tensor::mul(&a.tangent, &b.value)?,
                &tensor::mul(&a.value, &b.tangent)?,
            )?,
        })
    }

    fn div(&mut self, a: &DualVal, b: &DualVal) -> Result<DualVal> {
        let value = tensor::div(&a.value, &b.value)?;
        // d(a/b) = da/b - (a/b) db/b
        let da_over_b = tensor::div(&a.tangent, &b.value)?;
        let v_db_over_b = tensor::div(&tensor::mul(&value, &b.tangent)?, &b.value)?;
        Ok(DualVal {
            value,
            tangent: tensor::sub(&da_over_b, &v_db_over_b)?,
        })
    }

    fn neg(&mut self, a: &DualVal) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::neg(&a.value),
            tangent: tensor::neg(&a.tangent),
        })
    }

    fn matmul(&mut self, a: &DualVal, b: &DualVal) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::matmul(&a.value, &b.value)?,
            tangent: tensor::add(
                &tensor::matmul(&a.tangent, &b.value)?,
                &tensor::matmul(&a.value, &b.tangent)?,
            )?,
        })
    }

    fn transpose(&mut self, a: &DualVal) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::transpose(&a.value)?,
            tangent: tensor::transpose(&a.tangent)?,
        })
    }

    fn matinv(&mut self, a: &DualVal) -> Result<DualVal> {
        let inv = tensor::matinv(&a.value)?;
        // d(A^-1) = -A^-1 dA A^-1
        let t = tensor::matmul(&tensor::matmul(&inv, &a.tangent)?, &inv)?;
        Ok(DualVal {
            value: inv,
            tangent: tensor::neg(&t),
        })
    }

    fn exp(&mut self, a: &DualVal) -> Result<DualVal> {
        let value = tensor::exp(&a.value);
        let tangent = tensor::mul(&value, &a.tangent)?;
        Ok(DualVal { value, tangent })
    }

    fn ln(&mut self, a: &DualVal) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::ln(&a.value),
            tangent: tensor::div(&a.tangent, &a.value)?,
        })
    }

    fn sin(&mut self, a: &DualVal) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::sin(&a.value),
            tangent: tensor::mul(&tensor::cos(&a.value), &a.tangent)?,
        })
    }

    fn cos(&mut self, a: &DualVal) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::cos(&a.value),
            tangent: tensor::neg(&tensor::mul(&tensor::sin(&a.value), &a.tangent)?),
        })
    }

    fn tanh(&mut self, a: &DualVal) -> Result<DualVal> {
        let value = tensor::tanh(&a.value);
        let one_minus_sq = tensor::add_const(&tensor::neg(&tensor::square(&value)), 1.0);
        Ok(DualVal {
            value,
            tangent: tensor::mul(&one_minus_sq, &a.tangent)?,
        })
    }

    fn square(&mut self, a: &DualVal) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::square(&a.value),
            tangent: tensor::scale(&tensor::mul(&a.value, &a.tangent)?, 2.0),
        })
    }

    fn abs(&mut self, a: &DualVal) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::abs(&a.value),
            tangent: tensor::mul(&tensor::sign(&a.value), &a.tangent)?,
        })
    }

    fn sum(&mut self, a: &DualVal) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::sum(&a.value),
            tangent: tensor::sum(&a.tangent),
        })
    }

    fn mean(&mut self, a: &DualVal) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::mean(&a.value),
            tangent: tensor::mean(&a.tangent),
        })
    }

    fn concat(&mut self, parts: &[DualVal]) -> Result<DualVal> {
        let values: Vec<&Tensor> = parts.iter().map(|p| &p.value).collect();
        let tangents: Vec<&Tensor> = parts.iter().map(|p| &p.tangent).collect();
        Ok(DualVal {
            value: tensor::concat(&values)?,
            tangent: tensor::concat(&tangents)?,
        })
    }

    fn slice(&mut self, a: &DualVal, start: usize, len: usize) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::slice_last(&a.value, start, len)?,
            tangent: tensor::slice_last(&a.tangent, start, len)?,
        })
    }

    fn permute(&mut self, a: &DualVal, perm: &[usize]) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::permute_last(&a.value, perm)?,
            tangent: tensor::permute_last(&a.tangent, perm)?,
        })
    }

    fn reshape(&mut self, a: &DualVal, shape: &[usize]) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::reshape(&a.value, shape)?,
            tangent: tensor::reshape(&a.tangent, shape)?,
        })
    }

    fn scale(&mut self, a: &DualVal, c: f64) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::scale(&a.value, c),
            tangent: tensor::scale(&a.tangent, c),
        })
    }

    fn add_const(&mut self, a: &DualVal, c: f64) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::add_const(&a.value, c),
            tangent: a.tangent.clone(),
        })
    }

    fn mul_scalar(&mut self, a: &DualVal, s: &DualVal) -> Result<DualVal> {
        let value = tensor::mul_scalar(&a.value, &s.value)?;
        let tangent = tensor::add(
            &tensor::mul_scalar(&a.tangent, &s.value)?,
            &tensor::mul_scalar(&a.value, &s.tangent)?,
        )?;
        Ok(DualVal { value, tangent })
    }

    fn add_row(&mut self, a: &DualVal, v: &DualVal) -> Result<DualVal> {
        Ok(DualVal {
            value: tensor::add_row_vec(&a.value, &v.value)?,
            tangent: tensor::add_row_vec(&a.tangent, &v.tangent)?,
        })
    }
}
