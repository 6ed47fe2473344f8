//! Dense row-major tensors of `f64` and the primitive operations every
//! evaluation mode (taped, eager, dual) shares.
//!
//! Shapes are rank 1 (`[n]`) or rank 2 (`[rows, cols]`); reductions produce
//! `[1]`. All elementwise operations require exactly matching shapes except
//! for the two documented broadcasts: row-vector addition and scalar
//! multiplication by a one-element tensor.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::ShapeMismatch {
                op: "Tensor::new",
                detail: format!("shape {:?} needs {} entries, got {}", shape, numel, data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// Build a `[rows, cols]` tensor from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    /// Size of the last axis (1 for a true scalar).
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Number of rows when the tensor is viewed as `[rows, last_dim]`.
    pub fn leading(&self) -> usize {
        if self.last_dim() == 0 {
            0
        } else {
            self.numel() / self.last_dim()
        }
    }

    pub fn scalar_value(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    /// Element of a rank-2 tensor.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[row * self.shape[1] + col]
    }

    /// Row `i` of a rank-2 tensor as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.last_dim();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite {
                context: context.to_string(),
            })
        }
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn norm_l2(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        detail: format!("{:?} vs {:?}", a.shape, b.shape),
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape == b.shape {
        Ok(())
    } else {
        Err(mismatch(op, a, b))
    }
}

fn zip(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    same_shape(op, a, b)?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| f(*x, *y)).collect();
    Ok(Tensor {
        shape: a.shape.clone(),
        data,
    })
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|x| f(*x)).collect(),
    }
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip("add", a, b, |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip("sub", a, b, |x, y| x - y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip("mul", a, b, |x, y| x * y)
}

pub fn div(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip("div", a, b, |x, y| x / y)
}

pub fn neg(a: &Tensor) -> Tensor {
    map(a, |x| -x)
}

pub fn exp(a: &Tensor) -> Tensor {
    map(a, f64::exp)
}

pub fn ln(a: &Tensor) -> Tensor {
    map(a, f64::ln)
}

pub fn sin(a: &Tensor) -> Tensor {
    map(a, f64::sin)
}

pub fn cos(a: &Tensor) -> Tensor {
    map(a, f64::cos)
}

pub fn tanh(a: &Tensor) -> Tensor {
    map(a, f64::tanh)
}

pub fn square(a: &Tensor) -> Tensor {
    map(a, |x| x * x)
}

pub fn abs(a: &Tensor) -> Tensor {
    map(a, f64::abs)
}

/// Elementwise sign with sign(0) = 0; the subgradient used for `abs`.
pub fn sign(a: &Tensor) -> Tensor {
    map(a, |x| {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    })
}

pub fn scale(a: &Tensor, c: f64) -> Tensor {
    map(a, |x| c * x)
}

pub fn add_const(a: &Tensor, c: f64) -> Tensor {
    map(a, |x| x + c)
}

pub fn sum(a: &Tensor) -> Tensor {
    Tensor::scalar(a.data.iter().sum())
}

pub fn mean(a: &Tensor) -> Tensor {
    Tensor::scalar(a.data.iter().sum::<f64>() / a.numel() as f64)
}

/// `[m, k] x [k, n] -> [m, n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0] {
        return Err(mismatch("matmul", a, b));
    }
    let (m, k) = (a.shape[0], a.shape[1]);
    let n = b.shape[1];
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a.data[i * k + p];
            let brow = &b.data[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += aip * brow[j];
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 {
        return Err(Error::ShapeMismatch {
            op: "transpose",
            detail: format!("expected rank 2, got {:?}", a.shape),
        });
    }
    let (m, n) = (a.shape[0], a.shape[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data[i * n + j];
        }
    }
    Tensor::new(vec![n, m], out)
}

/// Multiply every element by a one-element tensor.
pub fn mul_scalar(a: &Tensor, s: &Tensor) -> Result<Tensor> {
    if !s.is_scalar() {
        return Err(mismatch("mul_scalar", a, s));
    }
    Ok(scale(a, s.data[0]))
}

/// Add a length-`c` vector to every row of a `[r, c]` tensor (or to a
/// single `[c]` vector).
pub fn add_row_vec(a: &Tensor, v: &Tensor) -> Result<Tensor> {
    let c = a.last_dim();
    if v.numel() != c || v.rank() > 2 {
        return Err(mismatch("add_row_vec", a, v));
    }
    let mut out = a.data.clone();
    for row in out.chunks_mut(c) {
        for (x, b) in row.iter_mut().zip(&v.data) {
            *x += b;
        }
    }
    Ok(Tensor {
        shape: a.shape.clone(),
        data: out,
    })
}

/// Sum a `[r, c]` tensor over rows, producing the shape of `v_like`.
/// The adjoint of `add_row_vec`.
pub fn sum_rows_into(a: &Tensor, v_shape: &[usize]) -> Tensor {
    let c = a.last_dim();
    let mut out = vec![0.0; c];
    for row in a.data.chunks(c) {
        for (o, x) in out.iter_mut().zip(row) {
            *o += x;
        }
    }
    Tensor {
        shape: v_shape.to_vec(),
        data: out,
    }
}

/// Concatenate along the last axis. All inputs must share rank and leading
/// dimensions.
pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "concat",
            detail: "no inputs".into(),
        });
    }
    let rank = parts[0].rank();
    let lead = parts[0].leading();
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        if p.rank() != rank || p.leading() != lead {
            return Err(Error::ShapeMismatch {
                op: "concat",
                detail: format!("incompatible input shapes {:?}", parts.iter().map(|t| t.shape()).collect::<Vec<_>>()),
            });
        }
        widths.push(p.last_dim());
    }
    let total: usize = widths.iter().sum();
    let mut data = Vec::with_capacity(lead * total);
    for r in 0..lead {
        for p in parts {
            let c = p.last_dim();
            data.extend_from_slice(&p.data[r * c..(r + 1) * c]);
        }
    }
    let mut shape = parts[0].shape.clone();
    *shape.last_mut().unwrap() = total;
    Tensor::new(shape, data)
}

/// Contiguous slice `[start, start+len)` of the last axis.
pub fn slice_last(a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let c = a.last_dim();
    if start + len > c {
        return Err(Error::ShapeMismatch {
            op: "slice_last",
            detail: format!("slice {}..{} out of last dim {}", start, start + len, c),
        });
    }
    let lead = a.leading();
    let mut data = Vec::with_capacity(lead * len);
    for r in 0..lead {
        data.extend_from_slice(&a.data[r * c + start..r * c + start + len]);
    }
    let mut shape = a.shape.clone();
    *shape.last_mut().unwrap() = len;
    Tensor::new(shape, data)
}

/// Scatter `g` (shaped like the slice) back into zeros shaped like `a_shape`.
/// The adjoint of `slice_last`.
pub fn unslice_last(g: &Tensor, a_shape: &[usize], start: usize) -> Tensor {
    let mut out = Tensor::zeros(a_shape);
    let c = out.last_dim();
    let len = g.last_dim();
    for r in 0..g.leading() {
        out.data[r * c + start..r * c + start + len].copy_from_slice(&g.data[r * len..(r + 1) * len]);
    }
    out
}

/// Same data, different shape; element count must match.
pub fn reshape(a: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let numel: usize = shape.iter().product();
    if numel != a.numel() {
        return Err(Error::ShapeMismatch {
            op: "reshape",
            detail: format!("{:?} -> {:?}", a.shape, shape),
        });
    }
    Tensor::new(shape.to_vec(), a.data.clone())
}

/// Reorder the last axis: output column `j` takes input column `perm[j]`.
pub fn permute_last(a: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let c = a.last_dim();
    if perm.len() != c {
        return Err(Error::ShapeMismatch {
            op: "permute_last",
            detail: format!("perm length {} vs last dim {}", perm.len(), c),
        });
    }
    let lead = a.leading();
    let mut data = Vec::with_capacity(a.numel());
    for r in 0..lead {
        let row = &a.data[r * c..(r + 1) * c];
        for &p in perm {
            data.push(row[p]);
        }
    }
    Tensor::new(a.shape.clone(), data)
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; perm.len()];
    for (j, &p) in perm.iter().enumerate() {
        inv[p] = j;
    }
    inv
}

/// Inverse of a square matrix by LU decomposition with partial pivoting.
pub fn matinv(a: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || a.shape[0] != a.shape[1] {
        return Err(Error::ShapeMismatch {
            op: "matinv",
            detail: format!("expected square matrix, got {:?}", a.shape),
        });
    }
    let n = a.shape[0];
    let mut lu = a.data.clone();
    let mut piv: Vec<usize> = (0..n).collect();
    for k in 0..n {
        // pivot selection
        let mut p = k;
        let mut best = lu[k * n + k].abs();
        for i in (k + 1)..n {
            let v = lu[i * n + k].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 {
            return Err(Error::IllConditioned {
                cond: f64::INFINITY,
                bound: f64::MAX,
            });
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            piv.swap(k, p);
        }
        let pivot = lu[k * n + k];
        for i in (k + 1)..n {
            let factor = lu[i * n + k] / pivot;
            lu[i * n + k] = factor;
            for j in (k + 1)..n {
                lu[i * n + j] -= factor * lu[k * n + j];
            }
        }
    }
    // solve A X = I column by column
    let mut inv = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for c in 0..n {
        for i in 0..n {
            col[i] = if piv[i] == c { 1.0 } else { 0.0 };
        }
        // forward substitution (unit lower)
        for i in 0..n {
            for j in 0..i {
                col[i] -= lu[i * n + j] * col[j];
            }
        }
        // back substitution
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                col[i] -= lu[i * n + j] * col[j];
            }
            col[i] /= lu[i * n + i];
        }
        for i in 0..n {
            inv[i * n + c] = col[i];
        }
    }
    Tensor::new(vec![n, n], inv)
}

/// Infinity-norm condition number computed from a matrix and its inverse.
pub fn cond_inf(a: &Tensor, a_inv: &Tensor) -> f64 {
    row_sum_norm(a) * row_sum_norm(a_inv)
}

fn row_sum_norm(a: &Tensor) -> f64 {
    let n = a.shape[1];
    (0..a.shape[0])
        .map(|i| a.data[i * n..(i + 1) * n].iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    debug_assert_eq!(a.shape, b.shape);
    a.data
        .iter()
        .zip(&b.data)
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elementwise_add() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![3.0, 4.0]);
        assert_eq!(add(&a, &b).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn add_shape_mismatch_names_op() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let err = add(&a, &b).unwrap_err().to_string();
        assert!(err.contains("add") && err.contains("[2]") && err.contains("[3]"), "{err}");
    }

    #[test]
    fn matmul_identity() {
        let i2 = Tensor::eye(2);
        let v = Tensor::matrix(2, 1, vec![5.0, 6.0]).unwrap();
        let out = matmul(&i2, &v).unwrap();
        assert_eq!(out.shape(), &[2, 1]);
        assert_eq!(out.data(), &[5.0, 6.0]);
    }

    #[test]
    fn exp_values() {
        let x = Tensor::vector(vec![0.0, std::f64::consts::LN_2]);
        let y = exp(&x);
        assert!((y.data()[0] - 1.0).abs() < 1e-15);
        assert!((y.data()[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn concat_and_split_roundtrip() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::matrix(2, 1, vec![9.0, 8.0]).unwrap();
        let c = concat(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[2, 3]);
        assert_eq!(c.data(), &[1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);
        let left = slice_last(&c, 0, 2).unwrap();
        let right = slice_last(&c, 2, 1).unwrap();
        assert_eq!(left.data(), a.data());
        assert_eq!(right.data(), b.data());
    }

    #[test]
    fn permutation_roundtrip() {
        let x = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let perm = vec![2, 0, 1];
        let y = permute_last(&x, &perm).unwrap();
        assert_eq!(y.data(), &[3.0, 1.0, 2.0, 6.0, 4.0, 5.0]);
        let back = permute_last(&y, &invert_permutation(&perm)).unwrap();
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn matinv_recovers_identity() {
        let a = Tensor::matrix(3, 3, vec![4.0, 1.0, 0.0, 2.0, 5.0, 1.0, 0.5, 1.0, 3.0]).unwrap();
        let inv = matinv(&a).unwrap();
        let prod = matmul(&a, &inv).unwrap();
        assert!(max_abs_diff(&prod, &Tensor::eye(3)) < 1e-12);
    }

    #[test]
    fn matinv_singular_errors() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(matinv(&a).is_err());
    }

    #[test]
    fn transpose_roundtrip() {
        let a = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let tt = transpose(&transpose(&a).unwrap()).unwrap();
        assert_eq!(tt, a);
    }
}
