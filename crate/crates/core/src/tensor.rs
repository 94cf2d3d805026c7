//! Dense row-major `f64` arrays and the pure forward kernels used by the tape.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::ShapeMismatch {
                op: "new",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self {
            shape: vec![values.len()],
            data: values.to_vec(),
        }
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    /// Size of the trailing axis (1 for scalars).
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape,
                rhs: shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn finite(self, op: &'static str) -> Result<Self> {
        if self.all_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(op))
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    Ok(())
}

fn zip_with(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    same_shape(op, a, b)?;
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
    Tensor {
        shape: a.shape.clone(),
        data,
    }
    .finite(op)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with("add", a, b, |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with("sub", a, b, |x, y| x - y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with("mul", a, b, |x, y| x * y)
}

pub fn scale(a: &Tensor, k: f64) -> Result<Tensor> {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|x| x * k).collect(),
    }
    .finite("scale")
}

/// Exact GeLU, `x·Φ(x)`.
#[inline]
pub fn gelu_scalar(x: f64) -> f64 {
    x * math::norm_cdf(x)
}

/// `d/dx [x·Φ(x)] = Φ(x) + x·φ(x)`.
#[inline]
pub fn gelu_grad_scalar(x: f64) -> f64 {
    math::norm_cdf(x) + x * math::norm_pdf(x)
}

pub fn gelu(a: &Tensor) -> Result<Tensor> {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|&x| gelu_scalar(x)).collect(),
    }
    .finite("gelu")
}

pub fn sum(a: &Tensor) -> Result<Tensor> {
    Tensor::scalar(a.data.iter().sum()).finite("sum")
}

pub fn mean(a: &Tensor) -> Result<Tensor> {
    if a.data.is_empty() {
        return Err(Error::invalid("mean of an empty tensor"));
    }
    Tensor::scalar(a.data.iter().sum::<f64>() / a.data.len() as f64).finite("mean")
}

/// `a[..., K] · b[K, N] -> [..., N]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let k = a.last_dim();
    if b.shape.len() != 2 || b.shape[0] != k || a.shape.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let n = b.shape[1];
    let m = a.data.len() / k.max(1);
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, 1.0, &a.data, k, 1, &b.data, n, 1, 0.0, &mut out, n, 1);
    let mut shape = a.shape.clone();
    *shape.last_mut().unwrap() = n;
    Tensor { shape, data: out }.finite("matmul")
}

/// `a[..., K] · w[K, N] + b[N]`, with the bias written before the product
/// accumulates so nothing is broadcast.
pub fn linear(a: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let k = a.last_dim();
    if w.shape.len() != 2 || w.shape[0] != k || a.shape.is_empty() || b.shape != [w.shape[1]] {
        return Err(Error::ShapeMismatch {
            op: "linear",
            lhs: a.shape.clone(),
            rhs: w.shape.clone(),
        });
    }
    let n = w.shape[1];
    let m = a.data.len() / k.max(1);
    let mut out = Vec::with_capacity(m * n);
    for _ in 0..m {
        out.extend_from_slice(&b.data);
    }
    gemm(m, k, n, 1.0, &a.data, k, 1, &w.data, n, 1, 1.0, &mut out, n, 1);
    let mut shape = a.shape.clone();
    *shape.last_mut().unwrap() = n;
    Tensor { shape, data: out }.finite("linear")
}

/// Slice `len` entries starting at `start` along the last axis.
pub fn slice_last(a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let c = a.last_dim();
    if a.shape.is_empty() || start + len > c {
        return Err(Error::invalid("slice range outside the last axis"));
    }
    let rows = a.data.len() / c;
    let mut data = Vec::with_capacity(rows * len);
    for r in 0..rows {
        data.extend_from_slice(&a.data[r * c + start..r * c + start + len]);
    }
    let mut shape = a.shape.clone();
    *shape.last_mut().unwrap() = len;
    Ok(Tensor { shape, data })
}

/// Concatenate along the last (channel) axis; leading axes must agree.
pub fn concat_last(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| Error::invalid("concat of nothing"))?;
    let lead = &first.shape[..first.shape.len().saturating_sub(1)];
    for p in parts {
        if p.shape.is_empty() || &p.shape[..p.shape.len() - 1] != lead {
            return Err(Error::ShapeMismatch {
                op: "concat",
                lhs: first.shape.clone(),
                rhs: p.shape.clone(),
            });
        }
    }
    let total: usize = parts.iter().map(|p| p.last_dim()).sum();
    let rows: usize = lead.iter().product();
    let mut data = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for p in parts {
            let c = p.last_dim();
            data.extend_from_slice(&p.data[r * c..(r + 1) * c]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total);
    Ok(Tensor { shape, data })
}

/// Repeat `a` over new leading axes; `a.shape` must be a suffix of `shape`.
pub fn broadcast_to(a: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let k = a.shape.len();
    if k > shape.len() || shape[shape.len() - k..] != a.shape[..] {
        return Err(Error::ShapeMismatch {
            op: "broadcast",
            lhs: a.shape.clone(),
            rhs: shape.to_vec(),
        });
    }
    let reps: usize = shape[..shape.len() - k].iter().product();
    let mut data = Vec::with_capacity(reps * a.data.len());
    for _ in 0..reps {
        data.extend_from_slice(&a.data);
    }
    Ok(Tensor {
        shape: shape.to_vec(),
        data,
    })
}

/// Sum over leading axes so the result has `shape` (inverse of broadcast).
pub(crate) fn reduce_to(g: &Tensor, shape: &[usize]) -> Tensor {
    let inner: usize = shape.iter().product();
    let mut out = vec![0.0; inner];
    for chunk in g.data.chunks_exact(inner.max(1)) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    Tensor {
        shape: shape.to_vec(),
        data: out,
    }
}

/// `C = alpha·A·B + beta·C` for strided row/column layouts.
///
/// `A` is `m×k`, `B` is `k×n`, `C` is `m×n`; strides are in elements.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let span = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs + 1;
    assert!(span(m, n, rsc, csc) <= c.len(), "gemm: C out of bounds");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let idx = i * rsc + j * csc;
                c[idx] = if beta == 0.0 { 0.0 } else { beta * c[idx] };
            }
        }
        return;
    }
    assert!(span(m, k, rsa, csa) <= a.len(), "gemm: A out of bounds");
    assert!(span(k, n, rsb, csb) <= b.len(), "gemm: B out of bounds");
    // SAFETY: the asserts above bound every index the kernel touches, and `c`
    // is uniquely borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructor_checks_numel() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn add_componentwise() {
        let a = Tensor::from_slice(&[1.0, 2.0]);
        let b = Tensor::from_slice(&[3.0, 4.0]);
        assert_eq!(add(&a, &b).unwrap().data(), &[4.0, 6.0]);
        assert!(add(&a, &Tensor::from_slice(&[1.0])).is_err());
    }

    #[test]
    fn gelu_fixes_zero() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!((gelu_scalar(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
    }

    #[test]
    fn identity_matmul() {
        let eye = Tensor::new(vec![3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let a = Tensor::new(vec![3, 3], (1..=9).map(|v| v as f64).collect()).unwrap();
        assert_eq!(matmul(&eye, &a).unwrap(), a);
    }

    #[test]
    fn matmul_batched_rows() {
        let a = Tensor::new(vec![2, 2, 3], (0..12).map(|v| v as f64).collect()).unwrap();
        let b = Tensor::new(vec![3, 1], vec![1.0, 1.0, 1.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 2, 1]);
        assert_eq!(c.data(), &[3.0, 12.0, 21.0, 30.0]);
    }

    #[test]
    fn non_finite_is_an_error() {
        let a = Tensor::from_slice(&[f64::MAX]);
        assert_eq!(scale(&a, 10.0), Err(Error::NonFinite("scale")));
    }

    #[test]
    fn concat_slice_and_broadcast() {
        let a = Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = concat_last(&[&a, &b]).unwrap();
        assert_eq!(c.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        assert_eq!(slice_last(&c, 1, 2).unwrap(), b);
        let bias = Tensor::from_slice(&[1.0, -1.0]);
        let bb = broadcast_to(&bias, &[3, 2]).unwrap();
        assert_eq!(bb.data(), &[1.0, -1.0, 1.0, -1.0, 1.0, -1.0]);
        assert_eq!(reduce_to(&bb, &[2]).data(), &[3.0, -3.0]);
        assert!(broadcast_to(&bias, &[2, 3]).is_err());
    }
}
