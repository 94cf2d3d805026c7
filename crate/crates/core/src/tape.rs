//! Define-by-run reverse-mode autodiff over [`Tensor`] values.
//!
//! Every operation evaluates eagerly and appends a node to the [`Tape`]. Nodes
//! only ever reference earlier nodes, so the index order is a topological
//! order and [`Tape::backward`] is a single reverse sweep. A tape built with
//! [`Tape::untraced`] evaluates the same graph without recording parents; it is
//! what sampling uses.
//!
//! ```
//! use ffm_core::tape::Tape;
//! use ffm_core::Tensor;
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Tensor::from_slice(&[1.0, 2.0]));
//! let sq = tape.mul(x, x).unwrap();
//! let loss = tape.sum(sq).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
//! ```

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::dft::{self, ModalBasis};
use crate::tensor::{self, Tensor};
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Linear(Var, Var, Var),
    Gelu(Var),
    Sum(Var),
    Mean(Var),
    SliceLast { x: Var, start: usize },
    Concat(Vec<Var>),
    Broadcast(Var),
    Rfft { x: Var, basis: Arc<ModalBasis> },
    Irfft { s: Var, basis: Arc<ModalBasis> },
    SpectralMix(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    traced: bool,
}

#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    tracing: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            tracing: true,
        }
    }

    /// A tape that evaluates but records nothing for backward.
    pub fn untraced() -> Self {
        Self {
            nodes: Vec::new(),
            tracing: false,
        }
    }

    pub fn is_tracing(&self) -> bool {
        self.tracing
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        let traced = self.tracing;
        self.push(value, Op::Leaf, traced)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn is_traced(&self, v: Var) -> bool {
        self.nodes[v.0].traced
    }

    fn push(&mut self, value: Tensor, op: Op, traced: bool) -> Var {
        let op = if traced { op } else { Op::Leaf };
        self.nodes.push(Node { value, op, traced });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let traced = self.tracing && parents.iter().any(|p| self.nodes[p.0].traced);
        self.push(value, op, traced)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::add(self.value(a), self.value(b))?;
        Ok(self.record(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::sub(self.value(a), self.value(b))?;
        Ok(self.record(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::mul(self.value(a), self.value(b))?;
        Ok(self.record(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let v = tensor::scale(self.value(a), k)?;
        Ok(self.record(v, Op::Scale(a, k), &[a]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.record(v, Op::MatMul(a, b), &[a, b]))
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let v = tensor::gelu(self.value(a))?;
        Ok(self.record(v, Op::Gelu(a), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = tensor::sum(self.value(a))?;
        Ok(self.record(v, Op::Sum(a), &[a]))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = tensor::mean(self.value(a))?;
        Ok(self.record(v, Op::Mean(a), &[a]))
    }

    pub fn slice_last(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let v = tensor::slice_last(self.value(a), start, len)?;
        Ok(self.record(v, Op::SliceLast { x: a, start }, &[a]))
    }

    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = tensor::concat_last(&values)?;
        Ok(self.record(v, Op::Concat(parts.to_vec()), parts))
    }

    pub fn broadcast_to(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = tensor::broadcast_to(self.value(a), shape)?;
        Ok(self.record(v, Op::Broadcast(a), &[a]))
    }

    /// `x·w + b` with `b` broadcast over the leading axes.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let v = tensor::linear(self.value(x), self.value(w), self.value(b))?;
        Ok(self.record(v, Op::Linear(x, w, b), &[x, w, b]))
    }

    /// Truncated real DFT along axis 0: `[n, rest...] -> [2, m, rest...]`.
    pub fn rfft(&mut self, x: Var, basis: &Arc<ModalBasis>) -> Result<Var> {
        let v = dft::rfft_axis0(self.value(x), basis)?;
        Ok(self.record(
            v,
            Op::Rfft {
                x,
                basis: basis.clone(),
            },
            &[x],
        ))
    }

    /// Inverse of [`Tape::rfft`] with absent modes treated as zero.
    pub fn irfft(&mut self, s: Var, basis: &Arc<ModalBasis>) -> Result<Var> {
        let v = dft::irfft_axis0(self.value(s), basis)?;
        Ok(self.record(
            v,
            Op::Irfft {
                s,
                basis: basis.clone(),
            },
            &[s],
        ))
    }

    pub fn spectral_mix(&mut self, spec: Var, w: Var) -> Result<Var> {
        let v = dft::spectral_mix(self.value(spec), self.value(w))?;
        Ok(self.record(v, Op::SpectralMix(spec, w), &[spec, w]))
    }

    /// Reverse sweep from a traced scalar.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = self.nodes.get(loss.0).ok_or(Error::Untraced)?;
        if !node.traced || node.value.len() != 1 {
            return Err(Error::Untraced);
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(node.value.shape().to_vec(), vec![1.0])?);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.traced {
                continue;
            }
            self.propagate(&node.op, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].traced {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn matmul_backward(&self, a: Var, b: Var, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let (va, vb) = (self.value(a), self.value(b));
        let k = va.last_dim();
        let n = vb.shape()[1];
        let m = va.len() / k;
        if self.nodes[a.0].traced {
            // ga = g · bᵀ
            let mut ga = vec![0.0; m * k];
            tensor::gemm(m, n, k, 1.0, g.data(), n, 1, vb.data(), 1, n, 0.0, &mut ga, k, 1);
            self.accumulate(grads, a, Tensor::new(va.shape().to_vec(), ga).expect("shape"));
        }
        if self.nodes[b.0].traced {
            // gb = aᵀ · g
            let mut gb = vec![0.0; k * n];
            tensor::gemm(k, m, n, 1.0, va.data(), 1, k, g.data(), n, 1, 0.0, &mut gb, n, 1);
            self.accumulate(grads, b, Tensor::new(vb.shape().to_vec(), gb).expect("shape"));
        }
    }

    fn propagate(&self, op: &Op, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, scale_unchecked(g, -1.0));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                self.accumulate(grads, a, zip_unchecked(g, vb, |x, y| x * y));
                self.accumulate(grads, b, zip_unchecked(g, va, |x, y| x * y));
            }
            Op::Scale(a, k) => self.accumulate(grads, a, scale_unchecked(g, k)),
            Op::MatMul(a, b) => self.matmul_backward(a, b, g, grads),
            Op::Linear(x, w, b) => {
                self.matmul_backward(x, w, g, grads);
                if self.nodes[b.0].traced {
                    let n = g.last_dim();
                    self.accumulate(grads, b, tensor::reduce_to(g, &[n]));
                }
            }
            Op::Gelu(a) => {
                let va = self.value(a);
                self.accumulate(grads, a, zip_unchecked(g, va, |gi, x| gi * tensor::gelu_grad_scalar(x)));
            }
            Op::Sum(a) => {
                let va = self.value(a);
                self.accumulate(grads, a, Tensor::full(va.shape().to_vec(), g.data()[0]));
            }
            Op::Mean(a) => {
                let va = self.value(a);
                let v = g.data()[0] / va.len() as f64;
                self.accumulate(grads, a, Tensor::full(va.shape().to_vec(), v));
            }
            Op::SliceLast { x, start } => {
                let vx = self.value(x);
                let c = vx.last_dim();
                let len = g.last_dim();
                let mut out = Tensor::zeros(vx.shape().to_vec());
                for (r, chunk) in g.data().chunks_exact(len).enumerate() {
                    out.data_mut()[r * c + start..r * c + start + len].copy_from_slice(chunk);
                }
                self.accumulate(grads, x, out);
            }
            Op::Concat(ref parts) => {
                let total = g.last_dim();
                let rows = g.len() / total;
                let mut offset = 0;
                for &p in parts {
                    let vp = self.value(p);
                    let c = vp.last_dim();
                    let mut data = Vec::with_capacity(rows * c);
                    for r in 0..rows {
                        data.extend_from_slice(&g.data()[r * total + offset..r * total + offset + c]);
                    }
                    offset += c;
                    self.accumulate(grads, p, Tensor::new(vp.shape().to_vec(), data).expect("shape"));
                }
            }
            Op::Broadcast(a) => {
                let va = self.value(a);
                self.accumulate(grads, a, tensor::reduce_to(g, va.shape()));
            }
            Op::Rfft { x, ref basis } => {
                self.accumulate(grads, x, dft::rfft_axis0_adjoint(g, basis));
            }
            Op::Irfft { s, ref basis } => {
                self.accumulate(grads, s, dft::irfft_axis0_adjoint(g, basis));
            }
            Op::SpectralMix(s, w) => {
                let (gs, gw) = dft::spectral_mix_backward(self.value(s), self.value(w), g);
                self.accumulate(grads, s, gs);
                self.accumulate(grads, w, gw);
            }
        }
    }
}

fn scale_unchecked(g: &Tensor, k: f64) -> Tensor {
    let data = g.data().iter().map(|x| x * k).collect();
    Tensor::new(g.shape().to_vec(), data).expect("shape")
}

fn zip_unchecked(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shape")
}
