//! Anything that can play the role of a time-dependent vector field on a grid:
//! the learned operator, the exact marginal field of a finite mixture, or a
//! closure in tests.

use alloc::vec;

use crate::batch::FunctionBatch;
use crate::path::MarginalOracle;
use crate::{Error, Result};

pub trait VectorField {
    /// Evaluates the field at every row of `g`. `t` holds either one time per
    /// row or a single time shared by all rows.
    fn eval(&self, t: &[f64], g: &FunctionBatch) -> Result<FunctionBatch>;
}

/// Time of row `i` under the one-or-per-row convention of [`VectorField::eval`].
pub fn time_at(t: &[f64], count: usize, i: usize) -> Result<f64> {
    match t.len() {
        1 => Ok(t[0]),
        n if n == count => Ok(t[i]),
        n => Err(Error::invalid(alloc::format!(
            "expected 1 or {count} times, got {n}"
        ))),
    }
}

impl VectorField for MarginalOracle<'_> {
    fn eval(&self, t: &[f64], g: &FunctionBatch) -> Result<FunctionBatch> {
        let mut out = FunctionBatch::zeros(g.count(), g.resolution());
        for i in 0..g.count() {
            let ti = time_at(t, g.count(), i)?;
            self.field_into(ti, g.row(i), out.row_mut(i))?;
        }
        Ok(out)
    }
}

/// Wraps a per-function closure `(t, g, out)` as a [`VectorField`].
pub struct FnField<F>(pub F);

impl<F> VectorField for FnField<F>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    fn eval(&self, t: &[f64], g: &FunctionBatch) -> Result<FunctionBatch> {
        let mut out = FunctionBatch::zeros(g.count(), g.resolution());
        let mut buf = vec![0.0; g.resolution()];
        for i in 0..g.count() {
            let ti = time_at(t, g.count(), i)?;
            (self.0)(ti, g.row(i), &mut buf)?;
            out.row_mut(i).copy_from_slice(&buf);
        }
        Ok(out)
    }
}
