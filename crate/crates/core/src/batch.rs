use alloc::vec::Vec;

use crate::{Error, Result};

/// A batch of real functions sampled on a shared grid, stored row-major
/// (`count × resolution`).
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionBatch {
    resolution: usize,
    data: Vec<f64>,
}

impl FunctionBatch {
    pub fn new(resolution: usize, data: Vec<f64>) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::invalid("function batch resolution must be positive"));
        }
        if !data.len().is_multiple_of(resolution) {
            return Err(Error::invalid("batch data length is not a multiple of the resolution"));
        }
        Ok(Self { resolution, data })
    }

    pub fn zeros(count: usize, resolution: usize) -> Self {
        Self {
            resolution,
            data: alloc::vec![0.0; count * resolution],
        }
    }

    pub fn empty(resolution: usize) -> Self {
        Self {
            resolution,
            data: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::invalid("from_rows needs at least one row"))?;
        let n = first.as_ref().len();
        let mut data = Vec::with_capacity(n * rows.len());
        for r in rows {
            if r.as_ref().len() != n {
                return Err(Error::invalid("rows have different lengths"));
            }
            data.extend_from_slice(r.as_ref());
        }
        Self::new(n, data)
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.resolution
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.resolution..(i + 1) * self.resolution]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.resolution..(i + 1) * self.resolution]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.resolution)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.resolution {
            return Err(Error::GridMismatch(alloc::format!(
                "row of length {} pushed into batch of resolution {}",
                row.len(),
                self.resolution
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn extend(&mut self, other: &FunctionBatch) -> Result<()> {
        if other.resolution != self.resolution {
            return Err(Error::GridMismatch(alloc::format!(
                "cannot append resolution {} to {}",
                other.resolution,
                self.resolution
            )));
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.resolution);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            resolution: self.resolution,
            data,
        }
    }

    /// Keeps every `stride`-th grid point, starting at index 0.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 || !self.resolution.is_multiple_of(stride) {
            return Err(Error::invalid("subsample stride must divide the resolution"));
        }
        let n = self.resolution / stride;
        let mut data = Vec::with_capacity(self.count() * n);
        for row in self.rows() {
            data.extend(row.iter().step_by(stride));
        }
        Self::new(n, data)
    }

    /// Transpose into column-major order (`resolution × count`).
    pub fn transposed(&self) -> Vec<f64> {
        let (b, n) = (self.count(), self.resolution);
        let mut out = alloc::vec![0.0; b * n];
        for (i, row) in self.rows().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                out[j * b + i] = v;
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
