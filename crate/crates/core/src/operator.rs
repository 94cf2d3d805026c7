//! Spectral neural operator `v_θ(t, g)` used as the learned vector field.
//!
//! Pointwise input channels are `[g(x), coordinate features, t, z(x)…]`, where
//! the coordinate features are `sin(2πk·x̃)`, `cos(2πk·x̃)` for `k = 1..=H` and
//! `x̃ ∈ [0, 1)` is the position rescaled to the unit interval. These are exact
//! low harmonics of the grid, so the whole input is band-limited and a model
//! trained at one resolution can be queried on any refinement.
//!
//! Architecture, all on grid-major activations `[n, B, C]`:
//!
//! ```text
//! lift:    C_in -> lifting -(gelu)-> width
//! block ℓ: h <- irfft(W_ℓ · rfft(h)) + h·U_ℓ + b_ℓ   (gelu between blocks)
//! project: width -> projection -(gelu)-> 1
//! ```

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::batch::FunctionBatch;
use crate::dft::ModalBasis;
use crate::field::{time_at, VectorField};
use crate::gaussian::Grid;
use crate::math::{cos, sin, sqrt, TAU};
use crate::rng::{self, Rng};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const DEFAULT_COORD_HARMONICS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OperatorConfig {
    /// Retained Fourier modes per block (capped at `n/2 + 1` for a given grid).
    pub modes: usize,
    pub width: usize,
    pub layers: usize,
    /// Hidden size of the lifting MLP.
    pub lifting: usize,
    /// Hidden size of the projection MLP.
    pub projection: usize,
    /// Number `H` of sin/cos coordinate harmonics fed as input channels.
    pub coord_harmonics: usize,
    /// Extra pointwise conditioning channels `z(x)`.
    pub cond_channels: usize,
}

impl OperatorConfig {
    /// Config with `lifting = projection = width`, default coordinate
    /// harmonics and no conditioning channels.
    pub fn new(modes: usize, width: usize, layers: usize) -> Self {
        Self {
            modes,
            width,
            layers,
            lifting: width,
            projection: width,
            coord_harmonics: DEFAULT_COORD_HARMONICS,
            cond_channels: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes == 0 || self.width == 0 || self.layers == 0 || self.lifting == 0 || self.projection == 0 {
            return Err(Error::invalid(
                "operator modes, width, layers, lifting and projection must be positive",
            ));
        }
        Ok(())
    }

    pub fn in_channels(&self) -> usize {
        2 + 2 * self.coord_harmonics + self.cond_channels
    }

    /// Shapes of all parameter tensors in their fixed serialization order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let (w, l, p) = (self.width, self.lifting, self.projection);
        let mut s = vec![vec![self.in_channels(), l], vec![l], vec![l, w], vec![w]];
        for _ in 0..self.layers {
            s.push(vec![2, self.modes, w, w]);
            s.push(vec![w, w]);
            s.push(vec![w]);
        }
        s.extend([vec![w, p], vec![p], vec![p, 1], vec![1]]);
        s
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }
}

/// Pointwise conditioning channels, laid out `[count][n][channels]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditioning {
    channels: usize,
    resolution: usize,
    data: Vec<f64>,
}

impl Conditioning {
    pub fn new(channels: usize, resolution: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || resolution == 0 || !data.len().is_multiple_of(channels * resolution) {
            return Err(Error::invalid("conditioning data does not match its declared shape"));
        }
        Ok(Self {
            channels,
            resolution,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn count(&self) -> usize {
        self.data.len() / (self.channels * self.resolution)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Value of channel `c` at grid point `j` of function `i`.
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[(i * self.resolution + j) * self.channels + c]
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let stride = self.channels * self.resolution;
        let mut data = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            data.extend_from_slice(&self.data[i * stride..(i + 1) * stride]);
        }
        Self { data, ..*self }
    }

    pub fn range(&self, start: usize, end: usize) -> Self {
        let stride = self.channels * self.resolution;
        Self {
            data: self.data[start * stride..end * stride].to_vec(),
            ..*self
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorParams {
    config: OperatorConfig,
    tensors: Vec<Tensor>,
}

fn uniform(r: &mut Rng, bound: f64) -> f64 {
    bound * (2.0 * rng::uniform(r) - 1.0)
}

impl OperatorParams {
    /// Random initialization: linear layers `U(±1/√fan_in)`, spectral weights
    /// `U(±1/(width·modes))`.
    pub fn build(config: OperatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::seeded(seed);
        let shapes = config.param_shapes();
        let mut tensors = Vec::with_capacity(shapes.len());
        let mut fan_in = 1;
        for shape in shapes {
            let len = shape.iter().product();
            let bound = match shape.len() {
                4 => 1.0 / (config.width * config.modes) as f64,
                2 => {
                    fan_in = shape[0];
                    1.0 / sqrt(fan_in as f64)
                }
                // Biases follow the weight matrix before them.
                _ => 1.0 / sqrt(fan_in as f64),
            };
            let data = (0..len).map(|_| uniform(&mut r, bound)).collect();
            tensors.push(Tensor::new(shape, data)?);
        }
        Ok(Self { config, tensors })
    }

    pub fn zeros(config: OperatorConfig) -> Result<Self> {
        config.validate()?;
        let tensors = config.param_shapes().into_iter().map(Tensor::zeros).collect();
        Ok(Self { config, tensors })
    }

    /// Rebuilds parameters from tensors in serialization order.
    pub fn from_tensors(config: OperatorConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let shapes = config.param_shapes();
        if shapes.len() != tensors.len() {
            return Err(Error::invalid("wrong number of parameter tensors for config"));
        }
        for (want, t) in shapes.iter().zip(&tensors) {
            if want.as_slice() != t.shape() {
                return Err(Error::ShapeMismatch {
                    op: "parameters",
                    lhs: want.clone(),
                    rhs: t.shape().to_vec(),
                });
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn from_flat(config: OperatorConfig, flat: &[f64]) -> Result<Self> {
        config.validate()?;
        if flat.len() != config.param_count() {
            return Err(Error::invalid(alloc::format!(
                "expected {} parameters, got {}",
                config.param_count(),
                flat.len()
            )));
        }
        let mut tensors = Vec::new();
        let mut off = 0;
        for shape in config.param_shapes() {
            let len: usize = shape.iter().product();
            tensors.push(Tensor::new(shape, flat[off..off + len].to_vec())?);
            off += len;
        }
        Ok(Self { config, tensors })
    }

    pub fn config(&self) -> &OperatorConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    /// Puts every parameter on `tape` (traced leaves on a tracing tape).
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Assembles the `[n, B, C_in]` input tensor. A single conditioning row
    /// is shared by the whole batch.
    pub fn input_tensor(
        &self,
        grid: &Grid,
        g: &FunctionBatch,
        t: &[f64],
        cond: Option<&Conditioning>,
    ) -> Result<Tensor> {
        let n = grid.len();
        let b = g.count();
        if g.resolution() != n {
            return Err(Error::GridMismatch(alloc::format!(
                "state has {} points, grid has {n}",
                g.resolution()
            )));
        }
        let cc = self.config.cond_channels;
        match (cc, cond) {
            (0, None) => {}
            (0, Some(_)) => return Err(Error::invalid("model takes no conditioning channels")),
            (_, None) => return Err(Error::invalid("model requires conditioning channels")),
            (c, Some(z)) => {
                if z.channels() != c || z.resolution() != n || (z.count() != b && z.count() != 1) {
                    return Err(Error::invalid("conditioning shape does not match model and batch"));
                }
            }
        }
        let h = self.config.coord_harmonics;
        let cin = self.config.in_channels();
        let coords: Vec<f64> = (0..n)
            .flat_map(|j| {
                let x = grid.unit_coordinate(j);
                (1..=h).flat_map(move |k| {
                    let a = TAU * k as f64 * x;
                    [sin(a), cos(a)]
                })
            })
            .collect();
        let mut data = vec![0.0; n * b * cin];
        for j in 0..n {
            for i in 0..b {
                let ti = time_at(t, b, i)?;
                let o = &mut data[(j * b + i) * cin..(j * b + i + 1) * cin];
                o[0] = g.row(i)[j];
                o[1..1 + 2 * h].copy_from_slice(&coords[j * 2 * h..(j + 1) * 2 * h]);
                o[1 + 2 * h] = ti;
                if let Some(z) = cond {
                    let row = if z.count() == 1 { 0 } else { i };
                    for c in 0..cc {
                        o[2 + 2 * h + c] = z.get(row, j, c);
                    }
                }
            }
        }
        Tensor::new(vec![n, b, cin], data)
    }

    /// Network body on a tape. `vars` come from [`OperatorParams::register`];
    /// `input` is `[n, B, C_in]`, the result `[n, B, 1]`.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], input: Var) -> Result<Var> {
        let n = tape.value(input).shape()[0];
        let basis = Arc::new(ModalBasis::new(n, self.config.modes)?);
        let h = tape.linear(input, vars[0], vars[1])?;
        let h = tape.gelu(h)?;
        let mut h = tape.linear(h, vars[2], vars[3])?;
        let layers = self.config.layers;
        for l in 0..layers {
            let v = &vars[4 + 3 * l..7 + 3 * l];
            let s = tape.rfft(h, &basis)?;
            let s = tape.spectral_mix(s, v[0])?;
            let y = tape.irfft(s, &basis)?;
            let by = tape.linear(h, v[1], v[2])?;
            h = tape.add(y, by)?;
            if l + 1 < layers {
                h = tape.gelu(h)?;
            }
        }
        let p = &vars[4 + 3 * layers..];
        let h = tape.linear(h, p[0], p[1])?;
        let h = tape.gelu(h)?;
        tape.linear(h, p[2], p[3])
    }

    /// Untraced evaluation on `grid`.
    pub fn apply(
        &self,
        grid: &Grid,
        g: &FunctionBatch,
        t: &[f64],
        cond: Option<&Conditioning>,
    ) -> Result<FunctionBatch> {
        let input = self.input_tensor(grid, g, t, cond)?;
        let mut tape = Tape::untraced();
        let vars = self.register(&mut tape);
        let x = tape.constant(input);
        let y = self.forward(&mut tape, &vars, x)?;
        let out = grid_major_to_batch(tape.value(y), g.count(), grid.len());
        if !out.all_finite() {
            return Err(Error::NonFinite("operator output"));
        }
        Ok(out)
    }
}

/// `[n, B, 1]` grid-major values to a row-major batch.
pub(crate) fn grid_major_to_batch(y: &Tensor, b: usize, n: usize) -> FunctionBatch {
    let mut out = FunctionBatch::zeros(b, n);
    let d = y.data();
    let o = out.as_mut_slice();
    for j in 0..n {
        for i in 0..b {
            o[i * n + j] = d[j * b + i];
        }
    }
    out
}

/// Row-major batch to a `[n, B, 1]` grid-major tensor.
pub(crate) fn batch_to_grid_major(g: &FunctionBatch) -> Tensor {
    let (b, n) = (g.count(), g.resolution());
    Tensor::new(vec![n, b, 1], g.transposed()).expect("shape matches length")
}

/// The operator bound to a grid (and optional conditioning) as a [`VectorField`].
#[derive(Clone, Copy, Debug)]
pub struct OperatorField<'a> {
    pub params: &'a OperatorParams,
    pub grid: &'a Grid,
    pub cond: Option<&'a Conditioning>,
}

impl<'a> OperatorField<'a> {
    pub fn new(params: &'a OperatorParams, grid: &'a Grid) -> Self {
        Self {
            params,
            grid,
            cond: None,
        }
    }

    pub fn with_conditioning(mut self, cond: &'a Conditioning) -> Self {
        self.cond = Some(cond);
        self
    }
}

impl VectorField for OperatorField<'_> {
    fn eval(&self, t: &[f64], g: &FunctionBatch) -> Result<FunctionBatch> {
        self.params.apply(self.grid, g, t, self.cond)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{GaussianMeasure, KernelSpec};

    fn tiny() -> OperatorConfig {
        OperatorConfig {
            coord_harmonics: 1,
            ..OperatorConfig::new(1, 2, 1)
        }
    }

    #[test]
    fn parameter_count_closed_form() {
        // in = 4 channels: lift 4·2+2 and 2·2+2, block 2·1·2·2 + 2·2+2,
        // projection 2·2+2 and 2·1+1.
        assert_eq!(tiny().param_count(), 10 + 6 + 14 + 6 + 3);
        let p = OperatorParams::build(tiny(), 0).unwrap();
        assert_eq!(p.count(), 39);
        let c = OperatorConfig::new(16, 64, 4);
        let want = (6 * 64 + 64) + (64 * 64 + 64) + 4 * (2 * 16 * 64 * 64 + 64 * 64 + 64) + (64 * 64 + 64) + 65;
        assert_eq!(c.param_count(), want);
    }

    #[test]
    fn rejects_degenerate_config() {
        assert!(OperatorParams::build(OperatorConfig::new(0, 4, 1), 0).is_err());
        assert!(OperatorParams::build(OperatorConfig::new(4, 0, 1), 0).is_err());
        assert!(OperatorParams::build(OperatorConfig::new(4, 4, 0), 0).is_err());
    }

    #[test]
    fn zero_parameters_give_zero_field() {
        let p = OperatorParams::zeros(OperatorConfig::new(4, 8, 2)).unwrap();
        let grid = Grid::unit(32).unwrap();
        let g = GaussianMeasure::new(grid.clone(), KernelSpec::reference_1d()).unwrap().sample(3, 1);
        let v = p.apply(&grid, &g, &[0.3, 0.5, 0.9], None).unwrap();
        assert!(v.as_slice().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn flat_round_trip_and_determinism() {
        let c = OperatorConfig::new(3, 5, 2);
        let p = OperatorParams::build(c, 9).unwrap();
        assert_eq!(p, OperatorParams::build(c, 9).unwrap());
        assert_ne!(p, OperatorParams::build(c, 10).unwrap());
        let q = OperatorParams::from_flat(c, &p.flat()).unwrap();
        assert_eq!(p, q);
        assert!(OperatorParams::from_flat(c, &p.flat()[1..]).is_err());
        let mut ts = p.tensors().to_vec();
        ts.swap(0, 2);
        assert!(OperatorParams::from_tensors(c, ts).is_err());
    }

    #[test]
    fn conditioning_shape_is_enforced() {
        let mut c = OperatorConfig::new(2, 4, 1);
        let grid = Grid::unit(8).unwrap();
        let g = FunctionBatch::zeros(2, 8);
        let p = OperatorParams::build(c, 0).unwrap();
        let z = Conditioning::new(2, 8, vec![0.0; 32]).unwrap();
        assert!(p.apply(&grid, &g, &[0.5], Some(&z)).is_err());
        c.cond_channels = 2;
        let p = OperatorParams::build(c, 0).unwrap();
        assert!(p.apply(&grid, &g, &[0.5], None).is_err());
        assert!(p.apply(&grid, &g, &[0.5], Some(&z)).is_ok());
        assert!(p.apply(&grid, &FunctionBatch::zeros(2, 4), &[0.5], Some(&z)).is_err());
    }

    #[test]
    fn batch_rows_are_independent() {
        let c = OperatorConfig::new(4, 6, 2);
        let p = OperatorParams::build(c, 3).unwrap();
        let grid = Grid::unit(16).unwrap();
        let g = GaussianMeasure::new(grid.clone(), KernelSpec::reference_1d()).unwrap().sample(3, 4);
        let t = [0.1, 0.6, 0.9];
        let all = p.apply(&grid, &g, &t, None).unwrap();
        for i in 0..3 {
            let one = p.apply(&grid, &g.select(&[i]), &t[i..i + 1], None).unwrap();
            for (a, b) in one.row(0).iter().zip(all.row(i)) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn spectral_branch_drops_modes_above_truncation() {
        let n = 32;
        let basis = Arc::new(ModalBasis::new(n, 4).unwrap());
        let mut tape = Tape::untraced();
        let data: Vec<f64> = (0..n).map(|j| cos(TAU * 10.0 * j as f64 / n as f64)).collect();
        let x = tape.constant(Tensor::new(vec![n, 1, 1], data).unwrap());
        let w = tape.constant(Tensor::full(vec![2, 4, 1, 1], 1.0));
        let s = tape.rfft(x, &basis).unwrap();
        let s = tape.spectral_mix(s, w).unwrap();
        let y = tape.irfft(s, &basis).unwrap();
        assert!(tape.value(y).data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let c = OperatorConfig {
            coord_harmonics: 1,
            ..OperatorConfig::new(3, 3, 2)
        };
        let p = OperatorParams::build(c, 21).unwrap();
        let grid = Grid::unit(8).unwrap();
        let g = GaussianMeasure::new(grid.clone(), KernelSpec::reference_1d()).unwrap().sample(2, 2);
        let t = [0.2, 0.7];
        let target = batch_to_grid_major(&g);
        let loss_of = |p: &OperatorParams| -> (f64, Option<Vec<Tensor>>) {
            let mut tape = Tape::new();
            let vars = p.register(&mut tape);
            let x = tape.constant(p.input_tensor(&grid, &g, &t, None).unwrap());
            let y = p.forward(&mut tape, &vars, x).unwrap();
            let u = tape.constant(target.clone());
            let d = tape.sub(y, u).unwrap();
            let sq = tape.mul(d, d).unwrap();
            let l = tape.mean(sq).unwrap();
            let mut grads = tape.backward(l).unwrap();
            let gs = vars.iter().map(|v| grads.take(*v).unwrap()).collect();
            (tape.value(l).item().unwrap(), Some(gs))
        };
        let (_, grads) = loss_of(&p);
        let grads = grads.unwrap();
        let h = 1e-6;
        for (ti, gt) in grads.iter().enumerate() {
            for k in (0..gt.len()).step_by(3) {
                let mut hi = p.clone();
                hi.tensors_mut()[ti].data_mut()[k] += h;
                let mut lo = p.clone();
                lo.tensors_mut()[ti].data_mut()[k] -= h;
                let fd = (loss_of(&hi).0 - loss_of(&lo).0) / (2.0 * h);
                let an = gt.data()[k];
                assert!(
                    (fd - an).abs() <= 1e-6 + 1e-4 * an.abs(),
                    "tensor {ti} entry {k}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn band_limited_input_transfers_across_resolutions() {
        let c = OperatorConfig::new(8, 8, 2);
        let p = OperatorParams::build(c, 5).unwrap();
        let coarse = Grid::unit(64).unwrap();
        let fine = coarse.refine(5).unwrap();
        let f = |x: f64| 0.3 * sin(TAU * x) - 0.2 * cos(2.0 * TAU * x) + 0.1;
        let gc = FunctionBatch::from_rows(&[coarse.points().iter().map(|&x| f(x)).collect::<Vec<_>>()]).unwrap();
        let gf = FunctionBatch::from_rows(&[fine.points().iter().map(|&x| f(x)).collect::<Vec<_>>()]).unwrap();
        let vc = p.apply(&coarse, &gc, &[0.4], None).unwrap();
        let vf = p.apply(&fine, &gf, &[0.4], None).unwrap().subsample(5).unwrap();
        let err = vc.as_slice().iter().zip(vf.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "resolution transfer error {err}");
    }
}
