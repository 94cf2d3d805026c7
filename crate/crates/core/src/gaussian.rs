//! Uniform 1-D grids, stationary covariance kernels and the mean-zero Gaussian
//! measures `N(0, C₀)` they induce on a grid.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::batch::FunctionBatch;
use crate::math::{exp, ln, PI};
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// How the `n` points of a [`Grid`] sit in `[a, b]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridKind {
    /// `x_j = a + (b - a)·j/n`; `b` is excluded. Refining by `k` gives `k·n`
    /// points that contain the original ones.
    HalfOpen,
    /// `x_j = a + (b - a)·j/(n - 1)`; both endpoints included. Refining by `k`
    /// gives `k·(n - 1) + 1` points.
    Inclusive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    a: f64,
    b: f64,
    n: usize,
    kind: GridKind,
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize, kind: GridKind) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::invalid(format!("grid needs a < b, got [{a}, {b}]")));
        }
        if n < 2 {
            return Err(Error::invalid("grid needs at least 2 points"));
        }
        Ok(Self { a, b, n, kind })
    }

    /// `n` half-open points on `[0, 1)`.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(0.0, 1.0, n, GridKind::HalfOpen)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> f64 {
        self.a
    }

    pub fn end(&self) -> f64 {
        self.b
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn spacing(&self) -> f64 {
        match self.kind {
            GridKind::HalfOpen => (self.b - self.a) / self.n as f64,
            GridKind::Inclusive => (self.b - self.a) / (self.n - 1) as f64,
        }
    }

    pub fn point(&self, j: usize) -> f64 {
        self.a + self.spacing() * j as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.point(j)).collect()
    }

    /// Position of point `j` rescaled to `[0, 1]`.
    pub fn unit_coordinate(&self, j: usize) -> f64 {
        (self.point(j) - self.a) / (self.b - self.a)
    }

    /// The grid with `factor`-times finer spacing over the same interval.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("refinement factor must be positive"));
        }
        let n = match self.kind {
            GridKind::HalfOpen => self.n * factor,
            GridKind::Inclusive => (self.n - 1) * factor + 1,
        };
        Self::new(self.a, self.b, n, self.kind)
    }

    /// Stride `k` such that `fine.point(k·j) == self.point(j)`, if `fine` refines `self`.
    pub fn refinement_stride(&self, fine: &Grid) -> Option<usize> {
        if fine.a != self.a || fine.b != self.b || fine.kind != self.kind {
            return None;
        }
        let (coarse, finer) = match self.kind {
            GridKind::HalfOpen => (self.n, fine.n),
            GridKind::Inclusive => (self.n - 1, fine.n - 1),
        };
        (finer % coarse == 0).then_some(finer / coarse)
    }

    /// Index of the grid point at `x`, if `x` is on the grid (relative tolerance 1e-9).
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let pos = (x - self.a) / self.spacing();
        let j = libm::round(pos);
        if j < 0.0 || j >= self.n as f64 {
            return None;
        }
        ((pos - j).abs() <= 1e-9 * self.n as f64).then_some(j as usize)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelFamily {
    /// Matérn ν = 1/2: `σ² exp(-|x - x'|/ℓ)`.
    Matern12,
    /// `σ² exp(-(x - x')²/(2ℓ²))`.
    SquaredExponential,
    /// `σ²·δ(x, x')`. Not trace-class in the continuum limit; only accepted
    /// with [`MeasureOptions::allow_white_noise`].
    White,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub variance: f64,
    pub lengthscale: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, variance: f64, lengthscale: f64) -> Result<Self> {
        if !(variance > 0.0) || !(lengthscale > 0.0) || !variance.is_finite() || !lengthscale.is_finite() {
            return Err(Error::invalid("kernel variance and lengthscale must be positive"));
        }
        Ok(Self {
            family,
            variance,
            lengthscale,
        })
    }

    pub fn matern12(variance: f64, lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern12, variance, lengthscale)
    }

    pub fn squared_exponential(variance: f64, lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, variance, lengthscale)
    }

    pub fn white(variance: f64) -> Result<Self> {
        Self::new(KernelFamily::White, variance, 1.0)
    }

    /// Reference-noise kernel for 1-D runs: Matérn-1/2 with σ² = 0.1, ℓ = 1e-2.
    pub fn reference_1d() -> Self {
        Self {
            family: KernelFamily::Matern12,
            variance: 0.1,
            lengthscale: 1e-2,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let d = (x - y).abs();
        match self.family {
            KernelFamily::Matern12 => self.variance * exp(-d / self.lengthscale),
            KernelFamily::SquaredExponential => {
                self.variance * exp(-d * d / (2.0 * self.lengthscale * self.lengthscale))
            }
            KernelFamily::White => {
                if d == 0.0 {
                    self.variance
                } else {
                    0.0
                }
            }
        }
    }

    /// Dense kernel matrix on `grid`, row-major.
    pub fn matrix(&self, grid: &Grid) -> Vec<f64> {
        let pts = grid.points();
        let n = pts.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval(pts[i], pts[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MeasureOptions {
    pub allow_white_noise: bool,
}

/// Relative jitter for the first factorization attempt.
pub const JITTER_START: f64 = 1e-6;
/// Number of ×10 jitter escalations tried after the first attempt.
pub const JITTER_ESCALATIONS: usize = 3;

/// `N(0, K + jitter·σ²·I)` on a grid, with a cached Cholesky factor.
#[derive(Clone, Debug)]
pub struct GaussianMeasure {
    grid: Grid,
    kernel: KernelSpec,
    chol: Vec<f64>,
    jitter: f64,
    log_det: f64,
}

impl GaussianMeasure {
    pub fn new(grid: Grid, kernel: KernelSpec) -> Result<Self> {
        Self::with_options(grid, kernel, MeasureOptions::default())
    }

    pub fn with_options(grid: Grid, kernel: KernelSpec, options: MeasureOptions) -> Result<Self> {
        if kernel.family == KernelFamily::White && !options.allow_white_noise {
            return Err(Error::WhiteNoiseRejected);
        }
        let n = grid.len();
        let k = kernel.matrix(&grid);
        let mut jitter = JITTER_START * kernel.variance;
        for attempt in 0..=JITTER_ESCALATIONS {
            let mut a = k.clone();
            for i in 0..n {
                a[i * n + i] += jitter;
            }
            if let Some(chol) = cholesky(&a, n) {
                let log_det = 2.0 * (0..n).map(|i| ln(chol[i * n + i])).sum::<f64>();
                return Ok(Self {
                    grid,
                    kernel,
                    chol,
                    jitter,
                    log_det,
                });
            }
            if attempt < JITTER_ESCALATIONS {
                jitter *= 10.0;
            }
        }
        Err(Error::Factorization { jitter })
    }

    /// Same kernel on a different grid (e.g. a refinement for super-resolution).
    pub fn on_grid(&self, grid: Grid) -> Result<Self> {
        Self::with_options(
            grid,
            self.kernel,
            MeasureOptions {
                allow_white_noise: self.kernel.family == KernelFamily::White,
            },
        )
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn resolution(&self) -> usize {
        self.grid.len()
    }

    /// Absolute diagonal jitter that was added before factorizing.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower-triangular factor, row-major `n × n`.
    pub fn cholesky_factor(&self) -> &[f64] {
        &self.chol
    }

    /// `log det(K + jitter·I)`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `K + jitter·I`, the covariance actually sampled from.
    pub fn jittered_covariance(&self) -> Vec<f64> {
        let n = self.resolution();
        let mut k = self.kernel.matrix(&self.grid);
        for i in 0..n {
            k[i * n + i] += self.jitter;
        }
        k
    }

    pub fn sample(&self, count: usize, seed: u64) -> FunctionBatch {
        let mut r = rng::seeded(seed);
        self.sample_with(&mut r, count)
    }

    pub fn sample_with(&self, r: &mut Rng, count: usize) -> FunctionBatch {
        let n = self.resolution();
        let mut out = FunctionBatch::zeros(count, n);
        let mut z = vec![0.0; n];
        for i in 0..count {
            rng::fill_normal(r, &mut z);
            let row = out.row_mut(i);
            for (j, o) in row.iter_mut().enumerate() {
                let l = &self.chol[j * n..j * n + j + 1];
                *o = l.iter().zip(&z).map(|(a, b)| a * b).sum();
            }
        }
        out
    }

    /// Solves `L·y = d` in place.
    pub fn whiten_in_place(&self, d: &mut [f64]) {
        let n = self.resolution();
        for i in 0..n {
            let row = &self.chol[i * n..i * n + i];
            let s: f64 = row.iter().zip(&d[..i]).map(|(a, b)| a * b).sum();
            d[i] = (d[i] - s) / self.chol[i * n + i];
        }
    }

    /// Log-density of `N(mean, σ²(K + jitter·I))` at `g`.
    pub fn log_density(&self, mean: &[f64], sigma: f64, g: &[f64]) -> Result<f64> {
        let n = self.resolution();
        if !(sigma > 0.0) {
            return Err(Error::invalid(format!("log_density needs σ > 0, got {sigma}")));
        }
        if mean.len() != n || g.len() != n {
            return Err(Error::GridMismatch(format!(
                "log_density on grid of {n} points got vectors of {} and {}",
                mean.len(),
                g.len()
            )));
        }
        let mut d: Vec<f64> = g.iter().zip(mean).map(|(a, b)| (a - b) / sigma).collect();
        self.whiten_in_place(&mut d);
        let quad: f64 = d.iter().map(|v| v * v).sum();
        Ok(-0.5 * quad - 0.5 * self.log_det - n as f64 * ln(sigma) - 0.5 * n as f64 * ln(2.0 * PI))
    }
}

/// Lower Cholesky factor of a symmetric positive-definite row-major matrix.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = a[i * n + i] - s;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l[i * n + i] = crate::math::sqrt(d);
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sqrt;

    fn frob(a: &[f64]) -> f64 {
        sqrt(a.iter().map(|v| v * v).sum())
    }

    #[test]
    fn grid_construction() {
        assert!(Grid::new(1.0, 1.0, 4, GridKind::HalfOpen).is_err());
        assert!(Grid::new(0.0, 1.0, 1, GridKind::HalfOpen).is_err());
        let g = Grid::unit(4).unwrap();
        assert_eq!(g.points(), vec![0.0, 0.25, 0.5, 0.75]);
        let g = Grid::new(0.0, 1.0, 5, GridKind::Inclusive).unwrap();
        assert_eq!(g.points(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.index_of(0.75), Some(3));
        assert_eq!(g.index_of(0.7), None);
        assert_eq!(g.index_of(1.5), None);
    }

    #[test]
    fn refinement_nests_points() {
        for kind in [GridKind::HalfOpen, GridKind::Inclusive] {
            let coarse = Grid::new(-1.0, 2.0, 20, kind).unwrap();
            let fine = coarse.refine(5).unwrap();
            let k = coarse.refinement_stride(&fine).unwrap();
            assert_eq!(k, 5);
            for j in 0..coarse.len() {
                assert!((coarse.point(j) - fine.point(k * j)).abs() < 1e-14);
            }
        }
        let g = Grid::unit(64).unwrap();
        assert_eq!(g.refine(5).unwrap().len(), 320);
    }

    #[test]
    fn kernel_values() {
        let m = KernelSpec::matern12(0.1, 1e-2).unwrap();
        assert!((m.eval(0.3, 0.3) - 0.1).abs() < 1e-15);
        assert!((m.eval(0.3, 0.31) - 0.1 * exp(-1.0)).abs() < 1e-12);
        assert!((m.eval(0.3, 0.31) - 0.036_787_944).abs() < 1e-8);
        assert_eq!(m.eval(0.1, 0.4), m.eval(0.4, 0.1));
        let se = KernelSpec::squared_exponential(0.04, 0.1).unwrap();
        assert_eq!(se.eval(0.2, 0.2), 0.04);
        assert!(KernelSpec::matern12(0.0, 1.0).is_err());
        assert!(KernelSpec::matern12(1.0, -1.0).is_err());
    }

    #[test]
    fn kernel_consistent_across_refinement() {
        let coarse = Grid::unit(16).unwrap();
        let fine = coarse.refine(4).unwrap();
        let k = KernelSpec::reference_1d();
        let kc = k.matrix(&coarse);
        let kf = k.matrix(&fine);
        for i in 0..16 {
            for j in 0..16 {
                assert_eq!(kc[i * 16 + j], kf[(4 * i) * 64 + 4 * j]);
            }
        }
    }

    #[test]
    fn cholesky_reconstructs_jittered_kernel() {
        for (kernel, n) in [
            (KernelSpec::reference_1d(), 64),
            (KernelSpec::reference_1d(), 365),
            (KernelSpec::squared_exponential(0.04, 0.1).unwrap(), 64),
        ] {
            let m = GaussianMeasure::new(Grid::unit(n).unwrap(), kernel).unwrap();
            let l = m.cholesky_factor();
            let k = m.jittered_covariance();
            let mut diff = k.clone();
            for i in 0..n {
                for j in 0..n {
                    let s: f64 = (0..=i.min(j)).map(|p| l[i * n + p] * l[j * n + p]).sum();
                    diff[i * n + j] -= s;
                }
            }
            assert!(frob(&diff) / frob(&k) < 1e-10);
            assert!(m.jitter() <= 1e-3 * kernel.variance * (1.0 + 1e-12));
        }
    }

    #[test]
    fn white_noise_needs_opt_in() {
        let g = Grid::unit(8).unwrap();
        let w = KernelSpec::white(1.0).unwrap();
        assert_eq!(GaussianMeasure::new(g.clone(), w).unwrap_err(), Error::WhiteNoiseRejected);
        assert!(GaussianMeasure::with_options(g, w, MeasureOptions { allow_white_noise: true }).is_ok());
    }

    #[test]
    fn empty_and_deterministic_samples() {
        let m = GaussianMeasure::new(Grid::unit(16).unwrap(), KernelSpec::reference_1d()).unwrap();
        assert!(m.sample(0, 1).is_empty());
        assert_eq!(m.sample(5, 42), m.sample(5, 42));
        assert_ne!(m.sample(5, 42), m.sample(5, 43));
    }

    #[test]
    fn monte_carlo_covariance_matches_kernel() {
        let n = 64;
        let m = GaussianMeasure::new(Grid::unit(n).unwrap(), KernelSpec::reference_1d()).unwrap();
        let count = 10_000;
        let s = m.sample(count, 2024);
        let k = m.kernel().matrix(m.grid());
        let mut cov = vec![0.0; n * n];
        let mut mean = vec![0.0; n];
        for row in s.rows() {
            for (a, v) in mean.iter_mut().zip(row) {
                *a += v / count as f64;
            }
        }
        for row in s.rows() {
            for i in 0..n {
                let di = row[i] - mean[i];
                for j in 0..=i {
                    cov[i * n + j] += di * (row[j] - mean[j]) / (count - 1) as f64;
                }
            }
        }
        let mut max_err: f64 = 0.0;
        for i in 0..n {
            let var = cov[i * n + i];
            assert!((0.09..=0.11).contains(&var), "variance {var} at {i}");
            for j in 0..=i {
                max_err = max_err.max((cov[i * n + j] - k[i * n + j]).abs());
            }
        }
        assert!(max_err < 0.01, "max covariance error {max_err}");
    }

    #[test]
    fn log_density_standard_normal_at_mode() {
        let g = Grid::unit(2).unwrap();
        let m = GaussianMeasure::with_options(
            g,
            KernelSpec::white(1.0).unwrap(),
            MeasureOptions { allow_white_noise: true },
        )
        .unwrap();
        let lp = m.log_density(&[0.3, -0.2], 1.0, &[0.3, -0.2]).unwrap();
        assert!((lp - (-ln(2.0 * PI))).abs() < 1e-5);
        assert!((lp + 1.837_877).abs() < 1e-5);
        let lp2 = m.log_density(&[0.3, -0.2], 2.0, &[0.3, -0.2]).unwrap();
        assert!((lp2 - lp + 2.0 * ln(2.0)).abs() < 1e-12);
        assert!(m.log_density(&[0.0, 0.0], 0.0, &[0.0, 0.0]).is_err());
        assert!(m.log_density(&[0.0], 1.0, &[0.0, 0.0]).is_err());
    }

    /// Dense oracle: invert the covariance by Gauss-Jordan elimination.
    fn dense_log_density(cov: &[f64], n: usize, mean: &[f64], sigma: f64, g: &[f64]) -> f64 {
        let mut a: Vec<f64> = cov.iter().map(|v| v * sigma * sigma).collect();
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            inv[i * n + i] = 1.0;
        }
        let mut log_det = 0.0;
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs())).unwrap();
            for k in 0..n {
                a.swap(c * n + k, p * n + k);
                inv.swap(c * n + k, p * n + k);
            }
            let piv = a[c * n + c];
            log_det += ln(piv.abs());
            for k in 0..n {
                a[c * n + k] /= piv;
                inv[c * n + k] /= piv;
            }
            for r in 0..n {
                if r != c {
                    let f = a[r * n + c];
                    for k in 0..n {
                        a[r * n + k] -= f * a[c * n + k];
                        inv[r * n + k] -= f * inv[c * n + k];
                    }
                }
            }
        }
        let d: Vec<f64> = g.iter().zip(mean).map(|(x, m)| x - m).collect();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += d[i] * inv[i * n + j] * d[j];
            }
        }
        -0.5 * quad - 0.5 * log_det - 0.5 * n as f64 * ln(2.0 * PI)
    }

    #[test]
    fn log_density_matches_dense_inverse() {
        let n = 12;
        let m = GaussianMeasure::new(Grid::unit(n).unwrap(), KernelSpec::matern12(0.3, 0.2).unwrap()).unwrap();
        let mut r = rng::seeded(77);
        let mean: Vec<f64> = (0..n).map(|_| rng::normal(&mut r)).collect();
        let g: Vec<f64> = (0..n).map(|_| rng::normal(&mut r)).collect();
        let got = m.log_density(&mean, 0.7, &g).unwrap();
        let want = dense_log_density(&m.jittered_covariance(), n, &mean, 0.7, &g);
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }
}
