//! Integrates a vector field from `t = 0` to `t = 1` to push reference noise
//! onto the learned data distribution.
//!
//! The adaptive solver is Dormand-Prince 5(4) with FSAL, a PI step-size
//! controller and per-sample error control: each function in the batch gets
//! its own RMS error and a step is accepted only if every one passes. A
//! fixed-step RK4 solver is available for tests and cheap previews.

use alloc::vec;
use alloc::vec::Vec;

use crate::batch::FunctionBatch;
use crate::field::VectorField;
use crate::gaussian::{GaussianMeasure, Grid};
use crate::math::{powf, sqrt};
use crate::path::PathParametrization;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Dopri5,
    Rk4 { steps: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    pub atol: f64,
    pub rtol: f64,
    /// Upper bound on attempted steps (accepted + rejected) per solve.
    pub max_steps: usize,
    /// Functions integrated together; the error norm is the max over a chunk.
    pub chunk_size: usize,
}

impl SolverConfig {
    pub fn dopri5(atol: f64, rtol: f64) -> Self {
        Self {
            method: Method::Dopri5,
            atol,
            rtol,
            max_steps: 100_000,
            chunk_size: 100,
        }
    }

    pub fn rk4(steps: usize) -> Self {
        Self {
            method: Method::Rk4 { steps },
            atol: 0.0,
            rtol: 0.0,
            max_steps: steps,
            chunk_size: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            Method::Dopri5 => {
                if !(self.atol > 0.0 || self.rtol > 0.0) || self.atol < 0.0 || self.rtol < 0.0 {
                    return Err(Error::invalid("solver tolerances must be non-negative and not both zero"));
                }
            }
            Method::Rk4 { steps } if steps == 0 => {
                return Err(Error::invalid("RK4 needs at least one step"));
            }
            Method::Rk4 { .. } => {}
        }
        if self.chunk_size == 0 {
            return Err(Error::invalid("chunk size must be positive"));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::dopri5(1e-5, 1e-5)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveStats {
    /// Number of right-hand-side evaluations (each covers the whole state).
    pub nfe: usize,
    pub accepted: usize,
    pub rejected: usize,
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Integrates `dy/dt = f(t, y)` from `t0` to `t1` in place.
///
/// `y` is a concatenation of independent elements of length `elem_len`; the
/// error norm is the RMS within an element and the maximum across elements.
/// After every accepted step `hook(t, y)` may modify the state and must
/// return `true` if it did, in which case the derivative is re-evaluated.
pub fn solve_ode<F, H>(
    mut f: F,
    y: &mut [f64],
    elem_len: usize,
    t0: f64,
    t1: f64,
    config: &SolverConfig,
    mut hook: H,
) -> Result<SolveStats>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    H: FnMut(f64, &mut [f64]) -> bool,
{
    config.validate()?;
    if elem_len == 0 || !y.len().is_multiple_of(elem_len) {
        return Err(Error::invalid("state length must be a multiple of the element length"));
    }
    if !(t1 > t0) {
        return Err(Error::invalid("integration interval must satisfy t0 < t1"));
    }
    match config.method {
        Method::Rk4 { steps } => rk4(&mut f, y, t0, t1, steps, &mut hook),
        Method::Dopri5 => dopri5(&mut f, y, elem_len, t0, t1, config, &mut hook),
    }
}

fn rk4<F, H>(f: &mut F, y: &mut [f64], t0: f64, t1: f64, steps: usize, hook: &mut H) -> Result<SolveStats>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    H: FnMut(f64, &mut [f64]) -> bool,
{
    let n = y.len();
    let h = (t1 - t0) / steps as f64;
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut tmp = vec![0.0; n];
    let mut stats = SolveStats::default();
    for s in 0..steps {
        let t = t0 + h * s as f64;
        f(t, y, &mut k[0])?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k[0][i];
        }
        f(t + 0.5 * h, &tmp, &mut k[1])?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k[1][i];
        }
        f(t + 0.5 * h, &tmp, &mut k[2])?;
        for i in 0..n {
            tmp[i] = y[i] + h * k[2][i];
        }
        f(t + h, &tmp, &mut k[3])?;
        for i in 0..n {
            y[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("rk4 state"));
        }
        stats.nfe += 4;
        stats.accepted += 1;
        let t_next = if s + 1 == steps { t1 } else { t0 + h * (s + 1) as f64 };
        hook(t_next, y);
    }
    Ok(stats)
}

fn scaled_norm(err: &[f64], y0: &[f64], y1: &[f64], elem_len: usize, atol: f64, rtol: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for ((e, a), b) in err.chunks(elem_len).zip(y0.chunks(elem_len)).zip(y1.chunks(elem_len)) {
        let mut s = 0.0;
        for i in 0..elem_len {
            let sc = atol + rtol * a[i].abs().max(b[i].abs());
            let r = e[i] / sc;
            s += r * r;
        }
        worst = worst.max(sqrt(s / elem_len as f64));
    }
    worst
}

#[allow(clippy::too_many_arguments)]
fn initial_step<F>(
    f: &mut F,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    elem_len: usize,
    span: f64,
    atol: f64,
    rtol: f64,
    stats: &mut SolveStats,
) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let dnf = scaled_norm(f0, y0, y0, elem_len, atol, rtol);
    let dny = scaled_norm(y0, y0, y0, elem_len, atol, rtol);
    let mut h = if dnf <= 1e-5 || dny <= 1e-5 { 1e-6 } else { 0.01 * dny / dnf };
    h = h.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, d)| y + h * d).collect();
    let mut f1 = vec![0.0; y0.len()];
    f(t0 + h, &y1, &mut f1)?;
    stats.nfe += 1;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let der2 = scaled_norm(&diff, y0, y0, elem_len, atol, rtol) / h;
    let der12 = der2.max(dnf);
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        powf(0.01 / der12, 0.2)
    };
    Ok((100.0 * h).min(h1).min(span))
}

fn dopri5<F, H>(
    f: &mut F,
    y: &mut [f64],
    elem_len: usize,
    t0: f64,
    t1: f64,
    config: &SolverConfig,
    hook: &mut H,
) -> Result<SolveStats>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    H: FnMut(f64, &mut [f64]) -> bool,
{
    let n = y.len();
    let (atol, rtol) = (config.atol, config.rtol);
    let mut stats = SolveStats::default();
    let mut k: [Vec<f64>; 7] = core::array::from_fn(|_| vec![0.0; n]);
    let mut stage = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];

    f(t0, y, &mut k[0])?;
    stats.nfe += 1;
    let mut h = initial_step(f, t0, y, &k[0], elem_len, t1 - t0, atol, rtol, &mut stats)?;
    let mut t = t0;
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;

    while t < t1 {
        if stats.accepted + stats.rejected >= config.max_steps {
            return Err(Error::MaxStepsExceeded(config.max_steps));
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow(t));
        }
        let last = t + 1.01 * h >= t1;
        if last {
            h = t1 - t;
        }
        for s in 1..7 {
            let target = if s == 6 { &mut ynew } else { &mut stage };
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                target[i] = y[i] + h * acc;
            }
            let ts = t + C[s] * h;
            let src = if s == 6 { &ynew } else { &stage };
            f(ts, src, &mut k[s])?;
        }
        stats.nfe += 6;
        for i in 0..n {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate() {
                acc += E[j] * kj[i];
            }
            err[i] = h * acc;
        }
        let e = scaled_norm(&err, y, &ynew, elem_len, atol, rtol);
        if !e.is_finite() || !ynew.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dopri5 step"));
        }
        let fac11 = powf(e, EXPO);
        if e <= 1.0 {
            let fac = (fac11 / powf(facold, BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut hnew = h / fac;
            facold = e.max(1e-4);
            t = if last { t1 } else { t + h };
            y.copy_from_slice(&ynew);
            k.swap(0, 6);
            if hook(t, y) && t < t1 {
                f(t, y, &mut k[0])?;
                stats.nfe += 1;
            }
            if last_rejected {
                hnew = hnew.min(h);
            }
            last_rejected = false;
            stats.accepted += 1;
            h = hnew;
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            last_rejected = true;
            stats.rejected += 1;
        }
    }
    Ok(stats)
}

/// Integrates every row of `g0` through `field` from `t = 0` to `t = 1`.
/// `hook(t, chunk_start, state)` runs after accepted steps.
fn integrate_batch<H>(
    field: &dyn VectorField,
    g0: &FunctionBatch,
    config: &SolverConfig,
    mut hook: H,
) -> Result<SampleReport>
where
    H: FnMut(f64, usize, &mut [f64]) -> bool,
{
    config.validate()?;
    let n = g0.resolution();
    let mut samples = g0.clone();
    let mut nfe_per_chunk = Vec::new();
    let mut sizes = Vec::new();
    let (mut accepted, mut rejected) = (0, 0);
    let count = g0.count();
    for start in (0..count).step_by(config.chunk_size) {
        let end = (start + config.chunk_size).min(count);
        sizes.push(end - start);
        let y = &mut samples.as_mut_slice()[start * n..end * n];
        let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
            let g = FunctionBatch::new(n, y.to_vec())?;
            let v = field.eval(&[t], &g)?;
            if v.count() != g.count() || v.resolution() != n {
                return Err(Error::GridMismatch(alloc::string::String::from(
                    "vector field returned the wrong shape",
                )));
            }
            dy.copy_from_slice(v.as_slice());
            Ok(())
        };
        let stats = solve_ode(rhs, y, n, 0.0, 1.0, config, |t, y| hook(t, start, y))?;
        nfe_per_chunk.push(stats.nfe);
        accepted += stats.accepted;
        rejected += stats.rejected;
    }
    if !samples.all_finite() {
        return Err(Error::NonFinite("sampler output"));
    }
    let mean_nfe = if nfe_per_chunk.is_empty() {
        0.0
    } else {
        nfe_per_chunk.iter().sum::<usize>() as f64 / nfe_per_chunk.len() as f64
    };
    let nfe = nfe_per_chunk.iter().sum();
    let per_sample_nfe = if count == 0 {
        0.0
    } else {
        nfe_per_chunk.iter().zip(&sizes).map(|(a, b)| a * b).sum::<usize>() as f64 / count as f64
    };
    Ok(SampleReport {
        samples,
        nfe_per_chunk,
        nfe,
        mean_nfe,
        per_sample_nfe,
        accepted,
        rejected,
        wall_time_secs: None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleReport {
    pub samples: FunctionBatch,
    pub nfe_per_chunk: Vec<usize>,
    /// Batched field calls summed over chunks.
    pub nfe: usize,
    /// Mean number of field evaluations per chunk solve.
    pub mean_nfe: f64,
    /// Evaluations seen by each function, averaged over functions. Differs
    /// from `mean_nfe` only when the last chunk is short.
    pub per_sample_nfe: f64,
    pub accepted: usize,
    pub rejected: usize,
    /// Filled in by callers that have a clock.
    pub wall_time_secs: Option<f64>,
}

/// Pushes `count` reference draws through `field` on the measure's grid.
/// To super-resolve, pass a measure on a refined grid and a field bound to it.
pub fn sample_unconditional(
    field: &dyn VectorField,
    measure: &GaussianMeasure,
    count: usize,
    config: &SolverConfig,
    seed: u64,
) -> Result<SampleReport> {
    let g0 = measure.sample(count, seed);
    integrate_batch(field, &g0, config, |_, _, _| false)
}

/// Point observations `y(x_j) = values[j]` at grid indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Observations {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Observations {
    pub fn new(indices: Vec<usize>, values: Vec<f64>, resolution: usize) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::invalid("one value per observed index required"));
        }
        let mut seen = vec![false; resolution];
        for &i in &indices {
            if i >= resolution {
                return Err(Error::GridMismatch(alloc::format!("observation index {i} is off the grid")));
            }
            if core::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(alloc::format!("duplicate observation at index {i}")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation values"));
        }
        Ok(Self { indices, values })
    }

    /// Observations at locations `xs`, each of which must be a grid point.
    pub fn at_points(grid: &Grid, xs: &[f64], values: &[f64]) -> Result<Self> {
        let idx = xs
            .iter()
            .map(|&x| {
                grid.index_of(x)
                    .ok_or_else(|| Error::GridMismatch(alloc::format!("observation at x = {x} is not a grid point")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(idx, values.to_vec(), grid.len())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Observation-guided sampling by iterative latent-variable refinement: after
/// every accepted step the state at observed points is replaced by a draw of
/// the conditional path at the observations, `σ_t g₀(x) + m_t^ŷ(x)`, reusing
/// the sample's own initial noise.
pub fn sample_conditional_ilvr(
    field: &dyn VectorField,
    measure: &GaussianMeasure,
    path: PathParametrization,
    observations: &Observations,
    count: usize,
    config: &SolverConfig,
    seed: u64,
) -> Result<SampleReport> {
    let g0 = measure.sample(count, seed);
    let n = measure.resolution();
    if let Some(&i) = observations.indices().iter().find(|&&i| i >= n) {
        return Err(Error::GridMismatch(alloc::format!("observation index {i} is off the grid")));
    }
    let noise = g0.clone();
    let mut failure = None;
    let report = integrate_batch(field, &g0, config, |t, start, y| {
        if observations.is_empty() {
            return false;
        }
        let s = match path.schedule(t) {
            Ok(s) => s,
            Err(e) => {
                failure = Some(e);
                return false;
            }
        };
        for (r, row) in y.chunks_mut(n).enumerate() {
            let z = noise.row(start + r);
            for (&j, &v) in observations.indices().iter().zip(observations.values()) {
                row[j] = s.sigma * z[j] + s.a * v;
            }
        }
        true
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    // The last hook fires at t = 1, so observed points hold σ₁ g₀ + a(1) ŷ.
    Ok(report)
}
