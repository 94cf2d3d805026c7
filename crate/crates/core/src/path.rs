//! Conditional Gaussian probability paths `μ_t^f = N(m_t^f, σ_t² C₀)` that
//! start at the reference measure (`t = 0`) and concentrate near a target
//! function `f` (`t = 1`), together with their vector fields.
//!
//! Both parametrizations have a mean that is linear in the target,
//! `m_t^f = a(t)·f`, so everything below is phrased through the scalar
//! schedule `(a, a', σ, σ')`.

use alloc::vec;
use alloc::vec::Vec;

use crate::batch::FunctionBatch;
use crate::gaussian::GaussianMeasure;
use crate::math::{cos, ln, log_sum_exp, sin, sqrt, PI};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PathParametrization {
    /// `m_t = t·f`, `σ_t = 1 - (1 - σ_min)·t`.
    Ot { sigma_min: f64 },
    /// Variance-preserving cosine schedule with offset `s`:
    /// `m_t = α(1-t)·f`, `σ_t = √(1 - α(1-t)²)` where
    /// `α(u) = sin(π/2 · (1 - u)/(1 + s))`.
    Vp { s: f64 },
}

/// Scalar schedule of a path at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    /// Mean coefficient `a(t)` in `m_t = a(t)·f`.
    pub a: f64,
    /// `da/dt`.
    pub da: f64,
    pub sigma: f64,
    /// `dσ/dt`.
    pub dsigma: f64,
}

impl PathParametrization {
    pub const DEFAULT_SIGMA_MIN: f64 = 1e-4;
    pub const DEFAULT_VP_S: f64 = 0.08;

    pub fn ot(sigma_min: f64) -> Result<Self> {
        if !(sigma_min > 0.0 && sigma_min < 1.0) {
            return Err(Error::invalid("σ_min must lie in (0, 1)"));
        }
        Ok(Self::Ot { sigma_min })
    }

    pub fn vp(s: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::invalid("VP offset s must be positive"));
        }
        Ok(Self::Vp { s })
    }

    pub fn default_ot() -> Self {
        Self::Ot {
            sigma_min: Self::DEFAULT_SIGMA_MIN,
        }
    }

    pub fn default_vp() -> Self {
        Self::Vp {
            s: Self::DEFAULT_VP_S,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ot { .. } => "ot",
            Self::Vp { .. } => "vp",
        }
    }

    pub fn schedule(&self, t: f64) -> Result<Schedule> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid("path time must lie in [0, 1]"));
        }
        Ok(match *self {
            Self::Ot { sigma_min } => Schedule {
                a: t,
                da: 1.0,
                sigma: 1.0 - (1.0 - sigma_min) * t,
                dsigma: -(1.0 - sigma_min),
            },
            Self::Vp { s } => {
                // With u = 1 - t the phase is π/2·t/(1+s); α(1) = sin 0 = 0 exactly.
                let c = PI / (2.0 * (1.0 + s));
                let a = sin(c * t);
                let da = c * cos(c * t);
                let sigma = sqrt(1.0 - a * a);
                Schedule {
                    a,
                    da,
                    sigma,
                    dsigma: -a * da / sigma,
                }
            }
        })
    }

    /// Terminal noise scale `σ_1`.
    pub fn sigma_one(&self) -> f64 {
        self.schedule(1.0).map(|s| s.sigma).unwrap_or(f64::NAN)
    }
}

/// Mean, scale and their time derivatives of `μ_t^f`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathState {
    pub t: f64,
    pub mean: Vec<f64>,
    pub sigma: f64,
    pub dmean: Vec<f64>,
    pub dsigma: f64,
}

pub fn path_state(param: PathParametrization, f: &[f64], t: f64) -> Result<PathState> {
    let s = param.schedule(t)?;
    Ok(PathState {
        t,
        mean: f.iter().map(|v| s.a * v).collect(),
        sigma: s.sigma,
        dmean: f.iter().map(|v| s.da * v).collect(),
        dsigma: s.dsigma,
    })
}

/// `φ_t^f(g₀) = σ_t g₀ + m_t^f`: pushes reference noise onto `μ_t^f`.
pub fn conditional_flow(param: PathParametrization, f: &[f64], t: f64, g0: &[f64]) -> Result<Vec<f64>> {
    check_len(f, g0)?;
    let s = param.schedule(t)?;
    Ok(f.iter().zip(g0).map(|(fv, gv)| s.sigma * gv + s.a * fv).collect())
}

/// `v_t^f(g) = (σ'_t/σ_t)(g - m_t^f) + m'_t^f`.
pub fn conditional_vector_field(param: PathParametrization, f: &[f64], t: f64, g: &[f64]) -> Result<Vec<f64>> {
    check_len(f, g)?;
    let mut out = vec![0.0; f.len()];
    conditional_vector_field_into(param, f, t, g, &mut out)?;
    Ok(out)
}

pub(crate) fn conditional_vector_field_into(
    param: PathParametrization,
    f: &[f64],
    t: f64,
    g: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let s = param.schedule(t)?;
    match param {
        // Closed form: f - (1 - σ_min)(g - t f)/σ_t.
        PathParametrization::Ot { sigma_min } => {
            let k = (1.0 - sigma_min) / s.sigma;
            for ((o, fv), gv) in out.iter_mut().zip(f).zip(g) {
                *o = fv - k * (gv - t * fv);
            }
        }
        PathParametrization::Vp { .. } => {
            let k = s.dsigma / s.sigma;
            for ((o, fv), gv) in out.iter_mut().zip(f).zip(g) {
                *o = k * (gv - s.a * fv) + s.da * fv;
            }
        }
    }
    Ok(())
}

fn check_len(f: &[f64], g: &[f64]) -> Result<()> {
    if f.len() != g.len() {
        return Err(Error::GridMismatch(alloc::format!(
            "target has {} points but state has {}",
            f.len(),
            g.len()
        )));
    }
    Ok(())
}

/// Exact marginal vector field of a finite mixture of Dirac targets
/// `ν = Σ wᵢ δ_{fᵢ}` pushed through `param`:
/// `v_t(g) = Σ ρᵢ(g) v_t^{fᵢ}(g)` with `ρᵢ ∝ wᵢ N(g; m_t^{fᵢ}, σ_t² C₀)`.
///
/// The responsibilities are computed in log space. Atoms are whitened once
/// against the Cholesky factor of `C₀`, so a query costs one triangular solve
/// plus `O(n)` per atom.
#[derive(Clone, Debug)]
pub struct MarginalOracle<'a> {
    measure: &'a GaussianMeasure,
    param: PathParametrization,
    atoms: FunctionBatch,
    log_weights: Vec<f64>,
    whitened: FunctionBatch,
}

impl<'a> MarginalOracle<'a> {
    pub fn new(
        measure: &'a GaussianMeasure,
        param: PathParametrization,
        atoms: &FunctionBatch,
        weights: &[f64],
    ) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("marginal oracle needs at least one atom"));
        }
        if atoms.resolution() != measure.resolution() {
            return Err(Error::GridMismatch(alloc::format!(
                "atoms live on {} points, reference measure on {}",
                atoms.resolution(),
                measure.resolution()
            )));
        }
        if weights.len() != atoms.count() {
            return Err(Error::invalid("one weight per atom required"));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("atom weights must be positive and sum to 1"));
        }
        let mut whitened = atoms.clone();
        for i in 0..whitened.count() {
            measure.whiten_in_place(whitened.row_mut(i));
        }
        Ok(Self {
            measure,
            param,
            atoms: atoms.clone(),
            log_weights: weights.iter().map(|w| ln(*w)).collect(),
            whitened,
        })
    }

    pub fn param(&self) -> PathParametrization {
        self.param
    }

    pub fn atoms(&self) -> &FunctionBatch {
        &self.atoms
    }

    pub fn measure(&self) -> &GaussianMeasure {
        self.measure
    }

    /// Posterior atom probabilities `ρᵢ(g)` at time `t`.
    pub fn responsibilities(&self, t: f64, g: &[f64]) -> Result<Vec<f64>> {
        check_len(self.atoms.row(0), g)?;
        let s = self.param.schedule(t)?;
        let mut wg = g.to_vec();
        self.measure.whiten_in_place(&mut wg);
        self.responsibilities_whitened(&s, &wg)
    }

    fn responsibilities_whitened(&self, s: &Schedule, wg: &[f64]) -> Result<Vec<f64>> {
        // Terms shared by all atoms (normalizer, log det) cancel in the softmax.
        let inv_var = 1.0 / (s.sigma * s.sigma);
        let mut logits: Vec<f64> = self
            .whitened
            .rows()
            .zip(&self.log_weights)
            .map(|(wf, lw)| {
                let q: f64 = wg.iter().zip(wf).map(|(x, y)| (x - s.a * y) * (x - s.a * y)).sum();
                lw - 0.5 * q * inv_var
            })
            .collect();
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("marginal oracle log-density"));
        }
        let lse = log_sum_exp(&logits);
        for v in &mut logits {
            *v = crate::math::exp(*v - lse);
        }
        Ok(logits)
    }

    /// `v_t(g)` written into `out`.
    pub fn field_into(&self, t: f64, g: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.atoms.row(0), g)?;
        let s = self.param.schedule(t)?;
        let mut wg = g.to_vec();
        self.measure.whiten_in_place(&mut wg);
        let rho = self.responsibilities_whitened(&s, &wg)?;
        // Σρᵢ = 1 and v^f is affine in f, so v_t(g) = v_t^{f̄}(g) with f̄ = Σρᵢfᵢ.
        let mut fbar = vec![0.0; g.len()];
        for (r, f) in rho.iter().zip(self.atoms.rows()) {
            for (b, v) in fbar.iter_mut().zip(f) {
                *b += r * v;
            }
        }
        conditional_vector_field_into(self.param, &fbar, t, g, out)
    }

    pub fn field(&self, t: f64, g: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; g.len()];
        self.field_into(t, g, &mut out)?;
        Ok(out)
    }
}

/// One-shot version of [`MarginalOracle::field`].
pub fn oracle_marginal_field(
    param: PathParametrization,
    atoms: &FunctionBatch,
    weights: &[f64],
    measure: &GaussianMeasure,
    t: f64,
    g: &[f64],
) -> Result<Vec<f64>> {
    MarginalOracle::new(measure, param, atoms, weights)?.field(t, g)
}
