//! Executable versions of two structural facts about flow matching on
//! finite-support data:
//!
//! * integrating the exact marginal field from reference noise lands on the
//!   data atoms with the data weights ([`pushforward_check`]);
//! * the marginal and conditional losses differ by a constant that does not
//!   depend on the model, so their differences between two parameter values
//!   agree ([`loss_constancy_check`]).

use alloc::vec;
use alloc::vec::Vec;

use crate::batch::FunctionBatch;
use crate::gaussian::GaussianMeasure;
use crate::operator::{OperatorConfig, OperatorField, OperatorParams};
use crate::path::{MarginalOracle, PathParametrization};
use crate::sampler::{sample_unconditional, SolverConfig};
use crate::train::{draw_mc, loss_pair, LossEstimate};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PushforwardReport {
    /// Fraction of endpoints nearest to each atom.
    pub recovered_weights: Vec<f64>,
    pub max_weight_error: f64,
    /// Mean over each cluster of the grid-averaged squared distance to its atom.
    pub cluster_mse: Vec<f64>,
    pub mean_nfe: f64,
}

impl PushforwardReport {
    pub fn passes(&self, weight_tol: f64, mse_tol: f64) -> bool {
        self.max_weight_error <= weight_tol && self.cluster_mse.iter().all(|m| *m < mse_tol)
    }
}

/// Pushes `count` reference draws through the exact marginal field and
/// assigns each endpoint to its nearest atom.
pub fn pushforward_check(
    measure: &GaussianMeasure,
    path: PathParametrization,
    atoms: &FunctionBatch,
    weights: &[f64],
    count: usize,
    solver: &SolverConfig,
    seed: u64,
) -> Result<PushforwardReport> {
    let oracle = MarginalOracle::new(measure, path, atoms, weights)?;
    let report = sample_unconditional(&oracle, measure, count, solver, seed)?;
    let k = atoms.count();
    let n = atoms.resolution() as f64;
    let mut hits = vec![0usize; k];
    let mut sq = vec![0.0; k];
    for s in report.samples.rows() {
        let d: Vec<f64> = atoms
            .rows()
            .map(|a| a.iter().zip(s).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
            .collect();
        let best = (0..k).min_by(|&i, &j| d[i].total_cmp(&d[j])).unwrap_or(0);
        hits[best] += 1;
        sq[best] += d[best];
    }
    let recovered_weights: Vec<f64> = hits.iter().map(|h| *h as f64 / count.max(1) as f64).collect();
    let max_weight_error = recovered_weights
        .iter()
        .zip(weights)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let cluster_mse = sq
        .iter()
        .zip(&hits)
        .map(|(s, h)| if *h == 0 { f64::INFINITY } else { s / *h as f64 })
        .collect();
    Ok(PushforwardReport {
        recovered_weights,
        max_weight_error,
        cluster_mse,
        mean_nfe: report.mean_nfe,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstancyReport {
    pub seeds: (u64, u64),
    /// `L̂(θ₁) - L̂(θ₂)`.
    pub delta_marginal: f64,
    /// `Ĵ(θ₁) - Ĵ(θ₂)`.
    pub delta_conditional: f64,
    /// Mean of the per-draw difference of the two deltas.
    pub difference: f64,
    pub std_err: f64,
    /// `|difference| < 3·std_err`.
    pub passed: bool,
}

/// For each seed pair, builds two random operators and compares the change
/// in marginal loss with the change in conditional loss on shared draws.
pub fn loss_constancy_check(
    measure: &GaussianMeasure,
    path: PathParametrization,
    atoms: &FunctionBatch,
    weights: &[f64],
    config: OperatorConfig,
    seed_pairs: &[(u64, u64)],
    n_mc: usize,
    seed: u64,
) -> Result<Vec<ConstancyReport>> {
    if n_mc < 2 {
        return Err(Error::TooFewSamples { need: 2, got: n_mc });
    }
    let oracle = MarginalOracle::new(measure, path, atoms, weights)?;
    let draws = draw_mc(measure, weights, n_mc, seed)?;
    let grid = measure.grid();
    let losses = |s: u64| -> Result<(LossEstimate, LossEstimate)> {
        let params = OperatorParams::build(config, s)?;
        loss_pair(&OperatorField::new(&params, grid), &oracle, &draws)
    };
    let mut out = Vec::with_capacity(seed_pairs.len());
    for &(s1, s2) in seed_pairs {
        let (l1, j1) = losses(s1)?;
        let (l2, j2) = losses(s2)?;
        let d: Vec<f64> = (0..n_mc)
            .map(|i| (l1.terms[i] - l2.terms[i]) - (j1.terms[i] - j2.terms[i]))
            .collect();
        let e = LossEstimate::from_terms(d);
        out.push(ConstancyReport {
            seeds: (s1, s2),
            delta_marginal: l1.mean - l2.mean,
            delta_conditional: j1.mean - j2.mean,
            difference: e.mean,
            std_err: e.std_err,
            passed: e.mean.abs() < 3.0 * e.std_err,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{Grid, KernelSpec};
    use crate::math::{sin, TAU};

    fn setup(n: usize) -> (GaussianMeasure, FunctionBatch) {
        let grid = Grid::unit(n).unwrap();
        let f1: Vec<f64> = grid.points().iter().map(|x| sin(TAU * x)).collect();
        let f2: Vec<f64> = f1.iter().map(|v| -v).collect();
        (
            GaussianMeasure::new(grid, KernelSpec::reference_1d()).unwrap(),
            FunctionBatch::from_rows(&[f1, f2]).unwrap(),
        )
    }

    #[test]
    fn pushforward_recovers_unequal_weights() {
        let (m, atoms) = setup(16);
        let r = pushforward_check(
            &m,
            PathParametrization::default_ot(),
            &atoms,
            &[0.3, 0.7],
            400,
            &SolverConfig::dopri5(1e-6, 1e-6),
            1,
        )
        .unwrap();
        assert!(r.passes(0.07, 1e-3), "{r:?}");
    }

    #[test]
    fn constancy_holds_for_small_operator() {
        let (m, atoms) = setup(16);
        let reports = loss_constancy_check(
            &m,
            PathParametrization::default_vp(),
            &atoms,
            &[0.5, 0.5],
            OperatorConfig::new(4, 4, 1),
            &[(1, 2), (3, 4)],
            2000,
            5,
        )
        .unwrap();
        for r in reports {
            assert!(r.passed, "{r:?}");
            assert!(r.std_err > 0.0);
        }
        assert!(loss_constancy_check(
            &m,
            PathParametrization::default_ot(),
            &atoms,
            &[0.5, 0.5],
            OperatorConfig::new(4, 4, 1),
            &[(1, 2)],
            1,
            5
        )
        .is_err());
    }
}
