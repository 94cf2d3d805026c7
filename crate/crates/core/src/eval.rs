//! Sample-quality metrics for batches of functions: pointwise moment curves,
//! adjacent-point autocorrelation, a pooled-value density distance, the mean
//! log energy spectrum and correlation matrices.

use alloc::vec;
use alloc::vec::Vec;

use crate::batch::FunctionBatch;
use crate::dft;
use crate::math::{log10, norm_pdf, sqrt};
use crate::{Error, Result};

/// Per-point mean and unbiased variance; defined for any batch with `N ≥ 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

pub fn pointwise_moments(batch: &FunctionBatch) -> Result<Moments> {
    let n = batch.count();
    if n < 2 {
        return Err(Error::TooFewSamples { need: 2, got: n });
    }
    let res = batch.resolution();
    let mut mean = vec![0.0; res];
    for row in batch.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut variance = vec![0.0; res];
    for row in batch.rows() {
        for ((s, v), m) in variance.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    variance.iter_mut().for_each(|s| *s /= (n - 1) as f64);
    Ok(Moments { mean, variance })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseStats {
    pub mean: Vec<f64>,
    /// Unbiased sample variance.
    pub variance: Vec<f64>,
    /// Bias-corrected Fisher skewness `G₁`.
    pub skewness: Vec<f64>,
    /// Bias-corrected excess kurtosis `G₂`.
    pub kurtosis: Vec<f64>,
    /// Correlation across samples between adjacent grid points (length `n - 1`).
    pub autocorrelation: Vec<f64>,
}

pub fn pointwise_stats(batch: &FunctionBatch) -> Result<PointwiseStats> {
    let n = batch.count();
    if n < 4 {
        return Err(Error::TooFewSamples { need: 4, got: n });
    }
    let Moments { mean, variance } = pointwise_moments(batch)?;
    let res = batch.resolution();
    if let Some(index) = variance.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::ZeroVariance { index });
    }
    let mut m3 = vec![0.0; res];
    let mut m4 = vec![0.0; res];
    let mut cross = vec![0.0; res.saturating_sub(1)];
    for row in batch.rows() {
        for j in 0..res {
            let d = row[j] - mean[j];
            m3[j] += d * d * d;
            m4[j] += d * d * d * d;
            if j + 1 < res {
                cross[j] += d * (row[j + 1] - mean[j + 1]);
            }
        }
    }
    let nf = n as f64;
    let mut skewness = vec![0.0; res];
    let mut kurtosis = vec![0.0; res];
    for j in 0..res {
        // Biased central moments first, then the standard small-sample corrections.
        let m2 = variance[j] * (nf - 1.0) / nf;
        let g1 = (m3[j] / nf) / (m2 * sqrt(m2));
        let g2 = (m4[j] / nf) / (m2 * m2) - 3.0;
        skewness[j] = sqrt(nf * (nf - 1.0)) / (nf - 2.0) * g1;
        kurtosis[j] = (nf - 1.0) / ((nf - 2.0) * (nf - 3.0)) * ((nf + 1.0) * g2 + 6.0);
    }
    let autocorrelation = cross
        .iter()
        .enumerate()
        .map(|(j, c)| c / (nf - 1.0) / sqrt(variance[j] * variance[j + 1]))
        .collect();
    Ok(PointwiseStats {
        mean,
        variance,
        skewness,
        kurtosis,
        autocorrelation,
    })
}

/// Grid-averaged squared differences of each pointwise statistic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StatsMse {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub autocorrelation: f64,
}

impl StatsMse {
    pub fn as_array(&self) -> [f64; 5] {
        [self.mean, self.variance, self.skewness, self.kurtosis, self.autocorrelation]
    }

    pub const NAMES: [&'static str; 5] = ["mean", "variance", "skewness", "kurtosis", "autocorrelation"];
}

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::GridMismatch(alloc::format!(
            "curves of length {} and {} cannot be compared",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

pub fn stats_mse(real: &PointwiseStats, gen: &PointwiseStats) -> Result<StatsMse> {
    Ok(StatsMse {
        mean: mse(&real.mean, &gen.mean)?,
        variance: mse(&real.variance, &gen.variance)?,
        skewness: mse(&real.skewness, &gen.skewness)?,
        kurtosis: mse(&real.kurtosis, &gen.kurtosis)?,
        autocorrelation: mse(&real.autocorrelation, &gen.autocorrelation)?,
    })
}

pub const KDE_POINTS: usize = 201;
pub const KDE_BANDWIDTH: f64 = 0.5;

/// Density curves of the pooled values of two batches on a shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct KdeCurves {
    pub x: Vec<f64>,
    pub real: Vec<f64>,
    pub gen: Vec<f64>,
}

/// Gaussian KDE of `values` at `x`.
pub fn kde(values: &[f64], bandwidth: f64, x: &[f64]) -> Vec<f64> {
    let norm = 1.0 / (values.len() as f64 * bandwidth);
    x.iter()
        .map(|&xi| values.iter().map(|&v| norm_pdf((xi - v) / bandwidth)).sum::<f64>() * norm)
        .collect()
}

pub fn kde_curves(real: &FunctionBatch, gen: &FunctionBatch, bandwidth: f64) -> Result<KdeCurves> {
    if real.is_empty() || gen.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    if !(bandwidth > 0.0) {
        return Err(Error::invalid("bandwidth must be positive"));
    }
    let all = real.as_slice().iter().chain(gen.as_slice());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (lo, hi) = (lo - 3.0 * bandwidth, hi + 3.0 * bandwidth);
    let x: Vec<f64> = (0..KDE_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (KDE_POINTS - 1) as f64)
        .collect();
    Ok(KdeCurves {
        real: kde(real.as_slice(), bandwidth, &x),
        gen: kde(gen.as_slice(), bandwidth, &x),
        x,
    })
}

pub fn kde_density_mse(real: &FunctionBatch, gen: &FunctionBatch, bandwidth: f64) -> Result<f64> {
    let c = kde_curves(real, gen, bandwidth)?;
    mse(&c.real, &c.gen)
}

/// Mean over samples of `|X_k|²` (unnormalized DFT), `k = 0..=n/2`.
pub fn mean_energy_spectrum(batch: &FunctionBatch) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let n = batch.resolution();
    let mut acc = vec![0.0; n / 2 + 1];
    for row in batch.rows() {
        let s = dft::rfft(row)?;
        for (k, a) in acc.iter_mut().enumerate() {
            *a += s.power(k);
        }
    }
    acc.iter_mut().for_each(|a| *a /= batch.count() as f64);
    Ok(acc)
}

/// `log₁₀` of [`mean_energy_spectrum`]; exact zeros are floored at the
/// smallest positive normal so the curve stays finite.
pub fn compute_spectrum(batch: &FunctionBatch) -> Result<Vec<f64>> {
    Ok(mean_energy_spectrum(batch)?
        .into_iter()
        .map(|e| log10(e.max(f64::MIN_POSITIVE)))
        .collect())
}

pub fn spectrum_mse(real: &FunctionBatch, gen: &FunctionBatch) -> Result<f64> {
    if real.resolution() != gen.resolution() {
        return Err(Error::GridMismatch("spectra of different resolutions".into()));
    }
    mse(&compute_spectrum(real)?, &compute_spectrum(gen)?)
}

/// Pearson correlation between every pair of grid points, row-major `n × n`.
pub fn correlation_matrix(batch: &FunctionBatch) -> Result<Vec<f64>> {
    let Moments { mean, variance } = pointwise_moments(batch)?;
    if let Some(index) = variance.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::ZeroVariance { index });
    }
    let n = batch.resolution();
    let mut c = vec![0.0; n * n];
    for row in batch.rows() {
        let d: Vec<f64> = row.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..n {
            for j in 0..=i {
                c[i * n + j] += d[i] * d[j];
            }
        }
    }
    let scale = (batch.count() - 1) as f64;
    for i in 0..n {
        for j in 0..=i {
            let r = if i == j {
                1.0
            } else {
                c[i * n + j] / scale / sqrt(variance[i] * variance[j])
            };
            c[i * n + j] = r;
            c[j * n + i] = r;
        }
    }
    Ok(c)
}

/// Everything the evaluation report needs for one real/generated pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub stats: StatsMse,
    pub kde: f64,
    pub spectrum: f64,
}

pub fn evaluate(real: &FunctionBatch, gen: &FunctionBatch) -> Result<Evaluation> {
    if real.resolution() != gen.resolution() {
        return Err(Error::GridMismatch(alloc::format!(
            "real batch has {} points, generated {}",
            real.resolution(),
            gen.resolution()
        )));
    }
    Ok(Evaluation {
        stats: stats_mse(&pointwise_stats(real)?, &pointwise_stats(gen)?)?,
        kde: kde_density_mse(real, gen, KDE_BANDWIDTH)?,
        spectrum: spectrum_mse(real, gen)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{GaussianMeasure, Grid, KernelSpec, MeasureOptions};
    use crate::math::{cos, exp, TAU};
    use crate::rng;

    fn gp(count: usize, n: usize, seed: u64) -> FunctionBatch {
        GaussianMeasure::new(Grid::unit(n).unwrap(), KernelSpec::squared_exponential(1.0, 0.2).unwrap())
            .unwrap()
            .sample(count, seed)
    }

    #[test]
    fn constant_batch_is_degenerate() {
        let b = FunctionBatch::new(3, vec![2.0; 30]).unwrap();
        let m = pointwise_moments(&b).unwrap();
        assert_eq!(m.mean, vec![2.0; 3]);
        assert_eq!(m.variance, vec![0.0; 3]);
        assert_eq!(pointwise_stats(&b).unwrap_err(), Error::ZeroVariance { index: 0 });
        assert!(correlation_matrix(&b).is_err());
    }

    #[test]
    fn too_few_samples() {
        let b = FunctionBatch::new(2, vec![1.0, 2.0, 3.0, 5.0, 0.0, 1.0]).unwrap();
        assert_eq!(pointwise_stats(&b).unwrap_err(), Error::TooFewSamples { need: 4, got: 3 });
    }

    #[test]
    fn symmetric_plus_minus_one() {
        let n = 10;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }; 4]).collect();
        let s = pointwise_stats(&FunctionBatch::from_rows(&rows).unwrap()).unwrap();
        for j in 0..4 {
            assert!((s.variance[j] - n as f64 / (n - 1) as f64).abs() < 1e-14);
            assert!(s.skewness[j].abs() < 1e-14);
            assert!((s.autocorrelation[j.min(2)] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn skewness_and_kurtosis_closed_forms() {
        // Values 0,0,0,1: biased g1 = 2/√3·…; check against hand-computed G1, G2.
        let rows: Vec<[f64; 1]> = vec![[0.0], [0.0], [0.0], [1.0], [3.0]];
        let s = pointwise_stats(&FunctionBatch::from_rows(&rows).unwrap()).unwrap();
        let x = [0.0, 0.0, 0.0, 1.0, 3.0];
        let n = 5.0;
        let m = x.iter().sum::<f64>() / n;
        let m2 = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        let m3 = x.iter().map(|v| (v - m) * (v - m) * (v - m)).sum::<f64>() / n;
        let m4 = x.iter().map(|v| (v - m) * (v - m) * (v - m) * (v - m)).sum::<f64>() / n;
        let g1 = m3 / m2.powf(1.5);
        let g2 = m4 / (m2 * m2) - 3.0;
        let big_g1 = (n * (n - 1.0)).sqrt() / (n - 2.0) * g1;
        let big_g2 = (n - 1.0) / ((n - 2.0) * (n - 3.0)) * ((n + 1.0) * g2 + 6.0);
        assert!((s.skewness[0] - big_g1).abs() < 1e-12);
        assert!((s.kurtosis[0] - big_g2).abs() < 1e-12);
    }

    #[test]
    fn mse_of_identical_and_shifted() {
        let b = gp(50, 8, 1);
        let s = pointwise_stats(&b).unwrap();
        assert_eq!(stats_mse(&s, &s).unwrap().as_array(), [0.0; 5]);
        let shifted = FunctionBatch::new(8, b.as_slice().iter().map(|v| v + 1.0).collect()).unwrap();
        let t = pointwise_stats(&shifted).unwrap();
        let e = stats_mse(&s, &t).unwrap();
        assert!((e.mean - 1.0).abs() < 1e-12);
        assert!(e.variance < 1e-20);
        assert_eq!(kde_density_mse(&b, &b, 0.5).unwrap(), 0.0);
        assert_eq!(spectrum_mse(&b, &b).unwrap(), 0.0);
        let short = pointwise_stats(&gp(50, 4, 1)).unwrap();
        assert!(stats_mse(&s, &short).is_err());
    }

    #[test]
    fn large_mixture_mean_is_zero() {
        let d = crate::data::make_mogp(4000, 16, 5).unwrap();
        let m = pointwise_moments(&d.functions).unwrap();
        for j in 0..16 {
            let se = sqrt(m.variance[j] / 4000.0);
            assert!(m.mean[j].abs() < 3.0 * se + 1e-12, "j={j}: {} vs se {se}", m.mean[j]);
        }
    }

    #[test]
    fn kde_of_normal_matches_smoothed_density() {
        let mut r = rng::seeded(10);
        let v: Vec<f64> = (0..100_000).map(|_| rng::normal(&mut r)).collect();
        let x: Vec<f64> = (0..81).map(|i| -4.0 + 0.1 * i as f64).collect();
        let d = kde(&v, 0.5, &x);
        let s = sqrt(1.25);
        for (xi, di) in x.iter().zip(&d) {
            let want = norm_pdf(xi / s) / s;
            assert!((di - want).abs() < 0.01, "x={xi}: {di} vs {want}");
        }
    }

    #[test]
    fn kde_is_continuous_in_shift() {
        let a = FunctionBatch::new(1, vec![0.0]).unwrap();
        let mut prev = f64::INFINITY;
        for delta in [1e-1, 1e-2, 1e-3, 1e-4] {
            let b = FunctionBatch::new(1, vec![delta]).unwrap();
            let e = kde_density_mse(&a, &b, 0.5).unwrap();
            assert!(e < prev);
            prev = e;
        }
        assert!(prev < 1e-8);
        assert!(kde_density_mse(&a, &FunctionBatch::empty(1), 0.5).is_err());
    }

    #[test]
    fn spectrum_of_pure_tone_and_parseval() {
        let n = 32;
        let row: Vec<f64> = (0..n).map(|j| cos(TAU * 5.0 * j as f64 / n as f64)).collect();
        let b = FunctionBatch::from_rows(&[row]).unwrap();
        let s = compute_spectrum(&b).unwrap();
        let peak = (0..s.len()).max_by(|&i, &j| s[i].total_cmp(&s[j])).unwrap();
        assert_eq!(peak, 5);
        for (k, v) in s.iter().enumerate() {
            if k != 5 {
                assert!(*v < s[5] - 10.0);
            }
        }
        let g = gp(20, 33, 2);
        let e = mean_energy_spectrum(&g).unwrap();
        let nn = 33.0;
        let spec_energy: f64 = e
            .iter()
            .enumerate()
            .map(|(k, v)| if k == 0 { *v } else { 2.0 * v })
            .sum::<f64>()
            / nn;
        let time_energy: f64 = g.as_slice().iter().map(|v| v * v).sum::<f64>() / 20.0;
        assert!((spec_energy - time_energy).abs() < 1e-9 * time_energy);
    }

    #[test]
    fn white_noise_spectrum_is_flat() {
        let m = GaussianMeasure::with_options(
            Grid::unit(32).unwrap(),
            KernelSpec::white(1.0).unwrap(),
            MeasureOptions { allow_white_noise: true },
        )
        .unwrap();
        let e = mean_energy_spectrum(&m.sample(4000, 3)).unwrap();
        // E|X_k|² = n at every wavenumber.
        for (k, v) in e.iter().enumerate() {
            let want = 32.0;
            assert!((v / want - 1.0).abs() < 0.1, "k={k}: {v}");
        }
    }

    #[test]
    fn correlation_matrix_properties() {
        let rows: Vec<Vec<f64>> = (1..6).map(|a| (0..4).map(|j| a as f64 * (j + 1) as f64).collect()).collect();
        let c = correlation_matrix(&FunctionBatch::from_rows(&rows).unwrap()).unwrap();
        assert!(c.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let n = 32;
        let ell = 0.05;
        let b = GaussianMeasure::new(Grid::unit(n).unwrap(), KernelSpec::matern12(0.7, ell).unwrap())
            .unwrap()
            .sample(10_000, 8);
        let c = correlation_matrix(&b).unwrap();
        // Lag-averaged correlations follow the kernel closely.
        for lag in 1..n / 2 {
            let avg: f64 = (0..n - lag).map(|i| c[i * n + i + lag]).sum::<f64>() / (n - lag) as f64;
            let want = exp(-(lag as f64) / n as f64 / ell);
            assert!((avg - want).abs() < 0.02, "lag {lag}: {avg} vs {want}");
        }
        // Single entries carry standard error (1 - ρ²)/√N = (1 - ρ²)/100.
        for i in 0..n {
            assert_eq!(c[i * n + i], 1.0);
            for j in 0..n {
                assert_eq!(c[i * n + j], c[j * n + i]);
                let want = exp(-(i.abs_diff(j) as f64) / n as f64 / ell);
                let tol = 4.5 * (1.0 - want * want) / 100.0 + 1e-12;
                assert!((c[i * n + j] - want).abs() < tol, "{i},{j}: {} vs {want}", c[i * n + j]);
            }
        }
    }

    #[test]
    fn full_evaluation_is_zero_on_identical_inputs() {
        let b = gp(30, 8, 4);
        let e = evaluate(&b, &b).unwrap();
        assert_eq!(e.stats.as_array(), [0.0; 5]);
        assert_eq!((e.kde, e.spectrum), (0.0, 0.0));
        assert!(evaluate(&b, &gp(30, 9, 4)).is_err());
    }
}
