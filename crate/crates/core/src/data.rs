//! Datasets of functions on a shared grid: the synthetic mixture-of-GPs
//! benchmark, finite-support fixtures with known weights, and the
//! per-row preprocessing transforms used for real time-series data.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::batch::FunctionBatch;
use crate::gaussian::{GaussianMeasure, Grid, KernelSpec};
use crate::math::{exp, ln, sqrt};
use crate::rng;
use crate::{Error, Result};

/// One entry of a dataset's processing history.
#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    Generated(String),
    Loaded(String),
    /// Rows with missing cells that were dropped on load.
    DroppedMissing { rows: usize },
    DivideByRowMean { means: Vec<f64> },
    LogCenter { means: Vec<f64> },
    /// Rows kept by a minimum per-row standard deviation filter.
    FilterMinStd { threshold: f64, kept: Vec<usize> },
    Split { seed: u64, part: String },
}

impl Provenance {
    pub fn label(&self) -> String {
        match self {
            Self::Generated(s) => format!("generated: {s}"),
            Self::Loaded(s) => format!("loaded: {s}"),
            Self::DroppedMissing { rows } => format!("dropped {rows} rows with missing values"),
            Self::DivideByRowMean { .. } => "divide-by-row-mean".to_string(),
            Self::LogCenter { .. } => "log-then-center".to_string(),
            Self::FilterMinStd { threshold, kept } => format!("min-std filter {threshold} kept {}", kept.len()),
            Self::Split { seed, part } => format!("shuffle-split seed {seed}: {part}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transform {
    None,
    DivideByRowMean,
    LogCenter,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub grid: Grid,
    pub functions: FunctionBatch,
    /// Probability of each row when the dataset is a finite-support measure.
    pub weights: Option<Vec<f64>>,
    /// Generating component of each row, when known.
    pub labels: Option<Vec<usize>>,
    pub provenance: Vec<Provenance>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, grid: Grid, functions: FunctionBatch, origin: Provenance) -> Result<Self> {
        if functions.resolution() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "functions have {} points, grid has {}",
                functions.resolution(),
                grid.len()
            )));
        }
        if functions.is_empty() {
            return Err(Error::TooFewSamples { need: 1, got: 0 });
        }
        if !functions.all_finite() {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        Ok(Self {
            name: name.into(),
            grid,
            functions,
            weights: None,
            labels: None,
            provenance: vec![origin],
        })
    }

    pub fn len(&self) -> usize {
        self.functions.count()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn resolution(&self) -> usize {
        self.grid.len()
    }

    fn with_rows(&self, rows: FunctionBatch, record: Provenance) -> Self {
        let mut d = self.clone();
        d.functions = rows;
        d.provenance.push(record);
        d
    }

    fn subset(&self, idx: &[usize], record: Provenance) -> Self {
        let mut d = self.with_rows(self.functions.select(idx), record);
        d.labels = self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect());
        // A subset of a weighted measure is no longer the same measure.
        d.weights = None;
        d
    }
}

/// Mean of mixture component `component` (0 or 1): `10x - 5` or `-10x + 5`.
pub fn mogp_mean(component: usize, x: f64) -> f64 {
    if component == 0 {
        10.0 * x - 5.0
    } else {
        -10.0 * x + 5.0
    }
}

/// Squared-exponential kernel of the mixture components (σ² = 0.04, ℓ = 0.1).
pub fn mogp_kernel() -> KernelSpec {
    KernelSpec {
        family: crate::gaussian::KernelFamily::SquaredExponential,
        variance: 0.04,
        lengthscale: 0.1,
    }
}

/// Equal-weight mixture of two GPs with linear means on `n` half-open points of `[0, 1)`.
pub fn make_mogp(n_samples: usize, resolution: usize, seed: u64) -> Result<Dataset> {
    make_mogp_on(n_samples, Grid::unit(resolution)?, seed)
}

pub fn make_mogp_on(n_samples: usize, grid: Grid, seed: u64) -> Result<Dataset> {
    if n_samples == 0 {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let measure = GaussianMeasure::new(grid.clone(), mogp_kernel())?;
    let mut r = rng::seeded(seed);
    let labels: Vec<usize> = (0..n_samples).map(|_| usize::from(rng::uniform(&mut r) >= 0.5)).collect();
    let mut functions = measure.sample_with(&mut r, n_samples);
    let pts = grid.points();
    for (i, &c) in labels.iter().enumerate() {
        for (v, &x) in functions.row_mut(i).iter_mut().zip(&pts) {
            *v += mogp_mean(c, x);
        }
    }
    let mut d = Dataset::new(
        "mogp",
        grid,
        functions,
        Provenance::Generated(format!("mogp n={n_samples} seed={seed}")),
    )?;
    d.labels = Some(labels);
    Ok(d)
}

/// Finite-support measure `w₁δ_{f₁} + w₂δ_{f₂}` as a two-row dataset.
pub fn make_two_atom(grid: Grid, f1: &[f64], f2: &[f64], weights: [f64; 2]) -> Result<Dataset> {
    if weights.iter().any(|w| !(*w > 0.0)) || (weights[0] + weights[1] - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("two-atom weights must be positive and sum to 1"));
    }
    let functions = FunctionBatch::from_rows(&[f1, f2])?;
    let mut d = Dataset::new("two-atom", grid, functions, Provenance::Generated("two-atom".into()))?;
    d.weights = Some(weights.to_vec());
    d.labels = Some(vec![0, 1]);
    Ok(d)
}

fn row_mean(row: &[f64]) -> f64 {
    row.iter().sum::<f64>() / row.len() as f64
}

pub fn preprocess(dataset: &Dataset, transform: Transform) -> Result<Dataset> {
    let n = dataset.resolution();
    let mut rows = dataset.functions.clone();
    let record = match transform {
        Transform::None => return Ok(dataset.clone()),
        Transform::DivideByRowMean => {
            let mut means = Vec::with_capacity(rows.count());
            for i in 0..rows.count() {
                let m = row_mean(rows.row(i));
                if m == 0.0 || !m.is_finite() {
                    return Err(Error::Data(format!("row {i} has zero mean; cannot divide by it")));
                }
                rows.row_mut(i).iter_mut().for_each(|v| *v /= m);
                means.push(m);
            }
            Provenance::DivideByRowMean { means }
        }
        Transform::LogCenter => {
            let mut means = Vec::with_capacity(rows.count());
            for i in 0..rows.count() {
                let row = rows.row_mut(i);
                if let Some(j) = row.iter().position(|v| !(*v > 0.0)) {
                    return Err(Error::Data(format!("row {i} has a non-positive value at column {j}; cannot log")));
                }
                row.iter_mut().for_each(|v| *v = ln(*v));
                let m = row.iter().sum::<f64>() / n as f64;
                row.iter_mut().for_each(|v| *v -= m);
                means.push(m);
            }
            Provenance::LogCenter { means }
        }
    };
    Ok(dataset.with_rows(rows, record))
}

/// Undoes the most recent transform.
pub fn invert(dataset: &Dataset) -> Result<Dataset> {
    let mut rows = dataset.functions.clone();
    match dataset.provenance.last() {
        Some(Provenance::DivideByRowMean { means }) => {
            for (i, m) in means.iter().enumerate() {
                rows.row_mut(i).iter_mut().for_each(|v| *v *= m);
            }
        }
        Some(Provenance::LogCenter { means }) => {
            for (i, m) in means.iter().enumerate() {
                rows.row_mut(i).iter_mut().for_each(|v| *v = exp(*v + m));
            }
        }
        other => {
            return Err(Error::invalid(format!(
                "last processing step is not an invertible transform: {:?}",
                other.map(Provenance::label)
            )))
        }
    }
    let mut d = dataset.clone();
    d.functions = rows;
    d.provenance.pop();
    Ok(d)
}

/// Sample standard deviation of one function across its grid points.
pub fn row_std(row: &[f64]) -> f64 {
    let m = row_mean(row);
    let ss: f64 = row.iter().map(|v| (v - m) * (v - m)).sum();
    sqrt(ss / (row.len() as f64 - 1.0))
}

/// Keeps rows whose standard deviation across grid points exceeds `threshold`.
pub fn filter_min_std(dataset: &Dataset, threshold: f64) -> Result<Dataset> {
    let kept: Vec<usize> = (0..dataset.len())
        .filter(|&i| row_std(dataset.functions.row(i)) > threshold)
        .collect();
    if kept.is_empty() {
        return Err(Error::Data(format!("no rows have standard deviation above {threshold}")));
    }
    Ok(dataset.subset(&kept, Provenance::FilterMinStd { threshold, kept: kept.clone() }))
}

/// Seed-deterministic shuffle, then the first `⌊train_fraction·N⌋` rows go to the first part.
pub fn shuffle_split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid("train fraction must lie in (0, 1)"));
    }
    let n = dataset.len();
    let k = (train_fraction * n as f64) as usize;
    if k == 0 || k == n {
        return Err(Error::TooFewSamples { need: 2, got: n });
    }
    let mut r = rng::seeded(seed);
    let perm = rng::permutation(&mut r, n);
    let a = dataset.subset(&perm[..k], Provenance::Split { seed, part: "train".into() });
    let b = dataset.subset(&perm[k..], Provenance::Split { seed, part: "test".into() });
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{sin, TAU};

    #[test]
    fn mogp_means() {
        assert_eq!(mogp_mean(0, 0.0), -5.0);
        assert_eq!(mogp_mean(0, 1.0), 5.0);
        assert_eq!(mogp_mean(1, 0.0), 5.0);
        assert_eq!(mogp_mean(1, 0.25), 2.5);
    }

    #[test]
    fn mogp_reproducible_and_balanced() {
        let a = make_mogp(1000, 16, 7).unwrap();
        let b = make_mogp(1000, 16, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.functions, make_mogp(1000, 16, 8).unwrap().functions);
        let ones = a.labels.unwrap().iter().filter(|&&c| c == 1).count() as f64;
        let se = sqrt(0.25 / 1000.0);
        assert!((ones / 1000.0 - 0.5).abs() < 3.0 * se);
        assert!(make_mogp(10, 1, 0).is_err());
        assert!(make_mogp(0, 8, 0).is_err());
    }

    #[test]
    fn mogp_pointwise_variance_matches_mixture_moments() {
        let d = make_mogp(10_000, 16, 11).unwrap();
        let n = d.len() as f64;
        for (j, x) in d.grid.points().into_iter().enumerate() {
            let col: Vec<f64> = d.functions.rows().map(|r| r[j]).collect();
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
            let want = 0.04 + 25.0 * (2.0 * x - 1.0) * (2.0 * x - 1.0);
            assert!((var - want).abs() < 0.05 * want, "x={x}: {var} vs {want}");
        }
    }

    #[test]
    fn two_atom_construction() {
        let grid = Grid::unit(64).unwrap();
        let f1: Vec<f64> = grid.points().iter().map(|x| sin(TAU * x)).collect();
        let f2: Vec<f64> = f1.iter().map(|v| -v).collect();
        let d = make_two_atom(grid.clone(), &f1, &f2, [0.5, 0.5]).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.weights, Some(vec![0.5, 0.5]));
        assert!(make_two_atom(grid.clone(), &f1, &f2, [1.0, 0.0]).is_err());
        let d = make_two_atom(grid, &f1, &f2, [0.3, 0.7]).unwrap();
        assert_eq!(d.weights, Some(vec![0.3, 0.7]));
    }

    fn dataset(rows: &[&[f64]]) -> Dataset {
        let b = FunctionBatch::from_rows(rows).unwrap();
        let grid = Grid::new(0.0, 1.0, b.resolution(), crate::gaussian::GridKind::Inclusive).unwrap();
        Dataset::new("t", grid, b, Provenance::Loaded("test".into())).unwrap()
    }

    #[test]
    fn divide_by_row_mean() {
        let d = dataset(&[&[2.0, 4.0, 6.0]]);
        let p = preprocess(&d, Transform::DivideByRowMean).unwrap();
        assert_eq!(p.functions.row(0), &[0.5, 1.0, 1.5]);
        assert_eq!(p.provenance.len(), 2);
        assert!(preprocess(&dataset(&[&[1.0, -1.0]]), Transform::DivideByRowMean).is_err());
        let back = invert(&p).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn log_center() {
        let d = dataset(&[&[3.0, 3.0, 3.0], &[1.0, 2.0, 4.0]]);
        let p = preprocess(&d, Transform::LogCenter).unwrap();
        assert!(p.functions.row(0).iter().all(|v| v.abs() < 1e-15));
        let back = invert(&p).unwrap();
        for (a, b) in back.functions.as_slice().iter().zip(d.functions.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(preprocess(&dataset(&[&[1.0, 0.0]]), Transform::LogCenter).is_err());
        assert!(invert(&d).is_err());
    }

    #[test]
    fn std_filter_and_split() {
        let d = dataset(&[&[0.0, 0.0, 0.0], &[0.0, 1.0, 2.0], &[1.0, 1.1, 0.9], &[5.0, -5.0, 0.0]]);
        let f = filter_min_std(&d, 0.3).unwrap();
        assert_eq!(f.len(), 2);
        assert!(matches!(f.provenance.last(), Some(Provenance::FilterMinStd { kept, .. }) if kept == &vec![1, 3]));
        assert!(filter_min_std(&d, 100.0).is_err());
        let (a, b) = shuffle_split(&d, 0.5, 3).unwrap();
        assert_eq!((a.len(), b.len()), (2, 2));
        let (a2, _) = shuffle_split(&d, 0.5, 3).unwrap();
        assert_eq!(a, a2);
        let mut all: Vec<Vec<f64>> = a.functions.rows().chain(b.functions.rows()).map(|r| r.to_vec()).collect();
        all.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut orig: Vec<Vec<f64>> = d.functions.rows().map(|r| r.to_vec()).collect();
        orig.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(all, orig);
        assert!(shuffle_split(&d, 1.0, 0).is_err());
    }

    #[test]
    fn dataset_validation() {
        let grid = Grid::unit(4).unwrap();
        assert!(Dataset::new("x", grid.clone(), FunctionBatch::zeros(1, 3), Provenance::Loaded(String::new())).is_err());
        assert!(Dataset::new("x", grid.clone(), FunctionBatch::empty(4), Provenance::Loaded(String::new())).is_err());
        let nan = FunctionBatch::new(4, vec![0.0, f64::NAN, 0.0, 0.0]).unwrap();
        assert!(Dataset::new("x", grid, nan, Provenance::Loaded(String::new())).is_err());
    }
}
