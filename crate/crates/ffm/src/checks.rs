//! Property suites with pass/fail outcomes, shared by `ffm verify` and the
//! acceptance target.
//!
//! The cheap suites run in seconds to minutes. [`mogp_reproduction`] trains a
//! full-size model and is the expensive one; [`resolution_transfer`] and
//! [`ilvr_endpoints`] accept the model it returns.

use std::time::Instant;

use ffm_core::batch::FunctionBatch;
use ffm_core::data::{make_mogp, make_two_atom, Dataset};
use ffm_core::dft;
use ffm_core::eval::{pointwise_moments, pointwise_stats, stats_mse, StatsMse};
use ffm_core::field::VectorField;
use ffm_core::gaussian::{GaussianMeasure, Grid, KernelSpec};
use ffm_core::operator::{OperatorConfig, OperatorField, OperatorParams};
use ffm_core::path::{conditional_vector_field, MarginalOracle, PathParametrization};
use ffm_core::rng;
use ffm_core::sampler::{sample_conditional_ilvr, sample_unconditional, solve_ode, Observations, SolverConfig};
use ffm_core::train::{conditional_fm_loss, fm_loss, train, LossOutput, LrSchedule, MaskSpec, TrainConfig};
use ffm_core::verify::{loss_constancy_check, pushforward_check};
use serde_json::{json, Value};

use crate::error::CliResult;

#[derive(Clone, Debug)]
pub struct Check {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    /// One line for humans.
    pub summary: String,
    pub detail: Value,
    pub seconds: f64,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "criterion {} [{}] {}: {} ({:.1}s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.summary,
            self.seconds
        )
    }

    pub fn to_json(&self) -> Value {
        json!({
            "id": self.id,
            "name": self.name,
            "passed": self.passed,
            "summary": self.summary,
            "seconds": self.seconds,
            "detail": self.detail,
        })
    }
}

/// Resolution of the oracle suites.
pub const N: usize = 64;

/// `sin(2πx)` and its negative on `grid`.
pub fn sine_atoms(grid: &Grid) -> FunctionBatch {
    let f1: Vec<f64> = grid.points().iter().map(|x| (std::f64::consts::TAU * x).sin()).collect();
    let f2: Vec<f64> = f1.iter().map(|v| -v).collect();
    FunctionBatch::from_rows(&[f1, f2]).expect("equal rows")
}

pub fn two_atom(n: usize, weights: [f64; 2]) -> CliResult<Dataset> {
    let grid = Grid::unit(n)?;
    let atoms = sine_atoms(&grid);
    Ok(make_two_atom(grid, atoms.row(0), atoms.row(1), weights)?)
}

fn reference(grid: &Grid) -> CliResult<GaussianMeasure> {
    Ok(GaussianMeasure::new(grid.clone(), KernelSpec::reference_1d())?)
}

/// Runs one check; a `budget` in seconds is part of the pass condition.
fn timed(
    id: usize,
    name: &'static str,
    budget: Option<f64>,
    f: impl FnOnce() -> CliResult<(bool, String, Value)>,
) -> CliResult<Check> {
    let t0 = Instant::now();
    let (mut passed, mut summary, detail) = f()?;
    let seconds = t0.elapsed().as_secs_f64();
    if let Some(b) = budget {
        if seconds >= b {
            passed = false;
            summary.push_str(&format!("; over the {b:.0}s budget"));
        }
    }
    Ok(Check {
        id,
        name,
        passed,
        summary,
        detail,
        seconds,
    })
}

/// Exact marginal field pushes reference noise onto the atoms with their weights.
pub fn pushforward(draws: usize, seed: u64) -> CliResult<Check> {
    timed(1, "oracle pushforward", Some(120.0), || {
        let d = two_atom(N, [0.5, 0.5])?;
        let m = reference(&d.grid)?;
        let w = d.weights.clone().unwrap_or_default();
        let solver = SolverConfig::dopri5(1e-6, 1e-6);
        let r = pushforward_check(&m, PathParametrization::default_ot(), &d.functions, &w, draws, &solver, seed)?;
        let passed = r.passes(0.05, 1e-3);
        let summary = format!(
            "weights {:.3}/{:.3} (max err {:.3} <= 0.05), cluster mse {:.2e}/{:.2e} (< 1e-3)",
            r.recovered_weights[0], r.recovered_weights[1], r.max_weight_error, r.cluster_mse[0], r.cluster_mse[1]
        );
        let detail = json!({
            "draws": draws,
            "recovered_weights": r.recovered_weights,
            "max_weight_error": r.max_weight_error,
            "cluster_mse": r.cluster_mse,
            "mean_nfe": r.mean_nfe,
        });
        Ok((passed, summary, detail))
    })
}

/// Marginal and conditional losses differ by a model-independent constant.
pub fn loss_constancy(pairs: usize, n_mc: usize, seed: u64) -> CliResult<Check> {
    timed(2, "loss constancy", Some(300.0), || {
        let d = two_atom(N, [0.5, 0.5])?;
        let m = reference(&d.grid)?;
        let w = d.weights.clone().unwrap_or_default();
        let seeds: Vec<(u64, u64)> = (0..pairs as u64).map(|i| (100 + 2 * i, 101 + 2 * i)).collect();
        let reports = loss_constancy_check(
            &m,
            PathParametrization::default_ot(),
            &d.functions,
            &w,
            OperatorConfig::new(8, 16, 2),
            &seeds,
            n_mc,
            seed,
        )?;
        let passed = reports.iter().all(|r| r.passed);
        let worst = reports
            .iter()
            .map(|r| r.difference.abs() / r.std_err)
            .fold(0.0, f64::max);
        let summary = format!(
            "{}/{} pairs within 3 SE (worst |dL - dJ| = {worst:.2} SE), {n_mc} shared draws",
            reports.iter().filter(|r| r.passed).count(),
            reports.len()
        );
        let detail: Vec<Value> = reports
            .iter()
            .map(|r| {
                json!({
                    "seeds": [r.seeds.0, r.seeds.1],
                    "delta_marginal": r.delta_marginal,
                    "delta_conditional": r.delta_conditional,
                    "difference": r.difference,
                    "std_err": r.std_err,
                    "passed": r.passed,
                })
            })
            .collect();
        Ok((passed, summary, json!({ "pairs": detail, "n_mc": n_mc })))
    })
}

/// Integrating the conditional field lands on `f + σ_min·g₀`.
pub fn conditional_endpoint(count: usize, seed: u64) -> CliResult<Check> {
    timed(3, "conditional ODE endpoint", None, || {
        let grid = Grid::unit(N)?;
        let m = reference(&grid)?;
        let f = sine_atoms(&grid).row(0).to_vec();
        let path = PathParametrization::default_ot();
        let g0 = m.sample(count, seed);
        let mut y = g0.as_slice().to_vec();
        let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> ffm_core::Result<()> {
            for (g, d) in y.chunks_exact(N).zip(dy.chunks_exact_mut(N)) {
                d.copy_from_slice(&conditional_vector_field(path, &f, t, g)?);
            }
            Ok(())
        };
        let stats = solve_ode(rhs, &mut y, N, 0.0, 1.0, &SolverConfig::dopri5(1e-10, 1e-10), |_, _| false)?;
        let s1 = path.sigma_one();
        let err = y
            .chunks_exact(N)
            .zip(g0.rows())
            .flat_map(|(yi, gi)| yi.iter().zip(gi).zip(&f).map(move |((a, g), fv)| (a - (fv + s1 * g)).abs()))
            .fold(0.0, f64::max);
        Ok((
            err < 1e-6,
            format!("max |phi_1 - (f + sigma_min g0)| = {err:.2e} (< 1e-6), nfe {}", stats.nfe),
            json!({ "max_abs_err": err, "nfe": stats.nfe, "count": count }),
        ))
    })
}

/// VP schedule endpoints for `s = 0.08`.
pub fn vp_identities() -> CliResult<Check> {
    timed(5, "VP endpoint identities", None, || {
        let vp = PathParametrization::vp(0.08)?;
        let s0 = vp.schedule(0.0)?;
        let s1 = vp.schedule(1.0)?;
        let exact = s0.sigma == 1.0 && s0.a == 0.0;
        // The commonly quoted 0.116087 is sqrt(1 - 0.993239^2), i.e. computed
        // from the rounded alpha; the schedule itself gives 0.1160929.
        let phase = core::f64::consts::FRAC_PI_2 * 0.08 / 1.08;
        let closed = (s1.sigma - phase.sin()).abs() < 1e-12 && (s1.a - phase.cos()).abs() < 1e-12;
        let quoted = (s1.sigma - 0.116087).abs() < 1e-5 && (s1.a - 0.993239).abs() < 1e-5;
        Ok((
            exact && closed && quoted,
            format!(
                "sigma_0 = {}, m_0 coefficient = {}, sigma_1 = {:.7}, alpha_0 = {:.7} (quoted 0.116087, 0.993239)",
                s0.sigma, s0.a, s1.sigma, s1.a
            ),
            json!({ "sigma_0": s0.sigma, "mean_coef_0": s0.a, "sigma_1": s1.sigma, "alpha_0": s1.a }),
        ))
    })
}

/// Grid indices and values used for the three-point conditioning checks.
pub fn three_observations(grid: &Grid, f: &[f64]) -> CliResult<Observations> {
    let n = grid.len();
    let idx = vec![n / 8, (3 * n) / 8, (13 * n) / 16];
    let values = idx.iter().map(|&i| f[i]).collect();
    Ok(Observations::new(idx, values, n)?)
}

/// ILVR samples hit the observations up to the terminal noise `σ_min·g₀`.
pub fn ilvr_endpoints(
    field: &dyn VectorField,
    measure: &GaussianMeasure,
    path: PathParametrization,
    obs: &Observations,
    count: usize,
    solver: &SolverConfig,
    seed: u64,
) -> CliResult<Check> {
    timed(7, "ILVR conditional sampling", None, || {
        let r = sample_conditional_ilvr(field, measure, path, obs, count, solver, seed)?;
        let g0 = measure.sample(count, seed);
        let s1 = path.sigma_one();
        let mut ok = 0;
        let mut worst: f64 = 0.0;
        for (i, row) in r.samples.rows().enumerate() {
            let hit = obs.indices().iter().zip(obs.values()).all(|(&j, &y)| {
                let dev = (row[j] - y).abs();
                let bound = s1 * g0.row(i)[j].abs() + 1e-6;
                worst = worst.max(dev - bound + 1e-6);
                dev <= bound
            });
            ok += hit as usize;
        }
        Ok((
            ok == count,
            format!("{ok}/{count} samples within sigma_min|g0| + 1e-6 at 3 points, mean nfe {:.0}", r.mean_nfe),
            json!({ "within": ok, "count": count, "worst_excess_over_noise": worst, "mean_nfe": r.mean_nfe }),
        ))
    })
}

fn fd_rel_error(params: &OperatorParams, loss: &dyn Fn(&OperatorParams) -> ffm_core::Result<LossOutput>) -> CliResult<f64> {
    let out = loss(params)?;
    let analytic: Vec<f64> = out.grads.iter().flat_map(|g| g.data().to_vec()).collect();
    let flat = params.flat();
    let h = 1e-5;
    let mut numeric = Vec::with_capacity(flat.len());
    for i in 0..flat.len() {
        let mut p = flat.clone();
        p[i] = flat[i] + h;
        let up = loss(&OperatorParams::from_flat(*params.config(), &p)?)?.loss;
        p[i] = flat[i] - h;
        let down = loss(&OperatorParams::from_flat(*params.config(), &p)?)?.loss;
        numeric.push((up - down) / (2.0 * h));
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    Ok(diff / norm.max(1e-300))
}

/// Finite-difference gradients, DFT round trip, Cholesky reconstruction and
/// the Dormand-Prince exponential test.
pub fn hygiene(seed: u64) -> CliResult<Check> {
    timed(8, "numerical hygiene", Some(60.0), || {
        let n = 16;
        let grid = Grid::unit(n)?;
        let m = reference(&grid)?;
        let path = PathParametrization::default_vp();
        let config = OperatorConfig {
            modes: 4,
            width: 4,
            layers: 2,
            lifting: 5,
            projection: 3,
            coord_harmonics: 1,
            cond_channels: 0,
        };
        let params = OperatorParams::build(config, seed)?;
        let f = m.sample(3, seed + 1);
        let g0 = m.sample(3, seed + 2);
        let t = [0.2, 0.55, 0.9];
        let fd_plain = fd_rel_error(&params, &|p| fm_loss(p, &grid, path, &f, &g0, &t))?;
        let cparams = OperatorParams::build(OperatorConfig { cond_channels: 2, ..config }, seed)?;
        let mut r = rng::seeded(seed);
        let mask = MaskSpec {
            min_observed: 1,
            max_observed: 4,
        }
        .draw(&mut r, 3, n)?;
        let fd_cond = fd_rel_error(&cparams, &|p| conditional_fm_loss(p, &grid, path, &f, &g0, &t, &mask))?;

        let mut dft_err: f64 = 0.0;
        for len in [64, 63, 320] {
            let mut x = vec![0.0; len];
            rng::fill_normal(&mut r, &mut x);
            let back = dft::irfft(&dft::rfft(&x)?, len)?;
            dft_err = dft_err.max(x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }

        let m64 = reference(&Grid::unit(64)?)?;
        let l = m64.cholesky_factor();
        let c = m64.jittered_covariance();
        let k = 64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..k {
            for j in 0..k {
                let s: f64 = (0..=i.min(j)).map(|q| l[i * k + q] * l[j * k + q]).sum();
                num += (s - c[i * k + j]).powi(2);
                den += c[i * k + j].powi(2);
            }
        }
        let chol_err = (num / den).sqrt();

        let mut y = [1.0];
        let stats = solve_ode(
            |_, y: &[f64], dy: &mut [f64]| {
                dy[0] = y[0];
                Ok(())
            },
            &mut y,
            1,
            0.0,
            1.0,
            &SolverConfig::dopri5(1e-10, 1e-10),
            |_, _| false,
        )?;
        let exp_err = (y[0] - std::f64::consts::E).abs();

        let passed = fd_plain < 1e-4 && fd_cond < 1e-4 && dft_err < 1e-10 && chol_err < 1e-10 && exp_err < 1e-9;
        Ok((
            passed,
            format!(
                "fd rel {fd_plain:.1e}/{fd_cond:.1e} (< 1e-4), dft {dft_err:.1e} (< 1e-10), cholesky {chol_err:.1e} (< 1e-10), dopri5 exp {exp_err:.1e} (< 1e-9)"
            ),
            json!({
                "fd_rel_error": fd_plain,
                "fd_rel_error_conditional": fd_cond,
                "dft_round_trip": dft_err,
                "cholesky_rel_frobenius": chol_err,
                "dopri5_exp_error": exp_err,
                "dopri5_nfe": stats.nfe,
            }),
        ))
    })
}

/// Published FFM-OT pointwise-statistic MSEs on the mixture-of-GPs data.
pub const REFERENCE_MOGP_OT: [f64; 5] = [2.2e-2, 2.9e-1, 1.6e-2, 1.1e-2, 7e-6];
pub const REFERENCE_MOGP_NFE: f64 = 740.0;

#[derive(Clone, Debug)]
pub struct MogpSettings {
    pub train_size: usize,
    pub resolution: usize,
    pub width: usize,
    pub modes: usize,
    pub layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub decay_every: usize,
    pub samples: usize,
    pub real_size: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for MogpSettings {
    fn default() -> Self {
        Self {
            train_size: 5000,
            resolution: 64,
            width: 64,
            modes: 16,
            layers: 4,
            epochs: crate::config::DEFAULT_EPOCHS,
            batch_size: 64,
            decay_every: 50,
            samples: 500,
            real_size: 5000,
            tol: 1e-10,
            seed: 0,
        }
    }
}

pub struct MogpModel {
    pub params: OperatorParams,
    pub measure: GaussianMeasure,
    pub path: PathParametrization,
    pub real: FunctionBatch,
}

/// Trains FFM-OT on mixture-of-GPs data and compares 500 samples with a
/// fresh real set. Returns the check and the trained model.
pub fn mogp_reproduction(s: &MogpSettings) -> CliResult<(Check, MogpModel)> {
    let t0 = Instant::now();
    let data = make_mogp(s.train_size, s.resolution, s.seed)?;
    let measure = GaussianMeasure::new(data.grid.clone(), KernelSpec::reference_1d())?;
    let path = PathParametrization::default_ot();
    let mut params = OperatorParams::build(OperatorConfig::new(s.modes, s.width, s.layers), s.seed + 1)?;
    let tc = TrainConfig {
        epochs: s.epochs,
        batch_size: s.batch_size,
        schedule: LrSchedule {
            lr: 1e-3,
            decay_every: s.decay_every,
            factor: 0.1,
        },
        seed: s.seed + 2,
        path,
        masks: None,
    };
    let losses = train(&mut params, &data.functions, &measure, &tc, |_| {})?;
    let train_secs = t0.elapsed().as_secs_f64();
    let field = OperatorField::new(&params, &data.grid);
    let ts = Instant::now();
    let rep = sample_unconditional(&field, &measure, s.samples, &SolverConfig::dopri5(s.tol, s.tol), s.seed + 3)?;
    let sample_secs = ts.elapsed().as_secs_f64();
    let real = make_mogp(s.real_size, s.resolution, s.seed + 4)?.functions;
    let mse: StatsMse = stats_mse(&pointwise_stats(&real)?, &pointwise_stats(&rep.samples)?)?;
    let ours = mse.as_array();
    let within: Vec<bool> = ours
        .iter()
        .zip(REFERENCE_MOGP_OT)
        .map(|(a, p)| *a >= p / 10.0 && *a <= p * 10.0)
        .collect();
    let nfe_ok = (200.0..=1500.0).contains(&rep.mean_nfe);
    let seconds = t0.elapsed().as_secs_f64();
    let passed = within.iter().all(|b| *b) && nfe_ok && seconds < 1800.0;
    let parts: Vec<String> = StatsMse::NAMES
        .iter()
        .zip(ours.iter().zip(REFERENCE_MOGP_OT))
        .zip(&within)
        .map(|((name, (a, p)), ok)| format!("{name} {a:.1e} vs {p:.0e}{}", if *ok { "" } else { " (out)" }))
        .collect();
    let summary = format!(
        "{}; mean nfe {:.0} (200..1500); train {train_secs:.0}s + sample {sample_secs:.0}s",
        parts.join(", "),
        rep.mean_nfe
    );
    let detail = json!({
        "mse": StatsMse::NAMES.iter().zip(ours).map(|(k, v)| (k.to_string(), json!(v))).collect::<serde_json::Map<_, _>>(),
        "reference": REFERENCE_MOGP_OT,
        "within_one_order": within,
        "mean_nfe": rep.mean_nfe,
        "nfe_per_chunk": rep.nfe_per_chunk,
        "epoch_losses": losses,
        "train_seconds": train_secs,
        "sample_seconds": sample_secs,
        "settings": {
            "epochs": s.epochs, "batch_size": s.batch_size, "decay_every": s.decay_every,
            "width": s.width, "modes": s.modes, "layers": s.layers, "tol": s.tol,
        },
    });
    let check = Check {
        id: 4,
        name: "MoGP reproduction",
        passed,
        summary,
        detail,
        seconds,
    };
    Ok((
        check,
        MogpModel {
            params,
            measure,
            path,
            real,
        },
    ))
}

/// Operator outputs on band-limited inputs agree across resolutions, and
/// samples drawn on a 5x finer grid keep the coarse-grid statistics.
pub fn resolution_transfer(model: &MogpModel, samples: usize, solver: &SolverConfig, seed: u64) -> CliResult<Check> {
    timed(6, "resolution transfer", None, || {
        let coarse = model.measure.grid().clone();
        let fine = coarse.refine(5)?;
        let n = coarse.len();
        let mut r = rng::seeded(seed);
        let count = 8;
        let harmonics = 6;
        let mut coefs = vec![0.0; count * 2 * harmonics];
        rng::fill_normal(&mut r, &mut coefs);
        let band = |grid: &Grid| -> CliResult<FunctionBatch> {
            let rows: Vec<Vec<f64>> = (0..count)
                .map(|i| {
                    (0..grid.len())
                        .map(|j| {
                            let x = grid.unit_coordinate(j);
                            (1..=harmonics)
                                .map(|k| {
                                    let a = std::f64::consts::TAU * k as f64 * x;
                                    let c = &coefs[(i * harmonics + k - 1) * 2..];
                                    c[0] * a.sin() + c[1] * a.cos()
                                })
                                .sum::<f64>()
                        })
                        .collect()
                })
                .collect();
            Ok(FunctionBatch::from_rows(&rows)?)
        };
        let t: Vec<f64> = (0..count).map(|i| (i as f64 + 0.5) / count as f64).collect();
        let yc = model.params.apply(&coarse, &band(&coarse)?, &t, None)?;
        let yf = model.params.apply(&fine, &band(&fine)?, &t, None)?;
        let transfer_err = (0..count)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (yc.row(i)[j] - yf.row(i)[5 * j]).abs())
            .fold(0.0, f64::max);

        let fine_measure = model.measure.on_grid(fine.clone())?;
        let native = sample_unconditional(
            &OperatorField::new(&model.params, &coarse),
            &model.measure,
            samples,
            solver,
            seed + 1,
        )?;
        let superres = sample_unconditional(
            &OperatorField::new(&model.params, &fine),
            &fine_measure,
            samples,
            solver,
            seed + 2,
        )?;
        let restricted = superres.samples.subsample(5)?;
        let (z_mean, z_var) = moment_z_scores(&native.samples, &restricted)?;
        let rms = |z: &[f64]| (z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64).sqrt();
        let (rm, rv) = (rms(&z_mean), rms(&z_var));
        let passed = transfer_err < 1e-6 && rm <= 2.0 && rv <= 2.0;
        Ok((
            passed,
            format!(
                "64 vs 320 max diff {transfer_err:.1e} (< 1e-6); super-res stats RMS z mean {rm:.2}, variance {rv:.2} (<= 2 SE), {samples} samples each"
            ),
            json!({
                "operator_max_abs_diff": transfer_err,
                "rms_z_mean": rm,
                "rms_z_variance": rv,
                "max_abs_z_mean": z_mean.iter().fold(0.0f64, |a, b| a.max(b.abs())),
                "max_abs_z_variance": z_var.iter().fold(0.0f64, |a, b| a.max(b.abs())),
                "samples": samples,
                "native_mean_nfe": native.mean_nfe,
                "superres_mean_nfe": superres.mean_nfe,
            }),
        ))
    })
}

/// Pointwise z-scores of the difference in mean and in variance between two
/// independent batches on the same grid.
pub fn moment_z_scores(a: &FunctionBatch, b: &FunctionBatch) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let ma = pointwise_moments(a)?;
    let mb = pointwise_moments(b)?;
    let fourth = |x: &FunctionBatch, mean: &[f64]| -> Vec<f64> {
        let mut m4 = vec![0.0; x.resolution()];
        for row in x.rows() {
            for ((acc, v), mu) in m4.iter_mut().zip(row).zip(mean) {
                *acc += (v - mu).powi(4);
            }
        }
        m4.iter().map(|s| s / x.count() as f64).collect()
    };
    let (na, nb) = (a.count() as f64, b.count() as f64);
    let (fa, fb) = (fourth(a, &ma.mean), fourth(b, &mb.mean));
    let n = a.resolution();
    let mut zm = Vec::with_capacity(n);
    let mut zv = Vec::with_capacity(n);
    for j in 0..n {
        let (va, vb) = (ma.variance[j], mb.variance[j]);
        let se_m = (va / na + vb / nb).sqrt();
        let se_v = ((fa[j] - va * va).max(0.0) / na + (fb[j] - vb * vb).max(0.0) / nb).sqrt();
        zm.push((ma.mean[j] - mb.mean[j]) / se_m.max(1e-300));
        zv.push((va - vb) / se_v.max(1e-300));
    }
    Ok((zm, zv))
}

/// The suites that need no trained model.
pub fn quick_suite(quick: bool, seed: u64) -> CliResult<Vec<Check>> {
    // Only the Monte-Carlo loss comparison is expensive enough to shrink.
    let n_mc = if quick { 2000 } else { 20_000 };
    let d = two_atom(N, [0.5, 0.5])?;
    let m = reference(&d.grid)?;
    let oracle = MarginalOracle::new(&m, PathParametrization::default_ot(), &d.functions, &[0.5, 0.5])?;
    let obs = three_observations(&d.grid, d.functions.row(0))?;
    Ok(vec![
        pushforward(2000, seed)?,
        loss_constancy(5, n_mc, seed)?,
        conditional_endpoint(10, seed)?,
        vp_identities()?,
        ilvr_endpoints(
            &oracle,
            &m,
            PathParametrization::default_ot(),
            &obs,
            100,
            &SolverConfig::dopri5(1e-6, 1e-6),
            seed,
        )?,
        hygiene(seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_scores_vanish_for_identical_batches() {
        let m = reference(&Grid::unit(8).unwrap()).unwrap();
        let a = m.sample(50, 1);
        let (zm, zv) = moment_z_scores(&a, &a).unwrap();
        assert!(zm.iter().chain(&zv).all(|z| *z == 0.0));
    }

    #[test]
    fn z_scores_flag_a_shifted_batch() {
        let m = reference(&Grid::unit(8).unwrap()).unwrap();
        let a = m.sample(400, 1);
        let mut b = m.sample(400, 2);
        b.as_mut_slice().iter_mut().for_each(|v| *v += 1.0);
        let (zm, _) = moment_z_scores(&a, &b).unwrap();
        assert!(zm.iter().all(|z| z.abs() > 10.0));
    }

    #[test]
    fn vp_and_hygiene_pass() {
        assert!(vp_identities().unwrap().passed);
        let h = hygiene(3).unwrap();
        assert!(h.passed, "{}", h.line());
    }
}
