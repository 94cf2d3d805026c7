//! The `ffm` subcommands. Each writes its resolved config, a JSON result,
//! CSV artifacts and SVG plots under `--out`, then a manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ffm_core::batch::FunctionBatch;
use ffm_core::data::{filter_min_std, make_mogp_on, make_two_atom, preprocess, Dataset};
use ffm_core::eval::{self, pointwise_stats, PointwiseStats, StatsMse};
use ffm_core::gaussian::{GaussianMeasure, Grid};
use ffm_core::operator::{Conditioning, OperatorField, OperatorParams};
use ffm_core::sampler::{sample_conditional_ilvr, sample_unconditional, Method, Observations, SampleReport};
use ffm_core::train::{encode_observations, train};
use serde_json::{json, Value};

use crate::checkpoint::{self, Checkpoint, ModelMeta};
use crate::checks;
use crate::config::{FilterOrder, RunConfig, Source};
use crate::error::{CliError, CliResult};
use crate::output::{JsonLines, OutDir};
use crate::plot::{LinePlot, Series, PALETTE};
use crate::table;

pub const SEED_ENV: &str = "FFM_SEED";

#[derive(Parser, Debug)]
#[command(name = "ffm", version, about = "Functional flow matching on 1-D grids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset as CSV.
    GenData(GenDataArgs),
    /// Train an operator and write a checkpoint.
    Train(TrainArgs),
    /// Draw samples from a checkpoint on its training grid.
    Sample(SampleArgs),
    /// Draw samples on a grid `factor` times finer than the training grid.
    Superres(SuperresArgs),
    /// Draw samples that pass through point observations.
    CondSample(CondSampleArgs),
    /// Compare generated samples with real ones.
    Eval(EvalArgs),
    /// Run the property suites.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `mogp` or `two-atom`.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub res: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Train on this CSV instead of the configured data source.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SampleCommon {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Solver and sample settings; the model itself comes from the checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long)]
    pub rtol: Option<f64>,
    /// Fixed-step RK4 with this many steps instead of adaptive Dormand-Prince.
    #[arg(long)]
    pub rk4_steps: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: SampleCommon,
    /// Real samples to evaluate against.
    #[arg(long)]
    pub real: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SuperresArgs {
    #[command(flatten)]
    pub common: SampleCommon,
    #[arg(long, default_value_t = 5)]
    pub factor: usize,
}

#[derive(Args, Debug)]
pub struct CondSampleArgs {
    #[command(flatten)]
    pub common: SampleCommon,
    /// Observation `x=y`; `x` must be a grid point. Repeat for more points.
    #[arg(long = "obs", required = true)]
    pub obs: Vec<String>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub gen: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Smaller draw counts (seconds instead of minutes).
    #[arg(long)]
    pub quick: bool,
    /// Also train the mixture-of-GPs model and run the suites that need it.
    #[arg(long, conflicts_with = "quick")]
    pub full: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs a parsed command. `Ok(1)` means a verification suite failed.
pub fn run(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Sample(a) => sample_cmd(a),
        Command::Superres(a) => superres_cmd(a),
        Command::CondSample(a) => cond_sample_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Verify(a) => verify_cmd(a),
    }
}

/// Config file (or defaults), then `FFM_SEED`, then an explicit `--seed`.
pub fn resolve_config(path: Option<&Path>, seed: Option<u64>) -> CliResult<(RunConfig, Option<String>)> {
    let text = match path {
        Some(p) => Some(
            std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    let mut cfg = RunConfig::parse(text.as_deref().unwrap_or(""))?;
    if let Ok(v) = std::env::var(SEED_ENV) {
        cfg.seed = v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={v} is not an unsigned integer")))?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok((cfg, text))
}

fn echo_config(out: &mut OutDir, cfg: &RunConfig, input: Option<&str>) -> CliResult<()> {
    if let Some(text) = input {
        out.write_text("config.input.cfg", text)?;
    }
    out.write_text("config.cfg", &cfg.render())
}

pub fn build_dataset(cfg: &RunConfig) -> CliResult<Dataset> {
    let d = &cfg.data;
    let grid = Grid::new(0.0, 1.0, d.resolution, d.grid)?;
    let mut data = match d.source {
        Source::Mogp => make_mogp_on(d.n, grid, cfg.data_seed())?,
        Source::TwoAtom => {
            let atoms = checks::sine_atoms(&grid);
            make_two_atom(grid, atoms.row(0), atoms.row(1), [0.5, 0.5])?
        }
        Source::Csv => {
            let path = d.csv.as_deref().ok_or_else(|| CliError::Config("no csv path".into()))?;
            table::load_dataset(path, d.layout, d.drop_missing, d.grid)?
        }
    };
    if let (Some(th), Some(FilterOrder::Before)) = (d.min_std, d.filter) {
        data = filter_min_std(&data, th)?;
    }
    data = preprocess(&data, d.transform)?;
    if let (Some(th), Some(FilterOrder::After)) = (d.min_std, d.filter) {
        data = filter_min_std(&data, th)?;
    }
    Ok(data)
}

fn samples_plot(grid: &Grid, batch: &FunctionBatch, title: &str, max: usize) -> String {
    let mut p = LinePlot::new(title, "x", "f(x)");
    for (i, row) in batch.rows().take(max).enumerate() {
        p.push(Series::faint(grid.points(), row.to_vec(), PALETTE[i % PALETTE.len()]));
    }
    p.to_svg()
}

fn gen_data(a: GenDataArgs) -> CliResult<i32> {
    let (mut cfg, input) = resolve_config(a.config.as_deref(), a.seed)?;
    if let Some(name) = &a.dataset {
        cfg.data.source = match name.as_str() {
            "mogp" => Source::Mogp,
            "two-atom" => Source::TwoAtom,
            other => return Err(CliError::Config(format!("unknown dataset `{other}` (mogp | two-atom)"))),
        };
    }
    if let Some(n) = a.n {
        cfg.data.n = n;
    }
    if let Some(r) = a.res {
        cfg.data.resolution = r;
    }
    cfg.validate()?;
    let data = build_dataset(&cfg)?;
    let mut out = OutDir::create(&a.out)?;
    echo_config(&mut out, &cfg, input.as_deref())?;
    let csv = out.file("data.csv");
    table::write_batch(&csv, &data.functions, &data.grid)?;
    out.write_text("data.svg", &samples_plot(&data.grid, &data.functions, &data.name, 30))?;
    out.write_json(
        "data.json",
        &json!({
            "name": data.name,
            "count": data.len(),
            "resolution": data.resolution(),
            "seed": cfg.data_seed(),
            "weights": data.weights,
            "provenance": data.provenance.iter().map(|p| p.label()).collect::<Vec<_>>(),
        }),
    )?;
    out.finish()?;
    println!("wrote {} functions on {} points to {}", data.len(), data.resolution(), csv.display());
    Ok(0)
}

fn train_cmd(a: TrainArgs) -> CliResult<i32> {
    let (mut cfg, input) = resolve_config(a.config.as_deref(), a.seed)?;
    if let Some(p) = &a.data {
        cfg.data.source = Source::Csv;
        cfg.data.csv = Some(p.clone());
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    let data = build_dataset(&cfg)?;
    cfg.data.resolution = data.resolution();
    let measure = GaussianMeasure::new(data.grid.clone(), cfg.kernel)?;
    let mut params = OperatorParams::build(cfg.operator, cfg.init_seed())?;
    let mut out = OutDir::create(&a.out)?;
    echo_config(&mut out, &cfg, input.as_deref())?;

    let mut log = JsonLines::create(out.file("train_log.jsonl"))?;
    let t0 = Instant::now();
    let mut steps: Vec<(f64, f64)> = Vec::new();
    let mut log_err = None;
    let result = train(&mut params, &data.functions, &measure, &cfg.train_config(), |r| {
        steps.push((r.step as f64, r.loss));
        let rec = json!({
            "step": r.step,
            "epoch": r.epoch,
            "lr": r.lr,
            "loss": r.loss,
            "wall_time": t0.elapsed().as_secs_f64(),
        });
        if let Err(e) = log.record(&rec) {
            log_err.get_or_insert(e);
        }
    });
    log.close()?;
    if let Some(e) = log_err {
        return Err(e);
    }
    let epoch_losses = result?;
    let seconds = t0.elapsed().as_secs_f64();

    let ck = Checkpoint {
        params,
        meta: ModelMeta {
            path: cfg.path,
            kernel: cfg.kernel,
            grid: data.grid.clone(),
            epochs: cfg.epochs,
            seed: cfg.seed,
        },
    };
    let ck_path = out.file("model.ckpt");
    checkpoint::save(&ck_path, &ck)?;
    let epochs: Vec<f64> = (1..=epoch_losses.len()).map(|e| e as f64).collect();
    table::write_columns(&out.file("losses.csv"), &[("epoch", &epochs), ("mean_loss", &epoch_losses)])?;
    let mut p = LinePlot::new("training loss", "step", "log10 loss");
    p.push(Series::new(
        "minibatch",
        steps.iter().map(|s| s.0).collect(),
        steps.iter().map(|s| s.1.log10()).collect(),
        PALETTE[0],
    ));
    out.write_text("loss.svg", &p.to_svg())?;
    out.write_json(
        "train.json",
        &json!({
            "epochs": cfg.epochs,
            "steps": steps.len(),
            "final_epoch_loss": epoch_losses.last(),
            "epoch_losses": epoch_losses,
            "seconds": seconds,
            "parameters": ck.params.count(),
            "dataset": {
                "name": data.name,
                "count": data.len(),
                "resolution": data.resolution(),
                "provenance": data.provenance.iter().map(|p| p.label()).collect::<Vec<_>>(),
            },
        }),
    )?;
    out.finish()?;
    println!(
        "trained {} epochs ({} steps) in {seconds:.1}s, final epoch loss {:.4e}; checkpoint {}",
        cfg.epochs,
        steps.len(),
        epoch_losses.last().copied().unwrap_or(f64::NAN),
        ck_path.display()
    );
    Ok(0)
}

/// Config for a model command: file/env/flag settings plus the model
/// description from the checkpoint.
fn model_config(c: &SampleCommon) -> CliResult<(RunConfig, Option<String>, Checkpoint)> {
    let (mut cfg, input) = resolve_config(c.config.as_deref(), c.seed)?;
    let ck = checkpoint::load(&c.checkpoint)?;
    cfg.operator = *ck.params.config();
    cfg.conditional = cfg.operator.cond_channels > 0;
    cfg.path = ck.meta.path;
    cfg.kernel = ck.meta.kernel;
    cfg.data.resolution = ck.meta.grid.len();
    cfg.data.grid = ck.meta.grid.kind();
    if let Some(n) = c.count {
        cfg.count = n;
    }
    if let Some(v) = c.atol {
        cfg.solver.atol = v;
    }
    if let Some(v) = c.rtol {
        cfg.solver.rtol = v;
    }
    if let Some(s) = c.rk4_steps {
        cfg.solver.method = Method::Rk4 { steps: s };
    }
    cfg.validate()?;
    Ok((cfg, input, ck))
}

/// All-zero conditioning (nothing observed) for a conditional model used
/// unconditionally.
fn no_conditioning(params: &OperatorParams, n: usize) -> CliResult<Option<Conditioning>> {
    let c = params.config().cond_channels;
    Ok(if c == 0 {
        None
    } else {
        Some(Conditioning::new(c, n, vec![0.0; c * n])?)
    })
}

fn report_json(r: &SampleReport, grid: &Grid, cfg: &RunConfig, seconds: f64) -> Value {
    let (method, steps) = match cfg.solver.method {
        Method::Dopri5 => ("dopri5", None),
        Method::Rk4 { steps } => ("rk4", Some(steps)),
    };
    json!({
        "count": r.samples.count(),
        "resolution": grid.len(),
        "nfe": r.nfe,
        "mean_nfe": r.mean_nfe,
        "per_sample_nfe": r.per_sample_nfe,
        "nfe_per_chunk": r.nfe_per_chunk,
        "accepted_steps": r.accepted,
        "rejected_steps": r.rejected,
        "wall_time_secs": seconds,
        "seed": cfg.sample_seed(),
        "solver": {
            "method": method,
            "rk4_steps": steps,
            "atol": cfg.solver.atol,
            "rtol": cfg.solver.rtol,
            "chunk_size": cfg.solver.chunk_size,
        },
    })
}

fn write_samples(
    out: &mut OutDir,
    grid: &Grid,
    report: &SampleReport,
    cfg: &RunConfig,
    seconds: f64,
    extra: Value,
) -> CliResult<Value> {
    table::write_batch(&out.file("samples.csv"), &report.samples, grid)?;
    out.write_text("samples.svg", &samples_plot(grid, &report.samples, "samples", 30))?;
    let mut rep = report_json(report, grid, cfg, seconds);
    if let (Value::Object(m), Value::Object(e)) = (&mut rep, extra) {
        m.extend(e);
    }
    out.write_json("report.json", &rep)?;
    Ok(rep)
}

fn sample_cmd(a: SampleArgs) -> CliResult<i32> {
    let (cfg, input, ck) = model_config(&a.common)?;
    let grid = ck.meta.grid.clone();
    let measure = GaussianMeasure::new(grid.clone(), ck.meta.kernel)?;
    let cond = no_conditioning(&ck.params, grid.len())?;
    let mut field = OperatorField::new(&ck.params, &grid);
    if let Some(z) = &cond {
        field = field.with_conditioning(z);
    }
    let t0 = Instant::now();
    let report = sample_unconditional(&field, &measure, cfg.count, &cfg.solver, cfg.sample_seed())?;
    let seconds = t0.elapsed().as_secs_f64();
    let mut out = OutDir::create(&a.common.out)?;
    echo_config(&mut out, &cfg, input.as_deref())?;
    write_samples(&mut out, &grid, &report, &cfg, seconds, json!({}))?;
    if let Some(real) = &a.real {
        let real = table::load_batch(real)?;
        evaluate_into(&mut out, &real, &report.samples, &grid)?;
    }
    out.finish()?;
    println!(
        "{} samples on {} points, mean nfe {:.1}, {seconds:.1}s",
        cfg.count,
        grid.len(),
        report.mean_nfe
    );
    Ok(0)
}

fn superres_cmd(a: SuperresArgs) -> CliResult<i32> {
    let (cfg, input, ck) = model_config(&a.common)?;
    if a.factor == 0 {
        return Err(CliError::Config("--factor must be at least 1".into()));
    }
    let grid = ck.meta.grid.refine(a.factor)?;
    let measure = GaussianMeasure::new(grid.clone(), ck.meta.kernel)?;
    let cond = no_conditioning(&ck.params, grid.len())?;
    let mut field = OperatorField::new(&ck.params, &grid);
    if let Some(z) = &cond {
        field = field.with_conditioning(z);
    }
    let t0 = Instant::now();
    let report = sample_unconditional(&field, &measure, cfg.count, &cfg.solver, cfg.sample_seed())?;
    let seconds = t0.elapsed().as_secs_f64();
    let mut out = OutDir::create(&a.common.out)?;
    echo_config(&mut out, &cfg, input.as_deref())?;
    write_samples(
        &mut out,
        &grid,
        &report,
        &cfg,
        seconds,
        json!({ "factor": a.factor, "training_resolution": ck.meta.grid.len() }),
    )?;
    out.finish()?;
    println!(
        "{} samples on {} points ({}x the training grid), mean nfe {:.1}",
        cfg.count,
        grid.len(),
        a.factor,
        report.mean_nfe
    );
    Ok(0)
}

pub fn parse_observation(s: &str) -> CliResult<(f64, f64)> {
    let (x, y) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("observation `{s}` is not of the form x=y")))?;
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| CliError::Config(format!("observation `{s}` is not numeric")))
    };
    Ok((num(x)?, num(y)?))
}

fn cond_sample_cmd(a: CondSampleArgs) -> CliResult<i32> {
    let (cfg, input, ck) = model_config(&a.common)?;
    let grid = ck.meta.grid.clone();
    let n = grid.len();
    let pairs = a.obs.iter().map(|s| parse_observation(s)).collect::<CliResult<Vec<_>>>()?;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let obs = Observations::at_points(&grid, &xs, &ys)?;
    let measure = GaussianMeasure::new(grid.clone(), ck.meta.kernel)?;
    let cond = if ck.params.config().cond_channels > 0 {
        let mut f = vec![0.0; n];
        let mut mask = vec![false; n];
        for (&i, &v) in obs.indices().iter().zip(obs.values()) {
            f[i] = v;
            mask[i] = true;
        }
        Some(encode_observations(&FunctionBatch::new(n, f)?, &mask)?)
    } else {
        None
    };
    let mut field = OperatorField::new(&ck.params, &grid);
    if let Some(z) = &cond {
        field = field.with_conditioning(z);
    }
    let t0 = Instant::now();
    let report = sample_conditional_ilvr(&field, &measure, ck.meta.path, &obs, cfg.count, &cfg.solver, cfg.sample_seed())?;
    let seconds = t0.elapsed().as_secs_f64();
    let max_dev = report
        .samples
        .rows()
        .flat_map(|r| obs.indices().iter().zip(obs.values()).map(move |(&i, &v)| (r[i] - v).abs()))
        .fold(0.0, f64::max);
    let mut out = OutDir::create(&a.common.out)?;
    echo_config(&mut out, &cfg, input.as_deref())?;
    let extra = json!({
        "observations": pairs.iter().map(|p| json!({"x": p.0, "y": p.1})).collect::<Vec<_>>(),
        "max_abs_deviation_at_observations": max_dev,
        "terminal_noise_scale": ck.meta.path.sigma_one(),
        "model_conditioning_channels": ck.params.config().cond_channels,
    });
    write_samples(&mut out, &grid, &report, &cfg, seconds, extra)?;
    out.finish()?;
    println!(
        "{} conditional samples, max deviation at observations {max_dev:.2e}, mean nfe {:.1}",
        cfg.count, report.mean_nfe
    );
    Ok(0)
}

fn stats_plot(grid: &[f64], real: &PointwiseStats, gen: &PointwiseStats) -> String {
    let mut p = LinePlot::new("pointwise mean and one standard deviation", "x", "f(x)");
    for (s, label, color) in [(real, "real", PALETTE[0]), (gen, "generated", PALETTE[1])] {
        let sd: Vec<f64> = s.variance.iter().map(|v| v.sqrt()).collect();
        p.push(Series::new(label, grid.to_vec(), s.mean.clone(), color));
        for sign in [-1.0, 1.0] {
            let band = s.mean.iter().zip(&sd).map(|(m, d)| m + sign * d).collect();
            let mut b = Series::faint(grid.to_vec(), band, color);
            b.opacity = 0.8;
            p.push(b);
        }
    }
    p.to_svg()
}

fn curve_plot(title: &str, xl: &str, yl: &str, x: Vec<f64>, real: Vec<f64>, gen: Vec<f64>) -> String {
    let mut p = LinePlot::new(title, xl, yl);
    p.push(Series::new("real", x.clone(), real, PALETTE[0]));
    p.push(Series::new("generated", x, gen, PALETTE[1]));
    p.to_svg()
}

/// Metrics JSON/CSV plus statistic, spectrum, density and autocorrelation plots.
pub fn evaluate_into(out: &mut OutDir, real: &FunctionBatch, gen: &FunctionBatch, grid: &Grid) -> CliResult<Value> {
    let e = eval::evaluate(real, gen)?;
    let (rs, gs) = (pointwise_stats(real)?, pointwise_stats(gen)?);
    let mut metrics = serde_json::Map::new();
    for (name, v) in StatsMse::NAMES.iter().zip(e.stats.as_array()) {
        metrics.insert(name.to_string(), json!(v));
    }
    metrics.insert("kde_density".into(), json!(e.kde));
    metrics.insert("spectrum".into(), json!(e.spectrum));
    let metrics = Value::Object(metrics);
    out.write_json(
        "metrics.json",
        &json!({ "real_count": real.count(), "generated_count": gen.count(), "resolution": real.resolution(), "mse": metrics }),
    )?;
    let mut csv = String::from("metric,mse\n");
    for (k, v) in metrics.as_object().into_iter().flatten() {
        csv.push_str(&format!("{k},{v}\n"));
    }
    out.write_text("metrics.csv", &csv)?;

    let pts = if grid.len() == real.resolution() {
        grid.points()
    } else {
        Grid::unit(real.resolution())?.points()
    };
    out.write_text("stats.svg", &stats_plot(&pts, &rs, &gs))?;
    let (sr, sg) = (eval::compute_spectrum(real)?, eval::compute_spectrum(gen)?);
    let k: Vec<f64> = (0..sr.len()).map(|i| i as f64).collect();
    out.write_text("spectrum.svg", &curve_plot("energy spectrum", "wavenumber", "log10 energy", k, sr, sg))?;
    let kde = eval::kde_curves(real, gen, eval::KDE_BANDWIDTH)?;
    out.write_text("density.svg", &curve_plot("pointwise value density", "value", "density", kde.x, kde.real, kde.gen))?;
    out.write_text(
        "autocorrelation.svg",
        &curve_plot(
            "adjacent-point correlation",
            "x",
            "correlation",
            pts[..pts.len() - 1].to_vec(),
            rs.autocorrelation,
            gs.autocorrelation,
        ),
    )?;
    Ok(metrics)
}

fn eval_cmd(a: EvalArgs) -> CliResult<i32> {
    let real = table::load_batch(&a.real)?;
    let gen = table::load_batch(&a.gen)?;
    if real.resolution() != gen.resolution() {
        return Err(CliError::Data(format!(
            "real functions have {} points, generated {}",
            real.resolution(),
            gen.resolution()
        )));
    }
    let mut out = OutDir::create(&a.out)?;
    let grid = Grid::unit(real.resolution())?;
    let metrics = evaluate_into(&mut out, &real, &gen, &grid)?;
    out.finish()?;
    for (k, v) in metrics.as_object().into_iter().flatten() {
        println!("{k:>16}  {v}");
    }
    Ok(0)
}

fn verify_cmd(a: VerifyArgs) -> CliResult<i32> {
    let (cfg, _) = resolve_config(None, a.seed)?;
    let mut out = OutDir::create(&a.out)?;
    out.write_text("config.cfg", &cfg.render())?;
    let mut results = checks::quick_suite(a.quick, cfg.seed)?;
    for c in &results {
        println!("{}", c.line());
    }
    if a.full {
        let settings = checks::MogpSettings {
            epochs: cfg.epochs,
            seed: cfg.seed,
            ..Default::default()
        };
        let (c4, model) = checks::mogp_reproduction(&settings)?;
        println!("{}", c4.line());
        let solver = ffm_core::sampler::SolverConfig::dopri5(1e-5, 1e-5);
        let c6 = checks::resolution_transfer(&model, 200, &solver, cfg.seed + 10)?;
        println!("{}", c6.line());
        results.push(c4);
        results.push(c6);
    }
    results.sort_by_key(|c| c.id);
    let passed = results.iter().all(|c| c.passed);
    out.write_json(
        "verify.json",
        &json!({ "passed": passed, "checks": results.iter().map(|c| c.to_json()).collect::<Vec<_>>() }),
    )?;
    out.finish()?;
    Ok(if passed { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observations_parse() {
        assert_eq!(parse_observation("0.25=1.5").unwrap(), (0.25, 1.5));
        assert_eq!(parse_observation(" 0.5 = -2 ").unwrap(), (0.5, -2.0));
        assert!(parse_observation("0.5").is_err());
        assert!(parse_observation("a=1").is_err());
    }

    #[test]
    fn dataset_pipeline_applies_filter_around_transform() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "1,1,1,1\n1,2,4,8\n2,2,2,2.5\n").unwrap();
        let mut cfg = RunConfig::parse(&format!(
            "[data]\nsource = csv\ncsv = {}\ntransform = log-center\nmin_std = 0.3\nfilter = after",
            p.display()
        ))
        .unwrap();
        let d = build_dataset(&cfg).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.provenance.len(), 3);
        cfg.data.filter = Some(FilterOrder::Before);
        let d = build_dataset(&cfg).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.provenance[1].label(), "min-std filter 0.3 kept 1");
    }
}
