//! Conditional flow-matching objective, Adam and the training loop, plus Monte
//! Carlo estimators of the marginal and conditional losses for finite-support
//! data.

use alloc::vec;
use alloc::vec::Vec;

use crate::batch::FunctionBatch;
use crate::field::VectorField;
use crate::gaussian::{GaussianMeasure, Grid};
use crate::math::{floor, powf, sqrt};
use crate::operator::{batch_to_grid_major, Conditioning, OperatorParams};
use crate::path::{conditional_flow, conditional_vector_field_into, MarginalOracle, PathParametrization};
use crate::rng::{self, Rng};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Value and parameter gradients (serialization order) of a loss.
#[derive(Clone, Debug)]
pub struct LossOutput {
    pub loss: f64,
    pub grads: Vec<Tensor>,
}

/// `mean_{i,j} (v_θ(tᵢ, gᵢ)(xⱼ) - uᵢ(xⱼ))²` and its gradient.
pub fn regression_loss(
    params: &OperatorParams,
    grid: &Grid,
    g: &FunctionBatch,
    t: &[f64],
    target: &FunctionBatch,
    cond: Option<&Conditioning>,
) -> Result<LossOutput> {
    if target.count() != g.count() || target.resolution() != g.resolution() {
        return Err(Error::invalid("regression target does not match the state batch"));
    }
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let x = tape.constant(params.input_tensor(grid, g, t, cond)?);
    let y = params.forward(&mut tape, &vars, x)?;
    let u = tape.constant(batch_to_grid_major(target));
    let d = tape.sub(y, u)?;
    let sq = tape.mul(d, d)?;
    let l = tape.mean(sq)?;
    let loss = tape.value(l).item().unwrap_or(f64::NAN);
    let mut grads = tape.backward(l)?;
    let grads = vars
        .iter()
        .map(|v| grads.take(*v).unwrap_or_else(|| Tensor::zeros(tape.value(*v).shape().to_vec())))
        .collect();
    Ok(LossOutput { loss, grads })
}

/// Builds the regression pair `(g_t, u_t)` with `g_t = φ_t^f(g₀)` and
/// `u_t = v_t^f(g_t)` for each row.
pub fn conditional_targets(
    path: PathParametrization,
    f: &FunctionBatch,
    g0: &FunctionBatch,
    t: &[f64],
) -> Result<(FunctionBatch, FunctionBatch)> {
    if f.count() != g0.count() || f.resolution() != g0.resolution() || t.len() != f.count() {
        return Err(Error::invalid("targets, noise and times must have matching batch sizes"));
    }
    let n = f.resolution();
    let mut gt = FunctionBatch::zeros(f.count(), n);
    let mut ut = FunctionBatch::zeros(f.count(), n);
    for i in 0..f.count() {
        let g = conditional_flow(path, f.row(i), t[i], g0.row(i))?;
        conditional_vector_field_into(path, f.row(i), t[i], &g, ut.row_mut(i))?;
        gt.row_mut(i).copy_from_slice(&g);
    }
    Ok((gt, ut))
}

/// Conditional flow-matching loss on a minibatch of targets `f`, noise `g₀`
/// and times `t`.
pub fn fm_loss(
    params: &OperatorParams,
    grid: &Grid,
    path: PathParametrization,
    f: &FunctionBatch,
    g0: &FunctionBatch,
    t: &[f64],
) -> Result<LossOutput> {
    let (gt, ut) = conditional_targets(path, f, g0, t)?;
    regression_loss(params, grid, &gt, t, &ut, None)
}

/// Same as [`fm_loss`] with the observation encoding of `mask` fed as
/// conditioning channels.
pub fn conditional_fm_loss(
    params: &OperatorParams,
    grid: &Grid,
    path: PathParametrization,
    f: &FunctionBatch,
    g0: &FunctionBatch,
    t: &[f64],
    mask: &[bool],
) -> Result<LossOutput> {
    let z = encode_observations(f, mask)?;
    let (gt, ut) = conditional_targets(path, f, g0, t)?;
    regression_loss(params, grid, &gt, t, &ut, Some(&z))
}

/// Two channels per point: the mask indicator and the masked value.
pub fn encode_observations(f: &FunctionBatch, mask: &[bool]) -> Result<Conditioning> {
    if mask.len() != f.as_slice().len() {
        return Err(Error::invalid("mask must have one entry per function value"));
    }
    let mut data = Vec::with_capacity(2 * mask.len());
    for (v, m) in f.as_slice().iter().zip(mask) {
        let m = if *m { 1.0 } else { 0.0 };
        data.push(m);
        data.push(m * v);
    }
    Conditioning::new(2, f.resolution(), data)
}

/// Random observation masks with a uniformly drawn number of observed points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskSpec {
    pub min_observed: usize,
    pub max_observed: usize,
}

impl MaskSpec {
    pub fn draw(&self, r: &mut Rng, count: usize, n: usize) -> Result<Vec<bool>> {
        if self.min_observed > self.max_observed || self.max_observed > n {
            return Err(Error::invalid("mask bounds must satisfy min ≤ max ≤ resolution"));
        }
        let mut mask = vec![false; count * n];
        for i in 0..count {
            let k = self.min_observed + rng::index(r, self.max_observed - self.min_observed + 1);
            for &j in &rng::permutation(r, n)[..k] {
                mask[i * n + j] = true;
            }
        }
        Ok(mask)
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(params: &[Tensor]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::invalid("optimizer state does not match parameters"));
        }
        self.step += 1;
        let c1 = 1.0 - powf(self.beta1, self.step as f64);
        let c2 = 1.0 - powf(self.beta2, self.step as f64);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            for (((x, gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                *x -= lr * (*mi / c1) / (sqrt(*vi / c2) + self.eps);
            }
        }
        Ok(())
    }
}

/// Step decay: `lr·factor^⌊epoch/every⌋` (`every = 0` keeps `lr` fixed).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub lr: f64,
    pub decay_every: usize,
    pub factor: f64,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            lr,
            decay_every: 0,
            factor: 1.0,
        }
    }

    pub fn at(&self, epoch: usize) -> f64 {
        if self.decay_every == 0 {
            return self.lr;
        }
        self.lr * powf(self.factor, floor((epoch / self.decay_every) as f64))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
    pub path: PathParametrization,
    /// Train a conditional model on randomly masked observations.
    pub masks: Option<MaskSpec>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.schedule.lr > 0.0) || !(self.schedule.factor > 0.0) {
            return Err(Error::invalid("learning rate and decay factor must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Trains `params` in place on `data` (one function per row) against the
/// reference measure. Calls `on_step` after every optimizer step and returns
/// the mean loss of each epoch.
pub fn train(
    params: &mut OperatorParams,
    data: &FunctionBatch,
    measure: &GaussianMeasure,
    config: &TrainConfig,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<Vec<f64>> {
    config.validate()?;
    let grid = measure.grid();
    if data.resolution() != grid.len() {
        return Err(Error::GridMismatch(alloc::format!(
            "data has {} points, reference measure {}",
            data.resolution(),
            grid.len()
        )));
    }
    if data.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let conditional = config.masks.is_some();
    if conditional != (params.config().cond_channels == 2) {
        return Err(Error::invalid(
            "conditional training needs exactly 2 conditioning channels (and unconditional none)",
        ));
    }
    let mut r = rng::seeded(config.seed);
    let mut adam = Adam::new(params.tensors());
    let mut step = 0;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.schedule.at(epoch);
        let order = rng::permutation(&mut r, data.count());
        let mut total = 0.0;
        let mut batches = 0;
        for idx in order.chunks(config.batch_size) {
            let f = data.select(idx);
            let t: Vec<f64> = (0..idx.len()).map(|_| rng::uniform(&mut r)).collect();
            let g0 = measure.sample_with(&mut r, idx.len());
            let out = match &config.masks {
                None => fm_loss(params, grid, config.path, &f, &g0, &t)?,
                Some(spec) => {
                    let mask = spec.draw(&mut r, idx.len(), grid.len())?;
                    conditional_fm_loss(params, grid, config.path, &f, &g0, &t, &mask)?
                }
            };
            if !out.loss.is_finite() || !out.grads.iter().all(Tensor::all_finite) {
                return Err(Error::TrainingDiverged {
                    step,
                    seed: config.seed,
                });
            }
            adam.update(params.tensors_mut(), &out.grads, lr)?;
            on_step(&StepRecord {
                step,
                epoch,
                lr,
                loss: out.loss,
            });
            total += out.loss;
            batches += 1;
            step += 1;
        }
        epoch_losses.push(total / batches as f64);
    }
    Ok(epoch_losses)
}

/// Shared Monte Carlo draws `(tᵢ, atom index, g₀ᵢ)` for loss estimates.
/// Reusing one set across parameter values gives paired estimates.
#[derive(Clone, Debug)]
pub struct McDraws {
    pub t: Vec<f64>,
    pub atom: Vec<usize>,
    pub g0: FunctionBatch,
}

pub fn draw_mc(measure: &GaussianMeasure, weights: &[f64], n_mc: usize, seed: u64) -> Result<McDraws> {
    if weights.is_empty() {
        return Err(Error::invalid("need at least one atom weight"));
    }
    let mut r = rng::seeded(seed);
    let mut t = Vec::with_capacity(n_mc);
    let mut atom = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        t.push(rng::uniform(&mut r));
        let u = rng::uniform(&mut r);
        let mut acc = 0.0;
        let mut k = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        atom.push(k);
    }
    let g0 = measure.sample_with(&mut r, n_mc);
    Ok(McDraws { t, atom, g0 })
}

/// Sample mean and standard error of per-draw loss terms.
#[derive(Clone, Debug, PartialEq)]
pub struct LossEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub terms: Vec<f64>,
}

impl LossEstimate {
    pub fn from_terms(terms: Vec<f64>) -> Self {
        let n = terms.len() as f64;
        let mean = terms.iter().sum::<f64>() / n;
        let var = if terms.len() > 1 {
            terms.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std_err: sqrt(var / n),
            terms,
        }
    }
}

const EVAL_CHUNK: usize = 256;

/// Per-draw squared errors of `field` against the marginal field and against
/// the conditional field of the drawn atom, from one pass over the draws.
pub fn loss_pair(
    field: &dyn VectorField,
    oracle: &MarginalOracle<'_>,
    draws: &McDraws,
) -> Result<(LossEstimate, LossEstimate)> {
    let atoms = oracle.atoms();
    let n = atoms.resolution();
    let path = oracle.param();
    let count = draws.t.len();
    if count == 0 {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let mut marginal = Vec::with_capacity(count);
    let mut conditional = Vec::with_capacity(count);
    let mut vm = vec![0.0; n];
    let mut vc = vec![0.0; n];
    for start in (0..count).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(count);
        let mut gt = FunctionBatch::zeros(end - start, n);
        for i in start..end {
            let g = conditional_flow(path, atoms.row(draws.atom[i]), draws.t[i], draws.g0.row(i))?;
            gt.row_mut(i - start).copy_from_slice(&g);
        }
        let v = field.eval(&draws.t[start..end], &gt)?;
        for i in start..end {
            let g = gt.row(i - start);
            oracle.field_into(draws.t[i], g, &mut vm)?;
            conditional_vector_field_into(path, atoms.row(draws.atom[i]), draws.t[i], g, &mut vc)?;
            let row = v.row(i - start);
            let sq = |target: &[f64]| row.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
            marginal.push(sq(&vm));
            conditional.push(sq(&vc));
        }
    }
    Ok((LossEstimate::from_terms(marginal), LossEstimate::from_terms(conditional)))
}

/// `L̂ = E ‖v_θ - v_t‖²` (grid-averaged) against the exact marginal field.
pub fn marginal_loss(field: &dyn VectorField, oracle: &MarginalOracle<'_>, draws: &McDraws) -> Result<LossEstimate> {
    Ok(loss_pair(field, oracle, draws)?.0)
}

/// `Ĵ = E ‖v_θ - v_t^f‖²` (grid-averaged) against the conditional field.
pub fn conditional_loss(field: &dyn VectorField, oracle: &MarginalOracle<'_>, draws: &McDraws) -> Result<LossEstimate> {
    Ok(loss_pair(field, oracle, draws)?.1)
}

/// Monte Carlo marginal loss of the operator on finite-support data.
pub fn estimate_marginal_loss(
    params: &OperatorParams,
    atoms: &FunctionBatch,
    weights: &[f64],
    measure: &GaussianMeasure,
    path: PathParametrization,
    n_mc: usize,
    seed: u64,
) -> Result<LossEstimate> {
    let oracle = MarginalOracle::new(measure, path, atoms, weights)?;
    let draws = draw_mc(measure, weights, n_mc, seed)?;
    let field = crate::operator::OperatorField::new(params, measure.grid());
    marginal_loss(&field, &oracle, &draws)
}

/// Monte Carlo conditional loss of the operator on finite-support data.
pub fn estimate_conditional_loss(
    params: &OperatorParams,
    atoms: &FunctionBatch,
    weights: &[f64],
    measure: &GaussianMeasure,
    path: PathParametrization,
    n_mc: usize,
    seed: u64,
) -> Result<LossEstimate> {
    let oracle = MarginalOracle::new(measure, path, atoms, weights)?;
    let draws = draw_mc(measure, weights, n_mc, seed)?;
    let field = crate::operator::OperatorField::new(params, measure.grid());
    conditional_loss(&field, &oracle, &draws)
}
