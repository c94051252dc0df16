//! Residual-trained forward surrogates.
//!
//! A network `u = N(x; theta)` is trained so that `K(x) u - F(x)` vanishes for
//! parameter samples drawn on the fly. No reference solutions are ever
//! computed during training. Predictions come with their residual so the
//! caller can decide whether to trust them or refine them with a classical
//! solver.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::AssembledSystem;
use crate::linalg::{euclidean_norm, lu_solve, matvec, shape_err, vecmat, DenseMatrix, DenseVector, LuFactors};
use crate::neural::{loss_mse, mlp_forward, AdamConfig, AdamState, MlpModel, OutputMap, ParamGrads};
use crate::rng::{stream_rng, Stream};

/// Norms at or below this are treated as an exactly solved sample.
pub const DELTA_GUARD: f64 = 1e-14;

/// Relative residual reached by [`refine_prediction`].
pub const REFINE_TOL: f64 = 1e-8;

pub fn residual(k: &DenseMatrix, u: &[f64], f: &[f64]) -> Result<DenseVector> {
    Ok(matvec(k, u)?.sub(f)?)
}

pub fn residual_loss(r: &[f64]) -> f64 {
    euclidean_norm(r)
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossGradient {
    /// `delta` is at or below [`DELTA_GUARD`]; the sample contributes nothing.
    Converged,
    Gradient(DenseVector),
}

/// `d delta / d u = r^T K / delta` for `delta = ||K u - F||`.
pub fn residual_loss_grad(r: &[f64], k: &DenseMatrix, delta: f64) -> Result<LossGradient> {
    if delta <= DELTA_GUARD {
        return Ok(LossGradient::Converged);
    }
    let g = vecmat(r, k)?;
    Ok(LossGradient::Gradient(g.scaled(1.0 / delta)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// Batch mean of `||r||`.
    Norm,
    /// Batch mean of `||r||^2`.
    MeanSquaredNorm,
}

/// Row scaling of the training residual. Reports always use the raw `K u - F`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowScaling {
    #[default]
    None,
    /// Divide row `i` by `|K_ii|`.
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossSpec {
    pub variant: LossVariant,
    pub row_scaling: RowScaling,
}

impl From<LossVariant> for LossSpec {
    fn from(variant: LossVariant) -> Self {
        Self { variant, row_scaling: RowScaling::None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant { lr: f64 },
    /// Geometric decay from `initial` at the first step to `last` at the final one.
    Exponential { initial: f64, last: f64 },
}

impl LrSchedule {
    pub fn lr_at(&self, step: usize, total_steps: usize) -> f64 {
        match *self {
            LrSchedule::Constant { lr } => lr,
            LrSchedule::Exponential { initial, last } => {
                let frac = step as f64 / total_steps.max(1) as f64;
                initial * (last / initial).powf(frac)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LrSchedule::Constant { lr } => lr > 0.0,
            LrSchedule::Exponential { initial, last } => initial > 0.0 && last > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config("learning rates must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    /// Stop early once an epoch's mean loss drops below this.
    #[serde(default)]
    pub loss_threshold: Option<f64>,
    pub seed: u64,
    pub loss_variant: LossVariant,
    #[serde(default)]
    pub row_scaling: RowScaling,
    #[serde(default)]
    pub parallel: bool,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl Default for ForwardTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            steps_per_epoch: 100,
            batch_size: 64,
            schedule: LrSchedule::Exponential { initial: 3e-3, last: 3e-5 },
            loss_threshold: None,
            seed: 0,
            loss_variant: LossVariant::MeanSquaredNorm,
            row_scaling: RowScaling::None,
            parallel: false,
            adam: AdamConfig::default(),
        }
    }
}

impl ForwardTrainConfig {
    pub fn loss_spec(&self) -> LossSpec {
        LossSpec {
            variant: self.loss_variant,
            row_scaling: self.row_scaling,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.steps_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs, steps_per_epoch and batch_size must be at least 1".into()));
        }
        if let Some(t) = self.loss_threshold {
            if !(t > 0.0) {
                return Err(Error::Config(format!("loss threshold must be positive, got {t}")));
            }
        }
        self.schedule.validate()
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }
}

/// One training input: parameters and the assembled system they produce.
/// Deliberately has no solution field.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub x: DenseVector,
    pub system: AssembledSystem,
}

pub type SampleBatch = Vec<TrainingSample>;

/// Source of parameter samples and their assembled systems.
pub trait ResidualSampler: Sync {
    fn input_dim(&self) -> usize;
    fn n_dofs(&self) -> usize;
    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<TrainingSample>;
}

/// Always returns the same sample.
#[derive(Debug, Clone)]
pub struct FixedSampler(pub TrainingSample);

impl ResidualSampler for FixedSampler {
    fn input_dim(&self) -> usize {
        self.0.x.len()
    }
    fn n_dofs(&self) -> usize {
        self.0.system.n_free()
    }
    fn draw(&self, _rng: &mut ChaCha8Rng) -> Result<TrainingSample> {
        Ok(self.0.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss of the configured variant.
    pub mean_loss: f64,
    /// Mean per-sample `||r||` (equal to `mean_loss` for the norm variant).
    pub mean_residual_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Wall-clock milliseconds at the end of each epoch, kept apart from the
    /// reproducible records.
    pub wall_ms: Vec<f64>,
}

struct SampleEval {
    delta: f64,
    loss: f64,
    grads: Option<ParamGrads>,
}

fn eval_sample(model: &MlpModel, s: &TrainingSample, loss: LossSpec, n: f64, grads: Option<&mut ParamGrads>) -> Result<SampleEval> {
    let (u, trace) = mlp_forward(model, &s.x)?;
    let k = &s.system.k;
    let r = residual(k, &u, &s.system.f)?;
    let delta = residual_loss(&r);
    // Jacobi scaling trains on D^-1 r; its gradient pulls D^-2 r back through K
    let (scaled, pull) = match loss.row_scaling {
        RowScaling::None => (None, r),
        RowScaling::Jacobi => {
            let d: Vec<f64> = (0..k.rows()).map(|i| if k[(i, i)] != 0.0 { 1.0 / k[(i, i)].abs() } else { 1.0 }).collect();
            let rs: DenseVector = r.iter().zip(&d).map(|(ri, di)| ri * di).collect();
            let pull: DenseVector = rs.iter().zip(&d).map(|(ri, di)| ri * di).collect();
            (Some(residual_loss(&rs)), pull)
        }
    };
    let delta_train = scaled.unwrap_or(delta);
    let (value, dy) = match loss.variant {
        LossVariant::Norm if delta_train <= DELTA_GUARD => (delta_train, None),
        LossVariant::Norm => (delta_train, Some(vecmat(&pull, k)?.scaled(1.0 / delta_train).scaled(1.0 / n))),
        LossVariant::MeanSquaredNorm => (delta_train * delta_train, Some(vecmat(&pull, k)?.scaled(2.0 / n))),
    };
    let mut own = None;
    if let Some(dy) = dy {
        match grads {
            Some(acc) => model.backward_into(&trace, &dy, acc)?,
            None => {
                let mut g = ParamGrads::zeros_like(model);
                model.backward_into(&trace, &dy, &mut g)?;
                own = Some(g);
            }
        }
    }
    Ok(SampleEval { delta, loss: value, grads: own })
}

/// Batch loss, mean residual norm and accumulated gradient for one batch.
pub fn batch_loss_and_grad(model: &MlpModel, batch: &[TrainingSample], loss_spec: LossSpec, parallel: bool) -> Result<(f64, f64, ParamGrads)> {
    let n = batch.len() as f64;
    let mut grads = ParamGrads::zeros_like(model);
    let mut loss = 0.0;
    let mut delta = 0.0;
    if parallel {
        let evals: Vec<Result<SampleEval>> = batch.par_iter().map(|s| eval_sample(model, s, loss_spec, n, None)).collect();
        for e in evals {
            let e = e?;
            loss += e.loss;
            delta += e.delta;
            if let Some(g) = e.grads {
                grads.add_assign(&g);
            }
        }
    } else {
        for s in batch {
            let e = eval_sample(model, s, loss_spec, n, Some(&mut grads))?;
            loss += e.loss;
            delta += e.delta;
        }
    }
    Ok((loss / n, delta / n, grads))
}

fn check_dims(model: &MlpModel, input_dim: usize, n_dofs: usize) -> Result<()> {
    if model.input_dim() != input_dim || model.output_dim() != n_dofs {
        return Err(shape_err(
            "train_forward",
            format!("network {input_dim} -> {n_dofs}"),
            format!("{} -> {}", model.input_dim(), model.output_dim()),
        )
        .into());
    }
    Ok(())
}

pub fn train_forward<S: ResidualSampler + ?Sized>(sampler: &S, model: MlpModel, cfg: &ForwardTrainConfig) -> Result<(MlpModel, TrainHistory)> {
    train_forward_observed(sampler, model, cfg, |_, _| {})
}

/// As [`train_forward`], calling `observer` after every epoch.
pub fn train_forward_observed<S, O>(sampler: &S, mut model: MlpModel, cfg: &ForwardTrainConfig, mut observer: O) -> Result<(MlpModel, TrainHistory)>
where
    S: ResidualSampler + ?Sized,
    O: FnMut(&EpochRecord, &MlpModel),
{
    cfg.validate()?;
    check_dims(&model, sampler.input_dim(), sampler.n_dofs())?;
    let mut rng = stream_rng(cfg.seed, Stream::Sampling);
    let mut adam = AdamState::new(&model, cfg.adam);
    let mut history = TrainHistory::default();
    let start = Instant::now();
    let total = cfg.total_steps();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let (mut loss_sum, mut delta_sum) = (0.0, 0.0);
        for _ in 0..cfg.steps_per_epoch {
            let batch = (0..cfg.batch_size).map(|_| sampler.draw(&mut rng)).collect::<Result<SampleBatch>>()?;
            let (loss, delta, grads) = batch_loss_and_grad(&model, &batch, cfg.loss_spec(), cfg.parallel)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            adam.step_with_lr(&mut model, &grads, cfg.schedule.lr_at(step, total))?;
            step += 1;
            loss_sum += loss;
            delta_sum += delta;
        }
        let steps = cfg.steps_per_epoch as f64;
        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / steps,
            mean_residual_norm: delta_sum / steps,
        };
        if !record.mean_loss.is_finite() || !model.is_finite() {
            return Err(Error::Divergence { epoch, loss: record.mean_loss });
        }
        observer(&record, &model);
        history.wall_ms.push(start.elapsed().as_secs_f64() * 1e3);
        let done = cfg.loss_threshold.is_some_and(|t| record.mean_loss < t);
        history.records.push(record);
        if done {
            break;
        }
    }
    Ok((model, history))
}

/// Output map `u = s K_ref^{-1} z` built from a reference stiffness (one
/// factorization, done before any training).
pub fn nominal_inverse_map(k_ref: &DenseMatrix, scale: f64) -> Result<OutputMap> {
    if !(scale > 0.0) {
        return Err(Error::Config(format!("output scale must be positive, got {scale}")));
    }
    let basis = k_ref.inverse()?.scaled(scale);
    Ok(OutputMap::Linear {
        offset: vec![0.0; basis.rows()],
        basis,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Tolerance {
    /// `||r|| <= tol ||F||`
    Relative(f64),
    /// `||r|| <= tol`
    Absolute(f64),
}

impl Tolerance {
    fn accepts(&self, norm: f64, f_norm: f64) -> bool {
        match *self {
            Tolerance::Relative(t) => norm <= t * f_norm,
            Tolerance::Absolute(t) => norm <= t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub residual: DenseVector,
    pub norm: f64,
    /// `norm / ||F||` (infinite for a non-zero residual against `F = 0`).
    pub relative: f64,
    pub tolerance: Tolerance,
    pub accepted: bool,
    pub refined: bool,
}

impl ResidualReport {
    pub fn new(system: &AssembledSystem, u: &[f64], tolerance: Tolerance) -> Result<Self> {
        let r = residual(&system.k, u, &system.f)?;
        let norm = residual_loss(&r);
        let f_norm = system.f.norm();
        let relative = if f_norm > 0.0 {
            norm / f_norm
        } else if norm == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Ok(Self {
            accepted: tolerance.accepts(norm, f_norm),
            residual: r,
            norm,
            relative,
            tolerance,
            refined: false,
        })
    }
}

/// Network prediction plus its residual report; never refines.
pub fn predict_with_residual(model: &MlpModel, x: &[f64], system: &AssembledSystem, tol: Tolerance) -> Result<(DenseVector, ResidualReport)> {
    let (u, _) = mlp_forward(model, x)?;
    if u.len() != system.n_free() {
        return Err(shape_err("predict_with_residual", system.n_free(), u.len()).into());
    }
    let report = ResidualReport::new(system, &u, tol)?;
    Ok((u, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMethod {
    ConjugateGradient,
    DirectLu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub u: DenseVector,
    pub iterations: usize,
    pub method: RefineMethod,
}

/// Improves `u0` until `||K u - F|| <= 1e-8 ||F||`. Symmetric systems use
/// Jacobi-preconditioned conjugate gradients started from `u0`; anything else
/// falls back to a direct LU solve, which ignores `u0`.
pub fn refine_prediction(u0: &[f64], system: &AssembledSystem) -> Result<Refinement> {
    let k = &system.k;
    let f = &system.f;
    if u0.len() != system.n_free() {
        return Err(shape_err("refine_prediction", system.n_free(), u0.len()).into());
    }
    let target = REFINE_TOL * f.norm();
    if !k.is_symmetric(1e-12) {
        let u = lu_solve(k, f)?;
        return Ok(Refinement {
            u,
            iterations: 0,
            method: RefineMethod::DirectLu,
        });
    }
    let n = u0.len();
    let max_iter = 20 * n + 100;
    let inv_diag: Vec<f64> = (0..n).map(|i| if k[(i, i)] > 0.0 { 1.0 / k[(i, i)] } else { 1.0 }).collect();
    let mut u = u0.to_vec();
    let mut r: Vec<f64> = f.iter().zip(matvec(k, &u)?.iter()).map(|(f, ku)| f - ku).collect();
    let mut r_norm = euclidean_norm(&r);
    let mut best = (r_norm, u.clone());
    if r_norm <= target {
        return Ok(Refinement {
            u: u.into(),
            iterations: 0,
            method: RefineMethod::ConjugateGradient,
        });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for it in 1..=max_iter {
        let kp = matvec(k, &p)?;
        let pkp: f64 = p.iter().zip(kp.iter()).map(|(a, b)| a * b).sum();
        if !(pkp > 0.0) {
            break;
        }
        let alpha = rz / pkp;
        u.iter_mut().zip(&p).for_each(|(u, p)| *u += alpha * p);
        // recompute the true residual periodically to limit drift
        if it % 50 == 0 {
            r = f.iter().zip(matvec(k, &u)?.iter()).map(|(f, ku)| f - ku).collect();
        } else {
            r.iter_mut().zip(kp.iter()).for_each(|(r, kp)| *r -= alpha * kp);
        }
        r_norm = euclidean_norm(&r);
        if r_norm < best.0 {
            best = (r_norm, u.clone());
        }
        if r_norm <= target {
            // confirm against the true residual
            let true_norm = residual_loss(&residual(k, &u, f)?);
            if true_norm <= target {
                return Ok(Refinement {
                    u: u.into(),
                    iterations: it,
                    method: RefineMethod::ConjugateGradient,
                });
            }
            r = f.iter().zip(matvec(k, &u)?.iter()).map(|(f, ku)| f - ku).collect();
        }
        z = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    let f_norm = f.norm();
    Err(Error::NonConvergence {
        iterations: max_iter,
        relative_residual: if f_norm > 0.0 { best.0 / f_norm } else { best.0 },
        best: best.1.into(),
    })
}

/// Prediction that falls back to [`refine_prediction`] when the residual
/// check fails. The returned report describes the final `u`.
pub fn predict_refined(model: &MlpModel, x: &[f64], system: &AssembledSystem, tol: Tolerance) -> Result<(DenseVector, ResidualReport)> {
    let (u, report) = predict_with_residual(model, x, system, tol)?;
    if report.accepted {
        return Ok((u, report));
    }
    let refined = refine_prediction(&u, system)?;
    let mut report = ResidualReport::new(system, &refined.u, tol)?;
    report.refined = true;
    Ok((refined.u, report))
}

/// `(x, u)` pairs for supervised training, solved with the direct solver.
pub fn make_supervised_dataset<S: ResidualSampler + ?Sized>(sampler: &S, n: usize, seed: u64) -> Result<Vec<(DenseVector, DenseVector)>> {
    let mut rng = stream_rng(seed, Stream::Dataset);
    (0..n)
        .map(|_| {
            let s = sampler.draw(&mut rng)?;
            let u = LuFactors::new(&s.system.k)?.solve(&s.system.f)?;
            Ok((s.x, u))
        })
        .collect()
}

/// Per-component mean/std output scaling estimated from a dataset.
pub fn output_standardization(dataset: &[(DenseVector, DenseVector)]) -> Result<OutputMap> {
    let first = dataset.first().ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    let dim = first.1.len();
    let n = dataset.len() as f64;
    let mut mean = vec![0.0; dim];
    for (_, u) in dataset {
        mean.iter_mut().zip(u.iter()).for_each(|(m, u)| *m += u / n);
    }
    let mut var = vec![0.0; dim];
    for (_, u) in dataset {
        var.iter_mut().zip(u.iter().zip(&mean)).for_each(|(v, (u, m))| *v += (u - m).powi(2) / n);
    }
    let scale = var
        .iter()
        .zip(&mean)
        .map(|(v, m)| {
            let s = v.sqrt();
            if s > 1e-12 * m.abs().max(1e-300) { s } else { m.abs().max(1.0) }
        })
        .collect();
    Ok(OutputMap::Affine { offset: mean, scale })
}

/// Conventional supervised training on `(x, u)` pairs with the MSE loss.
/// Batches are drawn with replacement from the dataset.
pub fn train_supervised_baseline(dataset: &[(DenseVector, DenseVector)], model: MlpModel, cfg: &ForwardTrainConfig) -> Result<(MlpModel, TrainHistory)> {
    train_supervised_observed(dataset, model, cfg, |_, _| {})
}

pub fn train_supervised_observed<O>(dataset: &[(DenseVector, DenseVector)], mut model: MlpModel, cfg: &ForwardTrainConfig, mut observer: O) -> Result<(MlpModel, TrainHistory)>
where
    O: FnMut(&EpochRecord, &MlpModel),
{
    cfg.validate()?;
    let first = dataset.first().ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    check_dims(&model, first.0.len(), first.1.len())?;
    let mut rng = stream_rng(cfg.seed, Stream::Sampling);
    let mut adam = AdamState::new(&model, cfg.adam);
    let mut history = TrainHistory::default();
    let start = Instant::now();
    let total = cfg.total_steps();
    let n = cfg.batch_size as f64;
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        for _ in 0..cfg.steps_per_epoch {
            let mut grads = ParamGrads::zeros_like(&model);
            let mut loss = 0.0;
            for _ in 0..cfg.batch_size {
                let (x, u_true) = &dataset[rng.gen_range(0..dataset.len())];
                let (y, trace) = mlp_forward(&model, x)?;
                let (l, dy) = loss_mse(&y, u_true)?;
                loss += l / n;
                model.backward_into(&trace, &dy.scaled(1.0 / n), &mut grads)?;
            }
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            adam.step_with_lr(&mut model, &grads, cfg.schedule.lr_at(step, total))?;
            step += 1;
            loss_sum += loss;
        }
        let mean = loss_sum / cfg.steps_per_epoch as f64;
        let record = EpochRecord {
            epoch,
            mean_loss: mean,
            mean_residual_norm: f64::NAN,
        };
        observer(&record, &model);
        history.records.push(record);
        history.wall_ms.push(start.elapsed().as_secs_f64() * 1e3);
        if cfg.loss_threshold.is_some_and(|t| mean < t) {
            break;
        }
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{apply_dirichlet, Dof};
    use crate::neural::mlp_backward;
    use rand::SeedableRng;

    fn system(k: DenseMatrix, f: Vec<f64>) -> AssembledSystem {
        let n = k.rows();
        apply_dirichlet(&k, &f, (0..n).map(|node| Dof { node, component: 0 }).collect(), &[]).unwrap()
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
        let b = DenseMatrix::new(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let mut k = b.transpose().matmul(&b).unwrap();
        for i in 0..n {
            k[(i, i)] += n as f64;
        }
        k
    }

    #[test]
    fn residual_examples() {
        let k = DenseMatrix::identity(2);
        assert_eq!(residual(&k, &[1.0, 2.0], &[0.0, 0.0]).unwrap().as_slice(), &[1.0, 2.0]);
        assert_eq!(residual(&k, &[0.0, 0.0], &[3.0, -1.0]).unwrap().as_slice(), &[-3.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = random_spd(&mut rng, 5);
        let f: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = lu_solve(&k, &f).unwrap();
        assert!(residual(&k, &u, &f).unwrap().norm() <= 1e-10 * euclidean_norm(&f));
        assert!(residual(&k, &[1.0], &f).is_err());
    }

    #[test]
    fn loss_matches_expanded_sum() {
        assert_eq!(residual_loss(&[0.0, 0.0]), 0.0);
        assert_eq!(residual_loss(&[3.0, 4.0]), 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = DenseMatrix::new(3, 3, (0..9).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let u: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut sum = 0.0;
        for j in 0..3 {
            let mut row = -f[j];
            for i in 0..3 {
                row += k[(j, i)] * u[i];
            }
            sum += row * row;
        }
        let got = residual_loss(&residual(&k, &u, &f).unwrap());
        assert!((got - sum.sqrt()).abs() <= 1e-14 * got);
    }

    #[test]
    fn loss_gradient_examples() {
        let g = residual_loss_grad(&[3.0, 4.0], &DenseMatrix::identity(2), 5.0).unwrap();
        match g {
            LossGradient::Gradient(g) => {
                assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
            }
            LossGradient::Converged => panic!("expected a gradient"),
        }
        assert_eq!(residual_loss_grad(&[0.0, 0.0], &DenseMatrix::identity(2), 0.0).unwrap(), LossGradient::Converged);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = DenseMatrix::new(5, 5, (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let f: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let delta = |u: &[f64]| residual_loss(&residual(&k, u, &f).unwrap());
        let r = residual(&k, &u, &f).unwrap();
        let LossGradient::Gradient(g) = residual_loss_grad(&r, &k, delta(&u)).unwrap() else {
            panic!("non-zero residual expected")
        };
        let h = 1e-6;
        for i in 0..5 {
            let mut p = u.clone();
            let mut m = u.clone();
            p[i] += h;
            m[i] -= h;
            let fd = (delta(&p) - delta(&m)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-3), "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 4;
        let k = DenseMatrix::new(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let model = MlpModel::new(&[2, 8, n], &mut rng).unwrap();
        let x = [0.3, -0.7];
        let loss = |m: &MlpModel| residual_loss(&residual(&k, &mlp_forward(m, &x).unwrap().0, &f).unwrap());
        let (u, trace) = mlp_forward(&model, &x).unwrap();
        let r = residual(&k, &u, &f).unwrap();
        let LossGradient::Gradient(dy) = residual_loss_grad(&r, &k, r.norm()).unwrap() else { panic!() };
        let analytic = mlp_backward(&model, &trace, &dy).unwrap().flat();
        let p = model.params_flat();
        let h = 1e-6;
        let mut worst = 0.0f64;
        for (idx, a) in analytic.iter().enumerate() {
            let mut mp = model.clone();
            let mut mm = model.clone();
            let mut pp = p.clone();
            pp[idx] += h;
            mp.set_params_flat(&pp).unwrap();
            pp[idx] -= 2.0 * h;
            mm.set_params_flat(&pp).unwrap();
            let fd = (loss(&mp) - loss(&mm)) / (2.0 * h);
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
        }
        assert!(worst <= 1e-5, "{worst}");
    }

    #[test]
    fn jacobi_batch_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let batch: Vec<TrainingSample> = (0..3)
            .map(|_| {
                let mut k = random_spd(&mut rng, 3);
                k[(1, 1)] *= 50.0;
                TrainingSample {
                    x: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)].into(),
                    system: system(k, (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()),
                }
            })
            .collect();
        let model = MlpModel::new(&[2, 6, 3], &mut rng).unwrap();
        for variant in [LossVariant::Norm, LossVariant::MeanSquaredNorm] {
            let spec = LossSpec { variant, row_scaling: RowScaling::Jacobi };
            let (_, delta, g) = batch_loss_and_grad(&model, &batch, spec, false).unwrap();
            let raw = batch_loss_and_grad(&model, &batch, variant.into(), false).unwrap();
            assert_eq!(delta, raw.1);
            let analytic = g.flat();
            let p = model.params_flat();
            let h = 1e-6;
            let mut worst = 0.0f64;
            for (idx, a) in analytic.iter().enumerate() {
                let at = |t: f64| {
                    let mut m = model.clone();
                    let mut pp = p.clone();
                    pp[idx] = t;
                    m.set_params_flat(&pp).unwrap();
                    batch_loss_and_grad(&m, &batch, spec, false).unwrap().0
                };
                let fd = (at(p[idx] + h) - at(p[idx] - h)) / (2.0 * h);
                worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
            }
            assert!(worst <= 1e-5, "{variant:?} {worst}");
        }
    }

    #[test]
    fn single_system_is_memorized() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = random_spd(&mut rng, 3);
        let f = vec![1.0, -2.0, 0.5];
        let sampler = FixedSampler(TrainingSample {
            x: vec![0.5, -0.5].into(),
            system: system(k.clone(), f.clone()),
        });
        let model = MlpModel::new(&[2, 8, 3], &mut rng).unwrap();
        let cfg = ForwardTrainConfig {
            epochs: 30,
            steps_per_epoch: 100,
            batch_size: 1,
            schedule: LrSchedule::Exponential { initial: 1e-2, last: 1e-4 },
            ..ForwardTrainConfig::default()
        };
        let (model, history) = train_forward(&sampler, model, &cfg).unwrap();
        let last = history.records.last().unwrap();
        assert!(last.mean_residual_norm < 1e-3 * euclidean_norm(&f), "{last:?}");
        let (_, report) = predict_with_residual(&model, &[0.5, -0.5], &sampler.0.system, Tolerance::Relative(1e-3)).unwrap();
        assert!(report.accepted);
        assert_eq!(report.norm, euclidean_norm(&report.residual));
    }

    #[test]
    fn untrained_model_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = random_spd(&mut rng, 3);
        let sys = system(k, vec![1.0, 2.0, 3.0]);
        let model = MlpModel::new(&[2, 8, 3], &mut rng).unwrap();
        let (_, report) = predict_with_residual(&model, &[0.1, 0.2], &sys, Tolerance::Relative(1e-3)).unwrap();
        assert!(!report.accepted);
        assert!(!report.refined);
    }

    #[test]
    fn divergence_names_epoch() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sys = system(DenseMatrix::identity(2), vec![f64::INFINITY, 0.0]);
        let sampler = FixedSampler(TrainingSample { x: vec![1.0].into(), system: sys });
        let model = MlpModel::new(&[1, 4, 2], &mut rng).unwrap();
        let cfg = ForwardTrainConfig { epochs: 3, steps_per_epoch: 2, batch_size: 1, ..Default::default() };
        assert!(matches!(train_forward(&sampler, model, &cfg), Err(Error::Divergence { epoch: 0, .. })));
    }

    #[test]
    fn parallel_matches_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let batch: Vec<TrainingSample> = (0..16)
            .map(|_| {
                let k = random_spd(&mut rng, 3);
                TrainingSample {
                    x: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)].into(),
                    system: system(k, vec![rng.gen_range(-1.0..1.0); 3]),
                }
            })
            .collect();
        let model = MlpModel::new(&[2, 6, 3], &mut rng).unwrap();
        for variant in [LossVariant::Norm, LossVariant::MeanSquaredNorm] {
            let seq = batch_loss_and_grad(&model, &batch, variant.into(), false).unwrap();
            let par = batch_loss_and_grad(&model, &batch, variant.into(), true).unwrap();
            assert_eq!(seq.0, par.0);
            assert_eq!(seq.2.flat(), par.2.flat());
        }
    }

    #[test]
    fn exact_prediction_needs_no_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = random_spd(&mut rng, 6);
        let f: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sys = system(k.clone(), f.clone());
        let u = lu_solve(&k, &f).unwrap();
        let out = refine_prediction(&u, &sys).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.u, u);
    }

    #[test]
    fn non_symmetric_system_uses_direct_solve() {
        let k = DenseMatrix::from_rows(&[vec![4.0, 1.0], vec![-1.0, 3.0]]).unwrap();
        let sys = system(k.clone(), vec![1.0, 2.0]);
        let out = refine_prediction(&[0.0, 0.0], &sys).unwrap();
        assert_eq!(out.method, RefineMethod::DirectLu);
        assert!(residual(&k, &out.u, &[1.0, 2.0]).unwrap().norm() <= 1e-8 * 5f64.sqrt());
    }

    #[test]
    fn schedule_endpoints() {
        let s = LrSchedule::Exponential { initial: 1e-2, last: 1e-4 };
        assert_eq!(s.lr_at(0, 100), 1e-2);
        assert!((s.lr_at(100, 100) - 1e-4).abs() < 1e-18);
        assert!((s.lr_at(50, 100) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn supervised_memorizes_one_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data = vec![(DenseVector::from(vec![0.2, 0.4]), DenseVector::from(vec![1.0, -1.0, 0.5]))];
        let model = MlpModel::new(&[2, 8, 3], &mut rng).unwrap();
        let cfg = ForwardTrainConfig {
            epochs: 20,
            steps_per_epoch: 100,
            batch_size: 1,
            schedule: LrSchedule::Exponential { initial: 1e-2, last: 1e-4 },
            ..Default::default()
        };
        let (model, _) = train_supervised_baseline(&data, model, &cfg).unwrap();
        let y = mlp_forward(&model, &data[0].0).unwrap().0;
        assert!(loss_mse(&y, &data[0].1).unwrap().0 < 1e-6);
    }
}
