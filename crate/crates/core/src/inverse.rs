//! Identification of an unknown stiffness block from measured responses.
//!
//! The system is split into known DOFs `k` and DOFs carrying unknown stiffness
//! `u` (the bearings):
//!
//! ```text
//! [ K_k   K_ku ] [U_k]   [F_k]
//! [ K_uk  K_u  ] [U_u] = [F_u]
//! ```
//!
//! `K_u = K_u,known + K_b(omega)` where only `K_b` is unknown. A network maps
//! the speed `omega` to the coefficients of `K_b`, trained on the residual of
//! the observed responses.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_rotor, RotorModel};
use crate::forward::{EpochRecord, LossVariant, LrSchedule, TrainHistory, DELTA_GUARD};
use crate::linalg::{
    complex_lu_solve, complex_matvec, complex_norm, shape_err, ComplexMatrix, ComplexVector, DenseMatrix,
};
use crate::neural::{mlp_forward, AdamConfig, AdamState, InputNormalization, MlpModel, OutputMap, ParamGrads};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedSystem {
    pub k_k: ComplexMatrix,
    pub k_ku: ComplexMatrix,
    pub k_uk: ComplexMatrix,
    /// Known contributions to the unknown-DOF diagonal block (mass, damping,
    /// shaft stiffness); zero when the whole block is unknown.
    pub k_u_known: ComplexMatrix,
    pub f_k: ComplexVector,
    pub f_u: ComplexVector,
    pub u_k: ComplexVector,
    pub u_u: ComplexVector,
    pub omega: f64,
}

impl PartitionedSystem {
    pub fn n_k(&self) -> usize {
        self.k_k.rows()
    }

    pub fn n_u(&self) -> usize {
        self.k_u_known.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (nk, nu) = (self.u_k.len(), self.u_u.len());
        let dims = [
            ("K_k", &self.k_k, nk, nk),
            ("K_ku", &self.k_ku, nk, nu),
            ("K_uk", &self.k_uk, nu, nk),
            ("K_u", &self.k_u_known, nu, nu),
        ];
        for (name, m, r, c) in dims {
            if m.rows() != r || m.cols() != c {
                return Err(shape_err("partitioned system", format!("{name} {r}x{c}"), format!("{}x{}", m.rows(), m.cols())).into());
            }
        }
        if self.f_k.len() != nk || self.f_u.len() != nu {
            return Err(shape_err("partitioned system", format!("F blocks {nk}/{nu}"), format!("{}/{}", self.f_k.len(), self.f_u.len())).into());
        }
        Ok(())
    }

    /// Splits a full system `Z q = F` with `unknown` listing the DOFs that
    /// carry the unknown stiffness. `z_known` must exclude that stiffness.
    pub fn from_full(z_known: &ComplexMatrix, q: &[Complex64], f: &[Complex64], unknown: &[usize], omega: f64) -> Result<Self> {
        let n = z_known.rows();
        if q.len() != n || f.len() != n {
            return Err(shape_err("partition", n, q.len()).into());
        }
        let known: Vec<usize> = (0..n).filter(|i| !unknown.contains(i)).collect();
        let pick = |v: &[Complex64], idx: &[usize]| idx.iter().map(|&i| v[i]).collect::<ComplexVector>();
        let sys = Self {
            k_k: z_known.select(&known, &known),
            k_ku: z_known.select(&known, unknown),
            k_uk: z_known.select(unknown, &known),
            k_u_known: z_known.select(unknown, unknown),
            f_k: pick(f, &known),
            f_u: pick(f, unknown),
            u_k: pick(q, &known),
            u_u: pick(q, unknown),
            omega,
        };
        sys.validate()?;
        Ok(sys)
    }

    /// Norm of the full excitation `[F_k; F_u]`.
    pub fn f_norm(&self) -> f64 {
        (self.f_k.norm().powi(2) + self.f_u.norm().powi(2)).sqrt()
    }
}

/// Stacked residual `[K_k U_k + K_ku U_u - F_k ; K_uk U_k + (K_u,known + K_u) U_u - F_u]`.
pub fn partitioned_residual(sys: &PartitionedSystem, k_u: &DenseMatrix) -> Result<ComplexVector> {
    sys.validate()?;
    let nu = sys.n_u();
    if k_u.rows() != nu || k_u.cols() != nu {
        return Err(shape_err("partitioned_residual", format!("K_u {nu}x{nu}"), format!("{}x{}", k_u.rows(), k_u.cols())).into());
    }
    let top = complex_matvec(&sys.k_k, &sys.u_k)?;
    let top_u = complex_matvec(&sys.k_ku, &sys.u_u)?;
    let mut r: Vec<Complex64> = top.iter().zip(top_u.iter()).zip(sys.f_k.iter()).map(|((a, b), f)| a + b - f).collect();
    r.extend(lower_residual(sys, k_u)?.iter());
    Ok(r.into())
}

fn lower_residual(sys: &PartitionedSystem, k_u: &DenseMatrix) -> Result<ComplexVector> {
    let total = sys.k_u_known.add_scaled_real(Complex64::new(1.0, 0.0), k_u)?;
    let a = complex_matvec(&sys.k_uk, &sys.u_k)?;
    let b = complex_matvec(&total, &sys.u_u)?;
    Ok(a.iter().zip(b.iter()).zip(sys.f_u.iter()).map(|((a, b), f)| a + b - f).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum InverseGradient {
    Converged,
    /// `G[a][b] = Re(r_u[a] conj(U_u[b])) / delta`
    Gradient(DenseMatrix),
}

/// Gradient of `delta = ||r||` with respect to the real entries of `K_u`.
pub fn inverse_loss_grad(sys: &PartitionedSystem, k_u: &DenseMatrix, delta: f64) -> Result<InverseGradient> {
    if delta <= DELTA_GUARD {
        return Ok(InverseGradient::Converged);
    }
    let r_u = lower_residual(sys, k_u)?;
    Ok(InverseGradient::Gradient(outer_re(&r_u, &sys.u_u, 1.0 / delta)))
}

fn outer_re(r_u: &[Complex64], u_u: &[Complex64], scale: f64) -> DenseMatrix {
    let n = r_u.len();
    let mut g = DenseMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            g[(a, b)] = scale * (r_u[a] * u_u[b].conj()).re;
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BearingStructure {
    /// `(k_xx, k_yy)` per bearing.
    Diagonal,
    /// `(k_xx, k_xy, k_yx, k_yy)` per bearing.
    Full,
}

/// How network outputs become the bearing block. Bearing DOFs are ordered
/// `(x, y)` per bearing; with `shared` every bearing uses the same
/// coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BearingParametrization {
    pub structure: BearingStructure,
    pub n_bearings: usize,
    pub shared: bool,
    /// Stiffness unit of the raw network output (N/m).
    pub k_ref: f64,
}

impl Default for BearingParametrization {
    fn default() -> Self {
        Self {
            structure: BearingStructure::Diagonal,
            n_bearings: 2,
            shared: true,
            k_ref: 1e7,
        }
    }
}

impl BearingParametrization {
    pub fn coefficients_per_bearing(&self) -> usize {
        match self.structure {
            BearingStructure::Diagonal => 2,
            BearingStructure::Full => 4,
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.coefficients_per_bearing() * if self.shared { 1 } else { self.n_bearings }
    }

    pub fn block_size(&self) -> usize {
        2 * self.n_bearings
    }

    pub fn coefficient_names(&self) -> Vec<String> {
        let base: &[&str] = match self.structure {
            BearingStructure::Diagonal => &["k_xx", "k_yy"],
            BearingStructure::Full => &["k_xx", "k_xy", "k_yx", "k_yy"],
        };
        if self.shared {
            base.iter().map(|s| s.to_string()).collect()
        } else {
            (0..self.n_bearings).flat_map(|b| base.iter().map(move |s| format!("{s}_{b}"))).collect()
        }
    }

    /// `(output index, row, col)` triples of the block.
    fn entries(&self) -> Vec<(usize, usize, usize)> {
        let per = self.coefficients_per_bearing();
        let local: &[(usize, usize)] = match self.structure {
            BearingStructure::Diagonal => &[(0, 0), (1, 1)],
            BearingStructure::Full => &[(0, 0), (0, 1), (1, 0), (1, 1)],
        };
        let mut out = Vec::new();
        for b in 0..self.n_bearings {
            let first = if self.shared { 0 } else { b * per };
            for (j, &(r, c)) in local.iter().enumerate() {
                out.push((first + j, 2 * b + r, 2 * b + c));
            }
        }
        out
    }

    pub fn stiffness(&self, coefficients: &[f64]) -> Result<DenseMatrix> {
        if coefficients.len() != self.n_outputs() {
            return Err(shape_err("bearing coefficients", self.n_outputs(), coefficients.len()).into());
        }
        let n = self.block_size();
        let mut k = DenseMatrix::zeros(n, n);
        for (j, r, c) in self.entries() {
            k[(r, c)] = coefficients[j];
        }
        Ok(k)
    }

    /// Chains a gradient over block entries to one over coefficients.
    pub fn pull_back(&self, grad: &DenseMatrix) -> Vec<f64> {
        let mut g = vec![0.0; self.n_outputs()];
        for (j, r, c) in self.entries() {
            g[j] += grad[(r, c)];
        }
        g
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bearings == 0 || !(self.k_ref > 0.0) {
            return Err(Error::Config("bearing parametrization needs at least one bearing and k_ref > 0".into()));
        }
        Ok(())
    }
}

/// Network from speed to bearing coefficients in N/m. The input is
/// standardized over `speeds`; outputs are `k_ref (1 + z)` on diagonal
/// coefficients and `k_ref z` on cross terms.
pub fn inverse_model(param: &BearingParametrization, speeds: &[f64], hidden: &[usize], seed: u64) -> Result<MlpModel> {
    param.validate()?;
    if speeds.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let n = speeds.len() as f64;
    let mean = speeds.iter().sum::<f64>() / n;
    let std = (speeds.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut sizes = vec![1];
    sizes.extend_from_slice(hidden);
    sizes.push(param.n_outputs());
    let names = param.coefficient_names();
    let offset = names
        .iter()
        .map(|name| if name.starts_with("k_xx") || name.starts_with("k_yy") { param.k_ref } else { 0.0 })
        .collect();
    Ok(MlpModel::new(&sizes, &mut stream_rng(seed, Stream::Init))?
        .with_input_normalization(InputNormalization {
            mean: vec![mean],
            std: vec![if std > 0.0 { std } else { mean.abs().max(1.0) }],
        })?
        .with_output_map(OutputMap::Affine {
            offset,
            scale: vec![param.k_ref; param.n_outputs()],
        })?)
}

pub fn predict_coefficients(model: &MlpModel, omega: f64) -> Result<Vec<f64>> {
    Ok(mlp_forward(model, &[omega])?.0.into_inner())
}

pub fn predict_stiffness(model: &MlpModel, omega: f64, param: &BearingParametrization) -> Result<DenseMatrix> {
    param.stiffness(&predict_coefficients(model, omega)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseTrainConfig {
    /// Full-batch optimizer steps.
    pub epochs: usize,
    pub schedule: LrSchedule,
    pub loss_variant: LossVariant,
    pub seed: u64,
    #[serde(default)]
    pub loss_threshold: Option<f64>,
    #[serde(default)]
    pub parallel: bool,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl Default for InverseTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3000,
            schedule: LrSchedule::Exponential { initial: 1e-2, last: 1e-4 },
            loss_variant: LossVariant::MeanSquaredNorm,
            seed: 0,
            loss_threshold: None,
            parallel: false,
            adam: AdamConfig::default(),
        }
    }
}

struct ObsEval {
    delta: f64,
    loss: f64,
    grads: ParamGrads,
}

/// Each observation's residual is divided by `k_ref ||U_u||`, so speeds with
/// large responses do not dominate and the loss reads as a relative
/// stiffness mismatch.
fn eval_observation(model: &MlpModel, sys: &PartitionedSystem, param: &BearingParametrization, variant: LossVariant, n: f64) -> Result<ObsEval> {
    let (coef, trace) = mlp_forward(model, &[sys.omega])?;
    let k_u = param.stiffness(&coef)?;
    let r = partitioned_residual(sys, &k_u)?;
    let delta = complex_norm(&r);
    let s = param.k_ref * sys.u_u.norm().max(f64::MIN_POSITIVE);
    let mut grads = ParamGrads::zeros_like(model);
    let r_u = &r[sys.n_k()..];
    let (loss, g) = match variant {
        LossVariant::Norm => {
            let loss = delta / s;
            match inverse_loss_grad(sys, &k_u, delta)? {
                InverseGradient::Converged => (loss, None),
                InverseGradient::Gradient(g) => (loss, Some(g.scaled(1.0 / (s * n)))),
            }
        }
        LossVariant::MeanSquaredNorm => ((delta / s).powi(2), Some(outer_re(r_u, &sys.u_u, 2.0 / (s * s * n)))),
    };
    if let Some(g) = g {
        model.backward_into(&trace, &param.pull_back(&g), &mut grads)?;
    }
    Ok(ObsEval { delta, loss, grads })
}

pub fn train_inverse(observations: &[PartitionedSystem], mut model: MlpModel, param: &BearingParametrization, cfg: &InverseTrainConfig) -> Result<(MlpModel, TrainHistory)> {
    param.validate()?;
    if observations.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if cfg.epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    if model.input_dim() != 1 || model.output_dim() != param.n_outputs() {
        return Err(shape_err("train_inverse", format!("network 1 -> {}", param.n_outputs()), format!("{} -> {}", model.input_dim(), model.output_dim())).into());
    }
    for o in observations {
        o.validate()?;
        if o.n_u() != param.block_size() {
            return Err(shape_err("train_inverse", format!("{} bearing DOFs", param.block_size()), o.n_u()).into());
        }
    }
    let n = observations.len() as f64;
    let mut adam = AdamState::new(&model, cfg.adam);
    let mut history = TrainHistory::default();
    let start = std::time::Instant::now();
    for epoch in 0..cfg.epochs {
        let evals: Vec<Result<ObsEval>> = if cfg.parallel {
            observations.par_iter().map(|o| eval_observation(&model, o, param, cfg.loss_variant, n)).collect()
        } else {
            observations.iter().map(|o| eval_observation(&model, o, param, cfg.loss_variant, n)).collect()
        };
        let mut grads = ParamGrads::zeros_like(&model);
        let (mut loss, mut delta) = (0.0, 0.0);
        for e in evals {
            let e = e?;
            loss += e.loss / n;
            delta += e.delta / n;
            grads.add_assign(&e.grads);
        }
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        adam.step_with_lr(&mut model, &grads, cfg.schedule.lr_at(epoch, cfg.epochs))?;
        history.records.push(EpochRecord {
            epoch,
            mean_loss: loss,
            mean_residual_norm: delta,
        });
        history.wall_ms.push(start.elapsed().as_secs_f64() * 1e3);
        if cfg.loss_threshold.is_some_and(|t| loss < t) {
            break;
        }
    }
    Ok((model, history))
}

/// One measured (or synthesized) frequency response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub omega: f64,
    #[serde(rename = "U")]
    pub u: Vec<Complex64>,
    #[serde(rename = "F")]
    pub f: Vec<Complex64>,
}

impl Observation {
    /// Partition against the rotor model with the bearing stiffness removed.
    pub fn partition(&self, model: &RotorModel) -> Result<PartitionedSystem> {
        let nb = model.bearing_dofs.len();
        let z_known = assemble_rotor(model, self.omega, &DenseMatrix::zeros(nb, nb))?.z;
        PartitionedSystem::from_full(&z_known, &self.u, &self.f, &model.bearing_dofs, self.omega)
    }
}

/// Bearing coefficients that vary linearly with speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearBearingTruth {
    pub k_xx: (f64, f64),
    pub k_yy: (f64, f64),
}

impl Default for LinearBearingTruth {
    fn default() -> Self {
        Self {
            k_xx: (1e7, 2e3),
            k_yy: (8e6, 1.5e3),
        }
    }
}

impl LinearBearingTruth {
    pub fn coefficients(&self, omega: f64) -> [f64; 2] {
        [self.k_xx.0 + self.k_xx.1 * omega, self.k_yy.0 + self.k_yy.1 * omega]
    }

    /// Diagonal block for `n_bearings` identical bearings.
    pub fn stiffness(&self, omega: f64, n_bearings: usize) -> DenseMatrix {
        let [kxx, kyy] = self.coefficients(omega);
        let mut k = DenseMatrix::zeros(2 * n_bearings, 2 * n_bearings);
        for b in 0..n_bearings {
            k[(2 * b, 2 * b)] = kxx;
            k[(2 * b + 1, 2 * b + 1)] = kyy;
        }
        k
    }
}

/// Forward-solves the rotor at each speed with the true bearing block and
/// perturbs every response entry by `(1 + sigma (n_re + j n_im))`,
/// `n ~ N(0, 1)`.
pub fn synthesize_observations<F>(model: &RotorModel, speeds: &[f64], truth: F, noise: f64, seed: u64) -> Result<Vec<Observation>>
where
    F: Fn(f64) -> DenseMatrix,
{
    if !(noise >= 0.0) {
        return Err(Error::Config(format!("noise level must be non-negative, got {noise}")));
    }
    let mut rng: ChaCha8Rng = stream_rng(seed, Stream::Noise);
    speeds
        .iter()
        .map(|&omega| {
            let sys = assemble_rotor(model, omega, &truth(omega))?;
            let mut q = complex_lu_solve(&sys.z, &sys.f)?.into_inner();
            if noise > 0.0 {
                for v in q.iter_mut() {
                    let (a, b): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                    *v *= Complex64::new(1.0 + noise * a, noise * b);
                }
            }
            Ok(Observation {
                omega,
                u: q,
                f: sys.f.into_inner(),
            })
        })
        .collect()
}

/// Evenly spaced speeds on `[lo, hi]`.
pub fn speed_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Sorted uniform random speeds on `[lo, hi)` for held-out checks. A
/// degenerate range gives `n` copies of `lo`.
pub fn heldout_speeds(lo: f64, hi: f64, n: usize, seed: u64) -> Vec<f64> {
    use rand::Rng;
    if !(hi > lo) {
        return vec![lo; n];
    }
    let mut rng = stream_rng(seed, Stream::Heldout);
    let mut s: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    s.sort_by(f64::total_cmp);
    s
}
