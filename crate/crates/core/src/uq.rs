//! Monte-Carlo propagation of input uncertainty through either the direct
//! finite element solve or a trained surrogate.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform, Weibull};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::fem::AssembledSystem;
use crate::forward::{predict_refined, Tolerance};
use crate::linalg::{lu_solve, DenseVector};
use crate::neural::{mlp_predict, MlpModel};
use crate::rng::{sample_rng, stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Normal { mean: f64, std: f64 },
    /// Parametrized by its mean; the scale is `mean / Gamma(1 + 1/shape)`.
    Weibull { mean: f64, shape: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DistributionSpec::Normal { mean, std } => mean.is_finite() && std > 0.0 && std.is_finite(),
            DistributionSpec::Weibull { mean, shape } => mean > 0.0 && shape > 0.0 && mean.is_finite() && shape.is_finite(),
            DistributionSpec::Uniform { lo, hi } => lo < hi && lo.is_finite() && hi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Distribution(format!("{self:?}")))
        }
    }

    pub fn weibull_scale(mean: f64, shape: f64) -> f64 {
        mean / gamma(1.0 + 1.0 / shape)
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DistributionSpec::Normal { mean, .. } | DistributionSpec::Weibull { mean, .. } => mean,
            DistributionSpec::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn std(&self) -> f64 {
        match *self {
            DistributionSpec::Normal { std, .. } => std,
            DistributionSpec::Weibull { mean, shape } => {
                let lambda = Self::weibull_scale(mean, shape);
                lambda * (gamma(1.0 + 2.0 / shape) - gamma(1.0 + 1.0 / shape).powi(2)).sqrt()
            }
            DistributionSpec::Uniform { lo, hi } => (hi - lo) / 12f64.sqrt(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            DistributionSpec::Normal { mean, std } => 0.5 * statrs::function::erf::erfc(-(x - mean) / (std * std::f64::consts::SQRT_2)),
            DistributionSpec::Weibull { mean, shape } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-(x / Self::weibull_scale(mean, shape)).powf(shape)).exp()
                }
            }
            DistributionSpec::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
        }
    }

    /// One draw; the distribution must be valid.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DistributionSpec::Normal { mean, std } => Normal::new(mean, std).expect("validated").sample(rng),
            DistributionSpec::Weibull { mean, shape } => Weibull::new(Self::weibull_scale(mean, shape), shape).expect("validated").sample(rng),
            DistributionSpec::Uniform { lo, hi } => Uniform::new(lo, hi).sample(rng),
        }
    }
}

/// `n` i.i.d. draws from the `mc` stream of `seed`.
pub fn sample(spec: &DistributionSpec, seed: u64, n: usize) -> Result<DenseVector> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut rng = stream_rng(seed, Stream::Mc);
    Ok((0..n).map(|_| spec.draw(&mut rng)).collect())
}

/// What Monte Carlo needs from a problem: assembly from an input vector and
/// a scalar quantity of interest.
pub trait McProblem: Sync {
    fn assemble(&self, x: &[f64]) -> Result<AssembledSystem>;
    fn qoi(&self, system: &AssembledSystem, u: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub enum Evaluator<'a> {
    Fem,
    Surrogate(&'a MlpModel),
    SurrogateWithFallback { model: &'a MlpModel, tol: Tolerance },
}

#[derive(Debug, Clone, PartialEq)]
pub struct McEnsemble {
    pub inputs: Vec<DenseVector>,
    pub outputs: Vec<f64>,
    /// Per-sample flag: the surrogate was refined by the classical solver.
    pub refined: Vec<bool>,
}

impl McEnsemble {
    pub fn refinements(&self) -> usize {
        self.refined.iter().filter(|&&r| r).count()
    }
}

fn evaluate_sample(problem: &dyn McProblem, evaluator: Evaluator<'_>, specs: &[DistributionSpec], seed: u64, index: usize) -> Result<(DenseVector, f64, bool)> {
    let mut rng = sample_rng(seed, Stream::Mc, index as u64);
    let x: DenseVector = specs.iter().map(|s| s.draw(&mut rng)).collect();
    let system = problem.assemble(&x)?;
    let (u, refined) = match evaluator {
        Evaluator::Fem => (lu_solve(&system.k, &system.f)?, false),
        Evaluator::Surrogate(model) => (mlp_predict(model, &x)?, false),
        Evaluator::SurrogateWithFallback { model, tol } => {
            let (u, report) = predict_refined(model, &x, &system, tol)?;
            (u, report.refined)
        }
    };
    let q = problem.qoi(&system, &u);
    Ok((x, q, refined))
}

/// Draws `n` input vectors (sample `i` uses its own counter-based stream, so
/// parallel and sequential runs agree) and evaluates the quantity of interest.
pub fn run_monte_carlo(problem: &dyn McProblem, evaluator: Evaluator<'_>, specs: &[DistributionSpec], n: usize, seed: u64, parallel: bool) -> Result<McEnsemble> {
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    for s in specs {
        s.validate()?;
    }
    let eval = |i: usize| {
        evaluate_sample(problem, evaluator, specs, seed, i).map_err(|e| Error::Sample {
            index: i,
            source: Box::new(e),
        })
    };
    let results: Vec<Result<(DenseVector, f64, bool)>> = if parallel {
        (0..n).into_par_iter().map(eval).collect()
    } else {
        (0..n).map(eval).collect()
    };
    let mut ens = McEnsemble {
        inputs: Vec::with_capacity(n),
        outputs: Vec::with_capacity(n),
        refined: Vec::with_capacity(n),
    };
    for r in results {
        let (x, q, refined) = r?;
        ens.inputs.push(x);
        ens.outputs.push(q);
        ens.refined.push(refined);
    }
    Ok(ens)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `n_bins + 1` equally spaced edges from min to max.
    pub edges: Vec<f64>,
    /// Probability densities; `sum(density * width) = 1`.
    pub densities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ecdf {
    pub values: Vec<f64>,
    /// `(i + 1) / n` for the i-th sorted value.
    pub levels: Vec<f64>,
}

impl Ecdf {
    /// Fraction of values `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.values.partition_point(|&v| v <= x);
        k as f64 / self.values.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub n_samples: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 divisor).
    pub std: f64,
    /// `m3 / m2^1.5` with central moments `m_k = sum (x - mean)^k / n`.
    pub skewness: f64,
    /// `m4 / m2^2`.
    pub kurtosis: f64,
    /// `kurtosis - 3`.
    pub excess_kurtosis: f64,
    pub histogram: Histogram,
    pub ecdf: Ecdf,
}

pub fn summarize(ensemble: &[f64], n_bins: usize) -> Result<McSummary> {
    let n = ensemble.len();
    if n < 4 {
        return Err(Error::InsufficientData { needed: 4, got: n });
    }
    if n_bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if ensemble.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("ensemble contains non-finite values".into()));
    }
    let nf = n as f64;
    let mean = ensemble.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in ensemble {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    let mut values = ensemble.to_vec();
    values.sort_by(f64::total_cmp);
    let (lo, hi) = (values[0], values[n - 1]);
    if !(m2 > 0.0) || hi == lo {
        return Err(Error::DegenerateEnsemble);
    }
    let width = (hi - lo) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins).map(|k| if k == n_bins { hi } else { lo + k as f64 * width }).collect();
    let mut counts = vec![0usize; n_bins];
    for &v in &values {
        // bins are [e_k, e_k+1), the last one closed
        let k = edges[1..n_bins].partition_point(|&e| e <= v);
        counts[k] += 1;
    }
    let densities = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| c as f64 / (nf * (edges[k + 1] - edges[k])))
        .collect();
    let kurtosis = m4 / (m2 * m2);
    Ok(McSummary {
        n_samples: n,
        mean,
        std: (m2 * nf / (nf - 1.0)).sqrt(),
        skewness: m3 / m2.powf(1.5),
        kurtosis,
        excess_kurtosis: kurtosis - 3.0,
        histogram: Histogram { edges, densities },
        ecdf: Ecdf {
            levels: (1..=n).map(|i| i as f64 / nf).collect(),
            values,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{apply_dirichlet, Dof};
    use crate::linalg::DenseMatrix;
    use approx::assert_relative_eq;
    use rand_distr::StandardNormal;

    #[test]
    fn uniform_samples_stay_in_range() {
        let s = sample(&DistributionSpec::Uniform { lo: 0.1, hi: 0.7 }, 1, 100_000).unwrap();
        assert!(s.iter().all(|&v| (0.1..=0.7).contains(&v)));
        let mean = s.iter().sum::<f64>() / 1e5;
        let sigma = 0.6 / 12f64.sqrt() / 1e5f64.sqrt();
        assert!((mean - 0.4).abs() <= 3.0 * sigma, "{mean}");
    }

    #[test]
    fn weibull_mean_parametrization() {
        let spec = DistributionSpec::Weibull { mean: 40.0, shape: 2.0 };
        assert_relative_eq!(DistributionSpec::weibull_scale(40.0, 2.0), 45.135, max_relative = 1e-4);
        let s = sample(&spec, 2, 100_000).unwrap();
        let mean = s.iter().sum::<f64>() / 1e5;
        assert!((mean - 40.0).abs() <= 0.5, "{mean}");
    }

    #[test]
    fn weibull_ks_statistic() {
        let spec = DistributionSpec::Weibull { mean: 40.0, shape: 2.0 };
        let mut s = sample(&spec, 3, 100_000).unwrap().into_inner();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        let ks = s
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = spec.cdf(x);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS = {ks}");
    }

    #[test]
    fn narrow_normal_collapses() {
        let s = sample(&DistributionSpec::Normal { mean: 3.5, std: 1e-12 }, 4, 100).unwrap();
        assert!(s.iter().all(|&v| (v - 3.5).abs() < 1e-9));
        assert!(DistributionSpec::Normal { mean: 0.0, std: 0.0 }.validate().is_err());
        assert!(DistributionSpec::Uniform { lo: 1.0, hi: 1.0 }.validate().is_err());
        assert!(DistributionSpec::Weibull { mean: 1.0, shape: -1.0 }.validate().is_err());
    }

    #[test]
    fn analytic_moments() {
        let w = DistributionSpec::Weibull { mean: 40.0, shape: 2.0 };
        let s = sample(&w, 5, 200_000).unwrap();
        let m = s.iter().sum::<f64>() / s.len() as f64;
        let sd = (s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / s.len() as f64).sqrt();
        assert_relative_eq!(sd, w.std(), max_relative = 0.01);
        assert_relative_eq!(DistributionSpec::Uniform { lo: 0.0, hi: 12f64.sqrt() }.std(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn summary_of_small_ensemble() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_relative_eq!(s.std, 1.2909944487358056, max_relative = 1e-12);
        assert!(s.skewness.abs() < 1e-15);
        assert_eq!(summarize(&[1.0, 2.0, 3.0], 2).unwrap_err(), Error::InsufficientData { needed: 4, got: 3 });
        assert_eq!(summarize(&[2.0; 10], 4).unwrap_err(), Error::DegenerateEnsemble);
    }

    #[test]
    fn standard_normal_summary() {
        let mut rng = stream_rng(9, Stream::Mc);
        let draws: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let s = summarize(&draws, 50).unwrap();
        assert!(s.mean.abs() < 0.02);
        assert!((s.std - 1.0).abs() < 0.02);
        assert!(s.skewness.abs() < 0.05);
        assert!(s.excess_kurtosis.abs() < 0.1);
    }

    fn two_pass_oracle(x: &[f64]) -> (f64, f64, f64, f64) {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let c = |k: i32| x.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt(), c(3) / c(2).powf(1.5), c(4) / c(2).powi(2))
    }

    #[test]
    fn moments_match_two_pass_oracle_and_histogram_round_trips() {
        let w = DistributionSpec::Weibull { mean: 2.0, shape: 1.3 };
        let x = sample(&w, 11, 5000).unwrap();
        let s = summarize(&x, 40).unwrap();
        let (m, sd, sk, ku) = two_pass_oracle(&x);
        assert_relative_eq!(s.mean, m, max_relative = 1e-12);
        assert_relative_eq!(s.std, sd, max_relative = 1e-12);
        assert_relative_eq!(s.skewness, sk, max_relative = 1e-12);
        assert_relative_eq!(s.kurtosis, ku, max_relative = 1e-12);
        let h = &s.histogram;
        let total: f64 = h.densities.iter().enumerate().map(|(k, d)| d * (h.edges[k + 1] - h.edges[k])).sum();
        assert!((total - 1.0).abs() <= 1e-9);
        let mut cum = 0.0;
        for k in 0..h.densities.len() {
            cum += h.densities[k] * (h.edges[k + 1] - h.edges[k]);
            let edge = h.edges[k + 1];
            assert!((s.ecdf.eval(edge) - cum).abs() <= 1.0 / x.len() as f64 + 1e-12, "edge {k}");
        }
        assert!(s.ecdf.levels.windows(2).all(|p| p[1] >= p[0]));
        assert_eq!(*s.ecdf.levels.last().unwrap(), 1.0);
    }

    struct Scalar;

    impl McProblem for Scalar {
        fn assemble(&self, x: &[f64]) -> Result<AssembledSystem> {
            if x[0] <= 0.0 {
                return Err(Error::Config("non-positive stiffness".into()));
            }
            let k = DenseMatrix::new(1, 1, vec![x[0]]).unwrap();
            Ok(apply_dirichlet(&k, &[x[1]], vec![Dof { node: 0, component: 0 }], &[])?)
        }
        fn qoi(&self, _: &AssembledSystem, u: &[f64]) -> f64 {
            u[0]
        }
    }

    #[test]
    fn degenerate_inputs_give_direct_solution() {
        let specs = [DistributionSpec::Normal { mean: 4.0, std: 1e-12 }, DistributionSpec::Normal { mean: 2.0, std: 1e-12 }];
        let ens = run_monte_carlo(&Scalar, Evaluator::Fem, &specs, 1, 0, false).unwrap();
        assert!((ens.outputs[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn deterministic_and_order_independent() {
        let specs = [DistributionSpec::Uniform { lo: 1.0, hi: 2.0 }, DistributionSpec::Normal { mean: 0.0, std: 1.0 }];
        let a = run_monte_carlo(&Scalar, Evaluator::Fem, &specs, 200, 3, false).unwrap();
        let b = run_monte_carlo(&Scalar, Evaluator::Fem, &specs, 200, 3, false).unwrap();
        let c = run_monte_carlo(&Scalar, Evaluator::Fem, &specs, 200, 3, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let bad = [DistributionSpec::Uniform { lo: -2.0, hi: -1.0 }, DistributionSpec::Normal { mean: 1.0, std: 1.0 }];
        assert!(matches!(run_monte_carlo(&Scalar, Evaluator::Fem, &bad, 3, 0, false), Err(Error::Sample { index: 0, .. })));
    }
}
