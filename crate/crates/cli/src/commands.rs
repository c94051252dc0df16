use std::path::Path;
use std::time::Instant;

use femnn::fem::RotorModel;
use femnn::forward::{make_supervised_dataset, output_standardization, predict_refined, predict_with_residual, train_forward_observed, train_supervised_observed, Tolerance, TrainHistory};
use femnn::inverse::{heldout_speeds, inverse_model, predict_stiffness, speed_grid, synthesize_observations, train_inverse, LinearBearingTruth, Observation, PartitionedSystem};
use femnn::linalg::{direct_solve_count, lu_solve, DenseVector};
use femnn::neural::{mlp_predict, MlpModel};
use femnn::problems::ProblemFamily;
use femnn::rng::{stream_rng, Stream};
use femnn::uq::{run_monte_carlo, summarize, Evaluator};
use serde::{Deserialize, Serialize};

use crate::args::{CompareArgs, EvaluatorKind, GenerateArgs, IdentifyArgs, PredictArgs, Region, TrainArgs, UqArgs};
use crate::config::{self, SyntheticConfig};
use crate::output::{ensure_dir, num, read_text, write_json, write_text, CsvTable};
use crate::{CliError, CliResult};

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    if threads <= 1 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(f))
}

fn start(out: &Path, resolved: &impl Serialize) -> CliResult<()> {
    ensure_dir(out)?;
    write_json(&out.join("resolved_config.json"), resolved)
}

fn write_history(out: &Path, history: &TrainHistory) -> CliResult<()> {
    let mut csv = CsvTable::new(out.join("history.csv"), &["epoch", "mean_loss", "mean_residual_norm"]);
    for r in &history.records {
        csv.row(&[r.epoch.to_string(), num(r.mean_loss), num(r.mean_residual_norm)]);
    }
    csv.finish()?;
    let mut timing = CsvTable::new(out.join("timing.csv"), &["epoch", "wall_ms"]);
    for (r, ms) in history.records.iter().zip(&history.wall_ms) {
        timing.row(&[r.epoch.to_string(), format!("{ms:.3}")]);
    }
    timing.finish()
}

fn load_model(path: Option<&Path>, family: &ProblemFamily) -> CliResult<MlpModel> {
    let path = path.ok_or_else(|| CliError::Usage("a model file is required (--model)".into()))?;
    let model = MlpModel::from_json(&read_text(path)?).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if model.input_dim() != family.inputs.len() || model.output_dim() != family.n_outputs() {
        return Err(CliError::Usage(format!(
            "model maps {} inputs to {} outputs but {} has {} inputs and {} DOFs",
            model.input_dim(),
            model.output_dim(),
            family.name,
            family.inputs.len(),
            family.n_outputs()
        )));
    }
    Ok(model)
}

fn require_forward(family: &ProblemFamily) -> CliResult<()> {
    if family.is_forward() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{} is an inverse problem; use the identify command", family.name)))
    }
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    family: &'a str,
    epochs_run: usize,
    final_mean_loss: f64,
    final_mean_residual_norm: f64,
    /// Direct solves performed while training; zero for residual training.
    oracle_solves: u64,
}

pub fn train_forward(args: &TrainArgs) -> CliResult<()> {
    let (cfg, family) = config::resolve_train(args)?;
    require_forward(&family)?;
    start(&cfg.out, &cfg)?;
    let model = family.new_model(cfg.seed)?;
    let before = direct_solve_count();
    let (model, history) = with_threads(cfg.parallel, || train_forward_observed(&family, model, &cfg.train, |_, _| {}))??;
    let oracle_solves = direct_solve_count() - before;
    write_text(&cfg.out.join("model.json"), &(model.to_json() + "\n"))?;
    write_history(&cfg.out, &history)?;
    let last = history.records.last().expect("at least one epoch");
    write_json(
        &cfg.out.join("train_summary.json"),
        &TrainSummary {
            family: &cfg.family,
            epochs_run: history.records.len(),
            final_mean_loss: last.mean_loss,
            final_mean_residual_norm: last.mean_residual_norm,
            oracle_solves,
        },
    )?;
    println!("trained {} for {} epochs, final mean loss {:e}; wrote {}", cfg.family, history.records.len(), last.mean_loss, cfg.out.display());
    Ok(())
}

#[derive(Serialize)]
struct Prediction<'a> {
    family: &'a str,
    inputs: &'a [f64],
    /// Free DOFs.
    u: &'a [f64],
    /// All DOFs with prescribed values filled in.
    u_full: Vec<f64>,
    residual_norm: f64,
    relative_residual: f64,
    tolerance: Tolerance,
    accepted: bool,
    refined: bool,
}

pub fn predict(args: &PredictArgs) -> CliResult<()> {
    let (cfg, family) = config::resolve_predict(args)?;
    require_forward(&family)?;
    let model = load_model(cfg.model.as_deref(), &family)?;
    let x = cfg.inputs.clone().ok_or_else(|| CliError::Usage("input values are required (--inputs)".into()))?;
    if x.len() != family.inputs.len() {
        return Err(CliError::Usage(format!(
            "{} expects {} inputs ({}), got {}",
            family.name,
            family.inputs.len(),
            family.input_names().join(", "),
            x.len()
        )));
    }
    start(&cfg.out, &cfg)?;
    let system = family.assemble(&x)?;
    let (u, report) = if cfg.refine {
        predict_refined(&model, &x, &system, cfg.tolerance)?
    } else {
        predict_with_residual(&model, &x, &system, cfg.tolerance)?
    };
    let prediction = Prediction {
        family: &cfg.family,
        inputs: &x,
        u: &u,
        u_full: system.expand(&u),
        residual_norm: report.norm,
        relative_residual: report.relative,
        tolerance: report.tolerance,
        accepted: report.accepted,
        refined: report.refined,
    };
    let path = cfg.out.join("prediction.json");
    write_json(&path, &prediction)?;
    println!("residual norm {:e} (relative {:e}), refined: {}; wrote {}", report.norm, report.relative, report.refined, path.display());
    Ok(())
}

fn mean_abs_error(model: &MlpModel, heldout: &[(DenseVector, DenseVector)]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (x, u) in heldout {
        let p = mlp_predict(model, x).expect("dimensions checked");
        sum += p.iter().zip(u.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        count += u.len();
    }
    sum / count as f64
}

/// Held-out inputs with direct solutions, drawn from the held-out stream.
pub fn heldout_set(family: &ProblemFamily, n: usize, seed: u64) -> femnn::Result<Vec<(DenseVector, DenseVector)>> {
    let mut rng = stream_rng(seed, Stream::Heldout);
    (0..n)
        .map(|_| {
            let (x, sys) = family.sample_inputs(&mut rng)?;
            let u = lu_solve(&sys.k, &sys.f)?;
            Ok((x, u))
        })
        .collect()
}

#[derive(Serialize)]
struct ComparisonSummary<'a> {
    family: &'a str,
    epochs: usize,
    n_train: usize,
    n_heldout: usize,
    hybrid_heldout_error: f64,
    supervised_heldout_error: f64,
    /// hybrid / supervised
    error_ratio: f64,
    hybrid_oracle_solves: u64,
    supervised_oracle_solves: u64,
}

pub fn compare_baseline(args: &CompareArgs) -> CliResult<()> {
    let (cfg, family) = config::resolve_compare(args)?;
    require_forward(&family)?;
    if cfg.n_heldout == 0 || cfg.n_train == 0 {
        return Err(CliError::Usage("n_train and n_heldout must be positive".into()));
    }
    start(&cfg.out, &cfg)?;
    let heldout = heldout_set(&family, cfg.n_heldout, cfg.seed)?;

    let hybrid0 = family.new_model(cfg.seed)?;
    let mut hybrid_curve = Vec::new();
    let before = direct_solve_count();
    let t = Instant::now();
    let (hybrid, _) = with_threads(cfg.parallel, || {
        train_forward_observed(&family, hybrid0, &cfg.train, |_, m| hybrid_curve.push(mean_abs_error(m, &heldout)))
    })??;
    let hybrid_train_s = t.elapsed().as_secs_f64();
    let hybrid_solves = direct_solve_count() - before;

    let before = direct_solve_count();
    let t = Instant::now();
    let dataset = make_supervised_dataset(&family, cfg.n_train, cfg.seed)?;
    let data_s = t.elapsed().as_secs_f64();
    let supervised_solves = direct_solve_count() - before;
    let sup0 = family.new_model(cfg.seed)?.with_output_map(output_standardization(&dataset)?).map_err(femnn::Error::from)?;
    let mut sup_curve = Vec::new();
    let t = Instant::now();
    let (supervised, _) = train_supervised_observed(&dataset, sup0, &cfg.train, |_, m| sup_curve.push(mean_abs_error(m, &heldout)))?;
    let sup_train_s = t.elapsed().as_secs_f64();

    let mut csv = CsvTable::new(cfg.out.join("comparison.csv"), &["epoch", "hybrid_heldout_error", "supervised_heldout_error"]);
    for (e, (h, s)) in hybrid_curve.iter().zip(&sup_curve).enumerate() {
        csv.row(&[e.to_string(), num(*h), num(*s)]);
    }
    csv.finish()?;
    let mut timing = CsvTable::new(cfg.out.join("comparison_timing.csv"), &["method", "data_creation_s", "training_s", "total_s", "oracle_solves"]);
    timing.row(&["hybrid".to_string(), num(0.0), format!("{hybrid_train_s:.3}"), format!("{hybrid_train_s:.3}"), hybrid_solves.to_string()]);
    timing.row(&["supervised".to_string(), format!("{data_s:.3}"), format!("{sup_train_s:.3}"), format!("{:.3}", data_s + sup_train_s), supervised_solves.to_string()]);
    timing.finish()?;
    write_text(&cfg.out.join("hybrid_model.json"), &(hybrid.to_json() + "\n"))?;
    write_text(&cfg.out.join("supervised_model.json"), &(supervised.to_json() + "\n"))?;
    let (h, s) = (mean_abs_error(&hybrid, &heldout), mean_abs_error(&supervised, &heldout));
    write_json(
        &cfg.out.join("comparison_summary.json"),
        &ComparisonSummary {
            family: &cfg.family,
            epochs: cfg.train.epochs,
            n_train: cfg.n_train,
            n_heldout: cfg.n_heldout,
            hybrid_heldout_error: h,
            supervised_heldout_error: s,
            error_ratio: h / s,
            hybrid_oracle_solves: hybrid_solves,
            supervised_oracle_solves: supervised_solves,
        },
    )?;
    println!(
        "held-out error: hybrid {h:e}, supervised {s:e}; wall clock supervised/hybrid = {:.2}",
        (data_s + sup_train_s) / hybrid_train_s.max(1e-9)
    );
    Ok(())
}

#[derive(Serialize)]
struct UqSummary<'a> {
    family: &'a str,
    evaluator: EvaluatorKind,
    region: Region,
    qoi: &'a str,
    n_samples: usize,
    mean: f64,
    std: f64,
    skewness: f64,
    kurtosis: f64,
    excess_kurtosis: f64,
    refinements: usize,
}

pub fn uq(args: &UqArgs) -> CliResult<()> {
    let (cfg, family) = config::resolve_uq(args)?;
    require_forward(&family)?;
    let model = match cfg.evaluator {
        EvaluatorKind::Fem => None,
        _ => Some(load_model(cfg.model.as_deref(), &family)?),
    };
    let evaluator = match (&cfg.evaluator, &model) {
        (EvaluatorKind::Fem, _) => Evaluator::Fem,
        (EvaluatorKind::Surrogate, Some(m)) => Evaluator::Surrogate(m),
        (_, Some(m)) => Evaluator::SurrogateWithFallback {
            model: m,
            tol: Tolerance::Relative(cfg.tolerance),
        },
        _ => unreachable!("model loaded for surrogate evaluators"),
    };
    let specs = match cfg.region {
        Region::Trained => family.specs(),
        Region::Untrained => family.untrained_specs()?,
    };
    start(&cfg.out, &cfg)?;
    let ens = with_threads(cfg.parallel, || run_monte_carlo(&family, evaluator, &specs, cfg.n_samples, cfg.seed, cfg.parallel > 1))??;
    let summary = summarize(&ens.outputs, cfg.n_bins)?;

    let mut header = vec!["sample_index".to_string()];
    header.extend(family.input_names().into_iter().map(String::from));
    header.push(family.qoi_name().into());
    header.push("refined".into());
    let mut csv = CsvTable::new(cfg.out.join("ensemble.csv"), &header);
    for (i, ((x, q), r)) in ens.inputs.iter().zip(&ens.outputs).zip(&ens.refined).enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(x.iter().map(|v| num(*v)));
        row.push(num(*q));
        row.push(r.to_string());
        csv.row(&row);
    }
    csv.finish()?;
    let h = &summary.histogram;
    let mut csv = CsvTable::new(cfg.out.join("histogram.csv"), &["bin_lo", "bin_hi", "density"]);
    for (k, d) in h.densities.iter().enumerate() {
        csv.row(&[num(h.edges[k]), num(h.edges[k + 1]), num(*d)]);
    }
    csv.finish()?;
    let mut csv = CsvTable::new(cfg.out.join("cdf.csv"), &["value", "quantile"]);
    for (v, q) in summary.ecdf.values.iter().zip(&summary.ecdf.levels) {
        csv.row(&[num(*v), num(*q)]);
    }
    csv.finish()?;
    write_json(
        &cfg.out.join("summary.json"),
        &UqSummary {
            family: &cfg.family,
            evaluator: cfg.evaluator,
            region: cfg.region,
            qoi: family.qoi_name(),
            n_samples: summary.n_samples,
            mean: summary.mean,
            std: summary.std,
            skewness: summary.skewness,
            kurtosis: summary.kurtosis,
            excess_kurtosis: summary.excess_kurtosis,
            refinements: ens.refinements(),
        },
    )?;
    println!(
        "{} samples: mean {:e}, std {:e}, skewness {:.4}, kurtosis {:.4}, refinements {}",
        summary.n_samples,
        summary.mean,
        summary.std,
        summary.skewness,
        summary.kurtosis,
        ens.refinements()
    );
    Ok(())
}

/// Observation file layout. `truth` is present for synthetic data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationFile {
    #[serde(default)]
    pub rotor: Option<RotorModel>,
    #[serde(default)]
    pub truth: Option<LinearBearingTruth>,
    pub observations: Vec<Observation>,
}

fn synthetic_file(family: &ProblemFamily, syn: &SyntheticConfig, seed: u64) -> CliResult<ObservationFile> {
    let (rotor, param, truth, _) = family.rotor_parts()?;
    if syn.n_speeds == 0 {
        return Err(CliError::Usage("n_speeds must be positive".into()));
    }
    let (lo, hi) = syn.speed_range;
    let nb = param.n_bearings;
    let obs = synthesize_observations(rotor, &speed_grid(lo, hi, syn.n_speeds), |w| truth.stiffness(w, nb), syn.noise, seed)?;
    Ok(ObservationFile {
        rotor: Some(rotor.clone()),
        truth: Some(*truth),
        observations: obs,
    })
}

pub fn generate_synthetic(args: &GenerateArgs) -> CliResult<()> {
    let (cfg, family) = config::resolve_generate(args)?;
    let file = synthetic_file(&family, &cfg.synthetic, cfg.seed)?;
    start(&cfg.out, &cfg)?;
    let path = cfg.out.join("observations.json");
    write_json(&path, &file)?;
    println!("wrote {} observations to {}", file.observations.len(), path.display());
    Ok(())
}

pub fn identify(args: &IdentifyArgs) -> CliResult<()> {
    let (cfg, family) = config::resolve_identify(args)?;
    let (default_rotor, param, _, _) = family.rotor_parts()?;
    let file = if cfg.generate_synthetic {
        synthetic_file(&family, &cfg.synthetic, cfg.seed)?
    } else {
        let path = cfg
            .observations
            .as_deref()
            .ok_or_else(|| CliError::Usage("an observation file (--observations) or --generate-synthetic is required".into()))?;
        serde_json::from_str::<ObservationFile>(&read_text(path)?).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
    };
    if file.observations.is_empty() {
        return Err(CliError::Usage("observation file contains no observations".into()));
    }
    if file.observations.len() < 2 {
        eprintln!("warning: a single speed cannot identify a speed-dependent stiffness; proceeding");
    }
    let rotor = file.rotor.clone().unwrap_or_else(|| default_rotor.clone());
    rotor.validate().map_err(femnn::Error::from)?;
    let systems = file.observations.iter().map(|o| o.partition(&rotor)).collect::<femnn::Result<Vec<PartitionedSystem>>>()?;
    let speeds: Vec<f64> = file.observations.iter().map(|o| o.omega).collect();
    start(&cfg.out, &cfg)?;
    if cfg.generate_synthetic {
        write_json(&cfg.out.join("observations.json"), &file)?;
    }
    let model = inverse_model(param, &speeds, &cfg.hidden, cfg.seed)?;
    let (model, history) = with_threads(cfg.parallel, || train_inverse(&systems, model, param, &cfg.train))??;
    write_text(&cfg.out.join("model.json"), &(model.to_json() + "\n"))?;
    write_history(&cfg.out, &history)?;

    let names = param.coefficient_names();
    let mut header = vec!["omega".to_string()];
    header.extend(names.iter().cloned());
    let mut csv = CsvTable::new(cfg.out.join("identified_stiffness.csv"), &header);
    let (lo, hi, n) = cfg.sweep;
    for w in speed_grid(lo, hi, n) {
        let mut row = vec![num(w)];
        row.extend(femnn::inverse::predict_coefficients(&model, w)?.into_iter().map(num));
        csv.row(&row);
    }
    csv.finish()?;

    if let Some(truth) = &file.truth {
        let (lo, hi) = speeds.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &w| (a.min(w), b.max(w)));
        let mut csv = CsvTable::new(cfg.out.join("heldout.csv"), &["omega", "k_xx", "k_xx_true", "k_yy", "k_yy_true", "max_rel_error"]);
        let mut worst: f64 = 0.0;
        for w in heldout_speeds(lo, hi, cfg.n_heldout, cfg.seed) {
            let k = predict_stiffness(&model, w, param)?;
            let kt = truth.stiffness(w, param.n_bearings);
            let mut err: f64 = 0.0;
            for (a, b) in k.data().iter().zip(kt.data()) {
                if *b != 0.0 {
                    err = err.max(((a - b) / b).abs());
                }
            }
            worst = worst.max(err);
            csv.row(&[num(w), num(k[(0, 0)]), num(kt[(0, 0)]), num(k[(1, 1)]), num(kt[(1, 1)]), num(err)]);
        }
        csv.finish()?;
        write_json(&cfg.out.join("identify_summary.json"), &serde_json::json!({ "heldout_max_rel_error": worst, "n_heldout": cfg.n_heldout }))?;
        println!("held-out maximum relative stiffness error {worst:e}");
    }
    println!("identified bearing stiffness over {} speeds; wrote {}", n, cfg.out.display());
    Ok(())
}
