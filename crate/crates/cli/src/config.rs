//! Resolved per-command configurations.
//!
//! Resolution order: family defaults, then the `--config` file merged key by
//! key (nested objects merge recursively), then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use femnn::forward::{ForwardTrainConfig, Tolerance};
use femnn::inverse::InverseTrainConfig;
use femnn::problems::{make_family, FamilyOverrides, ProblemFamily};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::{CommonArgs, EvaluatorKind, Region};
use crate::{CliError, CliResult};

pub const DEFAULT_OUT: &str = "femnn-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainForwardConfig {
    pub family: String,
    pub seed: u64,
    pub out: PathBuf,
    pub parallel: usize,
    pub overrides: FamilyOverrides,
    pub train: ForwardTrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    pub family: String,
    pub seed: u64,
    pub out: PathBuf,
    pub parallel: usize,
    pub overrides: FamilyOverrides,
    pub model: Option<PathBuf>,
    pub inputs: Option<Vec<f64>>,
    pub refine: bool,
    pub tolerance: Tolerance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub family: String,
    pub seed: u64,
    pub out: PathBuf,
    pub parallel: usize,
    pub overrides: FamilyOverrides,
    pub train: ForwardTrainConfig,
    pub n_train: usize,
    pub n_heldout: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UqConfig {
    pub family: String,
    pub seed: u64,
    pub out: PathBuf,
    pub parallel: usize,
    pub overrides: FamilyOverrides,
    pub evaluator: EvaluatorKind,
    pub model: Option<PathBuf>,
    pub n_samples: usize,
    /// Relative residual tolerance of the fallback evaluator.
    pub tolerance: f64,
    pub n_bins: usize,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_speeds: usize,
    /// Relative complex Gaussian noise on the responses.
    pub noise: f64,
    pub speed_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifyConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub parallel: usize,
    pub overrides: FamilyOverrides,
    pub observations: Option<PathBuf>,
    pub generate_synthetic: bool,
    pub synthetic: SyntheticConfig,
    pub hidden: Vec<usize>,
    pub train: InverseTrainConfig,
    /// Speeds of the identified-stiffness table.
    pub sweep: (f64, f64, usize),
    /// Random speeds compared against the known truth, when there is one.
    pub n_heldout: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub overrides: FamilyOverrides,
    pub synthetic: SyntheticConfig,
}

fn read_config(path: Option<&Path>) -> CliResult<Value> {
    let Some(path) = path else {
        return Ok(Value::Object(Default::default()));
    };
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if !value.is_object() {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            message: "config must be a JSON object".into(),
        });
    }
    Ok(value)
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

fn layered<T: Serialize + DeserializeOwned>(defaults: &T, file: &Value, path: Option<&Path>) -> CliResult<T> {
    let mut v = serde_json::to_value(defaults).expect("config types serialize");
    merge(&mut v, file);
    serde_json::from_value(v).map_err(|e| CliError::Parse {
        path: path.map_or_else(|| PathBuf::from("<config>"), Path::to_path_buf),
        message: e.to_string(),
    })
}

/// Family name and overrides as they stand before the command defaults are built.
fn family_from(flag: Option<&str>, file: &Value, fallback: &str) -> CliResult<(String, ProblemFamily)> {
    let name = flag
        .map(str::to_string)
        .or_else(|| file.get("family").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_else(|| fallback.to_string());
    let overrides: FamilyOverrides = match file.get("overrides") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| CliError::Usage(format!("invalid overrides: {e}")))?,
        None => FamilyOverrides::default(),
    };
    let family = make_family(&name, &overrides)?;
    Ok((name, family))
}

struct Common {
    file: Value,
}

impl Common {
    fn load(args: &CommonArgs) -> CliResult<Self> {
        Ok(Self {
            file: read_config(args.config.as_deref())?,
        })
    }
}

fn apply_common(args: &CommonArgs, seed: &mut u64, out: &mut PathBuf, parallel: &mut usize) {
    if let Some(s) = args.seed {
        *seed = s;
    }
    if let Some(o) = &args.out {
        *out = o.clone();
    }
    if let Some(p) = args.parallel {
        *parallel = p;
    }
}

/// Keeps the nested training seeds and parallel flags in step with the
/// top-level values so the echoed config has one source of truth.
fn sync_train(train: &mut ForwardTrainConfig, seed: u64, parallel: usize) {
    train.seed = seed;
    train.parallel = parallel > 1;
}

pub fn resolve_train(args: &crate::args::TrainArgs) -> CliResult<(TrainForwardConfig, ProblemFamily)> {
    let c = Common::load(&args.common)?;
    let (family_name, family) = family_from(args.family.as_deref(), &c.file, "convdiff")?;
    let defaults = TrainForwardConfig {
        family: family_name,
        seed: 0,
        out: DEFAULT_OUT.into(),
        parallel: 1,
        overrides: FamilyOverrides::default(),
        train: family.default_train_config(),
    };
    let mut cfg = layered(&defaults, &c.file, args.common.config.as_deref())?;
    apply_common(&args.common, &mut cfg.seed, &mut cfg.out, &mut cfg.parallel);
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = args.steps_per_epoch {
        cfg.train.steps_per_epoch = s;
    }
    if let Some(b) = args.batch_size {
        cfg.train.batch_size = b;
    }
    sync_train(&mut cfg.train, cfg.seed, cfg.parallel);
    Ok((cfg.clone(), make_family(&cfg.family, &cfg.overrides)?))
}

pub fn resolve_predict(args: &crate::args::PredictArgs) -> CliResult<(PredictConfig, ProblemFamily)> {
    let c = Common::load(&args.common)?;
    let (family_name, _) = family_from(args.family.as_deref(), &c.file, "convdiff")?;
    let defaults = PredictConfig {
        family: family_name,
        seed: 0,
        out: DEFAULT_OUT.into(),
        parallel: 1,
        overrides: FamilyOverrides::default(),
        model: None,
        inputs: None,
        refine: false,
        tolerance: Tolerance::Relative(1e-3),
    };
    let mut cfg = layered(&defaults, &c.file, args.common.config.as_deref())?;
    apply_common(&args.common, &mut cfg.seed, &mut cfg.out, &mut cfg.parallel);
    if let Some(m) = &args.model {
        cfg.model = Some(m.clone());
    }
    if let Some(x) = &args.inputs {
        cfg.inputs = Some(x.clone());
    }
    cfg.refine |= args.refine;
    if let Some(t) = args.tol {
        cfg.tolerance = Tolerance::Relative(t);
    }
    Ok((cfg.clone(), make_family(&cfg.family, &cfg.overrides)?))
}

pub fn resolve_compare(args: &crate::args::CompareArgs) -> CliResult<(CompareConfig, ProblemFamily)> {
    let c = Common::load(&args.common)?;
    let (family_name, family) = family_from(args.family.as_deref(), &c.file, "convdiff")?;
    let defaults = CompareConfig {
        family: family_name,
        seed: 0,
        out: DEFAULT_OUT.into(),
        parallel: 1,
        overrides: FamilyOverrides::default(),
        train: family.default_train_config(),
        n_train: 5000,
        n_heldout: 1000,
    };
    let mut cfg = layered(&defaults, &c.file, args.common.config.as_deref())?;
    apply_common(&args.common, &mut cfg.seed, &mut cfg.out, &mut cfg.parallel);
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = args.steps_per_epoch {
        cfg.train.steps_per_epoch = s;
    }
    if let Some(n) = args.n_train {
        cfg.n_train = n;
    }
    if let Some(n) = args.n_heldout {
        cfg.n_heldout = n;
    }
    sync_train(&mut cfg.train, cfg.seed, cfg.parallel);
    Ok((cfg.clone(), make_family(&cfg.family, &cfg.overrides)?))
}

pub fn resolve_uq(args: &crate::args::UqArgs) -> CliResult<(UqConfig, ProblemFamily)> {
    let c = Common::load(&args.common)?;
    let (family_name, _) = family_from(args.family.as_deref(), &c.file, "building_beam")?;
    let defaults = UqConfig {
        family: family_name,
        seed: 0,
        out: DEFAULT_OUT.into(),
        parallel: 1,
        overrides: FamilyOverrides::default(),
        evaluator: EvaluatorKind::Fem,
        model: None,
        n_samples: 10_000,
        tolerance: 1e-3,
        n_bins: 50,
        region: Region::Trained,
    };
    let mut cfg = layered(&defaults, &c.file, args.common.config.as_deref())?;
    apply_common(&args.common, &mut cfg.seed, &mut cfg.out, &mut cfg.parallel);
    if let Some(e) = args.evaluator {
        cfg.evaluator = e;
    }
    if let Some(m) = &args.model {
        cfg.model = Some(m.clone());
    }
    if let Some(n) = args.n {
        cfg.n_samples = n;
    }
    if let Some(t) = args.tol {
        cfg.tolerance = t;
    }
    if let Some(b) = args.bins {
        cfg.n_bins = b;
    }
    if let Some(r) = args.region {
        cfg.region = r;
    }
    Ok((cfg.clone(), make_family(&cfg.family, &cfg.overrides)?))
}

fn synthetic_defaults(family: &ProblemFamily) -> CliResult<SyntheticConfig> {
    let (_, _, _, range) = family.rotor_parts()?;
    Ok(SyntheticConfig {
        n_speeds: 40,
        noise: 0.0,
        speed_range: range,
    })
}

pub fn resolve_identify(args: &crate::args::IdentifyArgs) -> CliResult<(IdentifyConfig, ProblemFamily)> {
    let c = Common::load(&args.common)?;
    let (_, family) = family_from(None, &c.file, "rotor_bearing")?;
    let synthetic = synthetic_defaults(&family)?;
    let (lo, hi) = synthetic.speed_range;
    let defaults = IdentifyConfig {
        seed: 0,
        out: DEFAULT_OUT.into(),
        parallel: 1,
        overrides: FamilyOverrides::default(),
        observations: None,
        generate_synthetic: false,
        synthetic,
        hidden: vec![16, 16],
        train: family.default_inverse_config(),
        sweep: (lo, hi, 46),
        n_heldout: 20,
    };
    let mut cfg = layered(&defaults, &c.file, args.common.config.as_deref())?;
    apply_common(&args.common, &mut cfg.seed, &mut cfg.out, &mut cfg.parallel);
    if let Some(p) = &args.observations {
        cfg.observations = Some(p.clone());
    }
    cfg.generate_synthetic |= args.generate_synthetic;
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(n) = args.n_speeds {
        cfg.synthetic.n_speeds = n;
    }
    if let Some(n) = args.noise {
        cfg.synthetic.noise = n;
    }
    cfg.train.seed = cfg.seed;
    cfg.train.parallel = cfg.parallel > 1;
    Ok((cfg.clone(), make_family("rotor_bearing", &cfg.overrides)?))
}

pub fn resolve_generate(args: &crate::args::GenerateArgs) -> CliResult<(GenerateConfig, ProblemFamily)> {
    let c = Common::load(&args.common)?;
    let (_, family) = family_from(None, &c.file, "rotor_bearing")?;
    let defaults = GenerateConfig {
        seed: 0,
        out: DEFAULT_OUT.into(),
        overrides: FamilyOverrides::default(),
        synthetic: synthetic_defaults(&family)?,
    };
    let mut cfg = layered(&defaults, &c.file, args.common.config.as_deref())?;
    let mut parallel = 1;
    apply_common(&args.common, &mut cfg.seed, &mut cfg.out, &mut parallel);
    if let Some(n) = args.n_speeds {
        cfg.synthetic.n_speeds = n;
    }
    if let Some(n) = args.noise {
        cfg.synthetic.noise = n;
    }
    Ok((cfg.clone(), make_family("rotor_bearing", &cfg.overrides)?))
}
