//! Registry of the four studied problem families: input schema, assembly,
//! network shape and quantity of interest.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_beam, assemble_convdiff, assemble_truss, wind_load_profile, AssembledSystem, BeamModel, ConvDiffParams, RotorModel, TrussGeometry, TrussModel, WindParams};
use crate::forward::{nominal_inverse_map, ForwardTrainConfig, LossVariant, LrSchedule, ResidualSampler, RowScaling, TrainingSample};
use crate::inverse::{BearingParametrization, InverseTrainConfig, LinearBearingTruth};
use crate::linalg::DenseVector;
use crate::neural::{InputNormalization, MlpModel};
use crate::rng::{stream_rng, Stream};
use crate::uq::{DistributionSpec, McProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Convdiff,
    Truss23,
    BuildingBeam,
    RotorBearing,
}

impl FamilyName {
    pub const ALL: [FamilyName; 4] = [FamilyName::Convdiff, FamilyName::Truss23, FamilyName::BuildingBeam, FamilyName::RotorBearing];

    pub fn as_str(self) -> &'static str {
        match self {
            FamilyName::Convdiff => "convdiff",
            FamilyName::Truss23 => "truss23",
            FamilyName::BuildingBeam => "building_beam",
            FamilyName::RotorBearing => "rotor_bearing",
        }
    }
}

impl fmt::Display for FamilyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FamilyName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FamilyName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputParam {
    pub name: String,
    pub dist: DistributionSpec,
}

/// Anything a family config file may change. Unset fields keep the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyOverrides {
    /// Convection-diffusion mesh nodes.
    pub n_nodes: Option<usize>,
    /// Beam elements.
    pub n_elements: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub output_scale: Option<f64>,
    /// Input distributions by name.
    #[serde(default)]
    pub inputs: BTreeMap<String, DistributionSpec>,
    pub wind: Option<WindParams>,
    pub beam: Option<BeamModel>,
    pub truss_geometry: Option<TrussGeometry>,
    pub rotor: Option<RotorModel>,
    pub bearing: Option<BearingParametrization>,
    /// Mean wind speed multiplier of the untrained-region study.
    pub velocity_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind {
    ConvDiff { n_nodes: usize },
    Truss { geometry: TrussGeometry },
    Beam { model: BeamModel, wind: WindParams },
    Rotor {
        model: RotorModel,
        bearing: BearingParametrization,
        truth: LinearBearingTruth,
        speed_range: (f64, f64),
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemFamily {
    pub name: FamilyName,
    pub inputs: Vec<InputParam>,
    pub kind: FamilyKind,
    pub hidden: Vec<usize>,
    /// Scale of the nominal inverse output map (load units per network unit).
    pub output_scale: f64,
    pub velocity_factor: f64,
}

/// Mesh positions of the six source values.
pub const CONVDIFF_SOURCE_POINTS: usize = 6;

fn uniform(name: &str, lo: f64, hi: f64) -> InputParam {
    InputParam {
        name: name.into(),
        dist: DistributionSpec::Uniform { lo, hi },
    }
}

fn normal(name: &str, mean: f64, std: f64) -> InputParam {
    InputParam {
        name: name.into(),
        dist: DistributionSpec::Normal { mean, std },
    }
}

pub fn make_family(name: &str, overrides: &FamilyOverrides) -> Result<ProblemFamily> {
    let name: FamilyName = name.parse()?;
    let o = overrides;
    let (mut inputs, kind, scale) = match name {
        FamilyName::Convdiff => {
            let mut inputs = vec![uniform("T1", -20.0, 220.0), uniform("T2", -20.0, 220.0), uniform("k", 4.0, 14.0), uniform("u", 0.0, 40.0)];
            inputs.extend((1..=CONVDIFF_SOURCE_POINTS).map(|i| uniform(&format!("S{i}"), 0.0, 110.0)));
            (inputs, FamilyKind::ConvDiff { n_nodes: o.n_nodes.unwrap_or(6) }, 100.0)
        }
        FamilyName::Truss23 => {
            let mut inputs = vec![normal("A_h", 1e-3, 1e-4), normal("A_v", 2e-3, 2e-4), normal("E_h", 2.1e11, 2.1e10), normal("E_v", 2.1e11, 2.1e10)];
            let geometry = o.truss_geometry.clone().unwrap_or_else(TrussGeometry::benchmark23);
            inputs.extend((1..=geometry.load_nodes().len()).map(|i| normal(&format!("P{i}"), -5e5, 5e4)));
            (inputs, FamilyKind::Truss { geometry }, 5e5)
        }
        FamilyName::BuildingBeam => {
            let inputs = vec![
                InputParam {
                    name: "u_ref".into(),
                    dist: DistributionSpec::Weibull { mean: 40.0, shape: 2.0 },
                },
                uniform("z0", 0.1, 0.7),
            ];
            let mut model = o.beam.clone().unwrap_or_default();
            if let Some(n) = o.n_elements {
                model.n_elements = n;
            }
            (inputs, FamilyKind::Beam { model, wind: o.wind.clone().unwrap_or_default() }, 5e5)
        }
        FamilyName::RotorBearing => (
            vec![uniform("omega", 50.0, 500.0)],
            FamilyKind::Rotor {
                model: o.rotor.clone().unwrap_or_else(RotorModel::synthetic),
                bearing: o.bearing.clone().unwrap_or_default(),
                truth: LinearBearingTruth::default(),
                speed_range: (50.0, 500.0),
            },
            1.0,
        ),
    };
    for (key, dist) in &o.inputs {
        let slot = inputs
            .iter_mut()
            .find(|p| &p.name == key)
            .ok_or_else(|| Error::Config(format!("{name} has no input named {key:?}")))?;
        slot.dist = *dist;
    }
    let family = ProblemFamily {
        name,
        inputs,
        kind,
        hidden: o.hidden.clone().unwrap_or_else(|| vec![64, 64, 64]),
        output_scale: o.output_scale.unwrap_or(scale),
        velocity_factor: o.velocity_factor.unwrap_or(1.4),
    };
    family.validate()?;
    Ok(family)
}

/// The four parameter cases shown for the convection-diffusion study, as
/// `(label, [T1, T2, k, u, S1..S6])`.
pub fn convdiff_reference_cases() -> Vec<(&'static str, Vec<f64>)> {
    let mut cases = vec![
        ("a", vec![100.0, 20.0, 10.0, 20.0]),
        ("b", vec![25.0, 35.0, 10.0, 3.0]),
        ("c", vec![65.0, 178.0, 6.0, 11.0]),
        ("d", vec![0.0, 200.0, 10.0, 30.0]),
    ];
    cases[0].1.extend([100.0; 6]);
    cases[1].1.extend([1.0; 6]);
    for case in &mut cases[2..] {
        case.1.extend([5.0, 2.0, 3.0, 4.0, 5.0, 1.0]);
    }
    cases
}

/// Piecewise-linear interpolation of the source values onto `n_nodes` mesh nodes.
fn interpolate_source(s: &[f64], n_nodes: usize) -> Vec<f64> {
    let m = s.len() - 1;
    (0..n_nodes)
        .map(|j| {
            let t = j as f64 / (n_nodes - 1) as f64 * m as f64;
            let i = (t.floor() as usize).min(m - 1);
            let w = t - i as f64;
            (1.0 - w) * s[i] + w * s[i + 1]
        })
        .collect()
}

impl ProblemFamily {
    pub fn validate(&self) -> Result<()> {
        for p in &self.inputs {
            p.dist.validate().map_err(|_| Error::Distribution(format!("{}: {:?}", p.name, p.dist)))?;
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(format!("hidden layer sizes must be non-empty and positive, got {:?}", self.hidden)));
        }
        if !(self.output_scale > 0.0) || !(self.velocity_factor > 0.0) {
            return Err(Error::Config("output_scale and velocity_factor must be positive".into()));
        }
        match &self.kind {
            FamilyKind::Rotor { model, bearing, .. } => {
                model.validate()?;
                bearing.validate()?;
                if bearing.block_size() != model.bearing_dofs.len() {
                    return Err(Error::Config(format!(
                        "bearing parametrization covers {} DOFs, rotor has {}",
                        bearing.block_size(),
                        model.bearing_dofs.len()
                    )));
                }
            }
            // assembling at the mean inputs checks mesh and geometry
            _ => {
                self.assemble(&self.mean_inputs())?;
            }
        }
        Ok(())
    }

    pub fn input_names(&self) -> Vec<&str> {
        self.inputs.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn specs(&self) -> Vec<DistributionSpec> {
        self.inputs.iter().map(|p| p.dist).collect()
    }

    pub fn mean_inputs(&self) -> DenseVector {
        self.inputs.iter().map(|p| p.dist.mean()).collect()
    }

    pub fn is_forward(&self) -> bool {
        !matches!(self.kind, FamilyKind::Rotor { .. })
    }

    fn require_forward(&self) -> Result<()> {
        if self.is_forward() {
            Ok(())
        } else {
            Err(Error::Config(format!("{} is an inverse family; use identify", self.name)))
        }
    }

    /// Unknowns of the assembled system (free DOFs), or the number of
    /// bearing coefficients for the inverse family.
    pub fn n_outputs(&self) -> usize {
        match &self.kind {
            FamilyKind::ConvDiff { n_nodes } => n_nodes - 2,
            FamilyKind::Truss { geometry } => geometry.n_dofs() - geometry.supports().iter().map(|s| s.x as usize + s.y as usize).sum::<usize>(),
            FamilyKind::Beam { model, .. } => 2 * model.n_elements,
            FamilyKind::Rotor { bearing, .. } => bearing.n_outputs(),
        }
    }

    pub fn assemble(&self, x: &[f64]) -> Result<AssembledSystem> {
        if x.len() != self.inputs.len() {
            return Err(Error::Config(format!("{} takes {} inputs, got {}", self.name, self.inputs.len(), x.len())));
        }
        let sys = match &self.kind {
            FamilyKind::ConvDiff { n_nodes } => assemble_convdiff(
                &ConvDiffParams {
                    t1: x[0],
                    t2: x[1],
                    k: x[2],
                    u: x[3],
                    source: interpolate_source(&x[4..], *n_nodes),
                },
                *n_nodes,
            )?,
            FamilyKind::Truss { geometry } => assemble_truss(&TrussModel {
                geometry: geometry.clone(),
                a_h: x[0],
                a_v: x[1],
                e_h: x[2],
                e_v: x[3],
                loads: x[4..].to_vec(),
            })?,
            FamilyKind::Beam { model, wind } => assemble_beam(model, &wind_load_profile(x[0], x[1], model, wind)?)?,
            FamilyKind::Rotor { .. } => return Err(Error::Config(format!("{} is an inverse family; use identify", self.name))),
        };
        Ok(sys)
    }

    pub fn draw_inputs(&self, rng: &mut ChaCha8Rng) -> DenseVector {
        self.inputs.iter().map(|p| p.dist.draw(rng)).collect()
    }

    /// Draws inputs and assembles; no solve is performed.
    pub fn sample_inputs(&self, rng: &mut ChaCha8Rng) -> Result<(DenseVector, AssembledSystem)> {
        self.require_forward()?;
        let x = self.draw_inputs(rng);
        match self.assemble(&x) {
            Ok(sys) => Ok((x, sys)),
            Err(e) => Err(Error::Config(format!("assembly failed for inputs {:?}: {e}", x.as_slice()))),
        }
    }

    /// Free-DOF index of the tracked scalar: mid-domain temperature, vertical
    /// deflection of the bottom-chord middle node, or building-top lateral
    /// displacement.
    pub fn qoi_index(&self) -> Option<usize> {
        match &self.kind {
            FamilyKind::ConvDiff { n_nodes } => Some((n_nodes - 1) / 2 - 1),
            FamilyKind::Truss { geometry } => {
                let span = geometry.nodes().iter().map(|n| n[0]).fold(f64::NEG_INFINITY, f64::max);
                let mid = geometry
                    .nodes()
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| n[1] == 0.0)
                    .min_by(|a, b| (a.1[0] - span / 2.0).abs().total_cmp(&(b.1[0] - span / 2.0).abs()))
                    .map(|(i, _)| i)?;
                let sys = self.assemble(&self.mean_inputs()).ok()?;
                sys.free_index_of(crate::fem::Dof { node: mid, component: 1 })
            }
            FamilyKind::Beam { model, .. } => Some(2 * model.n_elements - 2),
            FamilyKind::Rotor { .. } => None,
        }
    }

    pub fn qoi_name(&self) -> &'static str {
        match self.kind {
            FamilyKind::ConvDiff { .. } => "mid_temperature",
            FamilyKind::Truss { .. } => "midspan_deflection",
            FamilyKind::Beam { .. } => "top_displacement",
            FamilyKind::Rotor { .. } => "none",
        }
    }

    /// Network for the forward families: inputs standardized with the
    /// analytic moments of their distributions and outputs mapped through
    /// `output_scale * K(mean inputs)^-1`.
    pub fn new_model(&self, seed: u64) -> Result<MlpModel> {
        self.require_forward()?;
        let mut sizes = vec![self.inputs.len()];
        sizes.extend_from_slice(&self.hidden);
        sizes.push(self.n_outputs());
        let k_ref = self.assemble(&self.mean_inputs())?.k;
        Ok(MlpModel::new(&sizes, &mut stream_rng(seed, Stream::Init))?
            .with_input_normalization(InputNormalization {
                mean: self.inputs.iter().map(|p| p.dist.mean()).collect(),
                std: self.inputs.iter().map(|p| p.dist.std()).collect(),
            })?
            .with_output_map(nominal_inverse_map(&k_ref, self.output_scale)?)?)
    }

    pub fn default_train_config(&self) -> ForwardTrainConfig {
        let epochs = match self.kind {
            FamilyKind::ConvDiff { .. } => 400,
            FamilyKind::Truss { .. } => 800,
            _ => 400,
        };
        // K's diagonal scales with the sampled k
        let (loss_variant, row_scaling) = match self.kind {
            FamilyKind::ConvDiff { .. } => (LossVariant::Norm, RowScaling::Jacobi),
            _ => (LossVariant::MeanSquaredNorm, RowScaling::None),
        };
        ForwardTrainConfig {
            epochs,
            steps_per_epoch: 100,
            batch_size: 64,
            schedule: LrSchedule::Exponential { initial: 3e-3, last: 3e-5 },
            loss_variant,
            row_scaling,
            ..ForwardTrainConfig::default()
        }
    }

    pub fn default_inverse_config(&self) -> InverseTrainConfig {
        InverseTrainConfig::default()
    }

    /// Input distributions of the untrained-region study: the building's
    /// mean wind speed is multiplied by `velocity_factor`.
    pub fn untrained_specs(&self) -> Result<Vec<DistributionSpec>> {
        if self.name != FamilyName::BuildingBeam {
            return Err(Error::Config(format!("no untrained-region study defined for {}", self.name)));
        }
        let mut specs = self.specs();
        specs[0] = match specs[0] {
            DistributionSpec::Weibull { mean, shape } => DistributionSpec::Weibull {
                mean: mean * self.velocity_factor,
                shape,
            },
            DistributionSpec::Normal { mean, std } => DistributionSpec::Normal {
                mean: mean * self.velocity_factor,
                std,
            },
            DistributionSpec::Uniform { lo, hi } => DistributionSpec::Uniform {
                lo: lo * self.velocity_factor,
                hi: hi * self.velocity_factor,
            },
        };
        Ok(specs)
    }

    pub fn rotor_parts(&self) -> Result<(&RotorModel, &BearingParametrization, &LinearBearingTruth, (f64, f64))> {
        match &self.kind {
            FamilyKind::Rotor { model, bearing, truth, speed_range } => Ok((model, bearing, truth, *speed_range)),
            _ => Err(Error::Config(format!("{} is a forward family", self.name))),
        }
    }
}

impl ResidualSampler for ProblemFamily {
    fn input_dim(&self) -> usize {
        self.inputs.len()
    }

    fn n_dofs(&self) -> usize {
        self.n_outputs()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<TrainingSample> {
        let (x, system) = self.sample_inputs(rng)?;
        Ok(TrainingSample { x, system })
    }
}

impl McProblem for ProblemFamily {
    fn assemble(&self, x: &[f64]) -> Result<AssembledSystem> {
        ProblemFamily::assemble(self, x)
    }

    fn qoi(&self, _system: &AssembledSystem, u: &[f64]) -> f64 {
        self.qoi_index().map_or(f64::NAN, |i| u[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lu_solve;

    fn family(name: &str) -> ProblemFamily {
        make_family(name, &FamilyOverrides::default()).unwrap()
    }

    #[test]
    fn registry_names() {
        for n in FamilyName::ALL {
            assert_eq!(family(n.as_str()).name, n);
        }
        assert_eq!(make_family("heat3d", &FamilyOverrides::default()).unwrap_err(), Error::UnknownFamily("heat3d".into()));
    }

    #[test]
    fn truss_inputs_follow_table() {
        let f = family("truss23");
        assert_eq!(f.input_names(), ["A_h", "A_v", "E_h", "E_v", "P1", "P2", "P3", "P4", "P5", "P6"]);
        assert_eq!(f.inputs[0].dist, DistributionSpec::Normal { mean: 1e-3, std: 1e-4 });
        assert_eq!(f.inputs[2].dist, DistributionSpec::Normal { mean: 2.1e11, std: 2.1e10 });
        assert_eq!(f.inputs[9].dist, DistributionSpec::Normal { mean: -5e5, std: 5e4 });
        assert_eq!(f.n_outputs(), 23);
    }

    #[test]
    fn beam_defaults() {
        let f = family("building_beam");
        let FamilyKind::Beam { model, .. } = &f.kind else { panic!() };
        assert_eq!((model.height, model.width, model.depth), (180.0, 45.0, 30.0));
        assert_eq!((model.frequency, model.density, model.damping_ratio), (0.2, 160.0, 0.01));
        assert_eq!(f.n_outputs(), 40);
    }

    #[test]
    fn n_nodes_override_resizes() {
        let o = FamilyOverrides {
            n_nodes: Some(11),
            ..Default::default()
        };
        let f = make_family("convdiff", &o).unwrap();
        assert_eq!(f.n_outputs(), 9);
        let (_, sys) = f.sample_inputs(&mut stream_rng(0, Stream::Sampling)).unwrap();
        assert_eq!(sys.n_free(), 9);
        let bad = FamilyOverrides {
            n_nodes: Some(2),
            ..Default::default()
        };
        assert!(make_family("convdiff", &bad).is_err());
        let unknown: std::result::Result<FamilyOverrides, _> = serde_json::from_str(r#"{"n_nodez": 3}"#);
        assert!(unknown.is_err());
    }

    #[test]
    fn input_override_by_name() {
        let o: FamilyOverrides = serde_json::from_str(r#"{"inputs": {"k": {"kind": "uniform", "lo": 1.0, "hi": 2.0}}}"#).unwrap();
        let f = make_family("convdiff", &o).unwrap();
        assert_eq!(f.inputs[2].dist, DistributionSpec::Uniform { lo: 1.0, hi: 2.0 });
        let o: FamilyOverrides = serde_json::from_str(r#"{"inputs": {"q": {"kind": "uniform", "lo": 1.0, "hi": 2.0}}}"#).unwrap();
        assert!(make_family("convdiff", &o).is_err());
    }

    #[test]
    fn source_interpolation_is_exact_on_six_nodes() {
        let s = [5.0, 2.0, 3.0, 4.0, 5.0, 1.0];
        assert_eq!(interpolate_source(&s, 6), s);
        let fine = interpolate_source(&s, 11);
        assert_eq!(fine[1], 3.5);
        assert_eq!(fine[10], 1.0);
    }

    #[test]
    fn every_input_reaches_the_system() {
        for name in ["convdiff", "truss23", "building_beam"] {
            let f = family(name);
            let x0 = f.mean_inputs();
            let base = f.assemble(&x0).unwrap();
            for i in 0..x0.len() {
                let mut x = x0.clone();
                x[i] += 0.05 * f.inputs[i].dist.std();
                let s = f.assemble(&x).unwrap();
                assert!(s.k != base.k || s.f != base.f, "{name}: input {} is dead", f.inputs[i].name);
            }
        }
    }

    #[test]
    fn truss_samples_are_spd() {
        let f = family("truss23");
        let mut rng = stream_rng(3, Stream::Sampling);
        for _ in 0..100 {
            let (_, sys) = f.sample_inputs(&mut rng).unwrap();
            sys.k.cholesky().unwrap();
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        for name in ["convdiff", "truss23", "building_beam"] {
            let f = family(name);
            let a = f.sample_inputs(&mut stream_rng(8, Stream::Sampling)).unwrap();
            let b = f.sample_inputs(&mut stream_rng(8, Stream::Sampling)).unwrap();
            assert_eq!(a.0, b.0);
            assert_eq!(a.1, b.1);
        }
    }

    #[test]
    fn qoi_signs() {
        let truss = family("truss23");
        let sys = truss.assemble(&truss.mean_inputs()).unwrap();
        let u = lu_solve(&sys.k, &sys.f).unwrap();
        assert!(McProblem::qoi(&truss, &sys, &u) < 0.0);
        let beam = family("building_beam");
        let sys = beam.assemble(&beam.mean_inputs()).unwrap();
        let u = lu_solve(&sys.k, &sys.f).unwrap();
        let top = McProblem::qoi(&beam, &sys, &u);
        assert!(top > 0.0 && top.is_finite());
        assert_eq!(sys.dof(beam.qoi_index().unwrap()).node, 20);
        let cd = family("convdiff");
        let x = &convdiff_reference_cases()[0].1;
        let sys = cd.assemble(x).unwrap();
        assert_eq!(sys.n_free(), 4);
        assert!(McProblem::qoi(&cd, &sys, &lu_solve(&sys.k, &sys.f).unwrap()).is_finite());
    }

    #[test]
    fn surrogate_shape_matches_family() {
        for name in ["convdiff", "truss23", "building_beam"] {
            let f = family(name);
            let m = f.new_model(0).unwrap();
            assert_eq!(m.input_dim(), f.inputs.len());
            assert_eq!(m.output_dim(), f.n_outputs());
        }
        assert!(family("rotor_bearing").new_model(0).is_err());
    }

    #[test]
    fn untrained_shift() {
        let f = family("building_beam");
        let s = f.untrained_specs().unwrap();
        assert_eq!(s[0], DistributionSpec::Weibull { mean: 56.0, shape: 2.0 });
        assert_eq!(s[1], f.inputs[1].dist);
    }
}
