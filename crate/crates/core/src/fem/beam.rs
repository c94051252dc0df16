//! Cantilevered Euler-Bernoulli beam for a tall building under static wind.
//!
//! Nodes run from the base (`z = 0`, clamped) to the roof (`z = H`). Each
//! node carries a lateral deflection (component 0) and a rotation
//! (component 1). Loads are given as one lateral force per node.

use serde::{Deserialize, Serialize};

use super::{apply_dirichlet, AssembledSystem, Dof, FemError};
use crate::linalg::{DenseMatrix, DenseVector};

/// First root of `1 + cos(b) cosh(b) = 0` (cantilever fundamental mode).
pub const FIRST_MODE_ROOT: f64 = 1.875_104_068_711_961;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamModel {
    pub height: f64,
    /// Face exposed to the wind (m).
    pub width: f64,
    pub depth: f64,
    /// Fundamental frequency (Hz).
    pub frequency: f64,
    /// Bulk density of the building (kg/m^3).
    pub density: f64,
    /// Not used by the static solve; kept with the building data.
    pub damping_ratio: f64,
    /// Overrides the frequency-derived value when set.
    #[serde(default)]
    pub bending_stiffness: Option<f64>,
    pub n_elements: usize,
}

impl Default for BeamModel {
    fn default() -> Self {
        Self {
            height: 180.0,
            width: 45.0,
            depth: 30.0,
            frequency: 0.2,
            density: 160.0,
            damping_ratio: 0.01,
            bending_stiffness: None,
            n_elements: 20,
        }
    }
}

impl BeamModel {
    pub fn mass_per_length(&self) -> f64 {
        self.density * self.width * self.depth
    }

    /// Bending stiffness EI. Unless overridden it is chosen so that the first
    /// cantilever mode `f = b^2 / (2 pi) * sqrt(EI / (m L^4))` matches
    /// `frequency`.
    pub fn ei(&self) -> f64 {
        self.bending_stiffness.unwrap_or_else(|| {
            let omega = 2.0 * std::f64::consts::PI * self.frequency;
            let b2 = FIRST_MODE_ROOT * FIRST_MODE_ROOT;
            (omega / b2).powi(2) * self.mass_per_length() * self.height.powi(4)
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_elements + 1
    }

    pub fn node_heights(&self) -> Vec<f64> {
        let h = self.height / self.n_elements as f64;
        (0..self.n_nodes()).map(|i| i as f64 * h).collect()
    }

    /// Length of beam attributed to each node: half an element at the ends.
    pub fn tributary_lengths(&self) -> Vec<f64> {
        let h = self.height / self.n_elements as f64;
        let n = self.n_nodes();
        (0..n).map(|i| if i == 0 || i == n - 1 { h / 2.0 } else { h }).collect()
    }

    fn validate(&self) -> Result<(), FemError> {
        if self.n_elements < 4 {
            return Err(FemError::MeshTooCoarse {
                min: 4,
                got: self.n_elements,
            });
        }
        for (name, v) in [
            ("height", self.height),
            ("width", self.width),
            ("depth", self.depth),
            ("frequency", self.frequency),
            ("density", self.density),
            ("bending_stiffness", self.ei()),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(FemError::InvalidParameter {
                    name,
                    value: v,
                    reason: "must be positive and finite",
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindParams {
    pub rho_air: f64,
    pub c_d: f64,
    /// Reference height of the mean velocity; the building height if unset.
    #[serde(default)]
    pub z_ref: Option<f64>,
}

impl Default for WindParams {
    fn default() -> Self {
        Self {
            rho_air: 1.225,
            c_d: 1.2,
            z_ref: None,
        }
    }
}

/// Nodal drag forces `rho V(z)^2 A C_d / 2` with the log law
/// `V(z) = u_ref ln(z / z0) / ln(z_ref / z0)` and `A = width x tributary length`.
/// Nodes at or below `z0` get no load.
pub fn wind_load_profile(u_ref: f64, z0: f64, model: &BeamModel, wind: &WindParams) -> Result<DenseVector, FemError> {
    model.validate()?;
    let z_ref = wind.z_ref.unwrap_or(model.height);
    if !(z0 > 0.0) || !z0.is_finite() {
        return Err(FemError::InvalidParameter {
            name: "z0",
            value: z0,
            reason: "roughness length must be positive",
        });
    }
    if z0 >= z_ref {
        return Err(FemError::InvalidParameter {
            name: "z0",
            value: z0,
            reason: "roughness length must be below the reference height",
        });
    }
    if !(u_ref >= 0.0) || !u_ref.is_finite() {
        return Err(FemError::InvalidParameter {
            name: "u_ref",
            value: u_ref,
            reason: "reference velocity must be non-negative",
        });
    }
    let denom = (z_ref / z0).ln();
    let q = 0.5 * wind.rho_air * wind.c_d * model.width;
    Ok(model
        .node_heights()
        .iter()
        .zip(model.tributary_lengths())
        .map(|(&z, len)| {
            if z <= z0 {
                0.0
            } else {
                let v = u_ref * (z / z0).ln() / denom;
                q * v * v * len
            }
        })
        .collect())
}

/// Lumps a uniform line load `w` (N/m) onto the nodes.
pub fn uniform_load(model: &BeamModel, w: f64) -> DenseVector {
    model.tributary_lengths().iter().map(|len| w * len).collect()
}

pub fn assemble_beam(model: &BeamModel, nodal_forces: &[f64]) -> Result<AssembledSystem, FemError> {
    model.validate()?;
    let nn = model.n_nodes();
    if nodal_forces.len() != nn {
        return Err(FemError::InvalidParameter {
            name: "load",
            value: nodal_forces.len() as f64,
            reason: "one lateral force per node required",
        });
    }
    let ei = model.ei();
    let l = model.height / model.n_elements as f64;
    let c = ei / l.powi(3);
    let ke = [
        [12.0, 6.0 * l, -12.0, 6.0 * l],
        [6.0 * l, 4.0 * l * l, -6.0 * l, 2.0 * l * l],
        [-12.0, -6.0 * l, 12.0, -6.0 * l],
        [6.0 * l, 2.0 * l * l, -6.0 * l, 4.0 * l * l],
    ];
    let n = 2 * nn;
    let mut k = DenseMatrix::zeros(n, n);
    for e in 0..model.n_elements {
        let base = 2 * e;
        for a in 0..4 {
            for b in 0..4 {
                k[(base + a, base + b)] += c * ke[a][b];
            }
        }
    }
    let mut f = vec![0.0; n];
    for (i, &p) in nodal_forces.iter().enumerate() {
        f[2 * i] = p;
    }
    let labels = (0..n).map(|d| Dof { node: d / 2, component: d % 2 }).collect();
    apply_dirichlet(&k, &f, labels, &[(0, 0.0), (1, 0.0)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lu_solve;
    use approx::assert_relative_eq;

    fn model(n_elements: usize) -> BeamModel {
        BeamModel {
            n_elements,
            ..BeamModel::default()
        }
    }

    fn tip(m: &BeamModel, load: &[f64]) -> f64 {
        let sys = assemble_beam(m, load).unwrap();
        let u = lu_solve(&sys.k, &sys.f).unwrap();
        let top = sys.free_index_of(Dof { node: m.n_elements, component: 0 }).unwrap();
        u[top]
    }

    #[test]
    fn frequency_derived_stiffness() {
        let m = BeamModel::default();
        assert_relative_eq!(m.mass_per_length(), 216_000.0);
        // recompute f from EI
        let f = FIRST_MODE_ROOT.powi(2) / (2.0 * std::f64::consts::PI)
            * (m.ei() / (m.mass_per_length() * m.height.powi(4))).sqrt();
        assert_relative_eq!(f, 0.2, max_relative = 1e-12);
        assert_relative_eq!(m.ei(), 2.8966e13, max_relative = 1e-3);
    }

    #[test]
    fn tip_point_load_is_nodally_exact() {
        let m = model(8);
        let mut load = vec![0.0; 9];
        load[8] = 1e6;
        let exact = 1e6 * m.height.powi(3) / (3.0 * m.ei());
        let got = tip(&m, &load);
        assert!((got - exact).abs() <= 1e-10 * exact, "{got} vs {exact}");
    }

    #[test]
    fn uniform_load_tip_deflection() {
        let m = model(16);
        let w = 5e4;
        let exact = w * m.height.powi(4) / (8.0 * m.ei());
        let got = tip(&m, &uniform_load(&m, w));
        assert!((got - exact).abs() <= 5e-3 * exact, "{got} vs {exact}");
    }

    #[test]
    fn uniform_load_converges_quadratically() {
        let w = 5e4;
        let reference = tip(&model(256), &uniform_load(&model(256), w));
        let errs: Vec<f64> = [4, 8, 16, 32]
            .iter()
            .map(|&n| (tip(&model(n), &uniform_load(&model(n), w)) - reference).abs())
            .collect();
        for pair in errs.windows(2) {
            // rate h^2 or better: halving h cuts the error by ~4
            assert!(pair[1] <= pair[0] / 3.5, "{errs:?}");
        }
    }

    #[test]
    fn zero_load_zero_deflection() {
        let m = model(10);
        assert_eq!(tip(&m, &vec![0.0; 11]), 0.0);
    }

    #[test]
    fn coarse_mesh_rejected() {
        let m = model(3);
        assert_eq!(
            assemble_beam(&m, &[0.0; 4]).unwrap_err(),
            FemError::MeshTooCoarse { min: 4, got: 3 }
        );
    }

    #[test]
    fn wind_profile_examples() {
        let m = model(20);
        let wind = WindParams::default();
        let calm = wind_load_profile(0.0, 0.3, &m, &wind).unwrap();
        assert!(calm.iter().all(|&v| v == 0.0));

        let f = wind_load_profile(40.0, 0.3, &m, &wind).unwrap();
        let a_top = m.width * (m.height / 20.0) / 2.0;
        let expected = 1.225 * 40.0 * 40.0 * a_top * 1.2 / 2.0;
        assert_relative_eq!(f[20], expected, max_relative = 1e-12);
        // the anchor does not depend on roughness
        let f2 = wind_load_profile(40.0, 0.65, &m, &wind).unwrap();
        assert_relative_eq!(f2[20], expected, max_relative = 1e-12);
        assert_eq!(f[0], 0.0);
        assert!(f.windows(2).skip(1).take(18).all(|p| p[1] >= p[0]));

        assert!(matches!(
            wind_load_profile(40.0, 0.0, &m, &wind),
            Err(FemError::InvalidParameter { name: "z0", .. })
        ));
    }

    #[test]
    fn wind_pushes_top_downwind() {
        let m = BeamModel::default();
        let f = wind_load_profile(40.0, 0.3, &m, &WindParams::default()).unwrap();
        let d = tip(&m, &f);
        assert!(d > 0.0 && d < 1.0, "{d}");
    }
}
