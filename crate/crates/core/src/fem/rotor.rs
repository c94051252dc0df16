//! Frequency-domain rotor model with fluid bearings.
//!
//! The dynamic stiffness at shaft speed `omega` is
//! `Z = -omega^2 M + j omega (omega G + C) + K_r + K_b`, where `K_b` lives on
//! the bearing DOFs only.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::FemError;
use crate::linalg::{shape_err, ComplexMatrix, ComplexVector, DenseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Excitation {
    /// Speed-independent complex load on every DOF.
    Fixed { f: Vec<Complex64> },
    /// Rotating unbalance `me omega^2 (1, -j)` on each `(x, y)` DOF pair.
    Unbalance { me: f64, dof_pairs: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotorModel {
    pub m: DenseMatrix,
    pub g: DenseMatrix,
    pub c: DenseMatrix,
    pub k_r: DenseMatrix,
    pub bearing_dofs: Vec<usize>,
    pub excitation: Excitation,
}

/// A complex square system `Z q = F`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSystem {
    pub z: ComplexMatrix,
    pub f: ComplexVector,
}

impl RotorModel {
    pub fn n_dofs(&self) -> usize {
        self.m.rows()
    }

    pub fn validate(&self) -> Result<(), FemError> {
        let n = self.m.rows();
        for (name, mat) in [("M", &self.m), ("G", &self.g), ("C", &self.c), ("K_r", &self.k_r)] {
            if mat.rows() != n || mat.cols() != n {
                return Err(shape_err("rotor model", format!("{name} {n}x{n}"), format!("{}x{}", mat.rows(), mat.cols())).into());
            }
        }
        let mut seen = vec![false; n];
        for &d in &self.bearing_dofs {
            if d >= n {
                return Err(FemError::ConstraintOutOfRange { dof: d, n });
            }
            if std::mem::replace(&mut seen[d], true) {
                return Err(FemError::DuplicateConstraint { dof: d });
            }
        }
        match &self.excitation {
            Excitation::Fixed { f } if f.len() != n => {
                Err(shape_err("rotor excitation", n, f.len()).into())
            }
            Excitation::Unbalance { dof_pairs, .. } if dof_pairs.iter().any(|&(x, y)| x >= n || y >= n) => {
                Err(FemError::InvalidParameter {
                    name: "dof_pairs",
                    value: n as f64,
                    reason: "unbalance DOF out of range",
                })
            }
            _ => Ok(()),
        }
    }

    pub fn excitation_at(&self, omega: f64) -> ComplexVector {
        match &self.excitation {
            Excitation::Fixed { f } => ComplexVector::from(f.clone()),
            Excitation::Unbalance { me, dof_pairs } => {
                let mut f = vec![Complex64::new(0.0, 0.0); self.n_dofs()];
                let amp = me * omega * omega;
                for &(x, y) in dof_pairs {
                    f[x] += Complex64::new(amp, 0.0);
                    f[y] += Complex64::new(0.0, -amp);
                }
                ComplexVector::from(f)
            }
        }
    }

    /// Expands a bearing-block matrix to full size.
    pub fn expand_bearing(&self, k_b: &DenseMatrix) -> Result<DenseMatrix, FemError> {
        let nb = self.bearing_dofs.len();
        if k_b.rows() != nb || k_b.cols() != nb {
            return Err(shape_err("bearing stiffness", format!("{nb}x{nb}"), format!("{}x{}", k_b.rows(), k_b.cols())).into());
        }
        let n = self.n_dofs();
        let mut full = DenseMatrix::zeros(n, n);
        for (a, &da) in self.bearing_dofs.iter().enumerate() {
            for (b, &db) in self.bearing_dofs.iter().enumerate() {
                full[(da, db)] = k_b[(a, b)];
            }
        }
        Ok(full)
    }

    /// Four lumped stations with `(x, y)` DOFs each, bearings at both ends
    /// and two disks in the middle.
    pub fn synthetic() -> Self {
        let masses = [8.0, 30.0, 30.0, 8.0];
        let n = 8;
        let mut m = DenseMatrix::zeros(n, n);
        for (node, &mass) in masses.iter().enumerate() {
            m[(2 * node, 2 * node)] = mass;
            m[(2 * node + 1, 2 * node + 1)] = mass;
        }
        let k_shaft = [1.5e7, 1.2e7, 1.5e7];
        let mut k_r = DenseMatrix::zeros(n, n);
        for (seg, &ks) in k_shaft.iter().enumerate() {
            for dir in 0..2 {
                let (i, j) = (2 * seg + dir, 2 * (seg + 1) + dir);
                k_r[(i, i)] += ks;
                k_r[(j, j)] += ks;
                k_r[(i, j)] -= ks;
                k_r[(j, i)] -= ks;
            }
        }
        let mut g = DenseMatrix::zeros(n, n);
        for node in [1, 2] {
            g[(2 * node, 2 * node + 1)] = 0.4;
            g[(2 * node + 1, 2 * node)] = -0.4;
        }
        let mut c = DenseMatrix::zeros(n, n);
        for d in 0..n {
            c[(d, d)] = if d < 2 || d >= 6 { 2e3 } else { 50.0 };
        }
        Self {
            m,
            g,
            c,
            k_r,
            bearing_dofs: vec![0, 1, 6, 7],
            excitation: Excitation::Unbalance {
                me: 1e-4,
                dof_pairs: vec![(2, 3), (4, 5)],
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self, FemError> {
        let model: Self = serde_json::from_str(text).map_err(|e| FemError::Geometry(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

pub fn assemble_rotor(model: &RotorModel, omega: f64, k_b: &DenseMatrix) -> Result<ComplexSystem, FemError> {
    model.validate()?;
    if !(omega >= 0.0) || !omega.is_finite() {
        return Err(FemError::InvalidParameter {
            name: "omega",
            value: omega,
            reason: "speed must be non-negative",
        });
    }
    let stiffness = model.k_r.add(&model.expand_bearing(k_b)?)?;
    let z = ComplexMatrix::from_real(&stiffness)
        .add_scaled_real(Complex64::new(-omega * omega, 0.0), &model.m)?
        .add_scaled_real(Complex64::new(0.0, omega * omega), &model.g)?
        .add_scaled_real(Complex64::new(0.0, omega), &model.c)?;
    Ok(ComplexSystem {
        z,
        f: model.excitation_at(omega),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complex_lu_solve, complex_matvec};

    fn two_dof() -> RotorModel {
        let eye = DenseMatrix::identity(2);
        RotorModel {
            m: eye.clone(),
            g: DenseMatrix::zeros(2, 2),
            c: eye.scaled(0.1),
            k_r: DenseMatrix::zeros(2, 2),
            bearing_dofs: vec![0, 1],
            excitation: Excitation::Fixed {
                f: vec![Complex64::new(1.0, 0.0); 2],
            },
        }
    }

    fn bearings(kxx: f64, kyy: f64) -> DenseMatrix {
        let mut k = DenseMatrix::zeros(4, 4);
        for (i, v) in [kxx, kyy, kxx, kyy].into_iter().enumerate() {
            k[(i, i)] = v;
        }
        k
    }

    #[test]
    fn two_dof_dynamic_stiffness() {
        let sys = assemble_rotor(&two_dof(), 10.0, &DenseMatrix::identity(2).scaled(100.0)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { Complex64::new(0.0, 1.0) } else { Complex64::new(0.0, 0.0) };
                assert!((sys.z[(i, j)] - expected).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_speed_is_static_stiffness() {
        let model = RotorModel::synthetic();
        let kb = bearings(1e7, 8e6);
        let sys = assemble_rotor(&model, 0.0, &kb).unwrap();
        let expected = model.k_r.add(&model.expand_bearing(&kb).unwrap()).unwrap();
        assert_eq!(sys.z.im(), DenseMatrix::zeros(8, 8));
        assert_eq!(sys.z.re(), expected);
    }

    #[test]
    fn damping_part_linear_in_speed() {
        let mut model = RotorModel::synthetic();
        model.g = DenseMatrix::zeros(8, 8);
        let kb = bearings(1e7, 8e6);
        let a = assemble_rotor(&model, 100.0, &kb).unwrap().z.im();
        let b = assemble_rotor(&model, 300.0, &kb).unwrap().z.im();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((3.0 * x - y).abs() <= 1e-9 * y.abs().max(1.0));
        }
    }

    #[test]
    fn response_solves_system() {
        let model = RotorModel::synthetic();
        for omega in [50.0, 275.0, 500.0] {
            let sys = assemble_rotor(&model, omega, &bearings(1e7 + 2e3 * omega, 8e6 + 1.5e3 * omega)).unwrap();
            let q = complex_lu_solve(&sys.z, &sys.f).unwrap();
            let r = complex_matvec(&sys.z, &q).unwrap().sub(&sys.f).unwrap();
            assert!(r.norm() <= 1e-10 * sys.f.norm());
        }
    }

    #[test]
    fn bad_bearing_block_rejected() {
        let model = RotorModel::synthetic();
        assert!(matches!(
            assemble_rotor(&model, 10.0, &DenseMatrix::identity(3)),
            Err(FemError::Linalg(_))
        ));
        let mut dup = model.clone();
        dup.bearing_dofs = vec![0, 0, 6, 7];
        assert_eq!(dup.validate().unwrap_err(), FemError::DuplicateConstraint { dof: 0 });
    }

    #[test]
    fn model_json_round_trip() {
        let model = RotorModel::synthetic();
        let text = serde_json::to_string(&model).unwrap();
        assert_eq!(RotorModel::from_json(&text).unwrap(), model);
    }
}
