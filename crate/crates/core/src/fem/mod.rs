//! Element formulations and global assembly.
//!
//! Each assembler produces an [`AssembledSystem`] holding the reduced
//! stiffness matrix and load vector on the free degrees of freedom. Dirichlet
//! values are eliminated, so the residual `K u - F` of a candidate solution is
//! always measured on free DOFs only.

mod beam;
mod convdiff;
mod rotor;
mod truss;

pub use beam::{assemble_beam, uniform_load, wind_load_profile, BeamModel, WindParams, FIRST_MODE_ROOT};
pub use convdiff::{assemble_convdiff, ConvDiffParams};
pub use rotor::{assemble_rotor, ComplexSystem, Excitation, RotorModel};
pub use truss::{assemble_truss, MemberGroup, Support, TrussGeometry, TrussModel};

use serde::Serialize;

use crate::linalg::{DenseMatrix, DenseVector, LinalgError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FemError {
    #[error("mesh needs at least {min} nodes, got {got}")]
    TooFewNodes { min: usize, got: usize },
    #[error("beam mesh needs at least {min} elements, got {got}")]
    MeshTooCoarse { min: usize, got: usize },
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("DOF {dof} is constrained more than once")]
    DuplicateConstraint { dof: usize },
    #[error("constrained DOF {dof} out of range (system has {n} DOFs)")]
    ConstraintOutOfRange { dof: usize, n: usize },
    #[error("every DOF is constrained; no free DOFs remain")]
    NoFreeDofs,
    #[error("structure is a mechanism: stiffness is singular after supports ({0})")]
    Mechanism(String),
    #[error("invalid truss geometry: {0}")]
    Geometry(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A nodal degree of freedom: `component` indexes the unknowns of one node
/// (temperature; x/y displacement; deflection/rotation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Dof {
    pub node: usize,
    pub component: usize,
}

/// Reduced linear system `K u = F` on the free DOFs of one parameter sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSystem {
    pub k: DenseMatrix,
    pub f: DenseVector,
    /// Free index -> full DOF index.
    free: Vec<usize>,
    /// Full DOF index -> node/component label.
    labels: Vec<Dof>,
    /// (full DOF index, prescribed value).
    dirichlet: Vec<(usize, f64)>,
}

impl AssembledSystem {
    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn n_full(&self) -> usize {
        self.labels.len()
    }

    /// Label of free DOF `i`.
    pub fn dof(&self, i: usize) -> Dof {
        self.labels[self.free[i]]
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn dirichlet_values(&self) -> &[(usize, f64)] {
        &self.dirichlet
    }

    /// Free index of a labelled DOF, if it is free.
    pub fn free_index_of(&self, dof: Dof) -> Option<usize> {
        self.free.iter().position(|&full| self.labels[full] == dof)
    }

    /// Scatters a free-DOF vector back to full size, filling prescribed values.
    pub fn expand(&self, u_free: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.labels.len()];
        for (&idx, &v) in self.free.iter().zip(u_free) {
            full[idx] = v;
        }
        for &(idx, v) in &self.dirichlet {
            full[idx] = v;
        }
        full
    }
}

/// Row/column elimination of prescribed DOFs.
///
/// `labels` names every full DOF; `constraints` lists (full index, value).
/// The free load becomes `F_free - K_free,c * u_c`.
pub fn apply_dirichlet(
    k_full: &DenseMatrix,
    f_full: &[f64],
    labels: Vec<Dof>,
    constraints: &[(usize, f64)],
) -> Result<AssembledSystem, FemError> {
    let n = k_full.rows();
    if !k_full.is_square() || f_full.len() != n || labels.len() != n {
        return Err(LinalgError::Shape {
            op: "apply_dirichlet",
            expected: format!("{n}x{n} with {n} loads and labels"),
            found: format!("{}x{}, {} loads, {} labels", k_full.rows(), k_full.cols(), f_full.len(), labels.len()),
        }
        .into());
    }
    let mut prescribed: Vec<Option<f64>> = vec![None; n];
    for &(dof, value) in constraints {
        if dof >= n {
            return Err(FemError::ConstraintOutOfRange { dof, n });
        }
        if prescribed[dof].replace(value).is_some() {
            return Err(FemError::DuplicateConstraint { dof });
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| prescribed[i].is_none()).collect();
    if free.is_empty() {
        return Err(FemError::NoFreeDofs);
    }
    let mut dirichlet: Vec<(usize, f64)> = constraints.to_vec();
    dirichlet.sort_by_key(|&(d, _)| d);

    let k = k_full.select(&free, &free);
    let f = free
        .iter()
        .map(|&i| {
            dirichlet
                .iter()
                .fold(f_full[i], |acc, &(c, value)| acc - k_full[(i, c)] * value)
        })
        .collect();
    Ok(AssembledSystem {
        k,
        f,
        free,
        labels,
        dirichlet,
    })
}

/// Element Péclet number `|u| h / (2k)` of a uniform mesh.
pub fn element_peclet(velocity: f64, diffusivity: f64, h: f64) -> f64 {
    velocity.abs() * h / (2.0 * diffusivity)
}
