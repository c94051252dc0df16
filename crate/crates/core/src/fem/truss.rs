//! Planar pin-jointed truss, direct stiffness method.
//!
//! Geometry files are JSON:
//!
//! ```json
//! {
//!   "nodes": [[x, y], ...],
//!   "members": [[i, j, "h" | "v"], ...],
//!   "supports": [{ "node": 0, "x": true, "y": true }, ...],
//!   "load_nodes": [7, 8, ...]
//! }
//! ```
//!
//! Members tagged `"h"` are horizontal chords and take `(E_h, A_h)`; `"v"`
//! members (verticals and diagonals) take `(E_v, A_v)`. Load `i` acts
//! vertically on `load_nodes[i]`. DOFs are numbered node-major, `2n` = x,
//! `2n + 1` = y.

use serde::{Deserialize, Serialize};

use super::{apply_dirichlet, AssembledSystem, Dof, FemError};
use crate::linalg::DenseMatrix;

/// The checked-in 23-bar, 13-node benchmark layout.
pub const TRUSS23_JSON: &str = include_str!("../../data/truss23.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemberGroup {
    #[serde(rename = "h")]
    Horizontal,
    #[serde(rename = "v")]
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Support {
    pub node: usize,
    pub x: bool,
    pub y: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry")]
pub struct TrussGeometry {
    nodes: Vec<[f64; 2]>,
    members: Vec<(usize, usize, MemberGroup)>,
    supports: Vec<Support>,
    load_nodes: Vec<usize>,
}

#[derive(Deserialize)]
struct RawGeometry {
    nodes: Vec<[f64; 2]>,
    members: Vec<(usize, usize, MemberGroup)>,
    supports: Vec<Support>,
    load_nodes: Vec<usize>,
}

impl TryFrom<RawGeometry> for TrussGeometry {
    type Error = FemError;
    fn try_from(raw: RawGeometry) -> Result<Self, FemError> {
        Self::new(raw.nodes, raw.members, raw.supports, raw.load_nodes)
    }
}

impl TrussGeometry {
    /// Validates indices and member lengths, and rejects mechanisms by
    /// checking that the supported unit-stiffness matrix is positive definite.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        members: Vec<(usize, usize, MemberGroup)>,
        supports: Vec<Support>,
        load_nodes: Vec<usize>,
    ) -> Result<Self, FemError> {
        let n = nodes.len();
        let bad = |msg: String| Err(FemError::Geometry(msg));
        if n < 2 || members.is_empty() {
            return bad("need at least two nodes and one member".into());
        }
        for &(i, j, _) in &members {
            if i >= n || j >= n || i == j {
                return bad(format!("member ({i}, {j}) references invalid nodes"));
            }
            let [xi, yi] = nodes[i];
            let [xj, yj] = nodes[j];
            if (xj - xi).hypot(yj - yi) <= 0.0 {
                return bad(format!("member ({i}, {j}) has zero length"));
            }
        }
        for s in &supports {
            if s.node >= n {
                return bad(format!("support node {} out of range", s.node));
            }
        }
        if let Some(&l) = load_nodes.iter().find(|&&l| l >= n) {
            return bad(format!("load node {l} out of range"));
        }
        let geometry = Self {
            nodes,
            members,
            supports,
            load_nodes,
        };
        let unit = TrussModel {
            loads: vec![0.0; geometry.load_nodes.len()],
            geometry: geometry.clone(),
            e_h: 1.0,
            e_v: 1.0,
            a_h: 1.0,
            a_v: 1.0,
        };
        let sys = assemble_truss(&unit)?;
        sys.k
            .cholesky()
            .map_err(|e| FemError::Mechanism(e.to_string()))?;
        Ok(geometry)
    }

    pub fn from_json(text: &str) -> Result<Self, FemError> {
        serde_json::from_str(text).map_err(|e| FemError::Geometry(e.to_string()))
    }

    pub fn benchmark23() -> Self {
        Self::from_json(TRUSS23_JSON).expect("bundled truss geometry is valid")
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn members(&self) -> &[(usize, usize, MemberGroup)] {
        &self.members
    }

    pub fn supports(&self) -> &[Support] {
        &self.supports
    }

    pub fn load_nodes(&self) -> &[usize] {
        &self.load_nodes
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    fn constraints(&self) -> Vec<(usize, f64)> {
        let mut c = Vec::new();
        for s in &self.supports {
            if s.x {
                c.push((2 * s.node, 0.0));
            }
            if s.y {
                c.push((2 * s.node + 1, 0.0));
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrussModel {
    pub geometry: TrussGeometry,
    pub e_h: f64,
    pub e_v: f64,
    pub a_h: f64,
    pub a_v: f64,
    /// Vertical nodal forces (N), one per `geometry.load_nodes()` entry.
    pub loads: Vec<f64>,
}

pub fn assemble_truss(model: &TrussModel) -> Result<AssembledSystem, FemError> {
    for (name, v) in [("e_h", model.e_h), ("e_v", model.e_v), ("a_h", model.a_h), ("a_v", model.a_v)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(FemError::InvalidParameter {
                name,
                value: v,
                reason: "stiffness properties must be positive",
            });
        }
    }
    let g = &model.geometry;
    if model.loads.len() != g.load_nodes.len() {
        return Err(FemError::InvalidParameter {
            name: "loads",
            value: model.loads.len() as f64,
            reason: "one load per load node required",
        });
    }
    let n = g.n_dofs();
    let mut k = DenseMatrix::zeros(n, n);
    for &(i, j, group) in &g.members {
        let (e, a) = match group {
            MemberGroup::Horizontal => (model.e_h, model.a_h),
            MemberGroup::Vertical => (model.e_v, model.a_v),
        };
        let [xi, yi] = g.nodes[i];
        let [xj, yj] = g.nodes[j];
        let len = (xj - xi).hypot(yj - yi);
        let (c, s) = ((xj - xi) / len, (yj - yi) / len);
        let t = [-c, -s, c, s];
        let dofs = [2 * i, 2 * i + 1, 2 * j, 2 * j + 1];
        let ea_l = e * a / len;
        for a_ in 0..4 {
            for b_ in 0..4 {
                k[(dofs[a_], dofs[b_])] += ea_l * t[a_] * t[b_];
            }
        }
    }
    let mut f = vec![0.0; n];
    for (&node, &p) in g.load_nodes.iter().zip(&model.loads) {
        f[2 * node + 1] += p;
    }
    let labels = (0..n).map(|d| Dof { node: d / 2, component: d % 2 }).collect();
    apply_dirichlet(&k, &f, labels, &g.constraints())
}
