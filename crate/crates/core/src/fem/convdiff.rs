//! Steady 1D convection-diffusion `u T' = k T'' + S` on `[0, 1]` with
//! `T(0) = T1`, `T(1) = T2`, discretized with linear Galerkin elements on a
//! uniform mesh. No upwind stabilization is applied; see
//! [`ConvDiffParams::element_peclet`] for the validity check.

use serde::{Deserialize, Serialize};

use super::{apply_dirichlet, AssembledSystem, Dof, FemError};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvDiffParams {
    pub t1: f64,
    pub t2: f64,
    /// Thermal diffusion coefficient, > 0.
    pub k: f64,
    /// Convection velocity.
    pub u: f64,
    /// Heat source at each mesh node (interpolated linearly between nodes).
    pub source: Vec<f64>,
}

impl ConvDiffParams {
    pub fn element_peclet(&self, n_nodes: usize) -> f64 {
        let h = 1.0 / (n_nodes.max(2) - 1) as f64;
        super::element_peclet(self.u, self.k, h)
    }
}

pub fn assemble_convdiff(params: &ConvDiffParams, n_nodes: usize) -> Result<AssembledSystem, FemError> {
    if n_nodes < 3 {
        return Err(FemError::TooFewNodes { min: 3, got: n_nodes });
    }
    if !(params.k > 0.0) {
        return Err(FemError::InvalidParameter {
            name: "k",
            value: params.k,
            reason: "diffusion coefficient must be positive",
        });
    }
    if params.source.len() != n_nodes {
        return Err(FemError::InvalidParameter {
            name: "source",
            value: params.source.len() as f64,
            reason: "source vector length must equal the node count",
        });
    }
    for (name, v) in [("t1", params.t1), ("t2", params.t2), ("u", params.u)] {
        if !v.is_finite() {
            return Err(FemError::InvalidParameter {
                name,
                value: v,
                reason: "must be finite",
            });
        }
    }

    let h = 1.0 / (n_nodes - 1) as f64;
    let d = params.k / h;
    let c = params.u / 2.0;
    // diffusion + convection element matrix, rows = test functions
    let ke = [[d - c, -d + c], [-d - c, d + c]];
    let me = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];

    let mut k = DenseMatrix::zeros(n_nodes, n_nodes);
    let mut f = vec![0.0; n_nodes];
    for e in 0..n_nodes - 1 {
        let nodes = [e, e + 1];
        for a in 0..2 {
            for b in 0..2 {
                k[(nodes[a], nodes[b])] += ke[a][b];
                f[nodes[a]] += me[a][b] * params.source[nodes[b]];
            }
        }
    }
    let labels = (0..n_nodes).map(|node| Dof { node, component: 0 }).collect();
    apply_dirichlet(&k, &f, labels, &[(0, params.t1), (n_nodes - 1, params.t2)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lu_solve;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(t1: f64, t2: f64, k: f64, u: f64, source: Vec<f64>) -> ConvDiffParams {
        ConvDiffParams { t1, t2, k, u, source }
    }

    fn solve_full(p: &ConvDiffParams, n: usize) -> Vec<f64> {
        let sys = assemble_convdiff(p, n).unwrap();
        sys.expand(&lu_solve(&sys.k, &sys.f).unwrap())
    }

    /// Central finite differences with the Thomas algorithm; independent of
    /// the Galerkin assembly.
    fn fine_mesh_oracle(p: &ConvDiffParams, n: usize) -> Vec<f64> {
        let coarse = p.source.len();
        let h = 1.0 / (n - 1) as f64;
        let source_at = |x: f64| {
            let s = x * (coarse - 1) as f64;
            let i = (s.floor() as usize).min(coarse - 2);
            let t = s - i as f64;
            p.source[i] * (1.0 - t) + p.source[i + 1] * t
        };
        let m = n - 2;
        let lower = -p.k / (h * h) - p.u / (2.0 * h);
        let diag = 2.0 * p.k / (h * h);
        let upper = -p.k / (h * h) + p.u / (2.0 * h);
        let mut rhs: Vec<f64> = (1..=m).map(|i| source_at(i as f64 * h)).collect();
        rhs[0] -= lower * p.t1;
        rhs[m - 1] -= upper * p.t2;
        let mut c = vec![0.0; m];
        let mut d = vec![0.0; m];
        c[0] = upper / diag;
        d[0] = rhs[0] / diag;
        for i in 1..m {
            let denom = diag - lower * c[i - 1];
            c[i] = upper / denom;
            d[i] = (rhs[i] - lower * d[i - 1]) / denom;
        }
        let mut x = vec![0.0; m];
        x[m - 1] = d[m - 1];
        for i in (0..m - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        let mut full = vec![p.t1];
        full.extend(x);
        full.push(p.t2);
        full
    }

    #[test]
    fn pure_diffusion_gives_linear_profile() {
        let t = solve_full(&params(0.0, 1.0, 1.0, 0.0, vec![0.0; 6]), 6);
        for (i, v) in t.iter().enumerate() {
            assert!((v - i as f64 / 5.0).abs() <= 1e-12, "node {i}: {v}");
        }
    }

    #[test]
    fn constant_source_case_matches_closed_form() {
        // T = A + B exp(u x / k) + (S/u) x
        let p = params(100.0, 20.0, 10.0, 20.0, vec![100.0; 6]);
        let t = solve_full(&p, 6);
        let pe = p.u / p.k;
        let b = (p.t2 - p.t1 - 100.0 / p.u) / (pe.exp() - 1.0);
        let a = p.t1 - b;
        for (i, v) in t.iter().enumerate() {
            let x = i as f64 / 5.0;
            let exact = a + b * (pe * x).exp() + 100.0 / p.u * x;
            assert!((v - exact).abs() < 0.5, "node {i}: {v} vs {exact}");
            // source lifts the profile above the straight line between the ends
            if i > 0 && i < 5 {
                assert!(*v > p.t1 + (p.t2 - p.t1) * x);
            }
        }
    }

    #[test]
    fn variable_source_matches_fine_mesh_oracle() {
        let p = params(65.0, 178.0, 6.0, 11.0, vec![5.0, 2.0, 3.0, 4.0, 5.0, 1.0]);
        let coarse = solve_full(&p, 6);
        let fine = fine_mesh_oracle(&p, 2001);
        let range = 178.0 - 65.0;
        for i in 0..6 {
            let fine_value = fine[i * 400];
            assert!((coarse[i] - fine_value).abs() <= 0.01 * range, "node {i}: {} vs {}", coarse[i], fine_value);
        }
    }

    #[test]
    fn system_dimension_and_pattern() {
        let p = params(1.0, 2.0, 3.0, 4.0, vec![1.0; 8]);
        let sys = assemble_convdiff(&p, 8).unwrap();
        assert_eq!(sys.n_free(), 6);
        for i in 0..6usize {
            for j in 0..6 {
                if i.abs_diff(j) > 1 {
                    assert_eq!(sys.k[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn parameter_errors() {
        assert_eq!(
            assemble_convdiff(&params(0.0, 0.0, 1.0, 0.0, vec![0.0; 2]), 2).unwrap_err(),
            FemError::TooFewNodes { min: 3, got: 2 }
        );
        assert!(matches!(
            assemble_convdiff(&params(0.0, 0.0, 0.0, 0.0, vec![0.0; 6]), 6),
            Err(FemError::InvalidParameter { name: "k", .. })
        ));
        assert!(matches!(
            assemble_convdiff(&params(0.0, 0.0, 1.0, 0.0, vec![0.0; 5]), 6),
            Err(FemError::InvalidParameter { name: "source", .. })
        ));
    }

    #[test]
    fn peclet_number() {
        let p = params(0.0, 0.0, 10.0, 20.0, vec![0.0; 6]);
        assert_relative_eq!(p.element_peclet(6), 0.2, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn skew_part_is_convection_only(k1 in 0.1f64..20.0, k2 in 0.1f64..20.0, u in -30.0f64..30.0) {
            let a = assemble_convdiff(&params(0.0, 0.0, k1, u, vec![0.0; 6]), 6).unwrap().k;
            let b = assemble_convdiff(&params(0.0, 0.0, k2, u, vec![0.0; 6]), 6).unwrap().k;
            let sa = a.add(&a.transpose().scaled(-1.0)).unwrap();
            let sb = b.add(&b.transpose().scaled(-1.0)).unwrap();
            for (x, y) in sa.data().iter().zip(sb.data()) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + u.abs()));
            }
            let sym = assemble_convdiff(&params(0.0, 0.0, k1, 0.0, vec![0.0; 6]), 6).unwrap().k;
            prop_assert!(sym.is_symmetric(0.0));
        }
    }
}
