//! Conjugate-gradient solution of the reduced SPD systems.
//!
//! The iteration is single-threaded with a fixed summation order, so a given
//! build produces bit-identical fields for identical inputs.

use std::sync::Arc;

use crate::assembly::LinearSystem;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// What a solved field represents; carried along for reports and debugging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldLabel {
    PrimalOriginal,
    PrimalSimplified,
    DualSimplified,
    Feature,
    Other,
}

/// Nodal P1 field on a mesh. Dirichlet nodes carry their prescribed values
/// exactly (the lifting construction never touches them).
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
    pub label: FieldLabel,
}

impl PotentialField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>, label: FieldLabel) -> Self {
        assert_eq!(mesh.num_nodes(), values.len());
        PotentialField { mesh, values, label }
    }

    /// Constant per-element gradient of the P1 interpolant.
    pub fn element_gradient(&self, element: usize) -> Result<[f64; 2]> {
        if element >= self.mesh.num_triangles() {
            return Err(Error::BadElement(element));
        }
        Ok(self.mesh.p1_gradient(element, &self.values))
    }

    pub fn same_mesh(&self, other: &PotentialField) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub tol: f64,
}

/// Default relative residual; bound integrity needs solver error well below
/// the bound gap.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Default iteration cap as a multiple of the free DOF count.
pub const DEFAULT_MAX_ITER_FACTOR: usize = 20;

/// Jacobi-preconditioned conjugate gradients on the reduced system; the
/// returned field includes the lift values at constrained nodes.
pub fn solve_spd(
    sys: &LinearSystem,
    mesh: &Arc<Mesh>,
    label: FieldLabel,
    tol: f64,
    max_iter: Option<usize>,
) -> Result<(PotentialField, SolveReport)> {
    let n = sys.num_free();
    let max_iter = max_iter.unwrap_or(DEFAULT_MAX_ITER_FACTOR * n.max(1));

    if n == 0 {
        let field = PotentialField::new(mesh.clone(), sys.expand(&[]), label);
        return Ok((
            field,
            SolveReport {
                iterations: 0,
                residual: 0.0,
                tol,
            },
        ));
    }

    let a = &sys.matrix;
    let diag = a.diagonal();
    if diag.iter().any(|&d| d <= 0.0 || !d.is_finite()) {
        return Err(Error::SingularSystem);
    }

    let b = &sys.rhs;
    let norm_b = dot(b, b).sqrt();
    let target = if norm_b == 0.0 { 0.0 } else { tol * norm_b };

    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    let mut iterations = 0;
    let mut res_norm = dot(&r, &r).sqrt();
    while res_norm > target && iterations < max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::SingularSystem);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
        res_norm = dot(&r, &r).sqrt();
    }

    if res_norm > target {
        return Err(Error::NotConverged {
            residual: if norm_b == 0.0 { res_norm } else { res_norm / norm_b },
            tol,
            iterations,
        });
    }

    let field = PotentialField::new(mesh.clone(), sys.expand(&x), label);
    Ok((
        field,
        SolveReport {
            iterations,
            residual: if norm_b == 0.0 { 0.0 } else { res_norm / norm_b },
            tol,
        },
    ))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}
