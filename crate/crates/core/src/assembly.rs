//! P1 stiffness/load assembly, Dirichlet lifting, and the goal functional's
//! dual load.
//!
//! Permittivity is piecewise constant per region, so one-point quadrature is
//! exact for every integral assembled here; the estimator inherits that
//! exactness on the feature domain.

use crate::error::{Error, Result};
use crate::mesh::{Mesh, RegionId};
use crate::sparse::Csr;

/// Piecewise-constant relative permittivity, one value per mesh region plus
/// the bulk default. A value of zero removes the region from the active
/// domain (conductor interiors, voids, removed protrusions).
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    by_region: Vec<f64>,
    bulk: f64,
}

impl MaterialField {
    pub fn uniform(mesh: &Mesh, eps: f64) -> MaterialField {
        MaterialField {
            by_region: vec![eps; mesh.num_regions()],
            bulk: eps,
        }
    }

    pub fn set(&mut self, mesh: &Mesh, region: &str, eps: f64) -> Result<()> {
        let id = mesh.region_id(region)?;
        self.by_region[id.0 as usize] = eps;
        Ok(())
    }

    pub fn with(mut self, mesh: &Mesh, region: &str, eps: f64) -> Result<MaterialField> {
        self.set(mesh, region, eps)?;
        Ok(self)
    }

    pub fn eps_of(&self, region: Option<RegionId>) -> f64 {
        match region {
            Some(r) => self.by_region[r.0 as usize],
            None => self.bulk,
        }
    }

    pub fn scaled(&self, c: f64) -> MaterialField {
        MaterialField {
            by_region: self.by_region.iter().map(|e| c * e).collect(),
            bulk: c * self.bulk,
        }
    }

    fn check(&self, mesh: &Mesh) -> Result<()> {
        if self.by_region.len() != mesh.num_regions() {
            return Err(Error::MissingMaterial(format!(
                "field covers {} regions, mesh declares {}",
                self.by_region.len(),
                mesh.num_regions()
            )));
        }
        for (i, &e) in self.by_region.iter().enumerate() {
            if !e.is_finite() || e < 0.0 {
                return Err(Error::MissingMaterial(mesh.region_names()[i].clone()));
            }
        }
        if !self.bulk.is_finite() || self.bulk < 0.0 {
            return Err(Error::MissingMaterial("bulk".into()));
        }
        Ok(())
    }
}

/// Dirichlet/Neumann data plus optional volumetric charge, all keyed by tag
/// or region name. `node_dirichlet` carries explicit nodal constraints for
/// the feature problem, where the Dirichlet data is a solved trace rather
/// than a constant.
#[derive(Debug, Clone, Default)]
pub struct BoundaryConditions {
    pub dirichlet: Vec<(String, f64)>,
    pub neumann: Vec<(String, f64)>,
    pub charge_density: Vec<(Option<String>, f64)>,
    pub node_dirichlet: Vec<(u32, f64)>,
}

impl BoundaryConditions {
    pub fn with_dirichlet(mut self, tag: &str, value: f64) -> Self {
        self.dirichlet.push((tag.to_string(), value));
        self
    }

    pub fn with_neumann(mut self, tag: &str, flux: f64) -> Self {
        self.neumann.push((tag.to_string(), flux));
        self
    }
}

/// Reduced SPD system over the free (non-Dirichlet, material-supported)
/// nodes, together with the lifting vector that reconstructs the full field.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: Csr,
    pub rhs: Vec<f64>,
    pub lift: Vec<f64>,
    pub dof_map: Vec<Option<usize>>,
    pub free_nodes: Vec<u32>,
}

impl LinearSystem {
    pub fn num_free(&self) -> usize {
        self.free_nodes.len()
    }

    /// Full-length nodal vector from a reduced solution: lift values at
    /// constrained nodes, solved values at free nodes.
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = self.lift.clone();
        for (k, &node) in self.free_nodes.iter().enumerate() {
            full[node as usize] = reduced[k];
        }
        full
    }
}

/// Assemble K_ij = sum_e eps_e * area_e * grad Ni . grad Nj over all nodes.
pub fn assemble_stiffness(mesh: &Mesh, mat: &MaterialField) -> Result<Csr> {
    mat.check(mesh)?;
    let n = mesh.num_nodes();
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    for (e, t) in mesh.triangles.iter().enumerate() {
        let eps = mat.eps_of(t.region);
        if eps == 0.0 {
            continue;
        }
        let (g, area) = mesh.shape_gradients(e);
        for i in 0..3 {
            let gi = g[i];
            let row = &mut rows[t.vertices[i] as usize];
            for j in 0..3 {
                let gj = g[j];
                row.push((t.vertices[j], eps * area * (gi[0] * gj[0] + gi[1] * gj[1])));
            }
        }
    }
    Ok(Csr::from_row_lists(rows))
}

/// Assemble the linear form: volumetric charge plus prescribed Neumann flux.
pub fn assemble_load(mesh: &Mesh, bc: &BoundaryConditions) -> Result<Vec<f64>> {
    let mut load = vec![0.0; mesh.num_nodes()];
    for (region, rho) in &bc.charge_density {
        if *rho == 0.0 {
            continue;
        }
        let id = match region {
            Some(name) => Some(mesh.region_id(name)?),
            None => None,
        };
        for e in mesh.region_triangles(id) {
            let t = &mesh.triangles[e];
            let third = mesh.triangle_area(e) / 3.0;
            for v in t.vertices {
                load[v as usize] += rho * third;
            }
        }
    }
    for (tag, flux) in &bc.neumann {
        if *flux == 0.0 {
            continue;
        }
        let tag = mesh
            .tag_id(tag)
            .ok_or_else(|| Error::UnknownRegion(tag.clone()))?;
        for edge in mesh.boundary_edges.iter().filter(|e| e.tag == tag) {
            let a = mesh.nodes[edge.vertices[0] as usize];
            let b = mesh.nodes[edge.vertices[1] as usize];
            let half = 0.5 * ((b[0] - a[0]).hypot(b[1] - a[1]));
            for v in edge.vertices {
                load[v as usize] += flux * half;
            }
        }
    }
    Ok(load)
}

/// Shift inhomogeneous Dirichlet data into the right-hand side and reduce the
/// operator to the free nodes. Nodes without material support (interior to
/// zero-permittivity regions) are excluded from the system.
pub fn apply_dirichlet_lifting(
    stiffness: &Csr,
    bc: &BoundaryConditions,
    mesh: &Mesh,
) -> Result<LinearSystem> {
    let n = mesh.num_nodes();
    let mut lift = vec![0.0; n];
    let mut constrained = vec![false; n];

    for (tag, value) in &bc.dirichlet {
        if bc.neumann.iter().any(|(t, _)| t == tag) {
            return Err(Error::MeshIo(format!(
                "tag `{tag}` is both Dirichlet and Neumann"
            )));
        }
        let tag = mesh
            .tag_id(tag)
            .ok_or_else(|| Error::UnknownRegion(tag.clone()))?;
        for node in mesh.tagged_nodes(tag) {
            constrained[node as usize] = true;
            lift[node as usize] = *value;
        }
    }
    for &(node, value) in &bc.node_dirichlet {
        constrained[node as usize] = true;
        lift[node as usize] = value;
    }
    if !constrained.iter().any(|&c| c) {
        return Err(Error::NoDirichletNodes);
    }

    let diag = stiffness.diagonal();
    let mut dof_map = vec![None; n];
    let mut free_nodes = Vec::new();
    for i in 0..n {
        if !constrained[i] && diag[i] > 0.0 {
            dof_map[i] = Some(free_nodes.len());
            free_nodes.push(i as u32);
        }
    }

    let load = assemble_load(mesh, bc)?;
    let mut k_lift = vec![0.0; n];
    stiffness.matvec(&lift, &mut k_lift);
    let rhs: Vec<f64> = free_nodes
        .iter()
        .map(|&i| load[i as usize] - k_lift[i as usize])
        .collect();
    let matrix = stiffness.restrict(&dof_map, free_nodes.len());

    Ok(LinearSystem {
        matrix,
        rhs,
        lift,
        dof_map,
        free_nodes,
    })
}

/// Load vector of the dual problem: row j is the linearized QoI applied to
/// shape function j, integrated over the region of interest.
pub fn assemble_dual_load(
    mesh: &Mesh,
    mat: &MaterialField,
    phi_hat: &[f64],
    interest: RegionId,
) -> Result<Vec<f64>> {
    if interest.0 as usize >= mesh.num_regions() {
        return Err(Error::UnknownRegion(format!("#{}", interest.0)));
    }
    mat.check(mesh)?;
    let mut load = vec![0.0; mesh.num_nodes()];
    for e in mesh.region_triangles(Some(interest)) {
        let t = &mesh.triangles[e];
        let eps = mat.eps_of(t.region);
        let (g, area) = mesh.shape_gradients(e);
        let grad = mesh.p1_gradient(e, phi_hat);
        for j in 0..3 {
            load[t.vertices[j] as usize] += eps * area * (grad[0] * g[j][0] + grad[1] * g[j][1]);
        }
    }
    Ok(load)
}

/// B(u, v) restricted to one region, or over the whole domain when `region`
/// is absent.
pub fn energy_inner_product(
    mesh: &Mesh,
    mat: &MaterialField,
    u: &[f64],
    v: &[f64],
    region: Option<RegionId>,
) -> Result<f64> {
    if let Some(r) = region {
        if r.0 as usize >= mesh.num_regions() {
            return Err(Error::UnknownRegion(format!("#{}", r.0)));
        }
    }
    mat.check(mesh)?;
    let mut acc = 0.0;
    for (e, t) in mesh.triangles.iter().enumerate() {
        if region.is_some() && t.region != region {
            continue;
        }
        let eps = mat.eps_of(t.region);
        if eps == 0.0 {
            continue;
        }
        let gu = mesh.p1_gradient(e, u);
        let gv = mesh.p1_gradient(e, v);
        acc += eps * mesh.triangle_area(e) * (gu[0] * gv[0] + gu[1] * gv[1]);
    }
    Ok(acc)
}
