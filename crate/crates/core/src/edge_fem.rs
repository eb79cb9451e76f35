//! Lowest-order Nédélec (Whitney) edge elements on tetrahedra.
//!
//! The basis function of the local edge `(a, b)` is
//! `φ = λ_a ∇λ_b − λ_b ∇λ_a` with constant curl `2 ∇λ_a × ∇λ_b`. Global
//! basis functions follow the ascending-vertex orientation of
//! [`TetMesh::edges`]; the per-tet sign from [`TetMesh::tet_edges`] maps
//! between the two.

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};
use crate::mesh::{TetMesh, LOCAL_EDGES};
use crate::quadrature::{gauss_legendre, tet_degree2, tet_degree5};
use crate::sparse::{SparseSym, TripletBuilder};

pub type Mat6 = [[f64; 6]; 6];

/// Minimum admissible tet volume.
pub const MIN_VOLUME: f64 = 1e-14;

/// Geometric data of one tetrahedron.
#[derive(Debug, Clone, Copy)]
pub struct TetGeometry {
    pub points: [Point3<f64>; 4],
    pub grad: [Vector3<f64>; 4],
    pub volume: f64,
}

impl TetGeometry {
    pub fn new(points: [Point3<f64>; 4]) -> Result<Self> {
        let j = Matrix3::from_columns(&[points[1] - points[0], points[2] - points[0], points[3] - points[0]]);
        let volume = j.determinant() / 6.0;
        if volume.abs() < MIN_VOLUME {
            return Err(Error::DegenerateElement { tet: usize::MAX, volume });
        }
        let inv = j.try_inverse().ok_or(Error::DegenerateElement { tet: usize::MAX, volume })?;
        let g1 = inv.row(0).transpose();
        let g2 = inv.row(1).transpose();
        let g3 = inv.row(2).transpose();
        let g0 = -(g1 + g2 + g3);
        Ok(TetGeometry { points, grad: [g0, g1, g2, g3], volume: volume.abs() })
    }

    pub fn point_at(&self, bary: &[f64; 4]) -> Point3<f64> {
        let mut p = Vector3::zeros();
        for (l, b) in bary.iter().enumerate() {
            p += self.points[l].coords * *b;
        }
        Point3::from(p)
    }

    /// Local Whitney functions (local orientation) at a barycentric point.
    pub fn basis(&self, bary: &[f64; 4]) -> [Vector3<f64>; 6] {
        let mut out = [Vector3::zeros(); 6];
        for (l, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
            out[l] = self.grad[b] * bary[a] - self.grad[a] * bary[b];
        }
        out
    }

    pub fn curls(&self) -> [Vector3<f64>; 6] {
        let mut out = [Vector3::zeros(); 6];
        for (l, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
            out[l] = self.grad[a].cross(&self.grad[b]) * 2.0;
        }
        out
    }
}

pub fn mesh_geometry(mesh: &TetMesh) -> Result<Vec<TetGeometry>> {
    (0..mesh.num_tets())
        .map(|t| {
            TetGeometry::new(mesh.tet_points(t)).map_err(|e| match e {
                Error::DegenerateElement { volume, .. } => Error::DegenerateElement { tet: t, volume },
                other => other,
            })
        })
        .collect()
}

/// Piecewise-constant conductivity σ and reluctivity ν.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub sigma: Vec<f64>,
    pub nu: Vec<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub nu_min: f64,
    pub nu_max: f64,
}

impl Coefficients {
    pub fn uniform(mesh: &TetMesh, sigma: f64, nu: f64) -> Result<Self> {
        Self::from_fn(mesh, |_| (sigma, nu))
    }

    /// Evaluates `f(centroid) -> (σ, ν)` on every tet.
    pub fn from_fn(mesh: &TetMesh, f: impl Fn(&Point3<f64>) -> (f64, f64)) -> Result<Self> {
        let mut sigma = Vec::with_capacity(mesh.num_tets());
        let mut nu = Vec::with_capacity(mesh.num_tets());
        for t in 0..mesh.num_tets() {
            let p = mesh.tet_points(t);
            let c = Point3::from((p[0].coords + p[1].coords + p[2].coords + p[3].coords) / 4.0);
            let (s, n) = f(&c);
            if !(s > 0.0 && n > 0.0 && s.is_finite() && n.is_finite()) {
                return Err(Error::InvalidArgument(format!("coefficients must be positive, got σ={s}, ν={n}")));
            }
            sigma.push(s);
            nu.push(n);
        }
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        Ok(Coefficients {
            sigma_min: min(&sigma),
            sigma_max: max(&sigma),
            nu_min: min(&nu),
            nu_max: max(&nu),
            sigma,
            nu,
        })
    }

    pub fn is_uniform(&self) -> bool {
        self.sigma_min == self.sigma_max && self.nu_min == self.nu_max
    }
}

/// Map between global edges and retained degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub num_edges: usize,
    pub free: Vec<usize>,
    pub edge_to_dof: Vec<Option<usize>>,
}

impl DofMap {
    /// Free DOFs are the interior edges (tangential trace vanishes on ∂Ω).
    pub fn interior(mesh: &TetMesh) -> Self {
        Self::from_predicate(mesh.num_edges(), |e| !mesh.boundary_edges.contains(&e))
    }

    /// All edges are free.
    pub fn unconstrained(mesh: &TetMesh) -> Self {
        Self::from_predicate(mesh.num_edges(), |_| true)
    }

    fn from_predicate(num_edges: usize, keep: impl Fn(usize) -> bool) -> Self {
        let mut free = Vec::new();
        let mut edge_to_dof = vec![None; num_edges];
        for (e, slot) in edge_to_dof.iter_mut().enumerate() {
            if keep(e) {
                *slot = Some(free.len());
                free.push(e);
            }
        }
        DofMap { num_edges, free, edge_to_dof }
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    /// Scatters DOF values to a full edge vector (zeros on constrained edges).
    pub fn to_edges(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_edges];
        for (d, &e) in self.free.iter().enumerate() {
            out[e] = v[d];
        }
        out
    }

    pub fn from_edges(&self, v: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&e| v[e]).collect()
    }

    /// Local coefficients of tet `t` in local edge orientation.
    pub fn local_coeffs(&self, mesh: &TetMesh, t: usize, v: &[f64]) -> [f64; 6] {
        let mut out = [0.0; 6];
        for (l, te) in mesh.tet_edges[t].iter().enumerate() {
            if let Some(d) = self.edge_to_dof[te.edge] {
                out[l] = f64::from(te.sign) * v[d];
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ElementMatrices {
    pub mass: Mat6,
    pub weighted_mass: Mat6,
    pub stiffness: Mat6,
}

/// Local mass, σ-weighted mass and ν-weighted curl-curl matrices (local edge orientation).
pub fn element_matrices(geom: &TetGeometry, sigma: f64, nu: f64) -> ElementMatrices {
    let mut mass = [[0.0; 6]; 6];
    for (bary, w) in tet_degree2().iter() {
        let phi = geom.basis(bary);
        for i in 0..6 {
            for j in i..6 {
                mass[i][j] += w * geom.volume * phi[i].dot(&phi[j]);
            }
        }
    }
    let curls = geom.curls();
    let mut stiffness = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in i..6 {
            stiffness[i][j] = nu * geom.volume * curls[i].dot(&curls[j]);
        }
    }
    for i in 0..6 {
        for j in 0..i {
            mass[i][j] = mass[j][i];
            stiffness[i][j] = stiffness[j][i];
        }
    }
    let mut weighted_mass = mass;
    for row in weighted_mass.iter_mut() {
        for v in row.iter_mut() {
            *v *= sigma;
        }
    }
    ElementMatrices { mass, weighted_mass, stiffness }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Mass,
    WeightedMass,
    Stiffness,
    /// Curl-curl without the ν weight.
    CurlCurl,
}

/// Global matrix of the requested kind on the free DOFs of `dofmap`.
pub fn assemble(
    mesh: &TetMesh,
    geometry: &[TetGeometry],
    coeffs: &Coefficients,
    kind: MatrixKind,
    dofmap: &DofMap,
) -> SparseSym {
    let n = dofmap.len();
    let mut b = TripletBuilder::new(n, n);
    for t in 0..mesh.num_tets() {
        let (sigma, nu) = match kind {
            MatrixKind::CurlCurl => (coeffs.sigma[t], 1.0),
            _ => (coeffs.sigma[t], coeffs.nu[t]),
        };
        let em = element_matrices(&geometry[t], sigma, nu);
        let local = match kind {
            MatrixKind::Mass => &em.mass,
            MatrixKind::WeightedMass => &em.weighted_mass,
            MatrixKind::Stiffness | MatrixKind::CurlCurl => &em.stiffness,
        };
        let te = &mesh.tet_edges[t];
        for i in 0..6 {
            let Some(di) = dofmap.edge_to_dof[te[i].edge] else { continue };
            for j in 0..6 {
                let Some(dj) = dofmap.edge_to_dof[te[j].edge] else { continue };
                let s = f64::from(te[i].sign * te[j].sign);
                b.push(di, dj, s * local[i][j]);
            }
        }
    }
    b.build(true)
}

/// Load vector `(f, φ_e)` on the free DOFs, degree-5 quadrature.
pub fn assemble_load(
    mesh: &TetMesh,
    geometry: &[TetGeometry],
    dofmap: &DofMap,
    f: &dyn Fn(&Point3<f64>) -> Vector3<f64>,
) -> Vec<f64> {
    let mut out = vec![0.0; dofmap.len()];
    for t in 0..mesh.num_tets() {
        let g = &geometry[t];
        let mut local = [0.0; 6];
        for (bary, w) in tet_degree5().iter() {
            let fx = f(&g.point_at(bary));
            let phi = g.basis(bary);
            for l in 0..6 {
                local[l] += w * g.volume * fx.dot(&phi[l]);
            }
        }
        for (l, te) in mesh.tet_edges[t].iter().enumerate() {
            if let Some(d) = dofmap.edge_to_dof[te.edge] {
                out[d] += f64::from(te.sign) * local[l];
            }
        }
    }
    out
}

/// Value of a discrete field at a barycentric point given local coefficients.
pub fn eval_local(geom: &TetGeometry, local: &[f64; 6], bary: &[f64; 4]) -> Vector3<f64> {
    let phi = geom.basis(bary);
    let mut v = Vector3::zeros();
    for l in 0..6 {
        v += phi[l] * local[l];
    }
    v
}

pub fn curl_local(geom: &TetGeometry, local: &[f64; 6]) -> Vector3<f64> {
    let c = geom.curls();
    let mut v = Vector3::zeros();
    for l in 0..6 {
        v += c[l] * local[l];
    }
    v
}

/// Integrates `w_t |f(t, geom, bary, x)|²` over the mesh with the degree-5 rule,
/// where `w_t` is the per-tet weight (pass `None` for unit weight).
pub fn integrate_sq(
    mesh: &TetMesh,
    geometry: &[TetGeometry],
    weight: Option<&[f64]>,
    f: impl Fn(usize, &TetGeometry, &[f64; 4], &Point3<f64>) -> Vector3<f64>,
) -> f64 {
    let mut total = 0.0;
    for t in 0..mesh.num_tets() {
        let g = &geometry[t];
        let wt = weight.map_or(1.0, |w| w[t]);
        let mut local = 0.0;
        for (bary, w) in tet_degree5().iter() {
            local += w * f(t, g, bary, &g.point_at(bary)).norm_squared();
        }
        total += wt * g.volume * local;
    }
    total
}

/// `(∫ w|v|², ∫ w|curl v|²)` of a discrete field using assembled matrices
/// (mass, curl-curl) built with the desired weight.
pub fn field_norms_discrete(v: &[f64], mass: &SparseSym, curl_curl: &SparseSym) -> (f64, f64) {
    (mass.quad_form(v, v), curl_curl.quad_form(v, v))
}

/// An analytic vector field together with its curl.
pub struct AnalyticField<'a> {
    pub value: &'a (dyn Fn(&Point3<f64>) -> Vector3<f64> + Sync),
    pub curl: &'a (dyn Fn(&Point3<f64>) -> Vector3<f64> + Sync),
}

/// `(∫ w|a − v_h|², ∫ w|curl a − curl v_h|²)` for an analytic field `a` (or
/// zero) minus a discrete field `v_h` (or zero), by degree-5 quadrature.
pub fn field_norms_mixed(
    mesh: &TetMesh,
    geometry: &[TetGeometry],
    dofmap: &DofMap,
    analytic: Option<&AnalyticField<'_>>,
    discrete: Option<&[f64]>,
    weight: Option<&[f64]>,
) -> (f64, f64) {
    let l2 = integrate_sq(mesh, geometry, weight, |t, g, bary, x| {
        let a = analytic.map_or(Vector3::zeros(), |f| (f.value)(x));
        let d = discrete.map_or(Vector3::zeros(), |v| eval_local(g, &dofmap.local_coeffs(mesh, t, v), bary));
        a - d
    });
    let curl = integrate_sq(mesh, geometry, weight, |t, g, _bary, x| {
        let a = analytic.map_or(Vector3::zeros(), |f| (f.curl)(x));
        let d = discrete.map_or(Vector3::zeros(), |v| curl_local(g, &dofmap.local_coeffs(mesh, t, v)));
        a - d
    });
    (l2, curl)
}

/// Edge interpolant `∫_e f · t ds` on the free DOFs (t = b − a, unnormalized).
pub fn interpolate(mesh: &TetMesh, dofmap: &DofMap, f: &dyn Fn(&Point3<f64>) -> Vector3<f64>) -> Vec<f64> {
    let (x, w) = gauss_legendre(6);
    dofmap
        .free
        .iter()
        .map(|&e| {
            let [a, b] = mesh.edges[e];
            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
            let t = pb - pa;
            x.iter()
                .zip(&w)
                .map(|(xi, wi)| {
                    let s = 0.5 * (xi + 1.0);
                    0.5 * wi * f(&(pa + t * s)).dot(&t)
                })
                .sum()
        })
        .collect()
}
