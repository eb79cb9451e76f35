//! Structured tetrahedral meshes of axis-aligned boxes.
//!
//! Each subcube is split into six tetrahedra sharing its main diagonal
//! (Kuhn subdivision), which yields a conforming mesh without any geometric
//! tolerance checks. Edges are stored with the lower global vertex index
//! first and every tet records the orientation of its six local edges
//! relative to that global convention.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use nalgebra::{Matrix3, Point3};

use crate::error::{Error, Result};
use crate::sparse::{SparseSym, TripletBuilder};

/// Local edge numbering of a tetrahedron as pairs of local vertex indices.
pub const LOCAL_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDomain {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl BoxDomain {
    pub fn unit() -> Self {
        BoxDomain { lo: [0.0; 3], hi: [1.0; 3] }
    }

    pub fn with_lengths(lengths: [f64; 3]) -> Self {
        BoxDomain { lo: [0.0; 3], hi: lengths }
    }

    pub fn lengths(&self) -> [f64; 3] {
        [self.hi[0] - self.lo[0], self.hi[1] - self.lo[1], self.hi[2] - self.lo[2]]
    }

    pub fn volume(&self) -> f64 {
        self.lengths().iter().product()
    }
}

/// One oriented local edge of a tet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TetEdge {
    pub edge: usize,
    /// `+1` if the local edge runs from the lower to the higher global vertex.
    pub sign: i8,
}

#[derive(Debug, Clone)]
pub struct TetMesh {
    pub vertices: Vec<Point3<f64>>,
    pub tets: Vec<[usize; 4]>,
    pub edges: Vec<[usize; 2]>,
    pub tet_edges: Vec<[TetEdge; 6]>,
    pub boundary_edges: BTreeSet<usize>,
    pub boundary_nodes: BTreeSet<usize>,
    pub domain: BoxDomain,
}

/// Builds the Kuhn-subdivided mesh of `domain` with `n` subdivisions per axis.
pub fn build_box_mesh(n: usize, domain: BoxDomain) -> Result<TetMesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("mesh subdivisions must be at least 1".into()));
    }
    let len = domain.lengths();
    if len.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
        return Err(Error::InvalidArgument(format!("degenerate box extents {:?}", len)));
    }

    let np = n + 1;
    let vid = |i: usize, j: usize, k: usize| i + np * (j + np * k);
    let mut vertices = Vec::with_capacity(np * np * np);
    for k in 0..np {
        for j in 0..np {
            for i in 0..np {
                let t = |idx: usize, ax: usize| domain.lo[ax] + len[ax] * idx as f64 / n as f64;
                vertices.push(Point3::new(t(i, 0), t(j, 1), t(k, 2)));
            }
        }
    }

    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut tets = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for perm in PERMS {
                    let mut c = [i, j, k];
                    let mut tet = [vid(c[0], c[1], c[2]), 0, 0, 0];
                    for (step, &axis) in perm.iter().enumerate() {
                        c[axis] += 1;
                        tet[step + 1] = vid(c[0], c[1], c[2]);
                    }
                    if signed_volume(&vertices, &tet) < 0.0 {
                        tet.swap(2, 3);
                    }
                    tets.push(tet);
                }
            }
        }
    }

    from_parts(vertices, tets, domain)
}

/// Builds edge, orientation and boundary data for an arbitrary tet list.
pub fn from_parts(vertices: Vec<Point3<f64>>, tets: Vec<[usize; 4]>, domain: BoxDomain) -> Result<TetMesh> {
    let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
    let mut edges: Vec<[usize; 2]> = Vec::new();
    let mut tet_edges = Vec::with_capacity(tets.len());

    // Enumerate edges in sorted order so the numbering does not depend on tet order.
    let mut all: BTreeSet<[usize; 2]> = BTreeSet::new();
    for (t, tet) in tets.iter().enumerate() {
        let vol = signed_volume(&vertices, tet);
        if vol <= 1e-14 {
            return Err(Error::DegenerateElement { tet: t, volume: vol });
        }
        for &(a, b) in &LOCAL_EDGES {
            let (ga, gb) = (tet[a], tet[b]);
            all.insert([ga.min(gb), ga.max(gb)]);
        }
    }
    for e in all {
        edge_index.insert(e, edges.len());
        edges.push(e);
    }
    for tet in &tets {
        let mut local = [TetEdge { edge: 0, sign: 1 }; 6];
        for (l, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
            let (ga, gb) = (tet[a], tet[b]);
            let key = [ga.min(gb), ga.max(gb)];
            local[l] = TetEdge { edge: edge_index[&key], sign: if ga < gb { 1 } else { -1 } };
        }
        tet_edges.push(local);
    }

    let mut face_count: BTreeMap<[usize; 3], usize> = BTreeMap::new();
    for tet in &tets {
        for skip in 0..4 {
            let mut f = [0usize; 3];
            let mut m = 0;
            for (l, &v) in tet.iter().enumerate() {
                if l != skip {
                    f[m] = v;
                    m += 1;
                }
            }
            f.sort_unstable();
            *face_count.entry(f).or_insert(0) += 1;
        }
    }
    let mut boundary_edges = BTreeSet::new();
    let mut boundary_nodes = BTreeSet::new();
    for (f, &count) in &face_count {
        if count == 1 {
            for &(a, b) in &[(0, 1), (0, 2), (1, 2)] {
                boundary_edges.insert(edge_index[&[f[a], f[b]]]);
            }
            boundary_nodes.extend(f.iter().copied());
        }
    }

    Ok(TetMesh { vertices, tets, edges, tet_edges, boundary_edges, boundary_nodes, domain })
}

fn signed_volume(vertices: &[Point3<f64>], tet: &[usize; 4]) -> f64 {
    let p0 = vertices[tet[0]];
    let m = Matrix3::from_columns(&[
        vertices[tet[1]] - p0,
        vertices[tet[2]] - p0,
        vertices[tet[3]] - p0,
    ]);
    m.determinant() / 6.0
}

impl TetMesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        signed_volume(&self.vertices, &self.tets[t])
    }

    pub fn tet_points(&self, t: usize) -> [Point3<f64>; 4] {
        let tet = &self.tets[t];
        [self.vertices[tet[0]], self.vertices[tet[1]], self.vertices[tet[2]], self.vertices[tet[3]]]
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|v| !self.boundary_nodes.contains(v)).collect()
    }

    /// Plain-text dump with `vertices`, `tets` and `edges` sections.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "vertices {}", self.vertices.len());
        for (i, p) in self.vertices.iter().enumerate() {
            let _ = writeln!(s, "{} {:.17e} {:.17e} {:.17e}", i, p.x, p.y, p.z);
        }
        let _ = writeln!(s, "tets {}", self.tets.len());
        for (i, t) in self.tets.iter().enumerate() {
            let _ = writeln!(s, "{} {} {} {} {}", i, t[0], t[1], t[2], t[3]);
        }
        let _ = writeln!(s, "edges {}", self.edges.len());
        for (i, e) in self.edges.iter().enumerate() {
            let b = u8::from(self.boundary_edges.contains(&i));
            let _ = writeln!(s, "{} {} {} {}", i, e[0], e[1], b);
        }
        s
    }
}

/// Node-to-edge incidence `G` with `G[e, b] = 1`, `G[e, a] = -1` for `e = (a, b)`.
///
/// Applying `G` to nodal values gives the edge degrees of freedom of the
/// gradient of the piecewise-linear interpolant.
#[derive(Debug, Clone)]
pub struct GradientIncidence {
    pub matrix: SparseSym,
    /// Global node index of every column.
    pub nodes: Vec<usize>,
}

impl GradientIncidence {
    pub fn apply(&self, psi: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(psi)
    }

    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        self.matrix.mul_transpose_vec(v)
    }
}

/// Full incidence over all edges and all nodes.
pub fn gradient_incidence(mesh: &TetMesh) -> GradientIncidence {
    let nodes: Vec<usize> = (0..mesh.num_vertices()).collect();
    incidence_on(mesh, &nodes, None)
}

/// Incidence restricted to interior nodes (ψ vanishing on the boundary) and,
/// optionally, to a subset of edges given by `edge_rows[e] = Some(row)`.
pub fn gradient_incidence_restricted(mesh: &TetMesh, edge_rows: &[Option<usize>], nrows: usize) -> GradientIncidence {
    let nodes = mesh.interior_nodes();
    incidence_on(mesh, &nodes, Some((edge_rows, nrows)))
}

fn incidence_on(mesh: &TetMesh, nodes: &[usize], rows: Option<(&[Option<usize>], usize)>) -> GradientIncidence {
    let mut col_of = vec![None; mesh.num_vertices()];
    for (c, &v) in nodes.iter().enumerate() {
        col_of[v] = Some(c);
    }
    let nrows = rows.map_or(mesh.num_edges(), |r| r.1);
    let mut b = TripletBuilder::new(nrows, nodes.len());
    for (e, &[a, bnode]) in mesh.edges.iter().enumerate() {
        let row = match rows {
            Some((map, _)) => match map[e] {
                Some(r) => r,
                None => continue,
            },
            None => e,
        };
        if let Some(c) = col_of[bnode] {
            b.push(row, c, 1.0);
        }
        if let Some(c) = col_of[a] {
            b.push(row, c, -1.0);
        }
    }
    GradientIncidence { matrix: b.build(false), nodes: nodes.to_vec() }
}
