//! Per-mode block systems of the forward problem and the reduced optimality
//! system, solved by block-preconditioned MINRES.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edge_fem::{assemble, mesh_geometry, Coefficients, DofMap, MatrixKind, TetGeometry};
use crate::error::{Error, Result};
use crate::harmonics::{FourierField, PeriodSpec};
use crate::mesh::{gradient_incidence_restricted, GradientIncidence, TetMesh};
use crate::minres::{minres, MinresConfig, SolveStats};
use crate::sparse::{norm2, SparseSym, SpdSolver};

/// Mesh, coefficients and the matrices on the interior edge space.
#[derive(Debug)]
pub struct Discretization {
    pub mesh: TetMesh,
    pub geometry: Vec<TetGeometry>,
    pub coeffs: Coefficients,
    pub dofs: DofMap,
    pub mass: SparseSym,
    pub weighted_mass: SparseSym,
    /// ν-weighted curl-curl.
    pub stiffness: SparseSym,
    /// Curl-curl without ν, for norms.
    pub curl_curl: SparseSym,
    /// Gradients of interior nodal functions expressed in the interior edge space.
    pub gradient: GradientIncidence,
    gauge_sigma: SpdSolver,
    gauge_plain: SpdSolver,
}

impl Discretization {
    pub fn new(mesh: TetMesh, coeffs: Coefficients) -> Result<Self> {
        if coeffs.sigma.len() != mesh.num_tets() {
            return Err(Error::DimensionMismatch { expected: mesh.num_tets(), found: coeffs.sigma.len() });
        }
        let geometry = mesh_geometry(&mesh)?;
        let dofs = DofMap::interior(&mesh);
        if dofs.is_empty() {
            return Err(Error::InvalidArgument("mesh has no interior edges".into()));
        }
        let build = |k| assemble(&mesh, &geometry, &coeffs, k, &dofs);
        let mass = build(MatrixKind::Mass);
        let weighted_mass = build(MatrixKind::WeightedMass);
        let stiffness = build(MatrixKind::Stiffness);
        let curl_curl = build(MatrixKind::CurlCurl);
        let gradient = gradient_incidence_restricted(&mesh, &dofs.edge_to_dof, dofs.len());
        let g = &gradient.matrix;
        // n = 1 has no interior node; an empty gradient space needs no gauge
        let gauge_sigma = SpdSolver::factor(&weighted_mass.galerkin(g))?;
        let gauge_plain = SpdSolver::factor(&SparseSym::identity(dofs.len()).galerkin(g))?;
        Ok(Discretization {
            mesh,
            geometry,
            coeffs,
            dofs,
            mass,
            weighted_mass,
            stiffness,
            curl_curl,
            gradient,
            gauge_sigma,
            gauge_plain,
        })
    }

    pub fn dim(&self) -> usize {
        self.dofs.len()
    }

    pub fn block(&self, b: Block) -> &SparseSym {
        match b {
            Block::Mass => &self.mass,
            Block::WeightedMass => &self.weighted_mass,
            Block::Stiffness => &self.stiffness,
        }
    }

    /// Discrete-gradient component `(GᵀMσG)⁻¹GᵀMσ v` (nodal coefficients).
    pub fn gradient_component(&self, v: &[f64]) -> Vec<f64> {
        if self.gradient.nodes.is_empty() {
            return Vec::new();
        }
        self.gauge_sigma.solve(&self.gradient.apply_transpose(&self.weighted_mass.mul_vec(v)))
    }

    /// Mσ-orthogonal projection onto the complement of the discrete gradients.
    pub fn gauge(&self, v: &mut [f64]) {
        if self.gradient.nodes.is_empty() {
            return;
        }
        let psi = self.gradient_component(v);
        for (vi, gi) in v.iter_mut().zip(self.gradient.apply(&psi)) {
            *vi -= gi;
        }
    }

    /// Euclidean projection of a load vector onto `ker Gᵀ` (the range of K)
    /// and the relative size of the removed part.
    pub fn project_load(&self, b: &[f64]) -> (Vec<f64>, f64) {
        if self.gradient.nodes.is_empty() {
            return (b.to_vec(), 0.0);
        }
        let psi = self.gauge_plain.solve(&self.gradient.apply_transpose(b));
        let removed = self.gradient.apply(&psi);
        let nb = norm2(b);
        let defect = if nb > 0.0 { norm2(&removed) / nb } else { 0.0 };
        (b.iter().zip(&removed).map(|(x, r)| x - r).collect(), defect)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Forward,
    Forward0,
    Ocp,
    Ocp0,
}

impl SystemKind {
    pub fn blocks(self) -> usize {
        match self {
            SystemKind::Forward0 => 1,
            SystemKind::Forward | SystemKind::Ocp0 => 2,
            SystemKind::Ocp => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    Mass,
    WeightedMass,
    Stiffness,
}

/// `scale · matrix` placed at block position `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockEntry {
    pub row: usize,
    pub col: usize,
    pub scale: f64,
    pub block: Block,
}

/// Block-diagonal preconditioner `diag(scales[i] · (K + shift·Mσ))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreconditionerRecipe {
    pub shift: f64,
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    pub alpha: f64,
}

impl ControlParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("cost parameter must be positive, got {alpha}")));
        }
        Ok(ControlParams { alpha })
    }
}

#[derive(Debug, Clone)]
pub struct ModeSystem {
    pub k: usize,
    pub kind: SystemKind,
    pub block_dim: usize,
    pub entries: Vec<BlockEntry>,
    pub rhs: Vec<f64>,
    pub precond: PreconditionerRecipe,
}

fn entry(row: usize, col: usize, scale: f64, block: Block) -> BlockEntry {
    BlockEntry { row, col, scale, block }
}

fn check_load(d: &Discretization, v: &[f64]) -> Result<()> {
    if v.len() != d.dim() {
        return Err(Error::DimensionMismatch { expected: d.dim(), found: v.len() });
    }
    Ok(())
}

/// Forward mode `k ≥ 1` in symmetric form
/// `[[kωMσ, −K], [−K, −kωMσ]] (−yˢ, yᶜ) = (−uᶜ, uˢ)`,
/// equivalent to `[[K, kωMσ], [−kωMσ, K]] (yᶜ, yˢ) = (uᶜ, uˢ)`.
pub fn build_forward(k: usize, d: &Discretization, period: &PeriodSpec, uc: &[f64], us: &[f64]) -> Result<ModeSystem> {
    if k == 0 {
        return Err(Error::InvalidArgument("mode 0 uses build_forward0".into()));
    }
    check_load(d, uc)?;
    check_load(d, us)?;
    let kw = period.frequency(k);
    let mut rhs: Vec<f64> = uc.iter().map(|x| -x).collect();
    rhs.extend_from_slice(us);
    Ok(ModeSystem {
        k,
        kind: SystemKind::Forward,
        block_dim: d.dim(),
        entries: vec![
            entry(0, 0, kw, Block::WeightedMass),
            entry(0, 1, -1.0, Block::Stiffness),
            entry(1, 0, -1.0, Block::Stiffness),
            entry(1, 1, -kw, Block::WeightedMass),
        ],
        rhs,
        precond: PreconditionerRecipe { shift: kw, scales: vec![1.0, 1.0] },
    })
}

/// Forward mean mode `K y₀ = u₀` with the load projected onto the range of
/// `K`; fails when the removed gradient part exceeds `gauge_tol` relative.
pub fn build_forward0(d: &Discretization, u0: &[f64], gauge_tol: f64) -> Result<ModeSystem> {
    check_load(d, u0)?;
    let (rhs, defect) = d.project_load(u0);
    if defect > gauge_tol {
        return Err(Error::Gauging(defect));
    }
    Ok(ModeSystem {
        k: 0,
        kind: SystemKind::Forward0,
        block_dim: d.dim(),
        entries: vec![entry(0, 0, 1.0, Block::Stiffness)],
        rhs,
        precond: PreconditionerRecipe { shift: 1.0, scales: vec![1.0] },
    })
}

/// Optimality system mode `k ≥ 1`, unknowns `(yᶜ, yˢ, pᶜ, pˢ)`, right-hand
/// side `(y_dᶜ, y_dˢ, 0, 0)` given as load vectors.
pub fn build_ocp(
    k: usize,
    d: &Discretization,
    control: ControlParams,
    period: &PeriodSpec,
    ydc: &[f64],
    yds: &[f64],
) -> Result<ModeSystem> {
    if k == 0 {
        return Err(Error::InvalidArgument("mode 0 uses build_ocp0".into()));
    }
    check_load(d, ydc)?;
    check_load(d, yds)?;
    let kw = period.frequency(k);
    let ia = 1.0 / control.alpha;
    use Block::*;
    let entries = vec![
        entry(0, 0, 1.0, Mass),
        entry(0, 2, -1.0, Stiffness),
        entry(0, 3, kw, WeightedMass),
        entry(1, 1, 1.0, Mass),
        entry(1, 2, -kw, WeightedMass),
        entry(1, 3, -1.0, Stiffness),
        entry(2, 0, -1.0, Stiffness),
        entry(2, 1, -kw, WeightedMass),
        entry(2, 2, -ia, Mass),
        entry(3, 0, kw, WeightedMass),
        entry(3, 1, -1.0, Stiffness),
        entry(3, 3, -ia, Mass),
    ];
    let n = d.dim();
    let mut rhs = Vec::with_capacity(4 * n);
    rhs.extend_from_slice(ydc);
    rhs.extend_from_slice(yds);
    rhs.resize(4 * n, 0.0);
    Ok(ModeSystem {
        k,
        kind: SystemKind::Ocp,
        block_dim: n,
        entries,
        rhs,
        precond: PreconditionerRecipe { shift: kw, scales: vec![1.0, 1.0, ia, ia] },
    })
}

/// Optimality system mean mode `[[M, −K], [−K, −α⁻¹M]] (y₀, p₀) = (y_d₀, 0)`.
pub fn build_ocp0(d: &Discretization, control: ControlParams, yd0: &[f64]) -> Result<ModeSystem> {
    check_load(d, yd0)?;
    let ia = 1.0 / control.alpha;
    let n = d.dim();
    let mut rhs = yd0.to_vec();
    rhs.resize(2 * n, 0.0);
    Ok(ModeSystem {
        k: 0,
        kind: SystemKind::Ocp0,
        block_dim: n,
        entries: vec![
            entry(0, 0, 1.0, Block::Mass),
            entry(0, 1, -1.0, Block::Stiffness),
            entry(1, 0, -1.0, Block::Stiffness),
            entry(1, 1, -ia, Block::Mass),
        ],
        rhs,
        precond: PreconditionerRecipe { shift: 1.0, scales: vec![1.0, ia] },
    })
}

/// Solution of one mode: state `(c, s)` and, for the optimality system,
/// adjoint `(c, s)`. Sine parts of mode 0 are zero.
#[derive(Debug, Clone)]
pub struct ModeSolution {
    pub k: usize,
    pub kind: SystemKind,
    pub state: (Vec<f64>, Vec<f64>),
    pub adjoint: Option<(Vec<f64>, Vec<f64>)>,
    pub stats: SolveStats,
}

impl ModeSystem {
    pub fn size(&self) -> usize {
        self.kind.blocks() * self.block_dim
    }

    pub fn apply(&self, d: &Discretization, x: &[f64], out: &mut [f64]) {
        let n = self.block_dim;
        out.iter_mut().for_each(|v| *v = 0.0);
        for e in &self.entries {
            let xs = &x[e.col * n..(e.col + 1) * n];
            let ys = &mut out[e.row * n..(e.row + 1) * n];
            d.block(e.block).mul_add(e.scale, xs, ys);
        }
    }

    /// Assembled sparse block `(row, col)`.
    pub fn block_matrix(&self, d: &Discretization, row: usize, col: usize) -> SparseSym {
        let mut acc: Option<SparseSym> = None;
        for e in self.entries.iter().filter(|e| e.row == row && e.col == col) {
            let m = d.block(e.block);
            acc = Some(match acc {
                None => m.scaled(e.scale),
                Some(a) => a.linear_combination(1.0, m, e.scale),
            });
        }
        acc.unwrap_or_else(|| SparseSym::identity(self.block_dim).scaled(0.0))
    }

    pub fn to_dense(&self, d: &Discretization) -> DMatrix<f64> {
        let n = self.block_dim;
        let mut a = DMatrix::zeros(self.size(), self.size());
        for e in &self.entries {
            let m = d.block(e.block).to_dense();
            let mut view = a.view_mut((e.row * n, e.col * n), (n, n));
            view += m * e.scale;
        }
        a
    }

    pub fn preconditioner(&self, d: &Discretization) -> Result<SpdSolver> {
        SpdSolver::factor(&d.stiffness.linear_combination(1.0, &d.weighted_mass, self.precond.shift))
    }

    /// Raw MINRES solve returning the stacked unknown vector.
    pub fn solve_raw(&self, d: &Discretization, cfg: &MinresConfig) -> Result<(Vec<f64>, SolveStats)> {
        let p = self.preconditioner(d)?;
        let n = self.block_dim;
        let scales = &self.precond.scales;
        let pinv = |r: &[f64], out: &mut [f64]| {
            for (i, s) in scales.iter().enumerate() {
                let o = &mut out[i * n..(i + 1) * n];
                p.solve_into(&r[i * n..(i + 1) * n], o);
                o.iter_mut().for_each(|v| *v /= s);
            }
        };
        let (mut x, stats) = minres(|v, out| self.apply(d, v, out), pinv, &self.rhs, cfg);
        if self.kind == SystemKind::Forward0 {
            d.gauge(&mut x);
        }
        Ok((x, stats))
    }

    pub fn solve(&self, d: &Discretization, cfg: &MinresConfig) -> Result<ModeSolution> {
        let (x, stats) = self.solve_raw(d, cfg)?;
        let n = self.block_dim;
        let part = |i: usize| x[i * n..(i + 1) * n].to_vec();
        let zero = || vec![0.0; n];
        let (state, adjoint) = match self.kind {
            SystemKind::Forward => ((part(1), part(0).iter().map(|v| -v).collect()), None),
            SystemKind::Forward0 => ((part(0), zero()), None),
            SystemKind::Ocp => ((part(0), part(1)), Some((part(2), part(3)))),
            SystemKind::Ocp0 => ((part(0), zero()), Some((part(1), zero()))),
        };
        Ok(ModeSolution { k: self.k, kind: self.kind, state, adjoint, stats })
    }
}

/// Packages mode solutions `0..=N` into state (and adjoint) Fourier fields.
pub fn reconstruct(solutions: &[ModeSolution], truncation: usize) -> Result<(FourierField, Option<FourierField>)> {
    let find = |k: usize| solutions.iter().find(|s| s.k == k).ok_or(Error::MissingMode(k));
    let s0 = find(0)?;
    let dim = s0.state.0.len();
    let mut y = FourierField::zeros(dim, truncation);
    let with_adjoint = s0.adjoint.is_some();
    let mut p = with_adjoint.then(|| FourierField::zeros(dim, truncation));
    for k in 0..=truncation {
        let s = find(k)?;
        if s.adjoint.is_some() != with_adjoint {
            return Err(Error::MissingMode(k));
        }
        if k == 0 {
            y.mode0 = s.state.0.clone();
            if let (Some(pf), Some(a)) = (p.as_mut(), &s.adjoint) {
                pf.mode0 = a.0.clone();
            }
        } else {
            y.modes[k - 1] = s.state.clone();
            if let (Some(pf), Some(a)) = (p.as_mut(), &s.adjoint) {
                pf.modes[k - 1] = a.clone();
            }
        }
    }
    Ok((y, p))
}

/// Solves every forward mode `0..=N` (in parallel) from per-mode loads.
pub fn solve_forward_modes(
    d: &Discretization,
    loads: &FourierField,
    period: &PeriodSpec,
    cfg: &MinresConfig,
    gauge_tol: f64,
) -> Result<Vec<ModeSolution>> {
    (0..=loads.truncation())
        .into_par_iter()
        .map(|k| {
            let sys = if k == 0 {
                build_forward0(d, &loads.mode0, gauge_tol)?
            } else {
                let (c, s) = &loads.modes[k - 1];
                build_forward(k, d, period, c, s)?
            };
            sys.solve(d, cfg)
        })
        .collect()
}

/// Solves every optimality-system mode `0..=N` for one cost parameter.
pub fn solve_ocp_modes(
    d: &Discretization,
    control: ControlParams,
    loads: &FourierField,
    period: &PeriodSpec,
    cfg: &MinresConfig,
) -> Result<Vec<ModeSolution>> {
    (0..=loads.truncation())
        .into_par_iter()
        .map(|k| {
            let sys = if k == 0 {
                build_ocp0(d, control, &loads.mode0)?
            } else {
                let (c, s) = &loads.modes[k - 1];
                build_ocp(k, d, control, period, c, s)?
            };
            sys.solve(d, cfg)
        })
        .collect()
}

/// Dense direct solution of a mode system in the layout of
/// [`ModeSystem::solve_raw`]. The singular mean-mode forward system is
/// solved as the gauged saddle point `[[K, MσG], [GᵀMσ, 0]]`.
pub fn dense_reference(d: &Discretization, sys: &ModeSystem) -> Result<Vec<f64>> {
    let solve = |a: DMatrix<f64>, b: &[f64]| {
        a.lu()
            .solve(&DVector::from_column_slice(b))
            .map(|x| x.as_slice().to_vec())
            .ok_or_else(|| Error::Factorization("dense LU of a singular system".into()))
    };
    if sys.kind != SystemKind::Forward0 || d.gradient.nodes.is_empty() {
        return solve(sys.to_dense(d), &sys.rhs);
    }
    let nd = d.dim();
    let mg = d.weighted_mass.to_dense() * d.gradient.matrix.to_dense();
    let ng = mg.ncols();
    let mut a = DMatrix::zeros(nd + ng, nd + ng);
    a.view_mut((0, 0), (nd, nd)).copy_from(&d.stiffness.to_dense());
    a.view_mut((0, nd), (nd, ng)).copy_from(&mg);
    a.view_mut((nd, 0), (ng, nd)).copy_from(&mg.transpose());
    let mut rhs = sys.rhs.clone();
    rhs.resize(nd + ng, 0.0);
    let mut x = solve(a, &rhs)?;
    x.truncate(nd);
    Ok(x)
}

/// Smallest nonzero eigenvalue of `K x = λ M x` (unit weights) on the interior
/// edge space, skipping the discrete gradient kernel. Dense; small meshes only.
pub fn smallest_maxwell_eigenvalue(d: &Discretization) -> Result<f64> {
    let chol = d
        .mass
        .to_dense()
        .cholesky()
        .ok_or_else(|| Error::Factorization("dense Cholesky of the mass matrix".into()))?;
    let linv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Factorization("inverse of the Cholesky factor".into()))?;
    let a = &linv * d.curl_curl.to_dense() * linv.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let mut ev: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    // the kernel is exactly the span of the interior nodal gradients
    ev.get(d.gradient.nodes.len())
        .copied()
        .ok_or_else(|| Error::InvalidArgument("curl-curl has no nonzero eigenvalue".into()))
}

/// Wall time helper shared by the runners.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}
