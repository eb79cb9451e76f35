//! Functional a posteriori majorants for the forward problem and the
//! optimality system: residuals, Young-parameter forms, flux minimization
//! and efficiency indices.

use std::time::Instant;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edge_fem::{curl_local, eval_local, DofMap, TetGeometry};
use crate::error::{Error, Result};
use crate::harmonics::{FourierField, PeriodSpec};
use crate::quadrature::tet_degree5;
use crate::sparse::{SparseSym, SpdSolver, TripletBuilder};
use crate::systems::Discretization;

pub const YOUNG_MIN: f64 = 1e-8;
pub const YOUNG_MAX: f64 = 1e8;

pub fn clamp_young(b: f64) -> f64 {
    if b.is_nan() {
        1.0
    } else {
        b.clamp(YOUNG_MIN, YOUNG_MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Context {
    ForwardSeminorm,
    ForwardNorm,
    OcpNorm,
    OcpSeminorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityConstants {
    pub context: Context,
    pub lower: f64,
    pub upper: f64,
    pub friedrichs: f64,
}

/// Inf-sup (`lower`) and sup-sup (`upper`) constants of the space-time
/// bilinear forms. `sigma` and `nu` are `(min, max)` bounds.
pub fn stability_constants(
    sigma: (f64, f64),
    nu: (f64, f64),
    alpha: Option<f64>,
    friedrichs: f64,
    context: Context,
) -> Result<StabilityConstants> {
    let positive = |v: f64| v.is_finite() && v > 0.0;
    if ![sigma.0, sigma.1, nu.0, nu.1, friedrichs].into_iter().all(positive) || sigma.0 > sigma.1 || nu.0 > nu.1 {
        return Err(Error::InvalidArgument(format!(
            "coefficient bounds must be positive and ordered: σ {sigma:?}, ν {nu:?}, C_F {friedrichs}"
        )));
    }
    let (s_lo, s_hi, n_lo, n_hi) = (sigma.0, sigma.1, nu.0, nu.1);
    let cf2 = friedrichs * friedrichs;
    let need_alpha = || match alpha {
        Some(a) if positive(a) => Ok(a),
        _ => Err(Error::InvalidArgument(format!("optimality-system constants need α > 0, got {alpha:?}"))),
    };
    let (lower, upper) = match context {
        Context::ForwardSeminorm => (n_lo.min(s_lo) / 2f64.sqrt(), s_hi.max(n_hi)),
        Context::ForwardNorm => ((n_lo / (1.0 + cf2)).min(s_lo) / 2f64.sqrt(), s_hi.max(n_hi)),
        Context::OcpNorm => {
            let a = need_alpha()?;
            let lower = (1.0 + 2.0 * a.max(1.0 / a)).powf(-0.5)
                * (1.0 / a.sqrt()).min(n_lo).min(s_lo)
                * a.sqrt().min(1.0 / a.sqrt());
            (lower, 1f64.max(1.0 / a).max(n_hi).max(s_hi))
        }
        Context::OcpSeminorm => {
            let a = need_alpha()?;
            let lower = n_lo.min(s_lo) * a.min(1.0 / a) / 2f64.sqrt();
            (lower, (1.0 + cf2).max(1.0) * 1f64.max(1.0 / a).max(n_hi).max(s_hi))
        }
    };
    Ok(StabilityConstants { context, lower, upper, friedrichs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MajorantForm {
    /// Square of `(1/c̲)(C_F‖R₁‖ + ‖R₂‖)`.
    Linear,
    /// Young-parameter quadratic form.
    Quadratic,
    /// Square of `(1/c̲)(Σ‖Rᵢ‖²)^{1/2}`.
    Norm,
}

/// Space-time sums `‖R₁‖²_Q` (remainder not included) and `‖R₂‖²_Q`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ForwardSums {
    pub r1: f64,
    pub r2: f64,
}

/// Space-time sums of the four optimality-system residuals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OcpSums {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
}

/// `β* = √(B/A)` minimizing `(1+β)A + (1+β)B/β`, clamped.
pub fn beta_optimal(a: f64, b: f64) -> Result<f64> {
    if !(a >= 0.0 && b >= 0.0) || (a == 0.0 && b == 0.0) {
        return Err(Error::InvalidArgument(format!("β needs nonnegative, not both zero sums, got A={a}, B={b}")));
    }
    Ok(clamp_young((b / a).sqrt()))
}

/// Squared forward majorant.
pub fn majorant_forward(
    sums: ForwardSums,
    consts: &StabilityConstants,
    beta: f64,
    remainder: f64,
    form: MajorantForm,
) -> Result<f64> {
    let r1 = sums.r1 + remainder;
    let cf2 = consts.friedrichs.powi(2);
    let c2 = consts.lower.powi(2);
    Ok(match form {
        MajorantForm::Linear => (consts.friedrichs * r1.sqrt() + sums.r2.sqrt()).powi(2) / c2,
        MajorantForm::Quadratic => {
            if !(beta > 0.0) {
                return Err(Error::InvalidArgument(format!("Young parameter must be positive, got {beta}")));
            }
            (cf2 * (1.0 + beta) * r1 + (1.0 + beta) / beta * sums.r2) / c2
        }
        MajorantForm::Norm => (r1 + sums.r2) / c2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcpYoung {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
}

impl Default for OcpYoung {
    fn default() -> Self {
        OcpYoung { beta1: 1.0, beta2: 1.0, beta3: 1.0 }
    }
}

/// Weights `(a₁, a₂, a₃, a₄)` of `‖R₁‖², ‖R₂‖², ‖R₃‖², ‖R₄‖²` in the quadratic
/// optimality-system majorant (times `c̲²`).
pub fn ocp_weights(b: &OcpYoung, friedrichs: f64) -> [f64; 4] {
    let cf2 = friedrichs * friedrichs;
    let (b1, b2, b3) = (b.beta1, b.beta2, b.beta3);
    [
        cf2 * (1.0 + b1) * (1.0 + b2),
        (1.0 + b1) * (1.0 + b2) / b2,
        cf2 * (1.0 + b1) * (1.0 + b3) / b1,
        (1.0 + b1) * (1.0 + b3) / (b1 * b3),
    ]
}

/// Joint minimizer of the quadratic optimality-system majorant in
/// `(β₁, β₂, β₃)`: `β₂, β₃` decouple, then `β₁ = √(Y/X)`. `sums.r1` must
/// already contain the remainder.
pub fn beta_optimal_ocp(sums: &OcpSums, friedrichs: f64) -> Result<OcpYoung> {
    let cf2 = friedrichs * friedrichs;
    let all = [sums.r1, sums.r2, sums.r3, sums.r4];
    if all.iter().any(|v| !(*v >= 0.0)) || all.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidArgument(format!("β needs nonnegative, not all zero sums, got {all:?}")));
    }
    let ratio = |num: f64, den: f64| if den == 0.0 { YOUNG_MAX } else { clamp_young((num / den).sqrt()) };
    let beta2 = ratio(sums.r2, cf2 * sums.r1);
    let beta3 = ratio(sums.r4, cf2 * sums.r3);
    let x = cf2 * (1.0 + beta2) * sums.r1 + (1.0 + beta2) / beta2 * sums.r2;
    let y = cf2 * (1.0 + beta3) * sums.r3 + (1.0 + beta3) / beta3 * sums.r4;
    Ok(OcpYoung { beta1: ratio(y, x), beta2, beta3 })
}

/// Squared optimality-system majorant.
pub fn majorant_ocp(
    sums: OcpSums,
    consts: &StabilityConstants,
    young: &OcpYoung,
    remainder: f64,
    form: MajorantForm,
) -> Result<f64> {
    let r1 = sums.r1 + remainder;
    let c2 = consts.lower.powi(2);
    let cf = consts.friedrichs;
    Ok(match form {
        MajorantForm::Linear => (cf * (r1.sqrt() + sums.r3.sqrt()) + sums.r2.sqrt() + sums.r4.sqrt()).powi(2) / c2,
        MajorantForm::Quadratic => {
            if ![young.beta1, young.beta2, young.beta3].iter().all(|b| *b > 0.0) {
                return Err(Error::InvalidArgument(format!("Young parameters must be positive, got {young:?}")));
            }
            let w = ocp_weights(young, cf);
            (w[0] * r1 + w[1] * sums.r2 + w[2] * sums.r3 + w[3] * sums.r4) / c2
        }
        MajorantForm::Norm => (r1 + sums.r2 + sums.r3 + sums.r4) / c2,
    })
}

/// `I_eff = M² / E` with `E` the squared error (semi)norm.
pub fn efficiency_index(majorant_sq: f64, error_sq: f64) -> Result<f64> {
    if !(error_sq > 0.0) {
        return Err(Error::NonPositiveError(error_sq));
    }
    Ok(majorant_sq / error_sq)
}

/// Lowest-order edge space without boundary constraint, used for the fluxes.
#[derive(Debug)]
pub struct FluxSpace {
    pub dofs: DofMap,
    pub mass: SparseSym,
    pub curl_curl: SparseSym,
    /// `C[i, j] = ∫ curl ψᵢ · ψⱼ` with weight 1, σ and ν respectively.
    pub coupling: SparseSym,
    pub coupling_sigma: SparseSym,
    pub coupling_nu: SparseSym,
}

impl FluxSpace {
    pub fn new(d: &Discretization) -> Self {
        let mesh = &d.mesh;
        let dofs = DofMap::unconstrained(mesh);
        let n = dofs.len();
        let mut mass = TripletBuilder::new(n, n);
        let mut cc = TripletBuilder::new(n, n);
        let mut c1 = TripletBuilder::new(n, n);
        let mut cs = TripletBuilder::new(n, n);
        let mut cn = TripletBuilder::new(n, n);
        for t in 0..mesh.num_tets() {
            let g = &d.geometry[t];
            let em = crate::edge_fem::element_matrices(g, 1.0, 1.0);
            let curls = g.curls();
            let phi_c = g.basis(&[0.25; 4]);
            let te = &mesh.tet_edges[t];
            for a in 0..6 {
                let ia = te[a].edge;
                for b in 0..6 {
                    let ib = te[b].edge;
                    let s = f64::from(te[a].sign * te[b].sign);
                    mass.push(ia, ib, s * em.mass[a][b]);
                    cc.push(ia, ib, s * em.stiffness[a][b]);
                    // φ is affine, so the centroid value integrates exactly
                    let c = s * g.volume * curls[a].dot(&phi_c[b]);
                    c1.push(ia, ib, c);
                    cs.push(ia, ib, d.coeffs.sigma[t] * c);
                    cn.push(ia, ib, d.coeffs.nu[t] * c);
                }
            }
        }
        FluxSpace {
            dofs,
            mass: mass.build(true),
            curl_curl: cc.build(true),
            coupling: c1.build(false),
            coupling_sigma: cs.build(false),
            coupling_nu: cn.build(false),
        }
    }

    pub fn dim(&self) -> usize {
        self.dofs.len()
    }

    /// Minimizer of `a‖f − curl τ‖² + b‖τ − g‖²` given the right-hand side
    /// `a(f, curl ψ) + b(g, ψ)`.
    pub fn solve(&self, a: f64, b: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        let m = self.curl_curl.linear_combination(a, &self.mass, b);
        Ok(SpdSolver::factor(&m)?.solve(rhs))
    }
}

/// A separable data field `s(x)` sampled at the degree-5 quadrature points,
/// with `(s, curl ψᵢ)` on the flux space.
#[derive(Debug, Clone)]
pub struct SpatialData {
    pub samples: Vec<Vec<Vector3<f64>>>,
    pub curl_load: Vec<f64>,
    pub norm_sq: f64,
}

impl SpatialData {
    pub fn new(d: &Discretization, flux: &FluxSpace, f: &dyn Fn(&Point3<f64>) -> Vector3<f64>) -> Self {
        let rule = tet_degree5();
        let mut curl_load = vec![0.0; flux.dim()];
        let mut norm_sq = 0.0;
        let samples: Vec<Vec<Vector3<f64>>> = d
            .geometry
            .iter()
            .map(|g| rule.points.iter().map(|b| f(&g.point_at(b))).collect())
            .collect();
        for (t, g) in d.geometry.iter().enumerate() {
            let curls = g.curls();
            let mut integral = Vector3::zeros();
            for (s, w) in samples[t].iter().zip(&rule.weights) {
                integral += s * (w * g.volume);
                norm_sq += w * g.volume * s.norm_squared();
            }
            for (l, te) in d.mesh.tet_edges[t].iter().enumerate() {
                curl_load[te.edge] += f64::from(te.sign) * curls[l].dot(&integral);
            }
        }
        SpatialData { samples, curl_load, norm_sq }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Interior,
    Flux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    One,
    Sigma,
    Nu,
}

/// One ingredient of a residual field.
#[derive(Debug, Clone, Copy)]
pub enum Term<'a> {
    Data { scale: f64, data: &'a SpatialData },
    Value { scale: f64, weight: Weight, space: Space, coeffs: &'a [f64] },
    Curl { scale: f64, weight: Weight, space: Space, coeffs: &'a [f64] },
}

/// Evaluates `‖Σ terms‖²_Ω` by the degree-5 rule.
pub fn residual_sq(d: &Discretization, flux: &FluxSpace, terms: &[Term<'_>]) -> f64 {
    let rule = tet_degree5();
    let mesh = &d.mesh;
    let dofmap = |s: Space| match s {
        Space::Interior => &d.dofs,
        Space::Flux => &flux.dofs,
    };
    let weight = |w: Weight, t: usize| match w {
        Weight::One => 1.0,
        Weight::Sigma => d.coeffs.sigma[t],
        Weight::Nu => d.coeffs.nu[t],
    };
    (0..mesh.num_tets())
        .into_par_iter()
        .map(|t| {
            let g: &TetGeometry = &d.geometry[t];
            let mut constant = Vector3::zeros();
            let mut linear: Vec<(f64, [f64; 6])> = Vec::new();
            for term in terms {
                match *term {
                    Term::Curl { scale, weight: w, space, coeffs } => {
                        let loc = dofmap(space).local_coeffs(mesh, t, coeffs);
                        constant += curl_local(g, &loc) * (scale * weight(w, t));
                    }
                    Term::Value { scale, weight: w, space, coeffs } => {
                        linear.push((scale * weight(w, t), dofmap(space).local_coeffs(mesh, t, coeffs)));
                    }
                    Term::Data { .. } => {}
                }
            }
            let mut acc = 0.0;
            for (q, (bary, w)) in rule.iter().enumerate() {
                let mut v = constant;
                for (s, loc) in &linear {
                    v += eval_local(g, loc, bary) * *s;
                }
                for term in terms {
                    if let Term::Data { scale, data } = *term {
                        v += data.samples[t][q] * scale;
                    }
                }
                acc += w * v.norm_squared();
            }
            acc * g.volume
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// One row of the minimization trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub ctime: f64,
    pub betas: Vec<f64>,
    pub majorant_sq: f64,
    pub i_eff: Option<f64>,
}

/// Per-mode squared residual norms over Ω (cosine and sine parts summed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResiduals {
    pub k: usize,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorantReport {
    pub modes: Vec<usize>,
    pub residuals: Vec<ModeResiduals>,
    pub betas: Vec<f64>,
    pub remainder: f64,
    pub constants: StabilityConstants,
    /// Quadratic majorant at the final parameters.
    pub majorant_sq: f64,
    pub majorant_linear_sq: f64,
    pub majorant_norm_sq: f64,
    pub error_seminorm_sq: Option<f64>,
    pub error_norm_sq: Option<f64>,
    pub efficiency_index: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub ctime: f64,
    pub trace: Vec<TraceEntry>,
    pub interpretation: String,
}

pub const INTERPRETATION: &str =
    "efficiency index = squared majorant / squared error seminorm; remainder enters as a squared Parseval tail";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeConfig {
    pub tol: f64,
    pub maxit: usize,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        MinimizeConfig { tol: 1e-4, maxit: 50 }
    }
}

/// Exact error quantities used for efficiency indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub seminorm_sq: f64,
    pub norm_sq: f64,
}

/// Modes `ks` of a Fourier field as `(k, cos, sin)` slices; mode 0 has no sine part.
fn mode_parts(f: &FourierField, k: usize) -> (&[f64], Option<&[f64]>) {
    if k == 0 {
        (&f.mode0, None)
    } else {
        let (c, s) = &f.modes[k - 1];
        (c, Some(s))
    }
}

fn neg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

/// Cosine and sine components of `v^⊥` for mode `k ≥ 1`.
fn perp_parts(c: &[f64], s: &[f64]) -> [Vec<f64>; 2] {
    [neg(s), c.to_vec()]
}

/// Inputs of the forward majorant.
pub struct ForwardInputs<'a> {
    pub d: &'a Discretization,
    pub flux: &'a FluxSpace,
    pub period: PeriodSpec,
    /// Spatial shape of the data.
    pub data: &'a SpatialData,
    /// Data coefficients `(c_k, s_k)` for `k = 0..=N`.
    pub data_coeffs: &'a [(f64, f64)],
    pub eta: &'a FourierField,
    pub consts: StabilityConstants,
}

struct ForwardComponent {
    k: usize,
    a: f64,
    eta: Vec<f64>,
    eta_perp: Option<Vec<f64>>,
    /// `(f, curl ψ)` with `f = a s + kωσ η^⊥`.
    f: Vec<f64>,
    /// `(ν curl η, ψ)`.
    g: Vec<f64>,
}

impl ForwardInputs<'_> {
    /// Cosine (`comp = 0`) or sine part of mode `k`.
    fn component(&self, k: usize, comp: usize) -> ForwardComponent {
        let embed = |v: &[f64]| self.d.dofs.to_edges(v);
        let (c, s) = mode_parts(self.eta, k);
        let eta = if comp == 0 { c.to_vec() } else { s.expect("sine part").to_vec() };
        let a = if comp == 0 { self.data_coeffs[k].0 } else { self.data_coeffs[k].1 };
        let mut f: Vec<f64> = self.data.curl_load.iter().map(|x| a * x).collect();
        let eta_perp = (k > 0).then(|| perp_parts(c, s.expect("sine part"))[comp].clone());
        if let Some(p) = &eta_perp {
            self.flux.coupling_sigma.mul_add(self.period.frequency(k), &embed(p), &mut f);
        }
        let g = self.flux.coupling_nu.mul_transpose_vec(&embed(&eta));
        ForwardComponent { k, a, eta, eta_perp, f, g }
    }

    /// `(‖R₁‖², ‖R₂‖²)` with `R₁ = u + kωσ η^⊥ − curl τ`, `R₂ = τ − ν curl η`.
    fn residuals(&self, c: &ForwardComponent, tau: &[f64]) -> (f64, f64) {
        let mut r1 = vec![
            Term::Data { scale: c.a, data: self.data },
            Term::Curl { scale: -1.0, weight: Weight::One, space: Space::Flux, coeffs: tau },
        ];
        if let Some(p) = &c.eta_perp {
            r1.push(Term::Value { scale: self.period.frequency(c.k), weight: Weight::Sigma, space: Space::Interior, coeffs: p });
        }
        let r2 = [
            Term::Value { scale: 1.0, weight: Weight::One, space: Space::Flux, coeffs: tau },
            Term::Curl { scale: -1.0, weight: Weight::Nu, space: Space::Interior, coeffs: &c.eta },
        ];
        (residual_sq(self.d, self.flux, &r1), residual_sq(self.d, self.flux, &r2))
    }
}

/// Alternating minimization of the forward quadratic majorant over the
/// flux `τ` and `β`, restricted to the Fourier modes `ks`. `remainder` is
/// added to the `R₁` sum; `error` (if known) yields efficiency indices.
pub fn minimize_forward(
    inp: &ForwardInputs<'_>,
    ks: &[usize],
    remainder: f64,
    error: Option<ErrorNorms>,
    cfg: &MinimizeConfig,
) -> Result<(MajorantReport, FourierField)> {
    let start = Instant::now();
    let cf2 = inp.consts.friedrichs.powi(2);
    let mut beta = 1.0;
    let mut trace = Vec::new();
    let mut prev: Option<f64> = None;
    let mut converged = false;
    let comps: Vec<(usize, usize)> =
        ks.iter().flat_map(|&k| if k == 0 { vec![(k, 0)] } else { vec![(k, 0), (k, 1)] }).collect();
    let prepared: Vec<ForwardComponent> = comps.iter().map(|&(k, c)| inp.component(k, c)).collect();
    let mut tau_all: Vec<Vec<f64>> = vec![vec![0.0; inp.flux.dim()]; comps.len()];
    let mut per_comp = vec![(0.0, 0.0); comps.len()];
    let mut sums = ForwardSums::default();

    for it in 1..=cfg.maxit.max(1) {
        let results: Vec<Result<(Vec<f64>, (f64, f64))>> = prepared
            .par_iter()
            .map(|c| {
                // τ minimizes C_F²‖f − curl τ‖² + β⁻¹‖τ − g‖²
                let rhs: Vec<f64> = c.f.iter().zip(&c.g).map(|(f, g)| cf2 * f + g / beta).collect();
                let tau = inp.flux.solve(cf2, 1.0 / beta, &rhs)?;
                let r = inp.residuals(c, &tau);
                Ok((tau, r))
            })
            .collect();
        sums = ForwardSums::default();
        for (i, r) in results.into_iter().enumerate() {
            let (tau, res) = r?;
            let w = inp.period.mode_weight(comps[i].0);
            sums.r1 += w * res.0;
            sums.r2 += w * res.1;
            per_comp[i] = res;
            tau_all[i] = tau;
        }
        let m2 = majorant_forward(sums, &inp.consts, beta, remainder, MajorantForm::Quadratic)?;
        trace.push(TraceEntry {
            iteration: it,
            ctime: start.elapsed().as_secs_f64(),
            betas: vec![beta],
            majorant_sq: m2,
            i_eff: error.map(|e| m2 / e.seminorm_sq),
        });
        if let Some(p) = prev {
            if (p - m2).abs() < cfg.tol {
                converged = true;
                break;
            }
        }
        prev = Some(m2);
        let a = cf2 * (sums.r1 + remainder);
        if a == 0.0 && sums.r2 == 0.0 {
            converged = true;
            break;
        }
        beta = beta_optimal(a, sums.r2)?;
    }

    let last = trace.last().expect("at least one iteration").clone();
    let residuals = ks
        .iter()
        .map(|&k| {
            let (mut r1, mut r2) = (0.0, 0.0);
            for (i, &(kk, _)) in comps.iter().enumerate() {
                if kk == k {
                    r1 += per_comp[i].0;
                    r2 += per_comp[i].1;
                }
            }
            ModeResiduals { k, residuals: vec![r1, r2] }
        })
        .collect();
    let norm_consts = stability_constants(
        (inp.d.coeffs.sigma_min, inp.d.coeffs.sigma_max),
        (inp.d.coeffs.nu_min, inp.d.coeffs.nu_max),
        None,
        inp.consts.friedrichs,
        Context::ForwardNorm,
    )?;
    let report = MajorantReport {
        modes: ks.to_vec(),
        residuals,
        betas: last.betas.clone(),
        remainder,
        constants: inp.consts,
        majorant_sq: last.majorant_sq,
        majorant_linear_sq: majorant_forward(sums, &inp.consts, 1.0, remainder, MajorantForm::Linear)?,
        majorant_norm_sq: majorant_forward(sums, &norm_consts, 1.0, remainder, MajorantForm::Norm)?,
        error_seminorm_sq: error.map(|e| e.seminorm_sq),
        error_norm_sq: error.map(|e| e.norm_sq),
        efficiency_index: error.map(|e| efficiency_index(last.majorant_sq, e.seminorm_sq)).transpose()?,
        converged,
        iterations: trace.len(),
        ctime: start.elapsed().as_secs_f64(),
        trace,
        interpretation: INTERPRETATION.into(),
    };
    Ok((report, assemble_flux(inp.flux.dim(), &comps, tau_all, inp.eta.truncation())))
}

fn assemble_flux(dim: usize, comps: &[(usize, usize)], parts: Vec<Vec<f64>>, n: usize) -> FourierField {
    let mut out = FourierField::zeros(dim, n);
    for (&(k, c), v) in comps.iter().zip(parts) {
        match (k, c) {
            (0, _) => out.mode0 = v,
            (k, 0) => out.modes[k - 1].0 = v,
            (k, _) => out.modes[k - 1].1 = v,
        }
    }
    out
}

/// Inputs of the optimality-system majorant.
pub struct OcpInputs<'a> {
    pub d: &'a Discretization,
    pub flux: &'a FluxSpace,
    pub period: PeriodSpec,
    pub alpha: f64,
    pub data: &'a SpatialData,
    /// Desired-state coefficients `(c_k, s_k)` for `k = 0..=N`.
    pub data_coeffs: &'a [(f64, f64)],
    pub eta: &'a FourierField,
    pub zeta: &'a FourierField,
    pub consts: StabilityConstants,
}

struct OcpComponent {
    k: usize,
    a: f64,
    eta: Vec<f64>,
    zeta: Vec<f64>,
    eta_perp: Option<Vec<f64>>,
    zeta_perp: Option<Vec<f64>>,
    /// `(f₃, curl ψ)` and `(f₁, curl ψ)`.
    f3: Vec<f64>,
    f1: Vec<f64>,
    /// `(ν curl η, ψ)` and `(ν curl ζ, ψ)`.
    g2: Vec<f64>,
    g4: Vec<f64>,
}

impl OcpInputs<'_> {
    fn component(&self, k: usize, comp: usize) -> OcpComponent {
        let embed = |v: &[f64]| self.d.dofs.to_edges(v);
        let pick = |f: &FourierField| {
            let (c, s) = mode_parts(f, k);
            if comp == 0 {
                c.to_vec()
            } else {
                s.expect("sine part").to_vec()
            }
        };
        let perp = |f: &FourierField| {
            (k > 0).then(|| {
                let (c, s) = mode_parts(f, k);
                perp_parts(c, s.expect("sine part"))[comp].clone()
            })
        };
        let (eta, zeta) = (pick(self.eta), pick(self.zeta));
        let (eta_perp, zeta_perp) = (perp(self.eta), perp(self.zeta));
        let a = if comp == 0 { self.data_coeffs[k].0 } else { self.data_coeffs[k].1 };
        let kw = self.period.frequency(k);
        let (eu, zu) = (embed(&eta), embed(&zeta));
        // f₃ = −kωσ η^⊥ + α⁻¹ζ
        let mut f3 = self.flux.coupling.mul_vec(&zu);
        f3.iter_mut().for_each(|v| *v /= self.alpha);
        // f₁ = −kωσ ζ^⊥ + η − a s
        let mut f1 = self.flux.coupling.mul_vec(&eu);
        for (v, l) in f1.iter_mut().zip(&self.data.curl_load) {
            *v -= a * l;
        }
        if let (Some(ep), Some(zp)) = (&eta_perp, &zeta_perp) {
            self.flux.coupling_sigma.mul_add(-kw, &embed(ep), &mut f3);
            self.flux.coupling_sigma.mul_add(-kw, &embed(zp), &mut f1);
        }
        OcpComponent {
            k,
            a,
            g2: self.flux.coupling_nu.mul_transpose_vec(&eu),
            g4: self.flux.coupling_nu.mul_transpose_vec(&zu),
            eta,
            zeta,
            eta_perp,
            zeta_perp,
            f3,
            f1,
        }
    }

    fn residuals(&self, c: &OcpComponent, tau: &[f64], rho: &[f64]) -> [f64; 4] {
        let kw = self.period.frequency(c.k);
        let ia = 1.0 / self.alpha;
        let mut r1 = vec![
            Term::Data { scale: -c.a, data: self.data },
            Term::Value { scale: 1.0, weight: Weight::One, space: Space::Interior, coeffs: &c.eta },
            Term::Curl { scale: -1.0, weight: Weight::One, space: Space::Flux, coeffs: rho },
        ];
        let mut r3 = vec![
            Term::Value { scale: ia, weight: Weight::One, space: Space::Interior, coeffs: &c.zeta },
            Term::Curl { scale: 1.0, weight: Weight::One, space: Space::Flux, coeffs: tau },
        ];
        if let (Some(ep), Some(zp)) = (&c.eta_perp, &c.zeta_perp) {
            r1.push(Term::Value { scale: -kw, weight: Weight::Sigma, space: Space::Interior, coeffs: zp });
            r3.push(Term::Value { scale: -kw, weight: Weight::Sigma, space: Space::Interior, coeffs: ep });
        }
        let r2 = [
            Term::Value { scale: 1.0, weight: Weight::One, space: Space::Flux, coeffs: tau },
            Term::Curl { scale: -1.0, weight: Weight::Nu, space: Space::Interior, coeffs: &c.eta },
        ];
        let r4 = [
            Term::Value { scale: 1.0, weight: Weight::One, space: Space::Flux, coeffs: rho },
            Term::Curl { scale: -1.0, weight: Weight::Nu, space: Space::Interior, coeffs: &c.zeta },
        ];
        [
            residual_sq(self.d, self.flux, &r1),
            residual_sq(self.d, self.flux, &r2),
            residual_sq(self.d, self.flux, &r3),
            residual_sq(self.d, self.flux, &r4),
        ]
    }
}

/// Alternating minimization of the optimality-system quadratic majorant over
/// `(τ, ρ)` and `(β₁, β₂, β₃)` on the modes `ks`.
pub fn minimize_ocp(
    inp: &OcpInputs<'_>,
    ks: &[usize],
    remainder: f64,
    error: Option<ErrorNorms>,
    cfg: &MinimizeConfig,
) -> Result<(MajorantReport, FourierField, FourierField)> {
    let start = Instant::now();
    let mut young = OcpYoung::default();
    let mut trace = Vec::new();
    let mut prev: Option<f64> = None;
    let mut converged = false;
    let comps: Vec<(usize, usize)> =
        ks.iter().flat_map(|&k| if k == 0 { vec![(k, 0)] } else { vec![(k, 0), (k, 1)] }).collect();
    let prepared: Vec<OcpComponent> = comps.iter().map(|&(k, c)| inp.component(k, c)).collect();
    let n = inp.flux.dim();
    let mut taus = vec![vec![0.0; n]; comps.len()];
    let mut rhos = vec![vec![0.0; n]; comps.len()];
    let mut per_comp = vec![[0.0; 4]; comps.len()];
    let mut sums = OcpSums::default();

    for it in 1..=cfg.maxit.max(1) {
        let w = ocp_weights(&young, inp.consts.friedrichs);
        let results: Vec<Result<(Vec<f64>, Vec<f64>, [f64; 4])>> = prepared
            .par_iter()
            .map(|c| {
                // τ: a₃‖f₃ + curl τ‖² + a₂‖τ − g₂‖²
                let rhs_t: Vec<f64> = c.f3.iter().zip(&c.g2).map(|(f, g)| -w[2] * f + w[1] * g).collect();
                let tau = inp.flux.solve(w[2], w[1], &rhs_t)?;
                // ρ: a₁‖f₁ − curl ρ‖² + a₄‖ρ − g₄‖²
                let rhs_r: Vec<f64> = c.f1.iter().zip(&c.g4).map(|(f, g)| w[0] * f + w[3] * g).collect();
                let rho = inp.flux.solve(w[0], w[3], &rhs_r)?;
                let r = inp.residuals(c, &tau, &rho);
                Ok((tau, rho, r))
            })
            .collect();
        sums = OcpSums::default();
        for (i, r) in results.into_iter().enumerate() {
            let (tau, rho, res) = r?;
            let wt = inp.period.mode_weight(comps[i].0);
            sums.r1 += wt * res[0];
            sums.r2 += wt * res[1];
            sums.r3 += wt * res[2];
            sums.r4 += wt * res[3];
            per_comp[i] = res;
            taus[i] = tau;
            rhos[i] = rho;
        }
        let m2 = majorant_ocp(sums, &inp.consts, &young, remainder, MajorantForm::Quadratic)?;
        trace.push(TraceEntry {
            iteration: it,
            ctime: start.elapsed().as_secs_f64(),
            betas: vec![young.beta1, young.beta2, young.beta3],
            majorant_sq: m2,
            i_eff: error.map(|e| m2 / e.seminorm_sq),
        });
        if let Some(p) = prev {
            if (p - m2).abs() < cfg.tol {
                converged = true;
                break;
            }
        }
        prev = Some(m2);
        let with_rem = OcpSums { r1: sums.r1 + remainder, ..sums };
        if [with_rem.r1, with_rem.r2, with_rem.r3, with_rem.r4].iter().all(|v| *v == 0.0) {
            converged = true;
            break;
        }
        young = beta_optimal_ocp(&with_rem, inp.consts.friedrichs)?;
    }

    let last = trace.last().expect("at least one iteration").clone();
    let residuals = ks
        .iter()
        .map(|&k| {
            let mut r = vec![0.0; 4];
            for (i, &(kk, _)) in comps.iter().enumerate() {
                if kk == k {
                    for j in 0..4 {
                        r[j] += per_comp[i][j];
                    }
                }
            }
            ModeResiduals { k, residuals: r }
        })
        .collect();
    let norm_consts = stability_constants(
        (inp.d.coeffs.sigma_min, inp.d.coeffs.sigma_max),
        (inp.d.coeffs.nu_min, inp.d.coeffs.nu_max),
        Some(inp.alpha),
        inp.consts.friedrichs,
        Context::OcpNorm,
    )?;
    let report = MajorantReport {
        modes: ks.to_vec(),
        residuals,
        betas: last.betas.clone(),
        remainder,
        constants: inp.consts,
        majorant_sq: last.majorant_sq,
        majorant_linear_sq: majorant_ocp(sums, &inp.consts, &young, remainder, MajorantForm::Linear)?,
        majorant_norm_sq: majorant_ocp(sums, &norm_consts, &young, remainder, MajorantForm::Norm)?,
        error_seminorm_sq: error.map(|e| e.seminorm_sq),
        error_norm_sq: error.map(|e| e.norm_sq),
        efficiency_index: error.map(|e| efficiency_index(last.majorant_sq, e.seminorm_sq)).transpose()?,
        converged,
        iterations: trace.len(),
        ctime: start.elapsed().as_secs_f64(),
        trace,
        interpretation: INTERPRETATION.into(),
    };
    let nt = inp.eta.truncation();
    let tau_f = assemble_flux(n, &comps, taus, nt);
    let rho_f = assemble_flux(n, &comps, rhos, nt);
    Ok((report, tau_f, rho_f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge_fem::{interpolate, Coefficients};
    use crate::mesh::{build_box_mesh, BoxDomain, LOCAL_EDGES};
    use crate::quadrature::TetRule;
    use nalgebra::{Matrix3, Vector2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn consts(lower: f64, cf: f64) -> StabilityConstants {
        StabilityConstants { context: Context::ForwardSeminorm, lower, upper: 1.0, friedrichs: cf }
    }

    fn disc(n: usize, sigma: f64, nu: f64) -> Discretization {
        let mesh = build_box_mesh(n, BoxDomain::unit()).unwrap();
        let c = Coefficients::uniform(&mesh, sigma, nu).unwrap();
        Discretization::new(mesh, c).unwrap()
    }

    fn shape(x: &Point3<f64>) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, (PI * x.x).sin() * (PI * x.y).sin())
    }

    fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
        while (b - a).abs() > 1e-14 * (1.0 + a.abs()) {
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - g * (b - a);
            d = a + g * (b - a);
        }
        0.5 * (a + b)
    }

    #[test]
    fn stability_constant_examples() {
        let s = 2f64.sqrt();
        let c = stability_constants((1.0, 1.0), (1.0, 1.0), None, 1.0, Context::ForwardSeminorm).unwrap();
        assert!((c.lower - 1.0 / s).abs() < 1e-15 && c.upper == 1.0);
        let c = stability_constants((1.0, 1.0), (1.0, 1.0), Some(1.0), 1.0, Context::OcpNorm).unwrap();
        assert!((c.lower - 1.0 / 3f64.sqrt()).abs() < 1e-15 && c.upper == 1.0);
        let c = stability_constants((1.0, 1.0), (1.0, 1.0), Some(1.0), 1.0, Context::OcpSeminorm).unwrap();
        assert!((c.lower - 1.0 / s).abs() < 1e-15 && c.upper == 2.0);
        let c = stability_constants((1.0, 1.0), (1.0, 1.0), None, 1.0, Context::ForwardNorm).unwrap();
        assert!((c.lower - 0.5 / s).abs() < 1e-15);
        assert!(stability_constants((0.0, 1.0), (1.0, 1.0), None, 1.0, Context::ForwardSeminorm).is_err());
        assert!(stability_constants((2.0, 1.0), (1.0, 1.0), None, 1.0, Context::ForwardSeminorm).is_err());
        assert!(stability_constants((1.0, 1.0), (1.0, 1.0), None, 1.0, Context::OcpNorm).is_err());
        assert!(stability_constants((1.0, 1.0), (1.0, 1.0), Some(-1.0), 1.0, Context::OcpSeminorm).is_err());
    }

    #[test]
    fn majorant_examples() {
        let k = consts(0.5f64.sqrt(), 1.0);
        let sums = ForwardSums { r1: 1.0, r2: 1.0 };
        let m = majorant_forward(sums, &k, 1.0, 0.0, MajorantForm::Quadratic).unwrap();
        assert!((m - 8.0).abs() < 1e-12);
        for form in [MajorantForm::Linear, MajorantForm::Quadratic, MajorantForm::Norm] {
            assert_eq!(majorant_forward(ForwardSums::default(), &k, 1.0, 0.0, form).unwrap(), 0.0);
        }
        assert!(majorant_forward(sums, &k, 0.0, 0.0, MajorantForm::Quadratic).is_err());
        // the remainder enters the first sum
        let with_rem = majorant_forward(ForwardSums { r1: 0.5, r2: 1.0 }, &k, 1.0, 0.5, MajorantForm::Quadratic).unwrap();
        assert!((with_rem - 8.0).abs() < 1e-12);
    }

    #[test]
    fn beta_examples() {
        assert_eq!(beta_optimal(2.0, 2.0).unwrap(), 1.0);
        assert_eq!(beta_optimal(3.0, 0.0).unwrap(), YOUNG_MIN);
        assert_eq!(beta_optimal(0.0, 3.0).unwrap(), YOUNG_MAX);
        assert!(beta_optimal(0.0, 0.0).is_err());
        assert!(beta_optimal(-1.0, 1.0).is_err());
        let k = consts(0.5f64.sqrt(), 1.0);
        let m = majorant_forward(ForwardSums { r1: 3.0, r2: 0.0 }, &k, YOUNG_MIN, 0.0, MajorantForm::Quadratic).unwrap();
        assert!((m - 2.0 * 3.0).abs() < 1e-6);
    }

    #[test]
    fn beta_against_golden_section_and_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let (a, b) = (rng.random_range(1e-3..1e3), rng.random_range(1e-3..1e3));
            let f = |beta: f64| (1.0 + beta) * a + (1.0 + beta) / beta * b;
            let star = beta_optimal(a, b).unwrap();
            let g = golden(|l| f(l.exp()), -10.0, 10.0).exp();
            assert!((star - g).abs() < 1e-6 * star, "{star} vs {g}");
        }
        // a coarse log grid never beats the closed form
        let (a, b) = (2.5, 7.0);
        let f = |beta: f64| (1.0 + beta) * a + (1.0 + beta) / beta * b;
        let best = (0..=6000).map(|i| 10f64.powf(-3.0 + i as f64 * 1e-3)).map(f).fold(f64::INFINITY, f64::min);
        assert!(f(beta_optimal(a, b).unwrap()) <= best * (1.0 + 1e-12));
        assert!((best - f(beta_optimal(a, b).unwrap())) / best < 1e-6);
    }

    #[test]
    fn ocp_betas_are_a_joint_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cf = 0.3;
        for _ in 0..20 {
            let sums = OcpSums {
                r1: rng.random_range(0.01..10.0),
                r2: rng.random_range(0.01..10.0),
                r3: rng.random_range(0.01..10.0),
                r4: rng.random_range(0.01..10.0),
            };
            let k = StabilityConstants { context: Context::OcpSeminorm, lower: 1.0, upper: 1.0, friedrichs: cf };
            let m = |y: &OcpYoung| majorant_ocp(sums, &k, y, 0.0, MajorantForm::Quadratic).unwrap();
            let star = beta_optimal_ocp(&sums, cf).unwrap();
            let m_star = m(&star);
            // every coordinate perturbation increases the form
            for i in 0..3 {
                for f in [0.99, 1.01] {
                    let mut y = star;
                    match i {
                        0 => y.beta1 *= f,
                        1 => y.beta2 *= f,
                        _ => y.beta3 *= f,
                    }
                    assert!(m(&y) > m_star);
                }
            }
            assert!(m_star <= m(&OcpYoung::default()));
        }
    }

    #[test]
    fn efficiency_index_examples() {
        assert!((efficiency_index(1.965e2, 1.52e2).unwrap() - 1.2928).abs() < 1e-4);
        assert!((efficiency_index(1.011e2, 5.18e1).unwrap() - 1.952).abs() < 1e-3);
        assert_eq!(efficiency_index(3.0, 3.0).unwrap(), 1.0);
        assert!(matches!(efficiency_index(1.0, 0.0), Err(Error::NonPositiveError(_))));
    }

    /// Independent element loop: own barycentric gradients, own quadrature.
    fn oracle_sq(d: &Discretization, flux: &FluxSpace, terms: &[Term<'_>]) -> f64 {
        let rule = TetRule::collapsed(6, 6, 6);
        let mesh = &d.mesh;
        let mut total = 0.0;
        for t in 0..mesh.num_tets() {
            let p = mesh.tet_points(t);
            let jac = Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
            let vol = jac.determinant().abs() / 6.0;
            let inv = jac.try_inverse().unwrap().transpose();
            let g1 = inv.column(0).into_owned();
            let g2 = inv.column(1).into_owned();
            let g3 = inv.column(2).into_owned();
            let grads = [-(g1 + g2 + g3), g1, g2, g3];
            let gather = |space: Space, v: &[f64]| -> [f64; 6] {
                let mut out = [0.0; 6];
                for (l, te) in mesh.tet_edges[t].iter().enumerate() {
                    let idx = match space {
                        Space::Flux => Some(te.edge),
                        Space::Interior => d.dofs.edge_to_dof[te.edge],
                    };
                    if let Some(i) = idx {
                        out[l] = f64::from(te.sign) * v[i];
                    }
                }
                out
            };
            let weight = |w: Weight| match w {
                Weight::One => 1.0,
                Weight::Sigma => d.coeffs.sigma[t],
                Weight::Nu => d.coeffs.nu[t],
            };
            for (bary, w) in rule.iter() {
                let x = Point3::from(p[0].coords * bary[0] + p[1].coords * bary[1] + p[2].coords * bary[2] + p[3].coords * bary[3]);
                let mut v = Vector3::zeros();
                for term in terms {
                    match *term {
                        Term::Data { scale, .. } => v += shape(&x) * scale,
                        Term::Value { scale, weight: wt, space, coeffs } => {
                            let c = gather(space, coeffs);
                            for (l, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
                                v += (grads[b] * bary[a] - grads[a] * bary[b]) * (c[l] * scale * weight(wt));
                            }
                        }
                        Term::Curl { scale, weight: wt, space, coeffs } => {
                            let c = gather(space, coeffs);
                            for (l, &(a, b)) in LOCAL_EDGES.iter().enumerate() {
                                v += grads[a].cross(&grads[b]) * (2.0 * c[l] * scale * weight(wt));
                            }
                        }
                    }
                }
                total += w * vol * v.norm_squared();
            }
        }
        let _ = flux;
        total
    }

    #[test]
    fn residuals_against_requadrature_oracle() {
        let mesh = build_box_mesh(2, BoxDomain::unit()).unwrap();
        let c = Coefficients::from_fn(&mesh, |x| (1.0 + x.x, 2.0 - x.y)).unwrap();
        let d = Discretization::new(mesh, c).unwrap();
        let flux = FluxSpace::new(&d);
        let data = SpatialData::new(&d, &flux, &shape);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut rand_vec = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let (eta, perp, tau) = (rand_vec(d.dim()), rand_vec(d.dim()), rand_vec(flux.dim()));
        let discrete = [
            Term::Curl { scale: -1.0, weight: Weight::One, space: Space::Flux, coeffs: &tau },
            Term::Value { scale: 1.7, weight: Weight::Sigma, space: Space::Interior, coeffs: &perp },
            Term::Value { scale: 0.4, weight: Weight::One, space: Space::Flux, coeffs: &tau },
            Term::Curl { scale: -0.8, weight: Weight::Nu, space: Space::Interior, coeffs: &eta },
        ];
        // discrete integrands are quadratic: both rules are exact
        let (a, b) = (residual_sq(&d, &flux, &discrete), oracle_sq(&d, &flux, &discrete));
        assert!((a - b).abs() < 1e-10 * b, "{a} vs {b}");
        // with the analytic data both rules converge to the same value
        let mut mixed = discrete.to_vec();
        mixed.push(Term::Data { scale: 2.0, data: &data });
        let (a, b) = (residual_sq(&d, &flux, &mixed), oracle_sq(&d, &flux, &mixed));
        assert!((a - b).abs() < 1e-4 * b, "{a} vs {b}");
    }

    #[test]
    fn trivial_residuals() {
        let d = disc(2, 1.0, 1.0);
        let flux = FluxSpace::new(&d);
        let data = SpatialData::new(&d, &flux, &shape);
        let a = 1.3;
        let r = residual_sq(&d, &flux, &[Term::Data { scale: a, data: &data }]);
        assert!((r - a * a * data.norm_sq).abs() < 1e-12 * r);
        assert!((data.norm_sq - 0.25).abs() < 1e-3);
        // the interior field and its zero extension to all edges coincide
        let eta = interpolate(&d.mesh, &d.dofs, &shape);
        let ext = d.dofs.to_edges(&eta);
        let same = [
            Term::Value { scale: 1.0, weight: Weight::Nu, space: Space::Interior, coeffs: &eta },
            Term::Value { scale: -1.0, weight: Weight::Nu, space: Space::Flux, coeffs: &ext },
            Term::Curl { scale: 1.0, weight: Weight::One, space: Space::Interior, coeffs: &eta },
            Term::Curl { scale: -1.0, weight: Weight::One, space: Space::Flux, coeffs: &ext },
        ];
        assert!(residual_sq(&d, &flux, &same) < 1e-28);
    }

    #[test]
    fn flux_space_matrices() {
        let d = disc(2, 2.0, 3.0);
        let flux = FluxSpace::new(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let v: Vec<f64> = (0..flux.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..flux.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        // (curl u, v) from the coupling matrix against the residual quadrature
        let cu = crate::sparse::dot(&flux.coupling.mul_vec(&v), &u);
        let plus = residual_sq(&d, &flux, &[
            Term::Curl { scale: 1.0, weight: Weight::One, space: Space::Flux, coeffs: &u },
            Term::Value { scale: 1.0, weight: Weight::One, space: Space::Flux, coeffs: &v },
        ]);
        let minus = residual_sq(&d, &flux, &[
            Term::Curl { scale: 1.0, weight: Weight::One, space: Space::Flux, coeffs: &u },
            Term::Value { scale: -1.0, weight: Weight::One, space: Space::Flux, coeffs: &v },
        ]);
        assert!((cu - 0.25 * (plus - minus)).abs() < 1e-10 * (1.0 + cu.abs()));
        let cs = crate::sparse::dot(&flux.coupling_sigma.mul_vec(&v), &u);
        let cn = crate::sparse::dot(&flux.coupling_nu.mul_vec(&v), &u);
        assert!((cs - 2.0 * cu).abs() < 1e-12 * (1.0 + cu.abs()));
        assert!((cn - 3.0 * cu).abs() < 1e-12 * (1.0 + cu.abs()));
        let mq = flux.mass.quad_form(&v, &v);
        let mr = residual_sq(&d, &flux, &[Term::Value { scale: 1.0, weight: Weight::One, space: Space::Flux, coeffs: &v }]);
        assert!((mq - mr).abs() < 1e-12 * mr);
    }

    #[test]
    fn flux_solve_is_stationary() {
        // τ* minimizes a‖s − curl τ‖² + b‖τ − ν curl η‖²; perturbations cannot lower it
        let d = disc(2, 1.0, 1.0);
        let flux = FluxSpace::new(&d);
        let data = SpatialData::new(&d, &flux, &shape);
        let eta = interpolate(&d.mesh, &d.dofs, &shape);
        let (a, b) = (0.3, 1.7);
        let g = flux.coupling_nu.mul_transpose_vec(&d.dofs.to_edges(&eta));
        let rhs: Vec<f64> = data.curl_load.iter().zip(&g).map(|(f, g)| a * f + b * g).collect();
        let tau = flux.solve(a, b, &rhs).unwrap();
        let objective = |t: &[f64]| {
            a * residual_sq(&d, &flux, &[
                Term::Data { scale: 1.0, data: &data },
                Term::Curl { scale: -1.0, weight: Weight::One, space: Space::Flux, coeffs: t },
            ]) + b * residual_sq(&d, &flux, &[
                Term::Value { scale: 1.0, weight: Weight::One, space: Space::Flux, coeffs: t },
                Term::Curl { scale: -1.0, weight: Weight::Nu, space: Space::Interior, coeffs: &eta },
            ])
        };
        let best = objective(&tau);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..10 {
            let p: Vec<f64> = tau.iter().map(|t| t + 1e-3 * rng.random_range(-1.0..1.0)).collect();
            assert!(objective(&p) > best);
        }
    }

    fn forward_setup(n: usize, exact: bool) -> (Discretization, FluxSpace, SpatialData, FourierField, Vec<(f64, f64)>, PeriodSpec) {
        use crate::presets::{exact_forward_modes, ProblemData, Preset};
        use crate::systems::{reconstruct, solve_forward_modes};
        let d = disc(n, 1.0, 1.0);
        let flux = FluxSpace::new(&d);
        let period = PeriodSpec::new(2.0 * PI, 1).unwrap();
        let pd = ProblemData::new(&Preset::PaperForward, BoxDomain::unit(), period);
        let data = SpatialData::new(&d, &flux, &*pd.field);
        let eta = if exact {
            let amp = exact_forward_modes(&pd.coeffs[..2], &period, 1.0, 1.0, 2.0 * PI * PI);
            pd.interpolate(&d, &amp)
        } else {
            let sols = solve_forward_modes(&d, &pd.loads(&d), &period, &Default::default(), 1e-6).unwrap();
            reconstruct(&sols, 1).unwrap().0
        };
        (d, flux, data, eta, pd.truncated().to_vec(), period)
    }

    #[test]
    fn forward_minimization_trace() {
        let (d, flux, data, eta, coeffs, period) = forward_setup(2, false);
        let consts = stability_constants((1.0, 1.0), (1.0, 1.0), None, 1.0 / (2f64.sqrt() * PI), Context::ForwardSeminorm).unwrap();
        let inp = ForwardInputs { d: &d, flux: &flux, period, data: &data, data_coeffs: &coeffs, eta: &eta, consts };
        let cfg = MinimizeConfig::default();
        for ks in [vec![0], vec![1], vec![0, 1]] {
            let (rep, tau) = minimize_forward(&inp, &ks, 0.0, None, &cfg).unwrap();
            assert!(rep.converged && rep.iterations <= cfg.maxit);
            assert_eq!(rep.trace[0].betas, vec![1.0]);
            assert!(rep.trace.windows(2).all(|w| w[1].majorant_sq <= w[0].majorant_sq));
            assert!(rep.majorant_sq >= rep.majorant_linear_sq * (1.0 - 1e-12));
            assert_eq!(tau.dim(), flux.dim());
            assert!(rep.efficiency_index.is_none());
        }
        let (r1, _) = minimize_forward(&inp, &[1], 0.0, None, &cfg).unwrap();
        let (r2, _) = minimize_forward(&inp, &[1], 5.0, None, &cfg).unwrap();
        assert!(r2.majorant_sq > r1.majorant_sq);
    }

    #[test]
    fn exact_inputs_give_small_majorant() {
        let run = |n: usize, exact: bool| {
            let (d, flux, data, eta, coeffs, period) = forward_setup(n, exact);
            let consts = stability_constants((1.0, 1.0), (1.0, 1.0), None, 1.0 / (2f64.sqrt() * PI), Context::ForwardSeminorm).unwrap();
            let inp = ForwardInputs { d: &d, flux: &flux, period, data: &data, data_coeffs: &coeffs, eta: &eta, consts };
            minimize_forward(&inp, &[1], 0.0, None, &MinimizeConfig::default()).unwrap().0.majorant_sq
        };
        let (m2, m3) = (run(2, true), run(3, true));
        assert!(m3 < m2, "{m3} !< {m2}");
    }

    #[test]
    fn ocp_minimization_trace() {
        use crate::presets::{ProblemData, Preset};
        use crate::systems::{reconstruct, solve_ocp_modes, ControlParams};
        let d = disc(2, 1.0, 1.0);
        let flux = FluxSpace::new(&d);
        let period = PeriodSpec::new(2.0 * PI, 1).unwrap();
        let pd = ProblemData::new(&Preset::PaperOcp, BoxDomain::unit(), period);
        let data = SpatialData::new(&d, &flux, &*pd.field);
        for alpha in [0.01, 1.0, 100.0] {
            let sols = solve_ocp_modes(&d, ControlParams::new(alpha).unwrap(), &pd.loads(&d), &period, &Default::default()).unwrap();
            let (y, p) = reconstruct(&sols, 1).unwrap();
            let p = p.unwrap();
            let consts = stability_constants((1.0, 1.0), (1.0, 1.0), Some(alpha), 0.2, Context::OcpSeminorm).unwrap();
            let inp = OcpInputs {
                d: &d,
                flux: &flux,
                period,
                alpha,
                data: &data,
                data_coeffs: pd.truncated(),
                eta: &y,
                zeta: &p,
                consts,
            };
            let (rep, tau, rho) = minimize_ocp(&inp, &[0, 1], 0.0, None, &MinimizeConfig::default()).unwrap();
            assert_eq!(rep.trace[0].betas, vec![1.0; 3]);
            assert!(rep.trace.windows(2).all(|w| w[1].majorant_sq <= w[0].majorant_sq * (1.0 + 1e-14)), "α={alpha}");
            assert!(rep.majorant_sq >= rep.majorant_linear_sq * (1.0 - 1e-12));
            assert_eq!((tau.dim(), rho.dim()), (flux.dim(), flux.dim()));
            assert_eq!(rep.residuals.len(), 2);
        }
    }

    #[test]
    fn ocp_residuals_with_zero_inputs() {
        // η = ζ = 0 and no flux: R₁ is the desired state, R₂ = R₃ = R₄ = 0
        use crate::presets::{ProblemData, Preset};
        let d = disc(2, 1.0, 1.0);
        let flux = FluxSpace::new(&d);
        let period = PeriodSpec::new(2.0 * PI, 1).unwrap();
        let pd = ProblemData::new(&Preset::PaperOcp, BoxDomain::unit(), period);
        let data = SpatialData::new(&d, &flux, &*pd.field);
        let zero = FourierField::zeros(d.dim(), 1);
        let consts = stability_constants((1.0, 1.0), (1.0, 1.0), Some(1.0), 0.2, Context::OcpSeminorm).unwrap();
        let inp = OcpInputs {
            d: &d,
            flux: &flux,
            period,
            alpha: 1.0,
            data: &data,
            data_coeffs: pd.truncated(),
            eta: &zero,
            zeta: &zero,
            consts,
        };
        let c = inp.component(1, 0);
        let z = vec![0.0; flux.dim()];
        let r = inp.residuals(&c, &z, &z);
        let a = pd.coeffs[1].0;
        assert!((r[0] - a * a * data.norm_sq).abs() < 1e-12 * r[0]);
        assert_eq!([r[1], r[2], r[3]], [0.0; 3]);
    }

    #[test]
    fn toy_alternation_reaches_grid_optimum() {
        // one-dimensional flux space: R₁ = p − t q, R₂ = t r − s in R²
        let (p, q) = (Vector2::new(2.0, -0.5), Vector2::new(1.5, 0.4));
        let (r, s) = (Vector2::new(0.7, 0.2), Vector2::new(1.1, 0.9));
        let cf = 0.8;
        let k = consts(1.0, cf);
        let m = |beta: f64, t: f64| {
            let sums = ForwardSums { r1: (p - q * t).norm_squared(), r2: (r * t - s).norm_squared() };
            majorant_forward(sums, &k, beta, 0.0, MajorantForm::Quadratic).unwrap()
        };
        let (mut beta, mut prev) = (1.0, f64::INFINITY);
        for _ in 0..200 {
            // stationarity in t
            let (a, b) = (cf * cf * (1.0 + beta), (1.0 + beta) / beta);
            let t = (a * q.dot(&p) + b * r.dot(&s)) / (a * q.norm_squared() + b * r.norm_squared());
            let cur = m(beta, t);
            assert!(cur <= prev * (1.0 + 1e-15));
            prev = cur;
            beta = beta_optimal(cf * cf * (p - q * t).norm_squared(), (r * t - s).norm_squared()).unwrap();
        }
        // zooming 2-D grid in (log β, t)
        let (mut lb, mut t0, mut wb, mut wt) = (0.0f64, 1.0f64, 4.0f64, 4.0f64);
        let mut best = f64::INFINITY;
        for _ in 0..40 {
            let mut arg = (lb, t0);
            for i in -20..=20 {
                for j in -20..=20 {
                    let (x, y) = (lb + wb * i as f64 / 20.0, t0 + wt * j as f64 / 20.0);
                    let v = m(x.exp(), y);
                    if v < best {
                        best = v;
                        arg = (x, y);
                    }
                }
            }
            (lb, t0) = arg;
            wb *= 0.5;
            wt *= 0.5;
        }
        assert!(prev <= best * (1.0 + 1e-12));
        assert!((best - prev) <= 1e-6 * best, "{prev} vs {best}");
    }

    proptest! {
        #[test]
        fn quadratic_dominates_linear(r1 in 0.0..1e3f64, r2 in 0.0..1e3f64, beta in 1e-4..1e4f64, cf in 0.05..5.0f64, rem in 0.0..10.0f64) {
            let k = consts(0.3, cf);
            let s = ForwardSums { r1, r2 };
            let q = majorant_forward(s, &k, beta, rem, MajorantForm::Quadratic).unwrap();
            let l = majorant_forward(s, &k, beta, rem, MajorantForm::Linear).unwrap();
            prop_assert!(q >= l * (1.0 - 1e-12));
        }

        #[test]
        fn homogeneity(r1 in 1e-3..1e3f64, r2 in 1e-3..1e3f64, r3 in 1e-3..1e3f64, r4 in 1e-3..1e3f64, s in 0.1..10.0f64) {
            let k = consts(0.5, 0.7);
            let beta = beta_optimal(0.49 * r1, r2).unwrap();
            let beta_s = beta_optimal(0.49 * r1 * s * s, r2 * s * s).unwrap();
            prop_assert!((beta - beta_s).abs() <= 1e-12 * beta);
            let m = majorant_forward(ForwardSums { r1, r2 }, &k, beta, 0.0, MajorantForm::Quadratic).unwrap();
            let ms = majorant_forward(ForwardSums { r1: r1 * s * s, r2: r2 * s * s }, &k, beta_s, 0.0, MajorantForm::Quadratic).unwrap();
            prop_assert!((ms - s * s * m).abs() <= 1e-10 * ms);
            let o = OcpSums { r1, r2, r3, r4 };
            let os = OcpSums { r1: r1 * s * s, r2: r2 * s * s, r3: r3 * s * s, r4: r4 * s * s };
            let (y, ys) = (beta_optimal_ocp(&o, 0.7).unwrap(), beta_optimal_ocp(&os, 0.7).unwrap());
            prop_assert!((y.beta1 - ys.beta1).abs() <= 1e-10 * y.beta1);
            prop_assert!((y.beta2 - ys.beta2).abs() <= 1e-10 * y.beta2);
            prop_assert!((y.beta3 - ys.beta3).abs() <= 1e-10 * y.beta3);
        }

        #[test]
        fn closed_form_beta_is_minimal(a in 1e-3..1e3f64, b in 1e-3..1e3f64, f in 0.5..2.0f64) {
            let g = |beta: f64| (1.0 + beta) * a + (1.0 + beta) / beta * b;
            let star = beta_optimal(a, b).unwrap();
            prop_assert!(g(star) <= g(star * f) * (1.0 + 1e-14));
        }
    }
}
