//! Separable model data `g(t) S(x) e_z` with `S = sin(πx̂) sin(πŷ)` on the
//! box, and exact Fourier-mode references for uniform coefficients.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix2, Matrix4, Point3, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::edge_fem::{field_norms_mixed, AnalyticField, Coefficients};
use crate::error::{Error, Result};
use crate::estimator::ErrorNorms;
use crate::harmonics::{ExpTrig, FourierField, PeriodSpec};
use crate::mesh::BoxDomain;
use crate::systems::Discretization;

/// Number of modes summed for the exact error tail beyond the truncation.
pub const TAIL_MODES: usize = 20_000;

/// `S(x) e_z` with `S = sin(π(x−x₀)/Lx) sin(π(y−y₀)/Ly)`: tangential trace
/// vanishes on the box boundary and `curl curl (S e_z) = μ S e_z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialShape {
    pub domain: BoxDomain,
}

impl SpatialShape {
    fn scaled(&self, x: &Point3<f64>) -> (f64, f64, f64, f64) {
        let [lx, ly, _] = self.domain.lengths();
        let (a, b) = (PI / lx, PI / ly);
        (a, b, a * (x.x - self.domain.lo[0]), b * (x.y - self.domain.lo[1]))
    }

    pub fn value(&self, x: &Point3<f64>) -> Vector3<f64> {
        let (_, _, u, v) = self.scaled(x);
        Vector3::new(0.0, 0.0, u.sin() * v.sin())
    }

    pub fn curl(&self, x: &Point3<f64>) -> Vector3<f64> {
        let (a, b, u, v) = self.scaled(x);
        Vector3::new(b * u.sin() * v.cos(), -a * u.cos() * v.sin(), 0.0)
    }

    /// Eigenvalue `μ = π²(1/Lx² + 1/Ly²)`.
    pub fn eigenvalue(&self) -> f64 {
        let [lx, ly, _] = self.domain.lengths();
        PI * PI * (1.0 / (lx * lx) + 1.0 / (ly * ly))
    }

    pub fn norm_sq(&self) -> f64 {
        self.domain.volume() / 4.0
    }

    pub fn curl_norm_sq(&self) -> f64 {
        self.eigenvalue() * self.norm_sq()
    }
}

/// Data presets of the runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Preset {
    /// Source `eᵗ(cos t + (2π²+1) sin t)`, exact state `eᵗ sin t` on the unit cube.
    PaperForward,
    /// Desired state `eᵗ(sin t + (2π²+1)((2π²+1) sin t − cos t))`.
    PaperOcp,
    /// Custom time signal times the same spatial shape.
    Custom { signal: ExpTrig },
}

impl Preset {
    pub fn signal(&self) -> ExpTrig {
        let c = 2.0 * PI * PI + 1.0;
        match self {
            Preset::PaperForward => ExpTrig::single(1.0, 1.0, 1.0, c),
            Preset::PaperOcp => ExpTrig::single(1.0, 1.0, -c, 1.0 + c * c),
            Preset::Custom { signal } => signal.clone(),
        }
    }
}

/// Closed-form exact state `eᵗ sin t` of the forward preset.
pub fn paper_forward_state() -> ExpTrig {
    ExpTrig::single(1.0, 1.0, 0.0, 1.0)
}

/// Scalar mode amplitudes `(c_k, s_k)` of a separable field `a(t) S e_z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeAmplitudes {
    pub coeffs: Vec<(f64, f64)>,
}

/// Uniform `(σ, ν)` or an error when the coefficients vary.
pub fn uniform_coefficients(c: &Coefficients) -> Option<(f64, f64)> {
    c.is_uniform().then_some((c.sigma_min, c.nu_min))
}

/// Exact forward mode amplitudes for separable data with coefficients
/// `data[k]`: `[[λ, kωσ], [−kωσ, λ]] (a_c, a_s) = (u_c, u_s)`, `λ = νμ`.
pub fn exact_forward_modes(data: &[(f64, f64)], period: &PeriodSpec, sigma: f64, nu: f64, mu: f64) -> ModeAmplitudes {
    let lam = nu * mu;
    let coeffs = data
        .iter()
        .enumerate()
        .map(|(k, &(uc, us))| {
            if k == 0 {
                return (uc / lam, 0.0);
            }
            let kws = period.frequency(k) * sigma;
            let m = Matrix2::new(lam, kws, -kws, lam);
            let x = m.lu().solve(&Vector2::new(uc, us)).expect("nonsingular mode matrix");
            (x[0], x[1])
        })
        .collect();
    ModeAmplitudes { coeffs }
}

/// Exact optimality-system amplitudes `(state, adjoint)` mode by mode.
pub fn exact_ocp_modes(
    data: &[(f64, f64)],
    period: &PeriodSpec,
    sigma: f64,
    nu: f64,
    mu: f64,
    alpha: f64,
) -> (ModeAmplitudes, ModeAmplitudes) {
    let lam = nu * mu;
    let ia = 1.0 / alpha;
    let mut y = Vec::with_capacity(data.len());
    let mut p = Vec::with_capacity(data.len());
    for (k, &(dc, ds)) in data.iter().enumerate() {
        if k == 0 {
            let m = Matrix2::new(1.0, -lam, -lam, -ia);
            let x = m.lu().solve(&Vector2::new(dc, 0.0)).expect("nonsingular mode matrix");
            y.push((x[0], 0.0));
            p.push((x[1], 0.0));
            continue;
        }
        let kw = period.frequency(k) * sigma;
        #[rustfmt::skip]
        let m = Matrix4::new(
            1.0, 0.0, -lam, kw,
            0.0, 1.0, -kw, -lam,
            -lam, -kw, -ia, 0.0,
            kw, -lam, 0.0, -ia,
        );
        let x = m.lu().solve(&Vector4::new(dc, ds, 0.0, 0.0)).expect("nonsingular mode matrix");
        y.push((x[0], x[1]));
        p.push((x[2], x[3]));
    }
    (ModeAmplitudes { coeffs: y }, ModeAmplitudes { coeffs: p })
}

/// Everything a run needs about its data and exact solution.
#[derive(Clone)]
pub struct ProblemData {
    pub shape: SpatialShape,
    pub signal: ExpTrig,
    pub period: PeriodSpec,
    /// Data coefficients for `k = 0..=TAIL_MODES`.
    pub coeffs: Vec<(f64, f64)>,
    pub field: Arc<dyn Fn(&Point3<f64>) -> Vector3<f64> + Send + Sync>,
}

impl std::fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemData").field("shape", &self.shape).field("signal", &self.signal).finish()
    }
}

impl ProblemData {
    pub fn new(preset: &Preset, domain: BoxDomain, period: PeriodSpec) -> Self {
        let shape = SpatialShape { domain };
        let signal = preset.signal();
        let modes = TAIL_MODES.max(period.truncation);
        let coeffs = (0..=modes).map(|k| signal.exact_coeff(k, &period)).collect();
        ProblemData { shape, signal, period, coeffs, field: Arc::new(move |x| shape.value(x)) }
    }

    pub fn truncated(&self) -> &[(f64, f64)] {
        &self.coeffs[..=self.period.truncation]
    }

    /// Load vectors `(g_k S e_z, φ)` of the retained modes.
    pub fn loads(&self, d: &Discretization) -> FourierField {
        let base = crate::edge_fem::assemble_load(&d.mesh, &d.geometry, &d.dofs, &*self.field);
        let scaled = |a: f64| base.iter().map(|v| a * v).collect::<Vec<f64>>();
        let n = self.period.truncation;
        let mut f = FourierField::zeros(d.dim(), n);
        f.mode0 = scaled(self.coeffs[0].0);
        for k in 1..=n {
            f.modes[k - 1] = (scaled(self.coeffs[k].0), scaled(self.coeffs[k].1));
        }
        f
    }

    /// Edge interpolant of the separable field with amplitudes `amp`, modes `0..=N`.
    pub fn interpolate(&self, d: &Discretization, amp: &ModeAmplitudes) -> FourierField {
        let base = crate::edge_fem::interpolate(&d.mesh, &d.dofs, &*self.field);
        let scaled = |a: f64| base.iter().map(|v| a * v).collect::<Vec<f64>>();
        let n = self.period.truncation;
        let mut f = FourierField::zeros(d.dim(), n);
        f.mode0 = scaled(amp.coeffs[0].0);
        for k in 1..=n {
            f.modes[k - 1] = (scaled(amp.coeffs[k].0), scaled(amp.coeffs[k].1));
        }
        f
    }
}

/// Per-mode error contributions `(seminorm², norm²)` of `exact − discrete`
/// for one Fourier mode, time weights included.
pub fn mode_error(
    d: &Discretization,
    shape: &SpatialShape,
    period: &PeriodSpec,
    k: usize,
    exact: (f64, f64),
    discrete: (&[f64], Option<&[f64]>),
) -> ErrorNorms {
    let part = |a: f64, v: &[f64]| {
        let value = move |x: &Point3<f64>| shape.value(x) * a;
        let curl = move |x: &Point3<f64>| shape.curl(x) * a;
        let field = AnalyticField { value: &value, curl: &curl };
        field_norms_mixed(&d.mesh, &d.geometry, &d.dofs, Some(&field), Some(v), None)
    };
    let (l2c, curlc) = part(exact.0, discrete.0);
    if k == 0 {
        let t = period.period;
        return ErrorNorms { seminorm_sq: t * curlc, norm_sq: t * (l2c + curlc) };
    }
    let (l2s, curls) = part(exact.1, discrete.1.expect("sine part"));
    let (l2, curl) = (l2c + l2s, curlc + curls);
    let (w, kw) = (0.5 * period.period, period.frequency(k));
    ErrorNorms { seminorm_sq: w * (kw * l2 + curl), norm_sq: w * ((1.0 + kw) * l2 + curl) }
}

/// Exact contribution of the modes `N+1..` that no discrete field carries.
pub fn tail_error(shape: &SpatialShape, period: &PeriodSpec, amp: &ModeAmplitudes) -> ErrorNorms {
    let (s2, c2) = (shape.norm_sq(), shape.curl_norm_sq());
    let mut out = ErrorNorms { seminorm_sq: 0.0, norm_sq: 0.0 };
    for (k, &(a, b)) in amp.coeffs.iter().enumerate().skip(period.truncation + 1) {
        let e = a * a + b * b;
        let kw = period.frequency(k);
        out.seminorm_sq += 0.5 * period.period * e * (kw * s2 + c2);
        out.norm_sq += 0.5 * period.period * e * ((1.0 + kw) * s2 + c2);
    }
    out
}

/// Errors of a discrete multiharmonic field against exact amplitudes:
/// per retained mode, plus the total including the truncation tail.
pub fn field_error(
    d: &Discretization,
    shape: &SpatialShape,
    period: &PeriodSpec,
    amp: &ModeAmplitudes,
    eta: &FourierField,
) -> Result<(Vec<ErrorNorms>, ErrorNorms)> {
    if amp.coeffs.len() <= period.truncation || eta.truncation() != period.truncation {
        return Err(Error::MissingMode(period.truncation));
    }
    let per_mode: Vec<ErrorNorms> = (0..=period.truncation)
        .map(|k| {
            let disc = if k == 0 {
                (&eta.mode0[..], None)
            } else {
                (&eta.modes[k - 1].0[..], Some(&eta.modes[k - 1].1[..]))
            };
            mode_error(d, shape, period, k, amp.coeffs[k], disc)
        })
        .collect();
    let tail = tail_error(shape, period, amp);
    let total = per_mode.iter().fold(tail, |acc, e| ErrorNorms {
        seminorm_sq: acc.seminorm_sq + e.seminorm_sq,
        norm_sq: acc.norm_sq + e.norm_sq,
    });
    Ok((per_mode, total))
}

/// Default Friedrichs constant `1/√μ₁` of the box, `μ₁` the smallest
/// Maxwell eigenvalue `π²(1/L₁² + 1/L₂²)` over the two longest sides.
pub fn default_friedrichs(domain: &BoxDomain) -> f64 {
    let mut l = domain.lengths();
    l.sort_by(|a, b| b.partial_cmp(a).expect("finite lengths"));
    1.0 / (PI * (1.0 / (l[0] * l[0]) + 1.0 / (l[1] * l[1])).sqrt())
}
