//! Fourier-in-time machinery: coefficient extraction, Parseval remainders,
//! the perpendicular map and the half-time weighted products and norms.
//!
//! A real `T`-periodic signal is expanded as
//! `v(t) = v0 + Σ_k (v_k^c cos kωt + v_k^s sin kωt)`, `ω = 2π/T`, with
//! `v_k^c = (2/T)∫ v cos kωt`, `v_k^s = (2/T)∫ v sin kωt` and the mean
//! `v0 = (1/T)∫ v`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::composite_gauss;
use crate::sparse::SparseSym;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodSpec {
    pub period: f64,
    pub omega: f64,
    pub truncation: usize,
}

impl PeriodSpec {
    pub fn new(period: f64, truncation: usize) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidArgument(format!("period must be positive, got {period}")));
        }
        Ok(PeriodSpec { period, omega: 2.0 * PI / period, truncation })
    }

    /// Weight of mode `k` in space-time L² sums: `T` for the mean, `T/2` otherwise.
    pub fn mode_weight(&self, k: usize) -> f64 {
        if k == 0 {
            self.period
        } else {
            0.5 * self.period
        }
    }

    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 * self.omega
    }
}

/// A scalar time signal.
pub trait TimeSignal: Sync {
    fn eval(&self, t: f64) -> f64;
}

impl<F: Fn(f64) -> f64 + Sync> TimeSignal for F {
    fn eval(&self, t: f64) -> f64 {
        self(t)
    }
}

/// One term `e^{rate t} (cos_amp cos(freq t) + sin_amp sin(freq t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpTrigTerm {
    #[serde(default)]
    pub rate: f64,
    pub freq: f64,
    #[serde(default, rename = "cos")]
    pub cos_amp: f64,
    #[serde(default, rename = "sin")]
    pub sin_amp: f64,
}

/// Finite sum of exponentially modulated trigonometric terms. Pure
/// trigonometric polynomials are the `rate = 0` case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpTrig {
    pub terms: Vec<ExpTrigTerm>,
}

impl TimeSignal for ExpTrig {
    fn eval(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|s| (s.rate * t).exp() * (s.cos_amp * (s.freq * t).cos() + s.sin_amp * (s.freq * t).sin()))
            .sum()
    }
}

impl ExpTrig {
    pub fn single(rate: f64, freq: f64, cos_amp: f64, sin_amp: f64) -> Self {
        ExpTrig { terms: vec![ExpTrigTerm { rate, freq, cos_amp, sin_amp }] }
    }

    /// Closed-form Fourier coefficients over `[0, T]`.
    pub fn exact_coeff(&self, k: usize, period: &PeriodSpec) -> (f64, f64) {
        let tt = period.period;
        let kw = period.frequency(k);
        // ∫_0^T e^{z t} dt
        let integral = |z: Complex64| {
            if z.norm() < 1e-300 {
                Complex64::new(tt, 0.0)
            } else {
                ((z * tt).exp() - 1.0) / z
            }
        };
        // J = ∫ g e^{-i kω t} dt with g = ½[(A − iB) e^{(r+if)t} + (A + iB) e^{(r−if)t}]
        let mut j = Complex64::new(0.0, 0.0);
        for s in &self.terms {
            let a = Complex64::new(s.cos_amp, -s.sin_amp);
            j += 0.5 * a * integral(Complex64::new(s.rate, s.freq - kw));
            j += 0.5 * a.conj() * integral(Complex64::new(s.rate, -s.freq - kw));
        }
        if k == 0 {
            (j.re / tt, 0.0)
        } else {
            (2.0 / tt * j.re, -2.0 / tt * j.im)
        }
    }
}

/// Composite Gauss-Legendre rule used for coefficient integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeQuadrature {
    pub panels: usize,
    pub points: usize,
}

impl Default for TimeQuadrature {
    fn default() -> Self {
        TimeQuadrature { panels: 10, points: 8 }
    }
}

impl TimeQuadrature {
    pub fn len(&self) -> usize {
        self.panels * self.points
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn samples(&self, g: &dyn TimeSignal, period: &PeriodSpec) -> Result<Vec<(f64, f64, f64)>> {
        composite_gauss(0.0, period.period, self.panels, self.points)
            .into_iter()
            .map(|(t, w)| {
                let v = g.eval(t);
                if v.is_finite() {
                    Ok((t, w, v))
                } else {
                    Err(Error::NonFiniteSignal(t))
                }
            })
            .collect()
    }
}

/// `(c_k, s_k)` of `g` by composite Gauss quadrature; `k = 0` returns `(mean, 0)`.
pub fn fourier_coeff(g: &dyn TimeSignal, k: usize, period: &PeriodSpec, quad: &TimeQuadrature) -> Result<(f64, f64)> {
    if quad.len() < 4 * (k + 1) {
        return Err(Error::InvalidArgument(format!(
            "{} time samples are too few for mode {k} (need at least {})",
            quad.len(),
            4 * (k + 1)
        )));
    }
    let samples = quad.samples(g, period)?;
    Ok(coeff_from_samples(&samples, k, period))
}

fn coeff_from_samples(samples: &[(f64, f64, f64)], k: usize, period: &PeriodSpec) -> (f64, f64) {
    let kw = period.frequency(k);
    if k == 0 {
        let mean = samples.iter().map(|(_, w, v)| w * v).sum::<f64>() / period.period;
        return (mean, 0.0);
    }
    let scale = 2.0 / period.period;
    let c = samples.iter().map(|(t, w, v)| w * v * (kw * t).cos()).sum::<f64>();
    let s = samples.iter().map(|(t, w, v)| w * v * (kw * t).sin()).sum::<f64>();
    (scale * c, scale * s)
}

/// All coefficients `0..=N` with a single pass of signal evaluations.
pub fn fourier_coeffs(g: &dyn TimeSignal, period: &PeriodSpec, quad: &TimeQuadrature) -> Result<Vec<(f64, f64)>> {
    let n = period.truncation;
    if quad.len() < 4 * (n + 1) {
        return Err(Error::InvalidArgument(format!("{} time samples are too few for N = {n}", quad.len())));
    }
    let samples = quad.samples(g, period)?;
    Ok((0..=n).map(|k| coeff_from_samples(&samples, k, period)).collect())
}

/// `∫_0^T g(t)² dt`
pub fn signal_energy(g: &dyn TimeSignal, period: &PeriodSpec, quad: &TimeQuadrature) -> Result<f64> {
    Ok(quad.samples(g, period)?.iter().map(|(_, w, v)| w * v * v).sum())
}

/// Parseval tail `(T/2) Σ_{k>N} (c_k² + s_k²) · ‖s‖²_Ω` of separable data
/// `g(t) s(x)`, computed by subtracting the truncated energy from the total.
pub fn remainder(g: &dyn TimeSignal, spatial_norm_sq: f64, period: &PeriodSpec, quad: &TimeQuadrature) -> Result<f64> {
    let energy = signal_energy(g, period, quad)?;
    let coeffs = fourier_coeffs(g, period, quad)?;
    let truncated = truncated_energy(&coeffs, period);
    let tail = energy - truncated;
    if tail < -1e-10 * energy {
        return Err(Error::InconsistentRemainder(tail));
    }
    Ok(tail.max(0.0) * spatial_norm_sq)
}

/// `T·c0² + (T/2) Σ_{k=1..N} (c_k² + s_k²)`
pub fn truncated_energy(coeffs: &[(f64, f64)], period: &PeriodSpec) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(k, (c, s))| period.mode_weight(k) * (c * c + s * s))
        .sum()
}

/// Discrete multiharmonic field: the mean (cosine) vector and one
/// `(cosine, sine)` pair of coefficient vectors per mode `k = 1..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierField {
    pub mode0: Vec<f64>,
    pub modes: Vec<(Vec<f64>, Vec<f64>)>,
}

impl FourierField {
    pub fn zeros(dim: usize, truncation: usize) -> Self {
        FourierField { mode0: vec![0.0; dim], modes: vec![(vec![0.0; dim], vec![0.0; dim]); truncation] }
    }

    pub fn dim(&self) -> usize {
        self.mode0.len()
    }

    pub fn truncation(&self) -> usize {
        self.modes.len()
    }

    fn check_dims(&self) -> Result<()> {
        let d = self.dim();
        for (c, s) in &self.modes {
            for v in [c, s] {
                if v.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, found: v.len() });
                }
            }
        }
        Ok(())
    }

    /// `(c, s) ↦ (−s, c)` modewise; the mean has no perpendicular part.
    pub fn perp(&self) -> FourierField {
        FourierField {
            mode0: vec![0.0; self.dim()],
            modes: self.modes.iter().map(|(c, s)| (s.iter().map(|x| -x).collect(), c.clone())).collect(),
        }
    }

    pub fn sub(&self, other: &FourierField) -> Result<FourierField> {
        if self.dim() != other.dim() || self.truncation() != other.truncation() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
        Ok(FourierField {
            mode0: d(&self.mode0, &other.mode0),
            modes: self.modes.iter().zip(&other.modes).map(|((a, b), (c, e))| (d(a, c), d(b, e))).collect(),
        })
    }

    /// Value `Σ_k [v_k^c cos kωt + v_k^s sin kωt]` at time `t`.
    pub fn eval_at(&self, t: f64, period: &PeriodSpec) -> Vec<f64> {
        let mut out = self.mode0.clone();
        for (i, (c, s)) in self.modes.iter().enumerate() {
            let kw = period.frequency(i + 1);
            let (ct, st) = ((kw * t).cos(), (kw * t).sin());
            for (o, (a, b)) in out.iter_mut().zip(c.iter().zip(s)) {
                *o += a * ct + b * st;
            }
        }
        out
    }
}

/// `(plain, perp)` with `plain = (T/2) Σ kω (u_k, v_k)_σ` and
/// `perp = (T/2) Σ kω (u_k, v_k^⊥)_σ`, the σ-pairing given by `weight`.
///
/// `plain(v, v)` is the squared half-time seminorm; `perp(v, v) = 0`.
/// In time-domain terms, `perp(u, v) = ∫ σ ∂_t u · v` and
/// `plain(u, v) = −∫ σ ∂_t u · v^⊥`.
pub fn halftime_products(u: &FourierField, v: &FourierField, weight: &SparseSym, period: &PeriodSpec) -> Result<(f64, f64)> {
    u.check_dims()?;
    v.check_dims()?;
    if u.dim() != v.dim() || u.dim() != weight.dim() {
        return Err(Error::DimensionMismatch { expected: u.dim(), found: v.dim().max(weight.dim()) });
    }
    if u.truncation() != v.truncation() {
        return Err(Error::DimensionMismatch { expected: u.truncation(), found: v.truncation() });
    }
    let mut plain = 0.0;
    let mut perp = 0.0;
    for (i, ((uc, us), (vc, vs))) in u.modes.iter().zip(&v.modes).enumerate() {
        let kw = period.frequency(i + 1);
        let (wvc, wvs) = (weight.mul_vec(vc), weight.mul_vec(vs));
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        plain += kw * (dot(uc, &wvc) + dot(us, &wvs));
        // v^⊥ = (−v^s, v^c)
        perp += kw * (-dot(uc, &wvs) + dot(us, &wvc));
    }
    Ok((0.5 * period.period * plain, 0.5 * period.period * perp))
}

/// Per-mode spatial ingredients `(‖v_k‖²_Ω, ‖curl v_k‖²_Ω)`, cosine and sine
/// parts already summed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModeNorms {
    pub l2: f64,
    pub curl: f64,
}

/// `(|v|², ‖v‖²)` in the half-time H(curl) seminorm and norm:
/// `|v|² = T‖curl v0‖² + (T/2) Σ (kω‖v_k‖² + ‖curl v_k‖²)` and
/// `‖v‖² = T(‖v0‖² + ‖curl v0‖²) + (T/2) Σ ((1+kω)‖v_k‖² + ‖curl v_k‖²)`.
pub fn spacetime_from_modes(mode0: ModeNorms, modes: &[ModeNorms], period: &PeriodSpec) -> (f64, f64) {
    let mut semi = period.period * mode0.curl;
    let mut norm = period.period * (mode0.l2 + mode0.curl);
    for (i, m) in modes.iter().enumerate() {
        let kw = period.frequency(i + 1);
        semi += 0.5 * period.period * (kw * m.l2 + m.curl);
        norm += 0.5 * period.period * ((1.0 + kw) * m.l2 + m.curl);
    }
    (semi, norm)
}

/// Seminorm and norm of a discrete field from its mass and (unweighted)
/// curl-curl matrices.
pub fn spacetime_norms(e: &FourierField, mass: &SparseSym, curl_curl: &SparseSym, period: &PeriodSpec) -> Result<(f64, f64)> {
    e.check_dims()?;
    if mass.dim() != e.dim() {
        return Err(Error::DimensionMismatch { expected: mass.dim(), found: e.dim() });
    }
    let norms = |v: &[f64]| ModeNorms { l2: mass.quad_form(v, v), curl: curl_curl.quad_form(v, v) };
    let m0 = norms(&e.mode0);
    let modes: Vec<ModeNorms> = e
        .modes
        .iter()
        .map(|(c, s)| {
            let (a, b) = (norms(c), norms(s));
            ModeNorms { l2: a.l2 + b.l2, curl: a.curl + b.curl }
        })
        .collect();
    Ok(spacetime_from_modes(m0, &modes, period))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::TripletBuilder;
    use proptest::prelude::*;

    fn two_pi() -> PeriodSpec {
        PeriodSpec::new(2.0 * PI, 3).unwrap()
    }

    fn e_sin() -> ExpTrig {
        ExpTrig::single(1.0, 1.0, 0.0, 1.0)
    }

    #[test]
    fn period_invariants() {
        let p = PeriodSpec::new(0.37, 2).unwrap();
        assert!((p.omega * p.period - 2.0 * PI).abs() < 1e-14);
        assert!(PeriodSpec::new(0.0, 1).is_err());
        assert!(PeriodSpec::new(-1.0, 1).is_err());
    }

    #[test]
    fn coefficient_examples() {
        let p = two_pi();
        let q = TimeQuadrature::default();
        let (c, s) = fourier_coeff(&|t: f64| t.cos(), 1, &p, &q).unwrap();
        assert!((c - 1.0).abs() < 1e-12 && s.abs() < 1e-12);
        let one = |_t: f64| 1.0;
        assert!((fourier_coeff(&one, 0, &p, &q).unwrap().0 - 1.0).abs() < 1e-14);
        for k in 1..4 {
            let (c, s) = fourier_coeff(&one, k, &p, &q).unwrap();
            assert!(c.abs() < 1e-13 && s.abs() < 1e-13);
        }
        let e2 = (2.0 * PI).exp();
        let (c, s) = fourier_coeff(&e_sin(), 1, &p, &q).unwrap();
        assert!((c - (1.0 - e2) / (5.0 * PI)).abs() < 1e-9);
        assert!((s - 2.0 / (5.0 * PI) * (e2 - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn exact_coefficients_match_closed_form() {
        let p = two_pi();
        let e2 = (2.0 * PI).exp();
        let (c, s) = e_sin().exact_coeff(1, &p);
        assert!((c - (1.0 - e2) / (5.0 * PI)).abs() < 1e-10);
        assert!((s - 2.0 / (5.0 * PI) * (e2 - 1.0)).abs() < 1e-10);
        // mean of e^t sin t over [0, 2π] is (1 − e^{2π}) / (4π)
        let (m, _) = e_sin().exact_coeff(0, &p);
        assert!((m - (1.0 - e2) / (4.0 * PI)).abs() < 1e-11);
        let q = TimeQuadrature::default();
        let g = ExpTrig::single(1.0, 1.0, 1.0, 2.0 * PI * PI + 1.0);
        for k in 0..6 {
            let (a, b) = g.exact_coeff(k, &p);
            let (c, d) = fourier_coeff(&g, k, &p, &q).unwrap();
            assert!((a - c).abs() < 1e-9 * (1.0 + a.abs()) && (b - d).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = two_pi();
        let q = TimeQuadrature { panels: 1, points: 4 };
        assert!(fourier_coeff(&|t: f64| t, 1, &p, &q).is_err());
        assert!(matches!(
            fourier_coeff(&|_t: f64| f64::NAN, 0, &p, &TimeQuadrature::default()),
            Err(Error::NonFiniteSignal(_))
        ));
    }

    #[test]
    fn remainder_examples() {
        let q = TimeQuadrature::default();
        let p1 = PeriodSpec::new(2.0 * PI, 1).unwrap();
        let r = remainder(&|t: f64| t.sin(), 0.7, &p1, &q).unwrap();
        assert!(r.abs() < 1e-12);
        let r = remainder(&|t: f64| t.sin() + (2.0 * t).sin(), 0.7, &p1, &q).unwrap();
        assert!((r - PI * 0.7).abs() < 1e-11);
    }

    #[test]
    fn remainder_matches_tail_summation() {
        let q = TimeQuadrature::default();
        let g = e_sin();
        let mut last = f64::INFINITY;
        for n in 0..6 {
            let p = PeriodSpec::new(2.0 * PI, n).unwrap();
            let r = remainder(&g, 1.0, &p, &q).unwrap();
            assert!(r <= last);
            last = r;
            let tail: f64 = ((n + 1)..=100_000)
                .map(|k| {
                    let (c, s) = g.exact_coeff(k, &p);
                    PI * (c * c + s * s)
                })
                .sum();
            assert!((r - tail).abs() <= 1e-6 * tail, "N={n}: {r} vs {tail}");
        }
    }

    fn diag(w: &[f64]) -> SparseSym {
        let mut b = TripletBuilder::new(w.len(), w.len());
        for (i, &x) in w.iter().enumerate() {
            b.push(i, i, x);
        }
        b.build(true)
    }

    #[test]
    fn halftime_product_examples() {
        let p = PeriodSpec::new(2.0 * PI, 1).unwrap();
        let mut v = FourierField::zeros(2, 1);
        v.modes[0] = (vec![1.0, 0.0], vec![0.0, 1.0]);
        let w = diag(&[1.0, 1.0]);
        let (plain, perp) = halftime_products(&v, &v, &w, &p).unwrap();
        assert!((plain - 2.0 * PI).abs() < 1e-14);
        assert!(perp.abs() < 1e-14);
        let bad = FourierField::zeros(3, 1);
        assert!(halftime_products(&v, &bad, &w, &p).is_err());
    }

    #[test]
    fn perp_is_isometric_quarter_turn() {
        let mut v = FourierField::zeros(3, 2);
        v.modes[0] = (vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.0]);
        v.modes[1] = (vec![0.0, 2.0, -3.0], vec![4.0, 0.5, 1.0]);
        let pp = v.perp().perp();
        for (a, b) in pp.modes.iter().zip(&v.modes) {
            assert!(a.0.iter().zip(&b.0).all(|(x, y)| *x == -y));
            assert!(a.1.iter().zip(&b.1).all(|(x, y)| *x == -y));
        }
        let m = diag(&[1.0, 2.0, 0.5]);
        let p = PeriodSpec::new(1.3, 2).unwrap();
        let a = spacetime_norms(&v, &m, &m, &p).unwrap();
        let mut vz = v.clone();
        vz.mode0 = vec![0.0; 3];
        let b = spacetime_norms(&vz, &m, &m, &p).unwrap();
        let c = spacetime_norms(&v.perp(), &m, &m, &p).unwrap();
        assert!((b.0 - c.0).abs() < 1e-13 && (b.1 - c.1).abs() < 1e-13);
        assert!(a.1 >= b.1);
    }

    #[test]
    fn spacetime_norm_examples() {
        let p = PeriodSpec::new(2.0 * PI, 1).unwrap();
        let z = spacetime_from_modes(ModeNorms::default(), &[ModeNorms::default()], &p);
        assert_eq!(z, (0.0, 0.0));
        let (s, n) = spacetime_from_modes(ModeNorms::default(), &[ModeNorms { l2: 1.0, curl: 0.0 }], &p);
        assert!((s - PI).abs() < 1e-14 && (n - 2.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn products_agree_with_time_quadrature() {
        // scalar "fields" of dimension 2 with σ weights, trigonometric in time
        let p = PeriodSpec::new(3.0, 2).unwrap();
        let w = [1.5, 0.5];
        let mut y = FourierField::zeros(2, 2);
        let mut v = FourierField::zeros(2, 2);
        y.mode0 = vec![0.3, -0.2];
        y.modes[0] = (vec![1.0, 2.0], vec![-0.5, 0.25]);
        y.modes[1] = (vec![0.1, -1.0], vec![0.7, 0.3]);
        v.mode0 = vec![1.0, 1.0];
        v.modes[0] = (vec![0.4, -0.3], vec![1.2, 0.8]);
        v.modes[1] = (vec![-0.6, 0.2], vec![0.5, -1.1]);
        let (plain, perp) = halftime_products(&y, &v, &diag(&w), &p).unwrap();

        let dt = |f: &FourierField, t: f64| {
            let mut out = vec![0.0; 2];
            for (i, (c, s)) in f.modes.iter().enumerate() {
                let kw = p.frequency(i + 1);
                for d in 0..2 {
                    out[d] += kw * (-c[d] * (kw * t).sin() + s[d] * (kw * t).cos());
                }
            }
            out
        };
        let mut time_perp = 0.0;
        let mut time_plain = 0.0;
        let vp = v.perp();
        for (t, wt) in composite_gauss(0.0, p.period, 8, 8) {
            let d = dt(&y, t);
            let (a, b) = (v.eval_at(t, &p), vp.eval_at(t, &p));
            for i in 0..2 {
                time_perp += wt * w[i] * d[i] * a[i];
                time_plain += wt * w[i] * d[i] * b[i];
            }
        }
        assert!((perp - time_perp).abs() < 1e-12, "{perp} {time_perp}");
        assert!((plain + time_plain).abs() < 1e-12, "{plain} {time_plain}");
    }

    #[test]
    fn spacetime_norms_against_time_quadrature() {
        // seminorm terms: L²(Q) norm of curl plus the half-time part
        let p = PeriodSpec::new(2.0, 2).unwrap();
        let m = diag(&[1.0, 3.0]);
        let kk = diag(&[2.0, 0.5]);
        let mut e = FourierField::zeros(2, 2);
        e.mode0 = vec![0.5, -1.0];
        e.modes[0] = (vec![1.0, 0.0], vec![0.2, 0.4]);
        e.modes[1] = (vec![-0.3, 0.8], vec![0.0, 1.0]);
        let (semi, norm) = spacetime_norms(&e, &m, &kk, &p).unwrap();
        let (mut l2q, mut curlq) = (0.0, 0.0);
        for (t, w) in composite_gauss(0.0, p.period, 8, 8) {
            let v = e.eval_at(t, &p);
            l2q += w * (m.quad_form(&v, &v));
            curlq += w * kk.quad_form(&v, &v);
        }
        let (half, _) = halftime_products(&e, &e, &m, &p).unwrap();
        assert!((semi - (curlq + half)).abs() < 1e-12);
        assert!((norm - (curlq + half + l2q)).abs() < 1e-12);
    }

    fn field_strategy(dim: usize, n: usize) -> impl Strategy<Value = FourierField> {
        let v = move || proptest::collection::vec(-10.0..10.0f64, dim);
        (v(), proptest::collection::vec((v(), v()), n)).prop_map(|(mode0, modes)| FourierField { mode0, modes })
    }

    proptest! {
        #[test]
        fn perp_pairing_vanishes(v in field_strategy(4, 3), w in proptest::collection::vec(0.1..5.0f64, 4), t in 0.5..10.0f64) {
            let p = PeriodSpec::new(t, 3).unwrap();
            let (plain, perp) = halftime_products(&v, &v, &diag(&w), &p).unwrap();
            prop_assert!(perp.abs() <= 1e-12 * (1.0 + plain.abs()));
            prop_assert!(plain >= 0.0);
        }

        #[test]
        fn parseval_for_trig_polynomials(coeffs in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 4), t in 0.5..10.0f64) {
            let p = PeriodSpec::new(t, 3).unwrap();
            let w = p.omega;
            let g = |x: f64| coeffs.iter().enumerate().map(|(k, (c, s))| {
                let kw = k as f64 * w;
                c * (kw * x).cos() + if k == 0 { 0.0 } else { s * (kw * x).sin() }
            }).sum::<f64>();
            let q = TimeQuadrature::default();
            let energy = signal_energy(&g, &p, &q).unwrap();
            let mut exact: Vec<(f64, f64)> = coeffs.clone();
            exact[0].1 = 0.0;
            prop_assert!((energy - truncated_energy(&exact, &p)).abs() <= 1e-8 * (1.0 + energy));
            prop_assert!(remainder(&g, 1.0, &p, &q).unwrap() <= 1e-8 * (1.0 + energy));
        }
    }
}
