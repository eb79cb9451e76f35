//! Preconditioned MINRES for symmetric (possibly indefinite) systems with
//! an SPD preconditioner, following the Paige-Saunders recurrence.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::sparse::dot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinresConfig {
    pub tol: f64,
    pub maxit: usize,
    /// Record `(iteration, relative residual)` pairs.
    #[serde(default)]
    pub trace: bool,
}

impl Default for MinresConfig {
    fn default() -> Self {
        MinresConfig { tol: 1e-10, maxit: 2000, trace: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final residual in the `P⁻¹` norm relative to that of `b`.
    pub relative_residual: f64,
    pub wall_time: f64,
    pub converged: bool,
    /// Set when the Lanczos process broke down before reaching the tolerance.
    pub breakdown: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<(usize, f64)>,
}

/// Solves `A x = b` from `x = 0`. `apply_a(v, out)` computes `out = A v`,
/// `apply_pinv(r, out)` computes `out = P⁻¹ r`.
pub fn minres(
    apply_a: impl Fn(&[f64], &mut [f64]),
    apply_pinv: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    cfg: &MinresConfig,
) -> (Vec<f64>, SolveStats) {
    let start = Instant::now();
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut stats = SolveStats {
        iterations: 0,
        relative_residual: 0.0,
        wall_time: 0.0,
        converged: true,
        breakdown: false,
        trace: Vec::new(),
    };

    let mut r1 = b.to_vec();
    let mut y = vec![0.0; n];
    apply_pinv(&r1, &mut y);
    let beta1 = dot(&r1, &y);
    if beta1 <= 0.0 {
        // b = 0 (or P not SPD on b, which only happens for b = 0 in exact arithmetic)
        stats.converged = beta1 == 0.0;
        stats.breakdown = beta1 < 0.0;
        stats.wall_time = start.elapsed().as_secs_f64();
        return (x, stats);
    }
    let beta1 = beta1.sqrt();

    let mut r2 = r1.clone();
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln) = (0.0f64, 0.0f64);
    let mut phibar = beta1;
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    stats.converged = false;

    for itn in 1..=cfg.maxit {
        let s = 1.0 / beta;
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = s * yi;
        }
        apply_a(&v, &mut y);
        if itn >= 2 {
            let f = beta / oldb;
            for (yi, ri) in y.iter_mut().zip(&r1) {
                *yi -= f * ri;
            }
        }
        let alfa = dot(&v, &y);
        let f = alfa / beta;
        for (yi, ri) in y.iter_mut().zip(&r2) {
            *yi -= f * ri;
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        apply_pinv(&r2, &mut y);
        oldb = beta;
        let bsq = dot(&r2, &y);
        if bsq < 0.0 {
            stats.breakdown = true;
            stats.iterations = itn;
            break;
        }
        beta = bsq.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }

        let rel = phibar / beta1;
        stats.iterations = itn;
        stats.relative_residual = rel;
        if cfg.trace {
            stats.trace.push((itn, rel));
        }
        if rel <= cfg.tol {
            stats.converged = true;
            break;
        }
        if beta <= f64::MIN_POSITIVE * beta1 {
            // Krylov space exhausted: x is exact up to rounding
            stats.converged = rel <= cfg.tol;
            stats.breakdown = !stats.converged;
            break;
        }
    }
    stats.wall_time = start.elapsed().as_secs_f64();
    (x, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_apply(a: &DMatrix<f64>) -> impl Fn(&[f64], &mut [f64]) + '_ {
        move |v, out| {
            let r = a * DVector::from_column_slice(v);
            out.copy_from_slice(r.as_slice());
        }
    }

    fn identity(v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(v);
    }

    #[test]
    fn identity_converges_in_one_step() {
        let a = DMatrix::<f64>::identity(5, 5);
        let b = [1.0, -2.0, 3.0, 0.5, 0.0];
        let (x, st) = minres(dense_apply(&a), identity, &b, &MinresConfig::default());
        assert_eq!(st.iterations, 1);
        assert!(st.converged);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn indefinite_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        let (x, st) = minres(dense_apply(&a), identity, &[1.0, 1.0], &MinresConfig::default());
        assert!(st.converged);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs() {
        let a = DMatrix::<f64>::identity(3, 3);
        let (x, st) = minres(dense_apply(&a), identity, &[0.0; 3], &MinresConfig::default());
        assert!(st.converged && st.iterations == 0);
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn random_symmetric_against_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..10 {
            let n = 20;
            let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let mut a = &m + m.transpose();
            for i in 0..n {
                a[(i, i)] += if i % 2 == 0 { 3.0 } else { -3.0 };
            }
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let exact = a.clone().lu().solve(&DVector::from_column_slice(&b)).unwrap();
            // SPD diagonal preconditioner |diag|
            let d: Vec<f64> = (0..n).map(|i| a[(i, i)].abs().max(0.5)).collect();
            let pinv = |r: &[f64], out: &mut [f64]| {
                for i in 0..r.len() {
                    out[i] = r[i] / d[i];
                }
            };
            let cfg = MinresConfig { tol: 1e-12, maxit: 500, trace: true };
            let (x, st) = minres(dense_apply(&a), pinv, &b, &cfg);
            assert!(st.converged, "trial {trial}");
            assert!(st.trace.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12)));
            let err = (DVector::from_vec(x) - &exact).norm() / exact.norm();
            assert!(err < 1e-8, "trial {trial}: {err}");
        }
    }

    #[test]
    fn maxit_flags_nonconvergence() {
        let n = 30;
        let a = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -1.0 }));
        let b = vec![1.0; n];
        let (_, st) = minres(dense_apply(&a), identity, &b, &MinresConfig { tol: 1e-14, maxit: 3, trace: false });
        assert!(!st.converged);
        assert_eq!(st.iterations, 3);
    }
}
