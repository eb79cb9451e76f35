//! Quadrature rules on intervals and tetrahedra.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Chebyshev-like initial guess, then Newton on P_n
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Composite Gauss-Legendre rule on `[a, b]` with `panels` equal panels.
pub fn composite_gauss(a: f64, b: f64, panels: usize, points: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(points);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * points);
    for p in 0..panels {
        let left = a + h * p as f64;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((left + 0.5 * h * (xi + 1.0), 0.5 * h * wi));
        }
    }
    out
}

/// Tetrahedral rule in barycentric coordinates; weights sum to one and are
/// multiplied by the tet volume at use.
#[derive(Debug, Clone)]
pub struct TetRule {
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl TetRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 4], f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    /// Conical product (collapsed Gauss-Legendre) rule with the given point
    /// counts per collapsed direction; exact for total degree
    /// `min(2*nu - 3, 2*nv - 2, 2*nw - 1)`.
    pub fn collapsed(nu: usize, nv: usize, nw: usize) -> TetRule {
        let (xu, wu) = gauss_legendre(nu);
        let (xv, wv) = gauss_legendre(nv);
        let (xw, ww) = gauss_legendre(nw);
        let map = |x: f64| 0.5 * (x + 1.0);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (a, wa) in xu.iter().zip(&wu) {
            let u = map(*a);
            for (b, wb) in xv.iter().zip(&wv) {
                let v = map(*b);
                for (c, wc) in xw.iter().zip(&ww) {
                    let w = map(*c);
                    let x = u;
                    let y = (1.0 - u) * v;
                    let z = (1.0 - u) * (1.0 - v) * w;
                    let jac = (1.0 - u) * (1.0 - u) * (1.0 - v);
                    // 1/8 from the interval maps, 6 normalizes the reference volume
                    weights.push(6.0 * 0.125 * wa * wb * wc * jac);
                    points.push([1.0 - x - y - z, x, y, z]);
                }
            }
        }
        let degree = (2 * nu - 3).min(2 * nv - 2).min(2 * nw - 1);
        TetRule { points, weights, degree }
    }
}

/// Symmetric 4-point rule, exact for quadratics.
pub fn tet_degree2() -> &'static TetRule {
    static RULE: OnceLock<TetRule> = OnceLock::new();
    RULE.get_or_init(|| {
        let a = 0.585_410_196_624_968_5;
        let b = 0.138_196_601_125_010_5;
        TetRule {
            points: vec![[a, b, b, b], [b, a, b, b], [b, b, a, b], [b, b, b, a]],
            weights: vec![0.25; 4],
            degree: 2,
        }
    })
}

/// Degree-5 rule used for loads and norms involving analytic fields.
pub fn tet_degree5() -> &'static TetRule {
    static RULE: OnceLock<TetRule> = OnceLock::new();
    RULE.get_or_init(|| TetRule::collapsed(4, 4, 3))
}
