//! Lagrange bases on the reference triangle `{(s, t) : s, t >= 0, s + t <= 1}`,
//! triangle and edge quadrature, and 2x2 symmetric matrix helpers.

use crate::{Error, Result};

/// Equispaced Lagrange basis of degree `r`.
#[derive(Debug, Clone)]
pub struct ReferenceBasis {
    pub degree: usize,
    /// Lattice coordinates `(i, j)` of each node, located at `(i/r, j/r)`.
    pub lattice: Vec<[usize; 2]>,
    pub nodes: Vec<[f64; 2]>,
    /// Monomial exponents.
    exps: Vec<[usize; 2]>,
    /// `coef[m * n + i]`: coefficient of monomial `m` in basis function `i`.
    coef: Vec<f64>,
}

/// Values, gradients and Hessians (`[xx, xy, yy]`) of all basis functions at one point.
#[derive(Debug, Clone, Default)]
pub struct Tabulation {
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
    pub hessians: Vec<[f64; 3]>,
}

impl ReferenceBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if !(2..=4).contains(&degree) {
            return Err(Error::InvalidArgument(format!("degree {degree} not in {{2,3,4}}")));
        }
        let r = degree;
        let mut lattice = Vec::new();
        for j in 0..=r {
            for i in 0..=(r - j) {
                lattice.push([i, j]);
            }
        }
        let nodes: Vec<[f64; 2]> = lattice.iter().map(|&[i, j]| [i as f64 / r as f64, j as f64 / r as f64]).collect();
        let mut exps = Vec::new();
        for d in 0..=r {
            for b in 0..=d {
                exps.push([d - b, b]);
            }
        }
        let n = nodes.len();
        // Vandermonde V[i][m] = m-th monomial at node i; coef = V^{-1}.
        let mut vand = vec![0.0; n * n];
        for (i, p) in nodes.iter().enumerate() {
            for (m, e) in exps.iter().enumerate() {
                vand[i * n + m] = p[0].powi(e[0] as i32) * p[1].powi(e[1] as i32);
            }
        }
        let coef = invert_dense(&vand, n)?;
        Ok(Self { degree, lattice, nodes, exps, coef })
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn tabulate(&self, p: [f64; 2]) -> Tabulation {
        let mut t = Tabulation::default();
        self.tabulate_into(p, &mut t);
        t
    }

    pub fn tabulate_into(&self, p: [f64; 2], out: &mut Tabulation) {
        let n = self.dim();
        let r = self.degree;
        let mut ps = [1.0; 5];
        let mut pt = [1.0; 5];
        for k in 1..=r {
            ps[k] = ps[k - 1] * p[0];
            pt[k] = pt[k - 1] * p[1];
        }
        let pw = |a: usize, k: usize, pows: &[f64; 5]| -> f64 {
            if k > a {
                0.0
            } else {
                let mut c = 1.0;
                for q in 0..k {
                    c *= (a - q) as f64;
                }
                c * pows[a - k]
            }
        };
        let mut mv = vec![[0.0; 6]; n];
        for (m, &[a, b]) in self.exps.iter().enumerate() {
            mv[m] = [
                pw(a, 0, &ps) * pw(b, 0, &pt),
                pw(a, 1, &ps) * pw(b, 0, &pt),
                pw(a, 0, &ps) * pw(b, 1, &pt),
                pw(a, 2, &ps) * pw(b, 0, &pt),
                pw(a, 1, &ps) * pw(b, 1, &pt),
                pw(a, 0, &ps) * pw(b, 2, &pt),
            ];
        }
        out.values.clear();
        out.grads.clear();
        out.hessians.clear();
        for i in 0..n {
            let mut acc = [0.0; 6];
            for (m, row) in mv.iter().enumerate() {
                let c = self.coef[m * n + i];
                for q in 0..6 {
                    acc[q] += c * row[q];
                }
            }
            out.values.push(acc[0]);
            out.grads.push([acc[1], acc[2]]);
            out.hessians.push([acc[3], acc[4], acc[5]]);
        }
    }
}

/// Gauss-Jordan inverse with partial pivoting for small dense matrices (row-major).
pub fn invert_dense(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        if m[piv * n + col].abs() < 1e-14 {
            return Err(Error::StructurallySingular);
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
                inv.swap(piv * n + k, col * n + k);
            }
        }
        let d = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= d;
            inv[col * n + k] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = m[i * n + col];
                if f != 0.0 {
                    for k in 0..n {
                        m[i * n + k] -= f * m[col * n + k];
                        inv[i * n + k] -= f * inv[col * n + k];
                    }
                }
            }
        }
    }
    Ok(inv)
}

#[derive(Debug, Clone)]
pub struct QuadRule {
    /// Reference coordinates: `(s, t)` on the triangle, `[s, 0]` on the unit edge.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(k);
    let mut ws = Vec::with_capacity(k);
    for i in 0..k {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=k {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs.push(0.5 * (1.0 - x));
        ws.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    (xs, ws)
}

/// Collapsed tensor-product Gauss rule on the reference triangle; all weights positive.
pub fn triangle_rule(exactness: usize) -> Result<QuadRule> {
    if exactness > 11 {
        return Err(Error::InvalidArgument(format!("triangle exactness {exactness} > 11")));
    }
    let k = (exactness + 3) / 2;
    let (g, w) = gauss_legendre(k);
    let mut points = Vec::with_capacity(k * k);
    let mut weights = Vec::with_capacity(k * k);
    for (a, &t) in g.iter().enumerate() {
        for (b, &s) in g.iter().enumerate() {
            points.push([s * (1.0 - t), t]);
            weights.push(w[a] * w[b] * (1.0 - t));
        }
    }
    Ok(QuadRule { points, weights, exactness })
}

/// Gauss-Legendre rule on the unit edge `[0, 1]`.
pub fn edge_rule(exactness: usize) -> QuadRule {
    let k = exactness / 2 + 1;
    let (g, w) = gauss_legendre(k);
    QuadRule { points: g.iter().map(|&s| [s, 0.0]).collect(), weights: w, exactness }
}

/// Eigenvalues `(lambda_min, lambda_max)` of a symmetric 2x2 matrix.
pub fn eig_sym_2x2(a: [[f64; 2]; 2]) -> (f64, f64) {
    let mean = 0.5 * (a[0][0] + a[1][1]);
    let half = 0.5 * (a[0][0] - a[1][1]);
    let rad = half.hypot(a[0][1]);
    // avoid cancellation in the smaller-magnitude root
    let (lo, hi) = (mean - rad, mean + rad);
    let det = a[0][0] * a[1][1] - a[0][1] * a[0][1];
    if mean >= 0.0 && hi != 0.0 {
        (det / hi, hi)
    } else if mean < 0.0 && lo != 0.0 {
        (lo, det / lo)
    } else {
        (lo, hi)
    }
}

/// Symmetric PSD square root via the closed-form eigendecomposition.
pub fn sqrt_psd_2x2(m: [[f64; 2]; 2], tol: f64) -> Result<[[f64; 2]; 2]> {
    let (l0, l1) = eig_sym_2x2(m);
    if l0 < -tol {
        return Err(Error::InvalidArgument(format!("matrix not PSD (eigenvalue {l0:e})")));
    }
    let (s0, s1) = (l0.max(0.0).sqrt(), l1.max(0.0).sqrt());
    let b = m[0][1];
    if b == 0.0 {
        return Ok([[m[0][0].max(0.0).sqrt(), 0.0], [0.0, m[1][1].max(0.0).sqrt()]]);
    }
    // eigenvector of the largest eigenvalue
    let (mut e0, mut e1) = if (l1 - m[0][0]).abs() > (l1 - m[1][1]).abs() {
        (b, l1 - m[0][0])
    } else {
        (l1 - m[1][1], b)
    };
    let nrm = e0.hypot(e1);
    e0 /= nrm;
    e1 /= nrm;
    // S = s1 e e^T + s0 (I - e e^T)
    Ok([
        [s0 + (s1 - s0) * e0 * e0, (s1 - s0) * e0 * e1],
        [(s1 - s0) * e0 * e1, s0 + (s1 - s0) * e1 * e1],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    fn monomial_integral(a: usize, b: usize) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn partition_of_unity_and_kronecker() {
        for r in 2..=4 {
            let basis = ReferenceBasis::new(r).unwrap();
            let t = basis.tabulate([1.0 / 3.0, 1.0 / 3.0]);
            assert!((t.values.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            let gs = t.grads.iter().fold([0.0; 2], |s, g| [s[0] + g[0], s[1] + g[1]]);
            assert!(gs[0].abs() < 1e-11 && gs[1].abs() < 1e-11);
            let hs = t.hessians.iter().fold([0.0; 3], |s, h| [s[0] + h[0], s[1] + h[1], s[2] + h[2]]);
            assert!(hs.iter().all(|h| h.abs() < 1e-9));
            for (j, p) in basis.nodes.iter().enumerate() {
                let t = basis.tabulate(*p);
                for (i, v) in t.values.iter().enumerate() {
                    let d = if i == j { 1.0 } else { 0.0 };
                    assert!((v - d).abs() < 1e-12, "r={r} i={i} j={j} v={v}");
                }
            }
        }
    }

    #[test]
    fn rejects_unsupported_degree() {
        assert!(ReferenceBasis::new(1).is_err());
        assert!(ReferenceBasis::new(5).is_err());
    }

    #[test]
    fn gradients_and_hessians_match_finite_differences() {
        let pts = [[0.2, 0.3], [0.1, 0.7], [0.55, 0.25], [0.05, 0.05]];
        for r in 2..=4 {
            let basis = ReferenceBasis::new(r).unwrap();
            for p in pts {
                let t = basis.tabulate(p);
                let h = 1e-6;
                let xp = basis.tabulate([p[0] + h, p[1]]);
                let xm = basis.tabulate([p[0] - h, p[1]]);
                let yp = basis.tabulate([p[0], p[1] + h]);
                let ym = basis.tabulate([p[0], p[1] - h]);
                for i in 0..basis.dim() {
                    let gx = (xp.values[i] - xm.values[i]) / (2.0 * h);
                    let gy = (yp.values[i] - ym.values[i]) / (2.0 * h);
                    if r == 2 {
                        assert!((gx - t.grads[i][0]).abs() <= 1e-7);
                        assert!((gy - t.grads[i][1]).abs() <= 1e-7);
                    }
                }
                let h = 1e-4;
                let xp = basis.tabulate([p[0] + h, p[1]]);
                let xm = basis.tabulate([p[0] - h, p[1]]);
                let yp = basis.tabulate([p[0], p[1] + h]);
                let ym = basis.tabulate([p[0], p[1] - h]);
                let pp = basis.tabulate([p[0] + h, p[1] + h]);
                let pm = basis.tabulate([p[0] + h, p[1] - h]);
                let mp = basis.tabulate([p[0] - h, p[1] + h]);
                let mm = basis.tabulate([p[0] - h, p[1] - h]);
                for i in 0..basis.dim() {
                    let hxx = (xp.values[i] - 2.0 * t.values[i] + xm.values[i]) / (h * h);
                    let hyy = (yp.values[i] - 2.0 * t.values[i] + ym.values[i]) / (h * h);
                    let hxy = (pp.values[i] - pm.values[i] - mp.values[i] + mm.values[i]) / (4.0 * h * h);
                    assert!((hxx - t.hessians[i][0]).abs() <= 1e-5);
                    assert!((hxy - t.hessians[i][1]).abs() <= 1e-5);
                    assert!((hyy - t.hessians[i][2]).abs() <= 1e-5);
                }
            }
        }
    }

    #[test]
    fn triangle_rules_integrate_monomials() {
        for e in 0..=11 {
            let q = triangle_rule(e).unwrap();
            assert!(q.weights.iter().all(|&w| w > 0.0));
            assert!((q.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
            for d in 0..=e {
                for b in 0..=d {
                    let a = d - b;
                    let s: f64 = q
                        .points
                        .iter()
                        .zip(&q.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let exact = monomial_integral(a, b);
                    assert!((s - exact).abs() <= 1e-13 * exact, "e={e} a={a} b={b}");
                }
            }
        }
        assert!(triangle_rule(12).is_err());
        // x^2 v^3 with exactness 6
        let q = triangle_rule(6).unwrap();
        let s: f64 = q.points.iter().zip(&q.weights).map(|(p, w)| w * p[0].powi(2) * p[1].powi(3)).sum();
        assert!((s - 2.0 * 6.0 / 5040.0).abs() < 1e-16);
    }

    #[test]
    fn edge_rules_integrate_monomials() {
        for e in 0..=11 {
            let q = edge_rule(e);
            assert!(q.weights.iter().all(|&w| w > 0.0));
            for d in 0..=e {
                let s: f64 = q.points.iter().zip(&q.weights).map(|(p, w)| w * p[0].powi(d as i32)).sum();
                assert!((s - 1.0 / (d as f64 + 1.0)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gradient_gram_is_symmetric() {
        let basis = ReferenceBasis::new(3).unwrap();
        let q = triangle_rule(8).unwrap();
        let tabs: Vec<_> = q.points.iter().map(|&p| basis.tabulate(p)).collect();
        let n = basis.dim();
        for i in 0..n {
            for j in 0..n {
                let mut a = 0.0;
                let mut b = 0.0;
                for (t, w) in tabs.iter().zip(&q.weights) {
                    a += w * (t.grads[i][0] * t.grads[j][0] + t.grads[i][1] * t.grads[j][1]);
                    b += w * (t.grads[j][0] * t.grads[i][0] + t.grads[j][1] * t.grads[i][1]);
                }
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn eig_examples() {
        assert_eq!(eig_sym_2x2([[1.0, 0.0], [0.0, 1.0]]), (1.0, 1.0));
        let (a, b) = eig_sym_2x2([[0.0, 1.0], [1.0, 0.0]]);
        assert!((a + 1.0).abs() < 1e-15 && (b - 1.0).abs() < 1e-15);
        let (eps, m) = (0.1f64, 0.35f64);
        let mm = [[eps * m.powi(3), eps * m * m], [eps * m * m, eps * m]];
        let n = [[mm[0][1], mm[1][1] / 2.0], [mm[1][1] / 2.0, eps]];
        let (l0, l1) = eig_sym_2x2(n);
        let rt = (m.powi(4) - m * m + 1.0).sqrt();
        assert!((l0 - eps / 2.0 * (1.0 + m * m - rt)).abs() < 1e-13 * l0);
        assert!((l1 - eps / 2.0 * (1.0 + m * m + rt)).abs() < 1e-15);
        for l in [l0, l1] {
            let c = l * l - (n[0][0] + n[1][1]) * l + (n[0][0] * n[1][1] - n[0][1] * n[1][0]);
            assert!(c.abs() <= 1e-13 * l1 * l1);
        }
    }

    #[test]
    fn sqrt_examples() {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(sqrt_psd_2x2(id, 1e-14).unwrap(), id);
        assert_eq!(sqrt_psd_2x2([[0.0; 2]; 2], 1e-14).unwrap(), [[0.0; 2]; 2]);
        let (eps, m) = (0.1f64, 0.35f64);
        let mm = [[eps * m.powi(3), eps * m * m], [eps * m * m, eps * m]];
        let s = sqrt_psd_2x2(mm, 1e-14).unwrap();
        let mut res = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let ss = s[i][0] * s[0][j] + s[i][1] * s[1][j];
                res += (ss - mm[i][j]).powi(2);
            }
        }
        assert!(res.sqrt() <= 1e-14);
        let (l0, l1) = eig_sym_2x2(mm);
        assert!(l0.abs() < 1e-16);
        assert!((l1 - eps * m * (m * m + 1.0)).abs() < 1e-15);
        assert!(sqrt_psd_2x2([[1.0, 0.0], [0.0, -1.0]], 1e-14).is_err());
        let g = [[2.0, 0.7], [0.7, 0.5]];
        let s = sqrt_psd_2x2(g, 1e-14).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let ss = s[i][0] * s[0][j] + s[i][1] * s[1][j];
                assert!((ss - g[i][j]).abs() < 1e-14);
            }
        }
    }
}
