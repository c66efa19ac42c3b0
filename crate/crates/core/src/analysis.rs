//! Norms, errors against exact solutions, convergence rates, the cost
//! functional, decay diagnostics and closed-form constants.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::assembly::{dot2, facet_points, integrate_cells, mat_vec, HParams, PointData};
use crate::elements::{edge_rule, eig_sym_2x2};
use crate::mesh::{facet_penalty, BoundaryLabel};
use crate::space::DiscreteField;
use crate::{Error, Result};

/// Pointwise value and gradient.
pub type ValueGrad<'a> = &'a (dyn Fn(f64, f64) -> (f64, [f64; 2]) + Sync);
/// Pointwise value, gradient and Hessian.
pub type Smooth<'a> = &'a (dyn Fn(f64, f64) -> PointData + Sync);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormVariant {
    /// Outflow trace `Gamma+`.
    Primal,
    /// Inflow trace `Gamma-`.
    Dual,
}

/// Field data (value, gradient, Hessian) inside cell `k` from a tabulation.
fn field_data(field: &DiscreteField, k: usize, tab: &crate::elements::Tabulation) -> PointData {
    let mut d = PointData::default();
    for (l, &dof) in field.space.cell_dofs(k).iter().enumerate() {
        let c = field.coeffs[dof];
        d.val += c * tab.values[l];
        for q in 0..2 {
            d.grad[q] += c * tab.grads[l][q];
        }
        for q in 0..3 {
            d.hess[q] += c * tab.hessians[l][q];
        }
    }
    d
}

fn minus(a: PointData, b: Option<PointData>) -> PointData {
    match b {
        None => a,
        Some(b) => PointData {
            val: a.val - b.val,
            grad: [a.grad[0] - b.grad[0], a.grad[1] - b.grad[1]],
            hess: [a.hess[0] - b.hess[0], a.hess[1] - b.hess[1], a.hess[2] - b.hess[2]],
        },
    }
}

/// `||W - w||_H` with `w` given by value and gradient (or `W` alone).
pub fn h_norm(field: &DiscreteField, exact: Option<ValueGrad>, mm: [[f64; 2]; 2]) -> f64 {
    let ex = 2 * field.space.degree + 2;
    integrate_cells(&field.space, ex, |k, cp| {
        let d = field_data(field, k, &cp.tab);
        let (mut e, mut g) = (d.val, d.grad);
        if let Some(f) = exact {
            let (v, gr) = f(cp.x[0], cp.x[1]);
            e -= v;
            g = [g[0] - gr[0], g[1] - gr[1]];
        }
        e * e + dot2(g, mat_vec(&mm, g))
    })
    .sqrt()
}

/// `||W - w||_{L2}`.
pub fn l2_norm(field: &DiscreteField, exact: Option<&(dyn Fn(f64, f64) -> f64 + Sync)>) -> f64 {
    let ex = 2 * field.space.degree + 2;
    integrate_cells(&field.space, ex, |k, cp| {
        let d = field_data(field, k, &cp.tab);
        let e = d.val - exact.map(|f| f(cp.x[0], cp.x[1])).unwrap_or(0.0);
        e * e
    })
    .sqrt()
}

/// `int_side (W^2 + |sqrt(M) grad W|^2) |v| ds`.
pub fn boundary_h_seminorm(field: &DiscreteField, mm: [[f64; 2]; 2], side: BoundaryLabel) -> f64 {
    boundary_term(field, None, mm, side)
}

fn boundary_term(field: &DiscreteField, exact: Option<Smooth>, mm: [[f64; 2]; 2], side: BoundaryLabel) -> f64 {
    let sp = &field.space;
    let rule = edge_rule(2 * sp.degree + 1);
    let mut s = 0.0;
    for (fi, f) in sp.mesh.facets.iter().enumerate() {
        if f.label != side {
            continue;
        }
        for fp in facet_points(sp, fi, &rule) {
            let d = field_data(field, f.cells[0], &fp.tabs[0]);
            let e = minus(d, exact.map(|u| u(fp.x[0], fp.x[1])));
            s += fp.w * fp.x[1].abs() * (e.val * e.val + dot2(e.grad, mat_vec(&mm, e.grad)));
        }
    }
    s
}

/// Discrete hypocoercive norm of `W - w`:
/// `||H e||^2_{Gamma+-} + sum_K (|grad e|^2 + |grad e_v|^2) + eps sigma ||sqrt(M) [grad e]_v||^2`,
/// with the penalty weight of the stabilisation.
pub fn triple_norm(field: &DiscreteField, exact: Option<Smooth>, variant: NormVariant, p: &HParams) -> f64 {
    let sp = &field.space;
    let mm = p.mmat();
    let side = match variant {
        NormVariant::Primal => BoundaryLabel::GammaPlus,
        NormVariant::Dual => BoundaryLabel::GammaMinus,
    };
    let bnd = boundary_term(field, exact, mm, side);
    let vol = integrate_cells(sp, p.volume_exactness(), |k, cp| {
        let d = field_data(field, k, &cp.tab);
        let e = minus(d, exact.map(|u| u(cp.x[0], cp.x[1])));
        let gv = e.grad_v();
        dot2(e.grad, e.grad) + dot2(gv, gv)
    });
    let rule = edge_rule(2 * sp.degree);
    let mut jumps = 0.0;
    for (fi, f) in sp.mesh.facets.iter().enumerate() {
        if f.label != BoundaryLabel::Interior {
            continue;
        }
        let sigma = p.eps * facet_penalty(f, p.c_sigma, sp.degree);
        for fp in facet_points(sp, fi, &rule) {
            let a = field_data(field, f.cells[0], &fp.tabs[0]);
            let b = field_data(field, f.cells[1], &fp.tabs[1]);
            let nv = f.n_v();
            let j = [nv * (a.grad[0] - b.grad[0]), nv * (a.grad[1] - b.grad[1])];
            jumps += fp.w * sigma * dot2(j, mat_vec(&mm, j));
        }
    }
    (bnd + vol + jumps).sqrt()
}

/// `E(U, F) = 1/2 ||U - D||_H^2 + alpha/2 ||F||_H^2`.
pub fn cost(u: &DiscreteField, f: &DiscreteField, target: ValueGrad, p: &HParams) -> f64 {
    let mm = p.mmat();
    0.5 * h_norm(u, Some(target), mm).powi(2) + 0.5 * p.alpha * h_norm(f, None, mm).powi(2)
}

/// Trapezoid rule in time.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times.windows(2).zip(values.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

/// Pairwise rates `log(e1/e2) / log(h1/h2)`.
pub fn eoc(table: &[(f64, f64)]) -> Result<Vec<f64>> {
    if table.len() < 2 {
        return Err(Error::InvalidArgument("need at least two rows".into()));
    }
    if table.windows(2).any(|w| !(w[1].0 < w[0].0)) {
        return Err(Error::InvalidArgument("mesh sizes must be strictly decreasing".into()));
    }
    Ok(table.windows(2).map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln()).collect())
}

/// One row of a convergence table.
#[derive(Debug, Clone, Default)]
pub struct ErrorRow {
    pub h: f64,
    pub dofs: usize,
    pub err_h: f64,
    pub err_triple: f64,
    pub err_triple_dual: Option<f64>,
    pub eoc_h: Option<f64>,
    pub eoc_triple: Option<f64>,
    pub eoc_triple_dual: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
}

impl ErrorReport {
    /// Fill the pairwise rate columns.
    pub fn compute_eoc(&mut self) -> Result<()> {
        if self.rows.len() < 2 {
            return Ok(());
        }
        let col = |f: &dyn Fn(&ErrorRow) -> f64| eoc(&self.rows.iter().map(|r| (r.h, f(r))).collect::<Vec<_>>());
        let eh = col(&|r| r.err_h)?;
        let et = col(&|r| r.err_triple)?;
        let ed = if self.rows.iter().all(|r| r.err_triple_dual.is_some()) {
            Some(col(&|r| r.err_triple_dual.unwrap())?)
        } else {
            None
        };
        for i in 1..self.rows.len() {
            self.rows[i].eoc_h = Some(eh[i - 1]);
            self.rows[i].eoc_triple = Some(et[i - 1]);
            self.rows[i].eoc_triple_dual = ed.as_ref().map(|e| e[i - 1]);
        }
        Ok(())
    }

    /// CSV with columns `h,dofs,err_H,err_triple,err_triple_dual,eoc_H,eoc_triple`.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_default();
        let mut s = String::from("h,dofs,err_H,err_triple,err_triple_dual,eoc_H,eoc_triple\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:.6e},{},{:.6e},{:.6e},{},{},{}",
                r.h,
                r.dofs,
                r.err_h,
                r.err_triple,
                opt(r.err_triple_dual),
                opt(r.eoc_h.map(|x| (x * 1e4).round() / 1e4)),
                opt(r.eoc_triple.map(|x| (x * 1e4).round() / 1e4)),
            );
        }
        s
    }
}

/// Closed-form constants of the hypocoercive setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub lambda_min_m: f64,
    pub lambda_max_m: f64,
    pub lambda_min_n: f64,
    pub lambda_max_n: f64,
    pub c_eq_plus: f64,
    pub delta_tilde: f64,
}

pub fn constants(p: &HParams, x_max: f64) -> Constants {
    let (eps, m) = (p.eps, p.m);
    let lambda_max_m = eps * m * (m * m + 1.0);
    let rt = (m.powi(4) - m * m + 1.0).sqrt();
    let lambda_max_n = 0.5 * eps * (1.0 + m * m + rt);
    // product of eigenvalues is det N = eps M12 - M22^2/4 = 3/4 eps^2 m^2
    let lambda_min_n = 0.75 * eps * eps * m * m / lambda_max_n;
    let c_eq_plus = lambda_max_m.max(1.0);
    let poincare = 4.0 / (PI * PI) * (1.0 + x_max * x_max) + 1.0;
    Constants {
        lambda_min_m: 0.0,
        lambda_max_m,
        lambda_min_n,
        lambda_max_n,
        c_eq_plus,
        delta_tilde: lambda_min_n / (c_eq_plus * poincare),
    }
}

/// Eigenvalues of `M` and `N` from the generic 2x2 solver.
pub fn eigenvalues(p: &HParams) -> ((f64, f64), (f64, f64)) {
    (eig_sym_2x2(p.mmat()), eig_sym_2x2(p.nmat()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayReport {
    pub monotone: bool,
    /// `-slope` of the least-squares fit of `log ||U||^2` against time.
    pub rate: f64,
}

pub fn decay_report(times: &[f64], norms: &[f64]) -> Result<DecayReport> {
    if times.len() != norms.len() || times.len() < 3 {
        return Err(Error::InvalidArgument("need at least three samples".into()));
    }
    let monotone = norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-300);
    let ys: Vec<f64> = norms.iter().map(|n| (n * n).ln()).collect();
    let n = times.len() as f64;
    let tm = times.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxy: f64 = times.iter().zip(&ys).map(|(t, y)| (t - tm) * (y - ym)).sum();
    let sxx: f64 = times.iter().map(|t| (t - tm) * (t - tm)).sum();
    Ok(DecayReport { monotone, rate: -sxy / sxx })
}

/// Pearson correlation coefficient.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
