//! Assembly of the H-weighted mass, the stabilised primal and adjoint forms
//! and H-weighted right-hand sides.
//!
//! Matrix convention: `A[i][j] = form(trial = phi_j, test = phi_i)`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::elements::{edge_rule, triangle_rule, QuadRule, Tabulation};
use crate::linalg::SparseOperator;
use crate::mesh::{facet_penalty, BoundaryLabel};
use crate::space::{Constraint, FunctionSpace};
use crate::{Error, Result};

/// Model and discretisation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HParams {
    pub eps: f64,
    pub m: f64,
    pub c_sigma: f64,
    pub r: usize,
    pub alpha: f64,
}

impl Default for HParams {
    fn default() -> Self {
        Self { eps: 0.1, m: 0.35, c_sigma: 10.0, r: 2, alpha: 1.0 }
    }
}

impl HParams {
    pub fn new(eps: f64, m: f64, c_sigma: f64, r: usize, alpha: f64) -> Result<Self> {
        let p = Self { eps, m, c_sigma, r, alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::InvalidArgument(s.into()));
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return bad("eps must be positive");
        }
        if !(self.m >= 0.0) || !self.m.is_finite() {
            return bad("m must be non-negative");
        }
        if !(self.c_sigma >= 0.0) || !self.c_sigma.is_finite() {
            return bad("C_sigma must be non-negative");
        }
        if !(2..=4).contains(&self.r) {
            return bad("degree must be 2, 3 or 4");
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return bad("alpha must be positive");
        }
        Ok(())
    }

    /// `M = eps [[m^3, m^2], [m^2, m]]`.
    pub fn mmat(&self) -> [[f64; 2]; 2] {
        let (e, m) = (self.eps, self.m);
        [[e * m * m * m, e * m * m], [e * m * m, e * m]]
    }

    /// `N = [[M12, M22/2], [M22/2, eps]]`.
    pub fn nmat(&self) -> [[f64; 2]; 2] {
        let mm = self.mmat();
        [[mm[0][1], mm[1][1] / 2.0], [mm[1][1] / 2.0, self.eps]]
    }

    pub fn volume_exactness(&self) -> usize {
        2 * self.r + 2
    }

    pub fn facet_exactness(&self) -> usize {
        2 * self.r + 1
    }
}

/// Value, gradient and Hessian `[xx, xv, vv]` of a function at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PointData {
    pub val: f64,
    pub grad: [f64; 2],
    pub hess: [f64; 3],
}

impl PointData {
    pub fn from_tab(t: &Tabulation, l: usize) -> Self {
        Self { val: t.values[l], grad: t.grads[l], hess: t.hessians[l] }
    }

    /// `grad(w_v) = (w_xv, w_vv)`.
    pub fn grad_v(&self) -> [f64; 2] {
        [self.hess[1], self.hess[2]]
    }
}

#[inline]
pub fn mat_vec(m: &[[f64; 2]; 2], g: [f64; 2]) -> [f64; 2] {
    [m[0][0] * g[0] + m[0][1] * g[1], m[1][0] * g[0] + m[1][1] * g[1]]
}

#[inline]
pub fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Integrand of the element part of `a_h(w, phi)` at a point with velocity `v`.
#[inline]
pub fn volume_kernel(w: &PointData, phi: &PointData, v: f64, eps: f64, mm: &[[f64; 2]; 2]) -> f64 {
    let wx = w.grad[0];
    let grad_vwx = [v * w.hess[0], wx + v * w.hess[1]];
    let mphi = mat_vec(mm, phi.grad);
    let mphiv = mat_vec(mm, phi.grad_v());
    v * wx * phi.val + dot2(grad_vwx, mphi) + eps * w.grad[1] * phi.grad[1] + eps * dot2(w.grad_v(), mphiv)
}

/// Facet traces of one function: gradient jump `grad w^+ - grad w^-` (the
/// one-sided trace on the boundary), gradient average, average of
/// `grad(w_v)`, and the one-sided value.
#[derive(Debug, Clone, Copy, Default)]
pub struct FacetData {
    pub jump: [f64; 2],
    pub avg: [f64; 2],
    pub avg_v: [f64; 2],
    pub val: f64,
}

/// `s_h1 + s_h2` integrand for trial `w` and test `phi`.
#[inline]
fn primal_facet_kernel(
    label: BoundaryLabel,
    w: &FacetData,
    phi: &FacetData,
    v: f64,
    n: [f64; 2],
    sigma: f64,
    eps: f64,
    mm: &[[f64; 2]; 2],
) -> f64 {
    let mut s = 0.0;
    if matches!(label, BoundaryLabel::Interior | BoundaryLabel::GammaMinus) {
        s -= v * n[0] * dot2(w.jump, mat_vec(mm, phi.avg));
    }
    if matches!(label, BoundaryLabel::Interior | BoundaryLabel::GammaZero) {
        s += penalty_kernel(w, phi, n[1], sigma, eps, mm);
    }
    s
}

/// `eps * (-n_v (M {grad w_v} . [grad phi] + M {grad phi_v} . [grad w]) + sigma n_v^2 [grad w] . M [grad phi])`.
#[inline]
fn penalty_kernel(w: &FacetData, phi: &FacetData, nv: f64, sigma: f64, eps: f64, mm: &[[f64; 2]; 2]) -> f64 {
    let consistency = -nv * (dot2(mat_vec(mm, w.avg_v), phi.jump) + dot2(mat_vec(mm, phi.avg_v), w.jump));
    eps * (consistency + sigma * nv * nv * dot2(w.jump, mat_vec(mm, phi.jump)))
}

/// Boundary treatment of the adjoint transport stabilisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjointBoundary {
    /// Upwinding for the reversed transport: `int_{Gamma-} |v| (z psi + grad z . M grad psi)`.
    Reversed,
    /// Transport jumps of `psi` against averages of `z` on `Gamma+`, as for the interior skeleton.
    OutflowJump,
}

/// `s_h1* + s_h2*` integrand for trial `z` and test `psi`.
#[inline]
#[allow(clippy::too_many_arguments)]
fn adjoint_facet_kernel(
    label: BoundaryLabel,
    bc: AdjointBoundary,
    z: &FacetData,
    psi: &FacetData,
    v: f64,
    n: [f64; 2],
    sigma: f64,
    eps: f64,
    mm: &[[f64; 2]; 2],
) -> f64 {
    let mut s = 0.0;
    match (label, bc) {
        (BoundaryLabel::Interior, _) | (BoundaryLabel::GammaPlus, AdjointBoundary::OutflowJump) => {
            s -= v * n[0] * dot2(psi.jump, mat_vec(mm, z.avg));
        }
        (BoundaryLabel::GammaMinus, AdjointBoundary::Reversed) => {
            s += v.abs() * (z.val * psi.val + dot2(z.avg, mat_vec(mm, psi.avg)));
        }
        _ => {}
    }
    if matches!(label, BoundaryLabel::Interior | BoundaryLabel::GammaZero) {
        s += penalty_kernel(z, psi, n[1], sigma, eps, mm);
    }
    s
}

/// A quadrature point of a cell in physical coordinates.
pub struct CellPoint {
    pub x: [f64; 2],
    pub w: f64,
    pub tab: Tabulation,
}

/// Physical quadrature points and tabulations of cell `k`.
pub fn cell_points(space: &FunctionSpace, k: usize, rule: &QuadRule) -> Vec<CellPoint> {
    let geo = &space.geometry[k];
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(p, &w)| {
            let mut tab = space.basis.tabulate(*p);
            geo.push_forward(&mut tab);
            CellPoint { x: geo.map(*p), w: w * geo.det.abs(), tab }
        })
        .collect()
}

/// A quadrature point on a facet with tabulations from each adjacent cell.
pub struct FacetPoint {
    pub x: [f64; 2],
    pub w: f64,
    pub tabs: Vec<Tabulation>,
}

pub fn facet_points(space: &FunctionSpace, fi: usize, rule: &QuadRule) -> Vec<FacetPoint> {
    let f = &space.mesh.facets[fi];
    let a = space.mesh.vertices[f.vertices[0]];
    let b = space.mesh.vertices[f.vertices[1]];
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(p, &w)| {
            let x = [a[0] + p[0] * (b[0] - a[0]), a[1] + p[0] * (b[1] - a[1])];
            let tabs = f.cells[..f.n_cells].iter().map(|&k| space.tabulate_at(k, x)).collect();
            FacetPoint { x, w: w * f.length, tabs }
        })
        .collect()
}

/// Facet data of the extended local basis: functions of the first cell
/// followed by functions of the second cell (interior facets only).
pub fn facet_basis_data(fp: &FacetPoint) -> Vec<FacetData> {
    let interior = fp.tabs.len() == 2;
    let mut out = Vec::new();
    for (side, tab) in fp.tabs.iter().enumerate() {
        let sign = if side == 0 { 1.0 } else { -1.0 };
        let wgt = if interior { 0.5 } else { 1.0 };
        for l in 0..tab.values.len() {
            let g = tab.grads[l];
            let h = tab.hessians[l];
            out.push(FacetData {
                jump: [sign * g[0], sign * g[1]],
                avg: [wgt * g[0], wgt * g[1]],
                avg_v: [wgt * h[1], wgt * h[2]],
                val: if interior { 0.0 } else { tab.values[l] },
            });
        }
    }
    out
}

/// Global DOFs of the extended local basis of facet `fi`.
pub fn facet_dofs(space: &FunctionSpace, fi: usize) -> Vec<usize> {
    let f = &space.mesh.facets[fi];
    f.cells[..f.n_cells].iter().flat_map(|&k| space.cell_dofs(k).iter().copied()).collect()
}

/// Facet data of a smooth function whose traces agree on both sides.
pub fn smooth_facet_data(d: &PointData) -> FacetData {
    FacetData { jump: [0.0; 2], avg: d.grad, avg_v: d.grad_v(), val: d.val }
}

fn assemble_cells<F>(space: &FunctionSpace, exactness: usize, kernel: F) -> SparseOperator
where
    F: Fn(&PointData, &PointData, [f64; 2]) -> f64 + Sync,
{
    let rule = triangle_rule(exactness.min(11)).expect("supported exactness");
    let nloc = space.basis.dim();
    let chunks: Vec<Vec<(usize, usize, f64)>> = (0..space.n_cells())
        .into_par_iter()
        .map(|k| {
            let pts = cell_points(space, k, &rule);
            let dofs = space.cell_dofs(k);
            let mut local = vec![0.0; nloc * nloc];
            for cp in &pts {
                let data: Vec<PointData> = (0..nloc).map(|l| PointData::from_tab(&cp.tab, l)).collect();
                for i in 0..nloc {
                    for j in 0..nloc {
                        local[i * nloc + j] += cp.w * kernel(&data[j], &data[i], cp.x);
                    }
                }
            }
            let mut t = Vec::with_capacity(nloc * nloc);
            for i in 0..nloc {
                for j in 0..nloc {
                    t.push((dofs[i], dofs[j], local[i * nloc + j]));
                }
            }
            t
        })
        .collect();
    SparseOperator::from_triplets(space.n_dofs, space.n_dofs, chunks.concat())
}

fn assemble_facets<F>(space: &FunctionSpace, exactness: usize, select: impl Fn(BoundaryLabel) -> bool + Sync, kernel: F) -> SparseOperator
where
    F: Fn(BoundaryLabel, &FacetData, &FacetData, [f64; 2], [f64; 2], f64) -> f64 + Sync,
{
    let rule = edge_rule(exactness);
    let mesh = &space.mesh;
    let chunks: Vec<Vec<(usize, usize, f64)>> = (0..mesh.facets.len())
        .into_par_iter()
        .map(|fi| {
            let f = &mesh.facets[fi];
            if !select(f.label) {
                return Vec::new();
            }
            let sigma = facet_penalty(f, 1.0, 1);
            let dofs = facet_dofs(space, fi);
            let n = dofs.len();
            let mut local = vec![0.0; n * n];
            for fp in facet_points(space, fi, &rule) {
                let data = facet_basis_data(&fp);
                for i in 0..n {
                    for j in 0..n {
                        local[i * n + j] += fp.w * kernel(f.label, &data[j], &data[i], fp.x, f.normal, sigma);
                    }
                }
            }
            let mut t = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    t.push((dofs[i], dofs[j], local[i * n + j]));
                }
            }
            t
        })
        .collect();
    SparseOperator::from_triplets(space.n_dofs, space.n_dofs, chunks.concat())
}

/// Plain L2 mass matrix.
pub fn assemble_l2_mass(space: &FunctionSpace) -> SparseOperator {
    assemble_cells(space, 2 * space.degree + 2, |w, phi, _| w.val * phi.val)
}

/// `(w, phi)_H = (w, phi) + (grad w, M grad phi)`.
pub fn assemble_h_mass(space: &FunctionSpace, mm: [[f64; 2]; 2]) -> SparseOperator {
    assemble_cells(space, 2 * space.degree + 2, move |w, phi, _| {
        w.val * phi.val + dot2(w.grad, mat_vec(&mm, phi.grad))
    })
}

/// Unconstrained pieces of a stabilised form.
#[derive(Debug, Clone)]
pub struct FormParts {
    pub volume: SparseOperator,
    pub interior: SparseOperator,
    pub boundary: SparseOperator,
}

impl FormParts {
    pub fn total(&self) -> SparseOperator {
        let a = SparseOperator::axpby(1.0, &self.volume, 1.0, &self.interior).expect("conforming");
        SparseOperator::axpby(1.0, &a, 1.0, &self.boundary).expect("conforming")
    }
}

/// Element part of `a_h` on the unconstrained space.
pub fn assemble_primal_volume(space: &FunctionSpace, p: &HParams) -> SparseOperator {
    let (eps, mm) = (p.eps, p.mmat());
    assemble_cells(space, p.volume_exactness(), move |w, phi, x| volume_kernel(w, phi, x[1], eps, &mm))
}

pub fn primal_parts(space: &FunctionSpace, p: &HParams) -> FormParts {
    let (eps, mm, cs, r) = (p.eps, p.mmat(), p.c_sigma, space.degree);
    let kernel = move |label, w: &FacetData, phi: &FacetData, x: [f64; 2], n, inv_h: f64| {
        primal_facet_kernel(label, w, phi, x[1], n, cs * (r * r) as f64 * inv_h, eps, &mm)
    };
    FormParts {
        volume: assemble_primal_volume(space, p),
        interior: assemble_facets(space, p.facet_exactness(), |l| l == BoundaryLabel::Interior, kernel),
        boundary: assemble_facets(space, p.facet_exactness(), |l| l != BoundaryLabel::Interior, kernel),
    }
}

pub fn adjoint_parts(space: &FunctionSpace, p: &HParams, bc: AdjointBoundary) -> FormParts {
    let (eps, mm, cs, r) = (p.eps, p.mmat(), p.c_sigma, space.degree);
    let kernel = move |label, z: &FacetData, psi: &FacetData, x: [f64; 2], n, inv_h: f64| {
        adjoint_facet_kernel(label, bc, z, psi, x[1], n, cs * (r * r) as f64 * inv_h, eps, &mm)
    };
    FormParts {
        volume: assemble_primal_volume(space, p).transpose(),
        interior: assemble_facets(space, p.facet_exactness(), |l| l == BoundaryLabel::Interior, kernel),
        boundary: assemble_facets(space, p.facet_exactness(), |l| l != BoundaryLabel::Interior, kernel),
    }
}

/// `a_h + s_h` restricted to the minus-set.
pub fn assemble_primal(space: &FunctionSpace, p: &HParams) -> SparseOperator {
    let a = primal_parts(space, p).total();
    a.restrict(&space.minus_constrained, &space.minus_constrained, true)
}

/// `a_h* + s_h*` restricted to the plus-set.
pub fn assemble_adjoint(space: &FunctionSpace, p: &HParams) -> SparseOperator {
    let a = adjoint_parts(space, p, AdjointBoundary::Reversed).total();
    a.restrict(&space.plus_constrained, &space.plus_constrained, true)
}

/// `b_i = int g phi_i + grad g . M grad phi_i`, constrained entries zeroed.
pub fn assemble_rhs_h(
    space: &FunctionSpace,
    g: &(dyn Fn(f64, f64) -> (f64, [f64; 2]) + Sync),
    mm: [[f64; 2]; 2],
    tag: Constraint,
) -> Vec<f64> {
    let rule = triangle_rule(2 * space.degree + 2).expect("supported exactness");
    let nloc = space.basis.dim();
    let locals: Vec<Vec<f64>> = (0..space.n_cells())
        .into_par_iter()
        .map(|k| {
            let mut local = vec![0.0; nloc];
            for cp in cell_points(space, k, &rule) {
                let (val, grad) = g(cp.x[0], cp.x[1]);
                let mg = mat_vec(&mm, grad);
                for (l, li) in local.iter_mut().enumerate() {
                    *li += cp.w * (val * cp.tab.values[l] + dot2(mg, cp.tab.grads[l]));
                }
            }
            local
        })
        .collect();
    let mut b = vec![0.0; space.n_dofs];
    for (k, local) in locals.iter().enumerate() {
        for (l, &d) in space.cell_dofs(k).iter().enumerate() {
            b[d] += local[l];
        }
    }
    if let Some(mask) = space.constrained(tag) {
        for (bi, &m) in b.iter_mut().zip(mask) {
            if m {
                *bi = 0.0;
            }
        }
    }
    b
}

/// `r_i = a_h(u, phi_i) + s_h(u, phi_i)` for a smooth trial function given pointwise
/// (`adjoint = true` evaluates `a_h*(u, phi_i) + s_h*(u, phi_i)` instead).
pub fn apply_to_smooth(
    space: &FunctionSpace,
    p: &HParams,
    u: &(dyn Fn(f64, f64) -> PointData + Sync),
    adjoint: bool,
) -> Vec<f64> {
    let (eps, mm, r) = (p.eps, p.mmat(), space.degree);
    let nloc = space.basis.dim();
    let vrule = triangle_rule(p.volume_exactness().min(11)).expect("supported exactness");
    let cells: Vec<Vec<f64>> = (0..space.n_cells())
        .into_par_iter()
        .map(|k| {
            let mut local = vec![0.0; nloc];
            for cp in cell_points(space, k, &vrule) {
                let ud = u(cp.x[0], cp.x[1]);
                for (l, li) in local.iter_mut().enumerate() {
                    let phi = PointData::from_tab(&cp.tab, l);
                    let val = if adjoint {
                        volume_kernel(&phi, &ud, cp.x[1], eps, &mm)
                    } else {
                        volume_kernel(&ud, &phi, cp.x[1], eps, &mm)
                    };
                    *li += cp.w * val;
                }
            }
            local
        })
        .collect();
    let mut out = vec![0.0; space.n_dofs];
    for (k, local) in cells.iter().enumerate() {
        for (l, &d) in space.cell_dofs(k).iter().enumerate() {
            out[d] += local[l];
        }
    }
    let frule = edge_rule(p.facet_exactness());
    for (fi, f) in space.mesh.facets.iter().enumerate() {
        let sigma = facet_penalty(f, p.c_sigma, r);
        let dofs = facet_dofs(space, fi);
        for fp in facet_points(space, fi, &frule) {
            let mut ud = smooth_facet_data(&u(fp.x[0], fp.x[1]));
            if !f.is_interior() {
                ud.jump = ud.avg;
            }
            for (data, &d) in facet_basis_data(&fp).iter().zip(&dofs) {
                let val = if adjoint {
                    adjoint_facet_kernel(f.label, AdjointBoundary::Reversed, &ud, data, fp.x[1], f.normal, sigma, eps, &mm)
                } else {
                    primal_facet_kernel(f.label, &ud, data, fp.x[1], f.normal, sigma, eps, &mm)
                };
                out[d] += fp.w * val;
            }
        }
    }
    out
}

/// Sum of cell contributions with a field-dependent integrand; used by norms.
pub fn integrate_cells(space: &Arc<FunctionSpace>, exactness: usize, f: impl Fn(usize, &CellPoint) -> f64 + Sync) -> f64 {
    let rule = triangle_rule(exactness.min(11)).expect("supported exactness");
    let parts: Vec<f64> = (0..space.n_cells())
        .into_par_iter()
        .map(|k| cell_points(space, k, &rule).iter().map(|cp| cp.w * f(k, cp)).sum())
        .collect();
    parts.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured;
    use crate::space::build_space;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space(n: usize, r: usize) -> Arc<FunctionSpace> {
        build_space(Arc::new(build_structured(n, n, 1.0).unwrap()), r).unwrap()
    }

    fn random_constrained(n: usize, mask: &[bool], rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|i| if mask[i] { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect()
    }

    #[test]
    fn h_mass_basics() {
        let sp = space(4, 2);
        let l2 = assemble_l2_mass(&sp);
        let m0 = assemble_h_mass(&sp, [[0.0; 2]; 2]);
        assert!((m0.bilinear(&vec![1.0; sp.n_dofs], &vec![1.0; sp.n_dofs]) - 4.0).abs() < 1e-12);
        let p = HParams::default();
        let mh = assemble_h_mass(&sp, p.mmat());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let w: Vec<f64> = (0..sp.n_dofs).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!(mh.bilinear(&w, &w) >= l2.bilinear(&w, &w) - 1e-14);
            assert!(mh.bilinear(&w, &w) > 0.0);
        }
        let diff = SparseOperator::axpby(1.0, &l2, -1.0, &m0).unwrap();
        assert!(diff.max_abs() < 1e-16);
        let t = mh.transpose();
        assert!(SparseOperator::axpby(1.0, &mh, -1.0, &t).unwrap().max_abs() < 1e-16);
    }

    #[test]
    fn rhs_basics() {
        let sp = space(4, 3);
        let z = assemble_rhs_h(&sp, &|_, _| (0.0, [0.0; 2]), HParams::default().mmat(), Constraint::Free);
        assert!(z.iter().all(|&b| b == 0.0));
        let b = assemble_rhs_h(&sp, &|_, _| (1.0, [0.0; 2]), [[0.0; 2]; 2], Constraint::Free);
        assert!((b.iter().sum::<f64>() - 4.0).abs() < 1e-12);
        let b = assemble_rhs_h(&sp, &|_, _| (1.0, [0.0; 2]), [[0.0; 2]; 2], Constraint::MinusSet);
        assert!(b.iter().zip(&sp.minus_constrained).all(|(v, &m)| !m || *v == 0.0));
    }

    #[test]
    fn adjoint_volume_is_transpose() {
        let sp = space(8, 2);
        let p = HParams::default();
        let a = assemble_primal_volume(&sp, &p);
        let b = adjoint_parts(&sp, &p, AdjointBoundary::Reversed).volume;
        let d = SparseOperator::axpby(1.0, &b, -1.0, &a.transpose()).unwrap();
        assert!(d.max_abs() <= 1e-12 * a.max_abs());
    }

    #[test]
    fn interior_skeletons_are_transposes() {
        let sp = space(4, 3);
        let p = HParams::default();
        let s = primal_parts(&sp, &p).interior;
        let st = adjoint_parts(&sp, &p, AdjointBoundary::Reversed).interior;
        let d = SparseOperator::axpby(1.0, &st, -1.0, &s.transpose()).unwrap();
        assert!(d.max_abs() <= 1e-13 * s.max_abs());
    }

    #[test]
    fn m_zero_kills_stabilisation() {
        let sp = space(4, 2);
        let p = HParams { m: 0.0, ..HParams::default() };
        let parts = primal_parts(&sp, &p);
        assert!(parts.interior.max_abs() == 0.0);
        assert!(parts.boundary.max_abs() == 0.0);
    }

    #[test]
    fn single_cell_boundary_sets() {
        // one quad: no interior transport facets except the diagonal
        let sp = build_space(Arc::new(build_structured(1, 1, 1.0).unwrap()), 2).unwrap();
        let p = HParams::default();
        let parts = primal_parts(&sp, &p);
        assert!(parts.boundary.max_abs() > 0.0);
        assert_eq!(parts.boundary.nrows, sp.n_dofs);
    }

    #[test]
    fn primal_and_adjoint_coercive_on_constrained_vectors() {
        let sp = space(8, 2);
        let p = HParams::default();
        let a = assemble_primal(&sp, &p);
        let b = assemble_adjoint(&sp, &p);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let w = random_constrained(sp.n_dofs, &sp.minus_constrained, &mut rng);
            assert!(a.bilinear(&w, &w) > 0.0);
            let z = random_constrained(sp.n_dofs, &sp.plus_constrained, &mut rng);
            assert!(b.bilinear(&z, &z) > 0.0);
        }
    }

    fn min_sym_eig(a: &SparseOperator, mask: &[bool]) -> f64 {
        let free: Vec<usize> = (0..a.nrows).filter(|&i| !mask[i]).collect();
        let d = faer::Mat::from_fn(free.len(), free.len(), |i, j| {
            0.5 * (a.get(free[i], free[j]) + a.get(free[j], free[i]))
        });
        d.self_adjoint_eigenvalues(faer::Side::Lower).unwrap()[0]
    }

    #[test]
    fn outflow_jump_adjoint_boundary_is_indefinite() {
        // The transposed transport term leaves -|v| Z^2 / 2 on the inflow wall.
        let sp = space(8, 2);
        let p = HParams { eps: 0.01, ..HParams::default() };
        let mask = &sp.plus_constrained;
        let bad = adjoint_parts(&sp, &p, AdjointBoundary::OutflowJump).total();
        assert!(min_sym_eig(&bad, mask) < 0.0);
        let good = adjoint_parts(&sp, &p, AdjointBoundary::Reversed).total();
        assert!(min_sym_eig(&good, mask) > 0.0);
    }

    #[test]
    fn smooth_polynomials_have_no_gradient_jumps() {
        let sp = space(4, 3);
        let p = HParams::default();
        let s = primal_parts(&sp, &p).interior;
        let w = crate::space::DiscreteField::interpolate(&sp, |x, v| x * x * v - 0.5 * v * v * v + x, Constraint::Free);
        assert!(s.bilinear(&w.coeffs, &w.coeffs).abs() < 1e-12);
    }

    #[test]
    fn smooth_application_matches_matrix_on_polynomials() {
        let sp = space(4, 3);
        let p = HParams::default();
        let g = |x: f64, v: f64| PointData {
            val: x * x * v + v * v,
            grad: [2.0 * x * v, x * x + 2.0 * v],
            hess: [2.0 * v, 2.0 * x, 2.0],
        };
        let w = crate::space::DiscreteField::interpolate(&sp, |x, v| g(x, v).val, Constraint::Free);
        for (adjoint, parts) in [(false, primal_parts(&sp, &p)), (true, adjoint_parts(&sp, &p, AdjointBoundary::Reversed))] {
            let y = parts.total().spmv(&w.coeffs);
            let z = apply_to_smooth(&sp, &p, &g, adjoint);
            for (a, b) in y.iter().zip(&z) {
                assert!((a - b).abs() < 1e-11, "{a} vs {b}");
            }
        }
    }
}
