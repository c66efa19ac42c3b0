//! Continuous Lagrange spaces on structured meshes, their Dirichlet-constrained
//! subspaces and discrete fields.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::elements::{ReferenceBasis, Tabulation};
use crate::mesh::{BoundaryLabel, Mesh};
use crate::{Error, Result};

/// Which boundary part a field vanishes on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Zero on the closure of `GammaMinus` and `GammaZero` (primal state).
    MinusSet,
    /// Zero on the closure of `GammaPlus` and `GammaZero` (dual state).
    PlusSet,
    Free,
}

/// Affine map `x = p0 + J s` of one cell.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub p0: [f64; 2],
    pub jac: [[f64; 2]; 2],
    pub jinv: [[f64; 2]; 2],
    pub det: f64,
}

impl CellGeometry {
    pub fn map(&self, s: [f64; 2]) -> [f64; 2] {
        [
            self.p0[0] + self.jac[0][0] * s[0] + self.jac[0][1] * s[1],
            self.p0[1] + self.jac[1][0] * s[0] + self.jac[1][1] * s[1],
        ]
    }

    pub fn inverse_map(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.p0[0], x[1] - self.p0[1]];
        [
            self.jinv[0][0] * d[0] + self.jinv[0][1] * d[1],
            self.jinv[1][0] * d[0] + self.jinv[1][1] * d[1],
        ]
    }

    /// Maps reference gradients and Hessians to physical ones in place.
    pub fn push_forward(&self, t: &mut Tabulation) {
        let g = self.jinv;
        for grad in t.grads.iter_mut() {
            let [a, b] = *grad;
            *grad = [g[0][0] * a + g[1][0] * b, g[0][1] * a + g[1][1] * b];
        }
        for h in t.hessians.iter_mut() {
            // J^{-T} H J^{-1}
            let hm = [[h[0], h[1]], [h[1], h[2]]];
            let mut out = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    let mut s = 0.0;
                    for k in 0..2 {
                        for l in 0..2 {
                            s += g[k][i] * hm[k][l] * g[l][j];
                        }
                    }
                    out[i][j] = s;
                }
            }
            *h = [out[0][0], 0.5 * (out[0][1] + out[1][0]), out[1][1]];
        }
    }
}

#[derive(Debug)]
pub struct FunctionSpace {
    pub mesh: Arc<Mesh>,
    pub degree: usize,
    pub basis: ReferenceBasis,
    pub n_dofs: usize,
    cell_dofs: Vec<usize>,
    pub dof_coords: Vec<[f64; 2]>,
    pub minus_constrained: Vec<bool>,
    pub plus_constrained: Vec<bool>,
    pub geometry: Vec<CellGeometry>,
}

/// Build the degree-`r` continuous Lagrange space. Nodes are identified
/// through the refined lattice of the structured mesh.
pub fn build_space(mesh: Arc<Mesh>, r: usize) -> Result<Arc<FunctionSpace>> {
    let basis = ReferenceBasis::new(r)?;
    let nxp = mesh.n_x + 1;
    let lx = r * mesh.n_x + 1;
    let ly = r * mesh.n_v + 1;
    if mesh.vertices.len() != nxp * (mesh.n_v + 1) {
        return Err(Error::InvalidArgument("space requires a structured mesh".into()));
    }
    let n_dofs = lx * ly;
    let nloc = basis.dim();
    let mut cell_dofs = Vec::with_capacity(mesh.cells.len() * nloc);
    let mut geometry = Vec::with_capacity(mesh.cells.len());
    for cell in &mesh.cells {
        let g = cell.map(|v| [(v % nxp) as i64, (v / nxp) as i64]);
        for &[a, b] in &basis.lattice {
            let (a, b) = (a as i64, b as i64);
            let li = r as i64 * g[0][0] + a * (g[1][0] - g[0][0]) + b * (g[2][0] - g[0][0]);
            let lj = r as i64 * g[0][1] + a * (g[1][1] - g[0][1]) + b * (g[2][1] - g[0][1]);
            cell_dofs.push(lj as usize * lx + li as usize);
        }
        let [p0, p1, p2] = cell.map(|v| mesh.vertices[v]);
        let jac = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let jinv = [[jac[1][1] / det, -jac[0][1] / det], [-jac[1][0] / det, jac[0][0] / det]];
        geometry.push(CellGeometry { p0, jac, jinv, det });
    }
    let mut dof_coords = vec![[0.0; 2]; n_dofs];
    for (k, geo) in geometry.iter().enumerate() {
        for (l, node) in basis.nodes.iter().enumerate() {
            dof_coords[cell_dofs[k * nloc + l]] = geo.map(*node);
        }
    }

    let mut minus_constrained = vec![false; n_dofs];
    let mut plus_constrained = vec![false; n_dofs];
    for (k, fs) in mesh.cell_facets.iter().enumerate() {
        for (opp, &fi) in fs.iter().enumerate() {
            let label = mesh.facets[fi].label;
            let (minus, plus) = match label {
                BoundaryLabel::Interior => continue,
                BoundaryLabel::GammaZero => (true, true),
                BoundaryLabel::GammaMinus => (true, false),
                BoundaryLabel::GammaPlus => (false, true),
            };
            for (l, &[a, b]) in basis.lattice.iter().enumerate() {
                let on_edge = match opp {
                    0 => a + b == r,
                    1 => a == 0,
                    _ => b == 0,
                };
                if on_edge {
                    let d = cell_dofs[k * nloc + l];
                    minus_constrained[d] |= minus;
                    plus_constrained[d] |= plus;
                }
            }
        }
    }

    Ok(Arc::new(FunctionSpace {
        mesh,
        degree: r,
        basis,
        n_dofs,
        cell_dofs,
        dof_coords,
        minus_constrained,
        plus_constrained,
        geometry,
    }))
}

impl FunctionSpace {
    pub fn cell_dofs(&self, k: usize) -> &[usize] {
        let n = self.basis.dim();
        &self.cell_dofs[k * n..(k + 1) * n]
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.cells.len()
    }

    pub fn constrained(&self, c: Constraint) -> Option<&[bool]> {
        match c {
            Constraint::MinusSet => Some(&self.minus_constrained),
            Constraint::PlusSet => Some(&self.plus_constrained),
            Constraint::Free => None,
        }
    }

    /// Physical tabulation of all cell basis functions at physical point `x`.
    pub fn tabulate_at(&self, k: usize, x: [f64; 2]) -> Tabulation {
        let geo = &self.geometry[k];
        let mut t = self.basis.tabulate(geo.inverse_map(x));
        geo.push_forward(&mut t);
        t
    }

    /// Mesh size used in EOC tables: the largest cell diameter.
    pub fn h(&self) -> f64 {
        (0..self.n_cells()).map(|k| self.mesh.cell_diameter(k)).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteField {
    pub space: Arc<FunctionSpace>,
    pub coeffs: Vec<f64>,
    pub tag: Constraint,
}

impl DiscreteField {
    pub fn zeros(space: &Arc<FunctionSpace>, tag: Constraint) -> Self {
        Self { space: space.clone(), coeffs: vec![0.0; space.n_dofs], tag }
    }

    pub fn from_coeffs(space: &Arc<FunctionSpace>, coeffs: Vec<f64>, tag: Constraint) -> Result<Self> {
        if coeffs.len() != space.n_dofs {
            return Err(Error::InvalidArgument("coefficient length mismatch".into()));
        }
        Ok(Self { space: space.clone(), coeffs, tag })
    }

    /// Nodal interpolant, constrained according to `tag`.
    pub fn interpolate(space: &Arc<FunctionSpace>, g: impl Fn(f64, f64) -> f64, tag: Constraint) -> Self {
        let coeffs = space.dof_coords.iter().map(|p| g(p[0], p[1])).collect();
        apply_constraints(Self { space: space.clone(), coeffs, tag })
    }

    /// Value and gradient inside cell `k` at physical point `x`.
    pub fn eval_in_cell(&self, k: usize, x: [f64; 2]) -> (f64, [f64; 2]) {
        let t = self.space.tabulate_at(k, x);
        let mut val = 0.0;
        let mut grad = [0.0; 2];
        for (l, &d) in self.space.cell_dofs(k).iter().enumerate() {
            val += self.coeffs[d] * t.values[l];
            grad[0] += self.coeffs[d] * t.grads[l][0];
            grad[1] += self.coeffs[d] * t.grads[l][1];
        }
        (val, grad)
    }

    /// CSV with header `dof_index,x,v,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("dof_index,x,v,value\n");
        for (i, (p, c)) in self.space.dof_coords.iter().zip(&self.coeffs).enumerate() {
            let _ = writeln!(s, "{i},{},{},{}", p[0], p[1], c);
        }
        s
    }

    /// VTK legacy ASCII unstructured grid on the refined nodal lattice.
    pub fn to_vtk(&self, name: &str) -> String {
        let sp = &self.space;
        let lx = sp.degree * sp.mesh.n_x + 1;
        let ly = sp.degree * sp.mesh.n_v + 1;
        let mut s = String::new();
        let _ = writeln!(s, "# vtk DataFile Version 3.0\n{name}\nASCII\nDATASET UNSTRUCTURED_GRID");
        let _ = writeln!(s, "POINTS {} double", sp.n_dofs);
        for p in &sp.dof_coords {
            let _ = writeln!(s, "{} {} 0", p[0], p[1]);
        }
        let ntri = 2 * (lx - 1) * (ly - 1);
        let _ = writeln!(s, "CELLS {} {}", ntri, 4 * ntri);
        for j in 0..ly - 1 {
            for i in 0..lx - 1 {
                let a = j * lx + i;
                let _ = writeln!(s, "3 {} {} {}", a, a + 1, a + lx + 1);
                let _ = writeln!(s, "3 {} {} {}", a, a + lx + 1, a + lx);
            }
        }
        let _ = writeln!(s, "CELL_TYPES {ntri}");
        for _ in 0..ntri {
            s.push_str("5\n");
        }
        let _ = writeln!(s, "POINT_DATA {}\nSCALARS {name} double 1\nLOOKUP_TABLE default", sp.n_dofs);
        for c in &self.coeffs {
            let _ = writeln!(s, "{c}");
        }
        s
    }
}

/// Zero the coefficients on the constrained DOFs of the field's tag.
pub fn apply_constraints(mut field: DiscreteField) -> DiscreteField {
    if let Some(mask) = field.space.constrained(field.tag) {
        for (c, &m) in field.coeffs.iter_mut().zip(mask) {
            if m {
                *c = 0.0;
            }
        }
    }
    field
}

/// Coefficient-wise clamp into `[lo, hi]`; either bound may be infinite.
pub fn nodal_project(field: &DiscreteField, lo: f64, hi: f64) -> Result<DiscreteField> {
    if lo > hi {
        return Err(Error::InvalidArgument(format!("empty box [{lo}, {hi}]")));
    }
    let mut out = field.clone();
    for c in out.coeffs.iter_mut() {
        *c = c.min(hi).max(lo);
    }
    Ok(out)
}

/// Standard L2 projection onto the (unconstrained) space.
pub fn l2_project(space: &Arc<FunctionSpace>, g: impl Fn(f64, f64) -> f64 + Sync) -> Result<DiscreteField> {
    let mass = crate::assembly::assemble_l2_mass(space);
    let b = crate::assembly::assemble_rhs_h(space, &|x, v| (g(x, v), [0.0, 0.0]), [[0.0; 2]; 2], Constraint::Free);
    let (x, _) = crate::linalg::solve(&mass, &b, 1e-12)?;
    DiscreteField::from_coeffs(space, x, Constraint::Free)
}

/// L2 projection into the constrained subspace `tag`.
pub fn l2_project_constrained(
    space: &Arc<FunctionSpace>,
    g: impl Fn(f64, f64) -> f64 + Sync,
    tag: Constraint,
) -> Result<DiscreteField> {
    let mut mass = crate::assembly::assemble_l2_mass(space);
    let b = crate::assembly::assemble_rhs_h(space, &|x, v| (g(x, v), [0.0, 0.0]), [[0.0; 2]; 2], tag);
    if let Some(mask) = space.constrained(tag) {
        mass = mass.restrict(mask, mask, true);
    }
    let (x, _) = crate::linalg::solve(&mass, &b, 1e-12)?;
    DiscreteField::from_coeffs(space, x, tag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured;

    fn space(n: usize, r: usize) -> Arc<FunctionSpace> {
        build_space(Arc::new(build_structured(n, n, 1.0).unwrap()), r).unwrap()
    }

    #[test]
    fn dof_counts() {
        assert_eq!(space(1, 2).n_dofs, 9);
        assert_eq!(space(4, 3).n_dofs, 169);
        assert_eq!(space(5, 2).n_dofs, 121);
        assert_eq!(space(90, 2).n_dofs, 32761);
    }

    #[test]
    fn shared_nodes_coincide() {
        let sp = space(3, 4);
        for k in 0..sp.n_cells() {
            let geo = sp.geometry[k];
            for (l, &d) in sp.cell_dofs(k).iter().enumerate() {
                let p = geo.map(sp.basis.nodes[l]);
                assert!((p[0] - sp.dof_coords[d][0]).abs() < 1e-14);
                assert!((p[1] - sp.dof_coords[d][1]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn constrained_sets_match_closed_boundary_parts() {
        let sp = space(4, 3);
        let tol = 1e-12;
        for (d, p) in sp.dof_coords.iter().enumerate() {
            let [x, v] = *p;
            let top = (v.abs() - 1.0).abs() < tol;
            let minus = top || ((x + 1.0).abs() < tol && v >= -tol) || ((x - 1.0).abs() < tol && v <= tol);
            let plus = top || ((x + 1.0).abs() < tol && v <= tol) || ((x - 1.0).abs() < tol && v >= -tol);
            assert_eq!(sp.minus_constrained[d], minus, "dof {d} at {p:?}");
            assert_eq!(sp.plus_constrained[d], plus, "dof {d} at {p:?}");
        }
        let cm = sp.minus_constrained.iter().filter(|&&b| b).count();
        let cp = sp.plus_constrained.iter().filter(|&&b| b).count();
        assert_eq!(cm, cp);
        for corner in [[-1.0, -1.0], [1.0, 1.0], [-1.0, 1.0], [1.0, -1.0]] {
            let d = sp.dof_coords.iter().position(|p| p == &corner).unwrap();
            assert!(sp.minus_constrained[d] && sp.plus_constrained[d]);
        }
    }

    #[test]
    fn apply_constraints_examples() {
        let sp = space(3, 2);
        let z = apply_constraints(DiscreteField::zeros(&sp, Constraint::MinusSet));
        assert!(z.coeffs.iter().all(|&c| c == 0.0));
        let ones = DiscreteField::from_coeffs(&sp, vec![1.0; sp.n_dofs], Constraint::MinusSet).unwrap();
        let once = apply_constraints(ones);
        for (c, &m) in once.coeffs.iter().zip(&sp.minus_constrained) {
            assert_eq!(*c, if m { 0.0 } else { 1.0 });
        }
        let twice = apply_constraints(once.clone());
        assert_eq!(once.coeffs, twice.coeffs);
    }

    #[test]
    fn nodal_projection_examples() {
        let sp = space(1, 2);
        let mut f = DiscreteField::zeros(&sp, Constraint::Free);
        f.coeffs[..3].copy_from_slice(&[-1.0, 0.5, 2.0]);
        let p = nodal_project(&f, 0.0, 1.0).unwrap();
        assert_eq!(&p.coeffs[..3], &[0.0, 0.5, 1.0]);
        assert_eq!(nodal_project(&p, 0.0, 1.0).unwrap().coeffs, p.coeffs);
        let neg = DiscreteField::from_coeffs(&sp, vec![-5.0; 9], Constraint::Free).unwrap();
        assert!(nodal_project(&neg, 0.0, f64::INFINITY).unwrap().coeffs.iter().all(|&c| c == 0.0));
        assert!(nodal_project(&neg, 1.0, 0.0).is_err());
    }

    #[test]
    fn l2_projection_reproduces_polynomials() {
        for r in 2..=4 {
            let sp = space(3, r);
            let g = |x: f64, v: f64| 0.3 + x * x - 2.0 * x * v + v.powi(r as i32) * 0.5;
            let pr = l2_project(&sp, g).unwrap();
            for (c, p) in pr.coeffs.iter().zip(&sp.dof_coords) {
                assert!((c - g(p[0], p[1])).abs() < 1e-10);
            }
            let z = l2_project(&sp, |_, _| 0.0).unwrap();
            assert!(z.coeffs.iter().all(|&c| c == 0.0));
        }
    }

    #[test]
    fn vtk_and_csv_shapes() {
        let sp = space(2, 2);
        let f = DiscreteField::interpolate(&sp, |x, v| x + v, Constraint::Free);
        assert_eq!(f.to_csv().lines().count(), sp.n_dofs + 1);
        let vtk = f.to_vtk("u");
        assert!(vtk.starts_with("# vtk DataFile Version 3.0"));
        assert!(vtk.contains("CELLS 32 128"));
    }
}
