//! Structured triangulations of `(-x_max, x_max) x (-1, 1)` with facet
//! topology and boundary classification.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::{Error, Result};

/// Facet classification. `GammaMinus` is the inflow part, `GammaPlus` the
/// outflow part and `GammaZero` the top and bottom walls `v = +-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryLabel {
    Interior,
    GammaMinus,
    GammaPlus,
    GammaZero,
}

impl BoundaryLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryLabel::Interior => "interior",
            BoundaryLabel::GammaMinus => "gamma_minus",
            BoundaryLabel::GammaPlus => "gamma_plus",
            BoundaryLabel::GammaZero => "gamma_zero",
        }
    }
}

/// Split direction of the grid quads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Diagonal {
    /// Bottom-left to top-right.
    #[default]
    Main,
    /// Top-left to bottom-right.
    Anti,
}

impl Diagonal {
    pub fn as_str(&self) -> &'static str {
        match self {
            Diagonal::Anti => "anti",
            Diagonal::Main => "main",
        }
    }
}

impl std::str::FromStr for Diagonal {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anti" => Ok(Diagonal::Anti),
            "main" => Ok(Diagonal::Main),
            _ => Err(Error::InvalidArgument(format!("unknown diagonal `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Facet {
    pub vertices: [usize; 2],
    /// First entry is the cell the normal points away from.
    pub cells: [usize; 2],
    pub n_cells: usize,
    pub normal: [f64; 2],
    pub length: f64,
    pub h: f64,
    pub label: BoundaryLabel,
}

impl Facet {
    pub fn n_v(&self) -> f64 {
        self.normal[1]
    }

    pub fn is_interior(&self) -> bool {
        self.n_cells == 2
    }

    pub fn midpoint(&self, mesh: &Mesh) -> [f64; 2] {
        let a = mesh.vertices[self.vertices[0]];
        let b = mesh.vertices[self.vertices[1]];
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    pub cells: Vec<[usize; 3]>,
    pub facets: Vec<Facet>,
    /// Facet indices of each cell, opposite to local vertex 0, 1, 2.
    pub cell_facets: Vec<[usize; 3]>,
    pub x_max: f64,
    pub n_x: usize,
    pub n_v: usize,
    pub diagonal: Diagonal,
}

/// Uniform grid with every quad split along the default diagonal.
pub fn build_structured(n_x: usize, n_v: usize, x_max: f64) -> Result<Mesh> {
    build_structured_with(n_x, n_v, x_max, Diagonal::default())
}

/// Uniform grid with every quad split along `diagonal`.
pub fn build_structured_with(n_x: usize, n_v: usize, x_max: f64, diagonal: Diagonal) -> Result<Mesh> {
    if n_x == 0 || n_v == 0 {
        return Err(Error::InvalidArgument("cell counts must be positive".into()));
    }
    if !(x_max > 0.0) || !x_max.is_finite() {
        return Err(Error::InvalidArgument("x_max must be positive".into()));
    }
    let nxp = n_x + 1;
    let mut vertices = Vec::with_capacity(nxp * (n_v + 1));
    for j in 0..=n_v {
        for i in 0..=n_x {
            let x = -x_max + 2.0 * x_max * i as f64 / n_x as f64;
            let v = -1.0 + 2.0 * j as f64 / n_v as f64;
            vertices.push([x, v]);
        }
    }
    let mut cells = Vec::with_capacity(2 * n_x * n_v);
    for j in 0..n_v {
        for i in 0..n_x {
            let a = j * nxp + i;
            let b = a + 1;
            let c = a + nxp + 1;
            let d = a + nxp;
            match diagonal {
                Diagonal::Anti => {
                    cells.push([a, b, d]);
                    cells.push([b, c, d]);
                }
                Diagonal::Main => {
                    cells.push([a, b, c]);
                    cells.push([a, c, d]);
                }
            }
        }
    }

    let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges: Vec<([usize; 2], Vec<usize>)> = Vec::new();
    let mut cell_facets = vec![[0usize; 3]; cells.len()];
    for (k, cell) in cells.iter().enumerate() {
        for l in 0..3 {
            let p = cell[(l + 1) % 3];
            let q = cell[(l + 2) % 3];
            let key = (p.min(q), p.max(q));
            let idx = *edge_map.entry(key).or_insert_with(|| {
                edges.push(([key.0, key.1], Vec::new()));
                edges.len() - 1
            });
            edges[idx].1.push(k);
            cell_facets[k][l] = idx;
        }
    }

    let diam: Vec<f64> = cells.iter().map(|c| cell_diameter(&vertices, c)).collect();
    let tol = 1e-12 * x_max;
    let mut facets = Vec::with_capacity(edges.len());
    for (verts, adj) in edges {
        let a = vertices[verts[0]];
        let b = vertices[verts[1]];
        let t = [b[0] - a[0], b[1] - a[1]];
        let length = (t[0] * t[0] + t[1] * t[1]).sqrt();
        let mut normal = [t[1] / length, -t[0] / length];
        let k0 = adj[0];
        let cen = centroid(&vertices, &cells[k0]);
        let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        if normal[0] * (mid[0] - cen[0]) + normal[1] * (mid[1] - cen[1]) < 0.0 {
            normal = [-normal[0], -normal[1]];
        }
        let (cells_pair, n_cells, h, label) = match adj.len() {
            2 => ([adj[0], adj[1]], 2, 0.5 * (diam[adj[0]] + diam[adj[1]]), BoundaryLabel::Interior),
            1 => {
                let label = classify_with_tol(mid, x_max, tol)?;
                ([adj[0], adj[0]], 1, diam[adj[0]], label)
            }
            _ => return Err(Error::InvalidArgument("non-manifold facet".into())),
        };
        facets.push(Facet { vertices: verts, cells: cells_pair, n_cells, normal, length, h, label });
    }

    Ok(Mesh { vertices, cells, facets, cell_facets, x_max, n_x, n_v, diagonal })
}

fn centroid(vertices: &[[f64; 2]], c: &[usize; 3]) -> [f64; 2] {
    let mut s = [0.0; 2];
    for &i in c {
        s[0] += vertices[i][0] / 3.0;
        s[1] += vertices[i][1] / 3.0;
    }
    s
}

fn cell_diameter(vertices: &[[f64; 2]], c: &[usize; 3]) -> f64 {
    let mut d: f64 = 0.0;
    for l in 0..3 {
        let p = vertices[c[l]];
        let q = vertices[c[(l + 1) % 3]];
        d = d.max(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
    }
    d
}

/// Classify a boundary point by its position; the facet midpoint is used so
/// that the `v = 0` corners of the inflow/outflow split never arise.
pub fn classify_boundary_facet(midpoint: [f64; 2], x_max: f64) -> Result<BoundaryLabel> {
    classify_with_tol(midpoint, x_max, 1e-12 * x_max)
}

fn classify_with_tol(p: [f64; 2], x_max: f64, tol: f64) -> Result<BoundaryLabel> {
    let [x, v] = p;
    if (v.abs() - 1.0).abs() <= tol && x.abs() <= x_max + tol {
        return Ok(BoundaryLabel::GammaZero);
    }
    if (x + x_max).abs() <= tol && v.abs() < 1.0 {
        return Ok(if v > 0.0 { BoundaryLabel::GammaMinus } else { BoundaryLabel::GammaPlus });
    }
    if (x - x_max).abs() <= tol && v.abs() < 1.0 {
        return Ok(if v < 0.0 { BoundaryLabel::GammaMinus } else { BoundaryLabel::GammaPlus });
    }
    Err(Error::InvalidArgument(format!("point ({x}, {v}) is not on the boundary")))
}

/// `sigma = C_sigma r^2 / h_e`.
pub fn facet_penalty(facet: &Facet, c_sigma: f64, r: usize) -> f64 {
    c_sigma * (r * r) as f64 / facet.h
}

impl Mesh {
    pub fn cell_area(&self, k: usize) -> f64 {
        let [a, b, c] = self.cells[k].map(|i| self.vertices[i]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn cell_diameter(&self, k: usize) -> f64 {
        cell_diameter(&self.vertices, &self.cells[k])
    }

    /// Plain-text dump: `v x y`, `c i j k`, `f i j label`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for p in &self.vertices {
            let _ = writeln!(s, "v {} {}", p[0], p[1]);
        }
        for c in &self.cells {
            let _ = writeln!(s, "c {} {} {}", c[0], c[1], c[2]);
        }
        for f in &self.facets {
            let _ = writeln!(s, "f {} {} {}", f.vertices[0], f.vertices[1], f.label.as_str());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_quad_counts() {
        let m = build_structured(1, 1, 1.0).unwrap();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.cells.len(), 2);
        assert_eq!(m.facets.len(), 5);
    }

    #[test]
    fn cell_count_and_euler() {
        assert_eq!(build_structured(4, 4, 1.0).unwrap().cells.len(), 32);
        let m = build_structured(8, 8, 1.0).unwrap();
        let euler = m.vertices.len() as i64 - m.facets.len() as i64 + m.cells.len() as i64;
        assert_eq!(euler, 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_structured(0, 3, 1.0).is_err());
        assert!(build_structured(3, 0, 1.0).is_err());
        assert!(build_structured(3, 3, 0.0).is_err());
        assert!(build_structured(3, 3, -1.0).is_err());
    }

    #[test]
    fn areas_and_orientation() {
        for d in [Diagonal::Anti, Diagonal::Main] {
            let m = build_structured_with(7, 5, 1.5, d).unwrap();
            let total: f64 = (0..m.cells.len()).map(|k| m.cell_area(k)).sum();
            assert!((0..m.cells.len()).all(|k| m.cell_area(k) > 0.0));
            assert!((total - 4.0 * 1.5).abs() <= 1e-12 * 6.0);
        }
    }

    #[test]
    fn diagonal_direction() {
        for (d, sign) in [(Diagonal::Anti, -1.0), (Diagonal::Main, 1.0)] {
            let m = build_structured_with(1, 1, 1.0, d).unwrap();
            let f = m.facets.iter().find(|f| f.is_interior()).unwrap();
            let (a, b) = (m.vertices[f.vertices[0]], m.vertices[f.vertices[1]]);
            assert_eq!((b[0] - a[0]) * (b[1] - a[1]) * sign, 4.0);
            assert_eq!(d.as_str().parse::<Diagonal>().unwrap(), d);
        }
    }

    #[test]
    fn facet_adjacency_and_normals() {
        let m = build_structured(6, 6, 1.0).unwrap();
        for f in &m.facets {
            let len = (f.normal[0].powi(2) + f.normal[1].powi(2)).sqrt();
            assert!((len - 1.0).abs() < 1e-14);
            assert_eq!(f.label == BoundaryLabel::Interior, f.n_cells == 2);
            if f.is_interior() {
                // the normal seen from the second cell is the exact negation
                let cen = centroid(&m.vertices, &m.cells[f.cells[1]]);
                let mid = f.midpoint(&m);
                let d = f.normal[0] * (mid[0] - cen[0]) + f.normal[1] * (mid[1] - cen[1]);
                assert!(d < 0.0);
                let h = 0.5 * (m.cell_diameter(f.cells[0]) + m.cell_diameter(f.cells[1]));
                assert!((f.h - h).abs() < 1e-15);
            } else {
                assert!((f.h - m.cell_diameter(f.cells[0])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn every_cell_facet_is_incident() {
        let m = build_structured(3, 4, 1.0).unwrap();
        for (k, fs) in m.cell_facets.iter().enumerate() {
            for (l, &fi) in fs.iter().enumerate() {
                let f = &m.facets[fi];
                assert!(f.cells.contains(&k));
                assert!(!f.vertices.contains(&m.cells[k][l]));
            }
        }
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_boundary_facet([-1.0, 0.5], 1.0).unwrap(), BoundaryLabel::GammaMinus);
        assert_eq!(classify_boundary_facet([1.0, 0.5], 1.0).unwrap(), BoundaryLabel::GammaPlus);
        assert_eq!(classify_boundary_facet([0.0, -1.0], 1.0).unwrap(), BoundaryLabel::GammaZero);
        assert_eq!(classify_boundary_facet([1.0, -0.5], 1.0).unwrap(), BoundaryLabel::GammaMinus);
        assert_eq!(classify_boundary_facet([-1.0, -0.5], 1.0).unwrap(), BoundaryLabel::GammaPlus);
        assert!(classify_boundary_facet([0.2, 0.1], 1.0).is_err());
    }

    #[test]
    fn symmetric_inflow_outflow_counts() {
        let m = build_structured(5, 6, 1.0).unwrap();
        let count = |l| m.facets.iter().filter(|f| f.label == l).count();
        assert_eq!(count(BoundaryLabel::GammaMinus), count(BoundaryLabel::GammaPlus));
        assert_eq!(count(BoundaryLabel::GammaMinus), 6);
        assert_eq!(count(BoundaryLabel::GammaZero), 10);
    }

    #[test]
    fn penalty_formula() {
        let mut f = build_structured(1, 1, 1.0).unwrap().facets[0].clone();
        f.h = 0.5;
        assert_eq!(facet_penalty(&f, 10.0, 2), 80.0);
        f.h = 0.25;
        assert_eq!(facet_penalty(&f, 10.0, 4), 640.0);
        assert_eq!(facet_penalty(&f, 10.0, 4), 4.0 * facet_penalty(&f, 10.0, 2));
    }

    #[test]
    fn text_dump_lines() {
        let m = build_structured(1, 1, 1.0).unwrap();
        let s = m.to_text();
        assert_eq!(s.lines().filter(|l| l.starts_with("v ")).count(), 4);
        assert_eq!(s.lines().filter(|l| l.starts_with("c ")).count(), 2);
        assert_eq!(s.lines().filter(|l| l.starts_with("f ")).count(), 5);
    }
}
