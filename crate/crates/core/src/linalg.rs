//! Compressed sparse row operators, sparse LU (via `faer`) and restarted
//! GMRES with ILU(0) preconditioning.

use std::fmt::Write as _;
use std::time::Instant;

use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::linalg::solvers::Solve;
use faer::Mat;
use rayon::prelude::*;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseOperator {
    /// Sums duplicates in input order, so the result only depends on the
    /// order of `triplets`.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i},{j}) out of bounds");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        Self { nrows: n, ncols: n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|p| vals[p]).unwrap_or(0.0)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            t.extend(c.iter().zip(v).map(|(&j, &x)| (i, j, x)));
        }
        t
    }

    pub fn spmv(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y);
        y
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        y.par_chunks_mut(1024).enumerate().for_each(|(c, chunk)| {
            for (o, yi) in chunk.iter_mut().enumerate() {
                let i = c * 1024 + o;
                let mut s = 0.0;
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    s += self.values[p] * x[self.col_idx[p]];
                }
                *yi = s;
            }
        });
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.spmv(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn transpose(&self) -> Self {
        let t = self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, t)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `a A + b B`.
    pub fn axpby(a: f64, lhs: &Self, b: f64, rhs: &Self) -> Result<Self> {
        if lhs.nrows != rhs.nrows || lhs.ncols != rhs.ncols {
            return Err(Error::InvalidArgument("dimension mismatch in axpby".into()));
        }
        let mut t: Vec<_> = lhs.triplets().into_iter().map(|(i, j, v)| (i, j, a * v)).collect();
        t.extend(rhs.triplets().into_iter().map(|(i, j, v)| (i, j, b * v)));
        Ok(Self::from_triplets(lhs.nrows, lhs.ncols, t))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Drop rows flagged in `row_mask` and columns flagged in `col_mask`;
    /// with `unit_diagonal` the dropped rows get a 1 on the diagonal.
    pub fn restrict(&self, row_mask: &[bool], col_mask: &[bool], unit_diagonal: bool) -> Self {
        assert_eq!(row_mask.len(), self.nrows);
        assert_eq!(col_mask.len(), self.ncols);
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            if row_mask[i] {
                if unit_diagonal {
                    t.push((i, i, 1.0));
                }
                continue;
            }
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                if !col_mask[j] {
                    t.push((i, j, x));
                }
            }
        }
        Self::from_triplets(self.nrows, self.ncols, t)
    }

    /// Matrix Market coordinate format.
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "{} {} {}", self.nrows, self.ncols, self.nnz());
        for (i, j, v) in self.triplets() {
            let _ = writeln!(s, "{} {} {:.17e}", i + 1, j + 1, v);
        }
        s
    }

    pub fn from_matrix_market(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("matrix market: {m}"));
        let mut lines = text.lines().filter(|l| !l.starts_with('%') && !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("missing size line"))?;
        let dims: Vec<usize> = header.split_whitespace().map(|t| t.parse().map_err(|_| bad("size"))).collect::<Result<_>>()?;
        if dims.len() != 3 {
            return Err(bad("size line needs 3 entries"));
        }
        let mut t = Vec::with_capacity(dims[2]);
        for l in lines {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad("entry line needs 3 fields"));
            }
            let i: usize = f[0].parse().map_err(|_| bad("row"))?;
            let j: usize = f[1].parse().map_err(|_| bad("col"))?;
            let v: f64 = f[2].parse().map_err(|_| bad("value"))?;
            t.push((i - 1, j - 1, v));
        }
        Ok(Self::from_triplets(dims[0], dims[1], t))
    }
}

/// Assemble a block operator; `None` blocks are zero. Every block row and
/// block column needs at least one present block to fix its size.
pub fn block_compose(blocks: &[Vec<Option<&SparseOperator>>]) -> Result<SparseOperator> {
    let nbr = blocks.len();
    let nbc = blocks.first().map(|r| r.len()).unwrap_or(0);
    let mut heights = vec![None; nbr];
    let mut widths = vec![None; nbc];
    for (bi, row) in blocks.iter().enumerate() {
        if row.len() != nbc {
            return Err(Error::InvalidArgument("ragged block grid".into()));
        }
        for (bj, b) in row.iter().enumerate() {
            if let Some(b) = b {
                for (slot, val) in [(&mut heights[bi], b.nrows), (&mut widths[bj], b.ncols)] {
                    match slot {
                        Some(s) if *s != val => return Err(Error::InvalidArgument("block dimension mismatch".into())),
                        _ => *slot = Some(val),
                    }
                }
            }
        }
    }
    let heights: Vec<usize> = heights.into_iter().map(|h| h.ok_or_else(|| Error::InvalidArgument("empty block row".into()))).collect::<Result<_>>()?;
    let widths: Vec<usize> = widths.into_iter().map(|w| w.ok_or_else(|| Error::InvalidArgument("empty block column".into()))).collect::<Result<_>>()?;
    let mut roff = vec![0];
    for h in &heights {
        roff.push(roff.last().unwrap() + h);
    }
    let mut coff = vec![0];
    for w in &widths {
        coff.push(coff.last().unwrap() + w);
    }
    let mut t = Vec::new();
    for (bi, row) in blocks.iter().enumerate() {
        for (bj, b) in row.iter().enumerate() {
            if let Some(b) = b {
                t.extend(b.triplets().into_iter().map(|(i, j, v)| (i + roff[bi], j + coff[bj], v)));
            }
        }
    }
    Ok(SparseOperator::from_triplets(roff[nbr], coff[nbc], t))
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `||A x - b|| / ||b||` (absolute when `b = 0`).
pub fn relative_residual(a: &SparseOperator, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.spmv(x);
    let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
    let nb = norm2(b);
    if nb > 0.0 {
        norm2(&r) / nb
    } else {
        norm2(&r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    SparseLu,
    Gmres,
}

#[derive(Debug, Clone)]
pub struct LinearSolveReport {
    pub method: SolveMethod,
    pub iterations: usize,
    pub residual: f64,
    /// Attainable relative residual in double precision (direct solves only).
    pub roundoff_floor: f64,
    pub elapsed_secs: f64,
}

/// Reusable sparse LU factorisation.
pub struct LuFactor {
    n: usize,
    lu: Lu<usize, f64>,
}

impl LuFactor {
    pub fn new(a: &SparseOperator) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::InvalidArgument("matrix must be square".into()));
        }
        if a.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries".into()));
        }
        for i in 0..a.nrows {
            if a.row_ptr[i] == a.row_ptr[i + 1] {
                return Err(Error::StructurallySingular);
            }
        }
        let t: Vec<Triplet<usize, usize, f64>> = a.triplets().into_iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows, a.ncols, &t)
            .map_err(|e| Error::InvalidArgument(format!("{e:?}")))?;
        let lu = m.sp_lu().map_err(|_| Error::StructurallySingular)?;
        Ok(Self { n: a.nrows, lu })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::InvalidArgument("rhs length mismatch".into()));
        }
        let mut rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(rhs.as_mut());
        let x: Vec<f64> = (0..self.n).map(|i| rhs[(i, 0)]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::StructurallySingular);
        }
        Ok(x)
    }
}

/// `||b - A x||_2 / ||b||_2` cannot drop below `u * || |A| |x| ||_2 / ||b||_2` in double
/// precision, even for the correctly rounded solution.
pub fn roundoff_floor(a: &SparseOperator, x: &[f64], b: &[f64]) -> f64 {
    let nb = norm2(b);
    if nb == 0.0 {
        return 0.0;
    }
    let ax: Vec<f64> = (0..a.nrows)
        .map(|i| {
            let (cols, vals) = a.row(i);
            cols.iter().zip(vals).map(|(&j, v)| (v * x[j]).abs()).sum()
        })
        .collect();
    f64::EPSILON * norm2(&ax) / nb
}

/// Factor a square operator and solve with up to three steps of iterative refinement.
/// A residual above `tol` is accepted only when refinement has stagnated within
/// ten times the round-off floor.
pub fn solve_direct(a: &SparseOperator, b: &[f64], tol: f64) -> Result<(Vec<f64>, LinearSolveReport)> {
    let start = Instant::now();
    let lu = LuFactor::new(a)?;
    let mut x = lu.solve(b)?;
    let mut res = relative_residual(a, &x, b);
    let mut steps = 0;
    while res > tol && steps < 3 {
        let ax = a.spmv(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let dx = lu.solve(&r)?;
        let trial: Vec<f64> = x.iter().zip(&dx).map(|(xi, d)| xi + d).collect();
        let next = relative_residual(a, &trial, b);
        steps += 1;
        if next >= res {
            break;
        }
        x = trial;
        res = next;
    }
    let floor = roundoff_floor(a, &x, b);
    let report = LinearSolveReport {
        method: SolveMethod::SparseLu,
        iterations: steps,
        residual: res,
        roundoff_floor: floor,
        elapsed_secs: start.elapsed().as_secs_f64(),
    };
    if res > tol.max(10.0 * floor) {
        return Err(Error::MaxIterations { iterations: steps, residual: res });
    }
    Ok((x, report))
}

/// Incomplete LU with zero fill on the sparsity pattern of `A`.
pub struct Ilu0 {
    lu: SparseOperator,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &SparseOperator) -> Result<Self> {
        let mut lu = a.clone();
        let n = a.nrows;
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            for p in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.col_idx[p] == i {
                    diag[i] = p;
                }
            }
            if diag[i] == usize::MAX {
                return Err(Error::Breakdown(format!("ILU(0): missing diagonal in row {i}")));
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (s, e) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for p in s..e {
                pos[lu.col_idx[p]] = p;
            }
            for p in s..e {
                let k = lu.col_idx[p];
                if k >= i {
                    break;
                }
                let piv = lu.values[diag[k]];
                if piv == 0.0 {
                    return Err(Error::Breakdown(format!("ILU(0): zero pivot in row {k}")));
                }
                let lik = lu.values[p] / piv;
                lu.values[p] = lik;
                for q in diag[k] + 1..lu.row_ptr[k + 1] {
                    let j = lu.col_idx[q];
                    if pos[j] != usize::MAX {
                        lu.values[pos[j]] -= lik * lu.values[q];
                    }
                }
            }
            for p in s..e {
                pos[lu.col_idx[p]] = usize::MAX;
            }
            if lu.values[diag[i]] == 0.0 {
                return Err(Error::Breakdown(format!("ILU(0): zero pivot in row {i}")));
            }
        }
        Ok(Self { lu, diag })
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let n = r.len();
        let mut y = r.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for p in self.lu.row_ptr[i]..self.diag[i] {
                s -= self.lu.values[p] * y[self.lu.col_idx[p]];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for p in self.diag[i] + 1..self.lu.row_ptr[i + 1] {
                s -= self.lu.values[p] * y[self.lu.col_idx[p]];
            }
            y[i] = s / self.lu.values[self.diag[i]];
        }
        y
    }
}

/// Right-preconditioned restarted GMRES(`restart`) with ILU(0).
pub fn solve_gmres(
    a: &SparseOperator,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, LinearSolveReport)> {
    let start = Instant::now();
    let n = a.nrows;
    let pc = Ilu0::new(a)?;
    let nb = norm2(b);
    let mut x = vec![0.0; n];
    if nb == 0.0 {
        return Ok((x, LinearSolveReport { method: SolveMethod::Gmres, iterations: 0, residual: 0.0, roundoff_floor: 0.0, elapsed_secs: 0.0 }));
    }
    let m = restart.max(1);
    let mut total = 0;
    loop {
        let ax = a.spmv(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let beta = norm2(&r);
        if beta / nb <= tol {
            let report = LinearSolveReport { method: SolveMethod::Gmres, iterations: total, residual: beta / nb, roundoff_floor: 0.0, elapsed_secs: start.elapsed().as_secs_f64() };
            return Ok((x, report));
        }
        if total >= max_iter {
            return Err(Error::MaxIterations { iterations: total, residual: beta / nb });
        }
        let mut basis = vec![r.iter().map(|v| v / beta).collect::<Vec<f64>>()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let zk = pc.apply(&basis[k]);
            let mut w = a.spmv(&zk);
            for (j, vj) in basis.iter().enumerate() {
                h[j][k] = dot(&w, vj);
                w.iter_mut().zip(vj).for_each(|(wi, v)| *wi -= h[j][k] * v);
            }
            let hn = norm2(&w);
            h[k + 1][k] = hn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            if d == 0.0 {
                return Err(Error::Breakdown("GMRES: zero Hessenberg column".into()));
            }
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            if g[k + 1].abs() / nb <= tol || total >= max_iter || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut u = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            u.iter_mut().zip(&basis[j]).for_each(|(ui, v)| *ui += yj * v);
        }
        let du = pc.apply(&u);
        x.iter_mut().zip(&du).for_each(|(xi, d)| *xi += d);
    }
}

/// Systems up to this size use the sparse direct solver.
pub const DIRECT_LIMIT: usize = 200_000;

/// Solve `A x = b` to relative residual `tol`, direct up to [`DIRECT_LIMIT`]
/// unknowns and GMRES beyond.
pub fn solve(a: &SparseOperator, b: &[f64], tol: f64) -> Result<(Vec<f64>, LinearSolveReport)> {
    if a.nrows != a.ncols || b.len() != a.nrows {
        return Err(Error::InvalidArgument("dimension mismatch in solve".into()));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("right-hand side".into()));
    }
    if a.nrows <= DIRECT_LIMIT {
        solve_direct(a, b, tol)
    } else {
        solve_gmres(a, b, tol, 200, 20_000)
    }
}
