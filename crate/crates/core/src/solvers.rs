//! Stationary primal and optimal control solves, the projected Richardson
//! iteration for box constraints, theta-scheme time stepping and the
//! all-at-once time-dependent optimality system.

use std::sync::Arc;

use crate::analysis::{cost, h_norm, ValueGrad};
use crate::assembly::{
    adjoint_parts, assemble_h_mass, assemble_l2_mass, assemble_rhs_h, primal_parts, AdjointBoundary, HParams,
};
use crate::linalg::{block_compose, norm2, solve, LinearSolveReport, LuFactor, SparseOperator};
use crate::space::{nodal_project, Constraint, DiscreteField, FunctionSpace};
use crate::{Error, Result};

/// Default relative residual for linear solves.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Assembled operators shared by all solvers on one space.
pub struct Operators {
    pub space: Arc<FunctionSpace>,
    pub params: HParams,
    /// Unconstrained `a_h + s_h`.
    pub primal_full: SparseOperator,
    /// Unconstrained `a_h* + s_h*`.
    pub adjoint_full: SparseOperator,
    /// `a_h + s_h` restricted to the minus-set.
    pub primal: SparseOperator,
    /// `a_h* + s_h*` restricted to the plus-set.
    pub adjoint: SparseOperator,
    pub h_mass: SparseOperator,
    pub l2_mass: SparseOperator,
}

impl Operators {
    pub fn new(space: &Arc<FunctionSpace>, params: &HParams) -> Result<Self> {
        params.validate()?;
        if params.r != space.degree {
            return Err(Error::InvalidArgument("parameter degree differs from space degree".into()));
        }
        let primal_full = primal_parts(space, params).total();
        let adjoint_full = adjoint_parts(space, params, AdjointBoundary::Reversed).total();
        let minus = &space.minus_constrained;
        let plus = &space.plus_constrained;
        Ok(Self {
            space: space.clone(),
            params: *params,
            primal: primal_full.restrict(minus, minus, true),
            adjoint: adjoint_full.restrict(plus, plus, true),
            primal_full,
            adjoint_full,
            h_mass: assemble_h_mass(space, params.mmat()),
            l2_mass: assemble_l2_mass(space),
        })
    }

    fn mask(&self, c: Constraint) -> Vec<bool> {
        self.space.constrained(c).map(|m| m.to_vec()).unwrap_or_else(|| vec![false; self.space.n_dofs])
    }

    /// `M_H` with rows of `rows` and columns of `cols` removed (no unit diagonal).
    pub fn h_mass_block(&self, rows: Constraint, cols: Constraint) -> SparseOperator {
        self.h_mass.restrict(&self.mask(rows), &self.mask(cols), false)
    }

    fn zero_rows(&self, c: Constraint, x: &mut [f64]) {
        if let Some(m) = self.space.constrained(c) {
            for (xi, &mi) in x.iter_mut().zip(m) {
                if mi {
                    *xi = 0.0;
                }
            }
        }
    }
}

/// `a_h(U, phi) + s_h(U, phi) = (f, phi)_H` for `U` in the minus-set space.
pub fn solve_stationary_primal(ops: &Operators, f: ValueGrad) -> Result<(DiscreteField, LinearSolveReport)> {
    let b = assemble_rhs_h(&ops.space, f, ops.params.mmat(), Constraint::MinusSet);
    let (x, rep) = solve(&ops.primal, &b, DEFAULT_TOL)?;
    Ok((DiscreteField::from_coeffs(&ops.space, x, Constraint::MinusSet)?, rep))
}

/// Relative residuals of the three optimality equations.
#[derive(Debug, Clone, Copy, Default)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub control: f64,
}

#[derive(Debug, Clone)]
pub struct KktSolution {
    pub u: DiscreteField,
    pub z: DiscreteField,
    pub f: DiscreteField,
    pub cost: f64,
    pub report: LinearSolveReport,
    pub residuals: KktResiduals,
    pub iterations: usize,
}

fn rel(r: &[f64], scale: &[f64]) -> f64 {
    let s = norm2(scale);
    if s > 0.0 {
        norm2(r) / s
    } else {
        norm2(r)
    }
}

/// Residuals of `A U = M_H F`, `A* Z = b_D - M_H U` and `M_H (alpha F - Z) = 0`.
pub fn kkt_residuals(ops: &Operators, u: &[f64], z: &[f64], f: &[f64], b_target: &[f64]) -> KktResiduals {
    let alpha = ops.params.alpha;
    let au = ops.primal.spmv(u);
    let mut mf = ops.h_mass.spmv(f);
    ops.zero_rows(Constraint::MinusSet, &mut mf);
    let r1: Vec<f64> = au.iter().zip(&mf).map(|(a, b)| a - b).collect();
    let az = ops.adjoint.spmv(z);
    let mut mu = ops.h_mass.spmv(u);
    ops.zero_rows(Constraint::PlusSet, &mut mu);
    let r2: Vec<f64> = az.iter().zip(&mu).zip(b_target).map(|((a, b), c)| a + b - c).collect();
    let ctrl: Vec<f64> = f.iter().zip(z).map(|(fi, zi)| alpha * fi - zi).collect();
    let r3 = ops.h_mass.spmv(&ctrl);
    let mz = ops.h_mass.spmv(z);
    KktResiduals { primal: rel(&r1, &mf), dual: rel(&r2, b_target), control: rel(&r3, &mz) }
}

/// Reduced optimality system `[[alpha A, -M_H], [M_H, A*]] [U; Z] = [0; b_D]`, then `F = Z / alpha`.
pub fn solve_stationary_kkt(ops: &Operators, target: ValueGrad) -> Result<KktSolution> {
    let p = &ops.params;
    let n = ops.space.n_dofs;
    let b_target = assemble_rhs_h(&ops.space, target, p.mmat(), Constraint::PlusSet);
    let aa = ops.primal.scale(p.alpha);
    let m_up = ops.h_mass_block(Constraint::MinusSet, Constraint::PlusSet).scale(-1.0);
    let m_lo = ops.h_mass_block(Constraint::PlusSet, Constraint::MinusSet);
    let k = block_compose(&[vec![Some(&aa), Some(&m_up)], vec![Some(&m_lo), Some(&ops.adjoint)]])?;
    let mut rhs = vec![0.0; 2 * n];
    rhs[n..].copy_from_slice(&b_target);
    let (x, report) = solve(&k, &rhs, DEFAULT_TOL)?;
    let u = DiscreteField::from_coeffs(&ops.space, x[..n].to_vec(), Constraint::MinusSet)?;
    let z = DiscreteField::from_coeffs(&ops.space, x[n..].to_vec(), Constraint::PlusSet)?;
    let f = DiscreteField::from_coeffs(&ops.space, z.coeffs.iter().map(|c| c / p.alpha).collect(), Constraint::Free)?;
    let residuals = kkt_residuals(ops, &u.coeffs, &z.coeffs, &f.coeffs, &b_target);
    let c = cost(&u, &f, target, p);
    Ok(KktSolution { u, z, f, cost: c, report, residuals, iterations: 1 })
}

/// Settings of the projected Richardson iteration.
#[derive(Debug, Clone, Copy)]
pub struct RichardsonSettings {
    pub lo: f64,
    pub hi: f64,
    pub omega: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub log_every: usize,
}

impl Default for RichardsonSettings {
    fn default() -> Self {
        Self { lo: 0.0, hi: f64::INFINITY, omega: 1e-3, tol: 1e-10, max_iter: 1_000_000, log_every: 1000 }
    }
}

/// One sweep of the projected Richardson iteration, `U^{n-1} -> (U^n, Z^n, F^n)`:
/// dual solve with `U^{n-1}`, then a damped primal update with `F^n = P(Z^n / alpha)`.
pub struct RichardsonMap<'a> {
    ops: &'a Operators,
    settings: RichardsonSettings,
    b_target: Vec<f64>,
    lu_primal: LuFactor,
    lu_adjoint: LuFactor,
}

/// Iterate produced by [`RichardsonMap::apply`].
pub struct RichardsonIterate {
    pub u: Vec<f64>,
    pub z: Vec<f64>,
    pub f: DiscreteField,
}

impl<'a> RichardsonMap<'a> {
    pub fn new(ops: &'a Operators, target: ValueGrad, settings: &RichardsonSettings) -> Result<Self> {
        if !(settings.omega > 0.0 && settings.omega <= 1.0) {
            return Err(Error::InvalidArgument("omega must lie in (0, 1]".into()));
        }
        if settings.lo > settings.hi {
            return Err(Error::InvalidArgument("empty box".into()));
        }
        Ok(Self {
            ops,
            settings: *settings,
            b_target: assemble_rhs_h(&ops.space, target, ops.params.mmat(), Constraint::PlusSet),
            lu_primal: LuFactor::new(&ops.primal)?,
            lu_adjoint: LuFactor::new(&ops.adjoint)?,
        })
    }

    pub fn target_load(&self) -> &[f64] {
        &self.b_target
    }

    pub fn apply(&self, u_prev: &[f64]) -> Result<RichardsonIterate> {
        let (ops, s) = (self.ops, &self.settings);
        let mut mu = ops.h_mass.spmv(u_prev);
        ops.zero_rows(Constraint::PlusSet, &mut mu);
        let rhs: Vec<f64> = self.b_target.iter().zip(&mu).map(|(b, m)| b - m).collect();
        let z = self.lu_adjoint.solve(&rhs)?;
        let scaled = DiscreteField::from_coeffs(&ops.space, z.iter().map(|c| c / ops.params.alpha).collect(), Constraint::Free)?;
        let f = nodal_project(&scaled, s.lo, s.hi)?;
        let mut mf = ops.h_mass.spmv(&f.coeffs);
        ops.zero_rows(Constraint::MinusSet, &mut mf);
        let au = ops.primal.spmv(u_prev);
        let rhs: Vec<f64> = mf.iter().zip(&au).map(|(m, a)| s.omega * m + (1.0 - s.omega) * a).collect();
        Ok(RichardsonIterate { u: self.lu_primal.solve(&rhs)?, z, f })
    }
}

/// Projected Richardson iteration for `F` in the nodal box `[lo, hi]` from a zero start,
/// stopped once `||Z^n - Z^{n-1}||^2_{L2} < tol`.
/// `log` receives `(iteration, increment)` every `log_every` steps.
pub fn solve_box_richardson(
    ops: &Operators,
    target: ValueGrad,
    s: &RichardsonSettings,
    log: &mut dyn FnMut(usize, f64),
) -> Result<(KktSolution, Vec<(usize, f64)>)> {
    let start = std::time::Instant::now();
    let map = RichardsonMap::new(ops, target, s)?;
    let sp = &ops.space;
    let mut u = vec![0.0; sp.n_dofs];
    let mut z = vec![0.0; sp.n_dofs];
    let mut history = Vec::new();
    let mut last = f64::INFINITY;
    for it in 1..=s.max_iter {
        let next = map.apply(&u)?;
        let dz: Vec<f64> = next.z.iter().zip(&z).map(|(a, b)| a - b).collect();
        let incr = ops.l2_mass.bilinear(&dz, &dz);
        if !incr.is_finite() {
            return Err(Error::NonFinite(format!("Richardson increment at iteration {it}")));
        }
        u = next.u;
        z = next.z;
        last = incr;
        if s.log_every > 0 && it % s.log_every == 0 {
            history.push((it, incr));
            log(it, incr);
        }
        if incr < s.tol {
            history.push((it, incr));
            let f = next.f;
            let u = DiscreteField::from_coeffs(sp, u, Constraint::MinusSet)?;
            let z = DiscreteField::from_coeffs(sp, z, Constraint::PlusSet)?;
            let residuals = kkt_residuals(ops, &u.coeffs, &z.coeffs, &f.coeffs, map.target_load());
            let c = cost(&u, &f, target, &ops.params);
            let report = LinearSolveReport {
                method: crate::linalg::SolveMethod::SparseLu,
                iterations: it,
                residual: incr,
                roundoff_floor: 0.0,
                elapsed_secs: start.elapsed().as_secs_f64(),
            };
            return Ok((KktSolution { u, z, f, cost: c, report, residuals, iterations: it }, history));
        }
    }
    Err(Error::MaxIterations { iterations: s.max_iter, residual: last })
}

/// Time trajectory of one variable.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<DiscreteField>,
    pub h_norms: Vec<f64>,
}

impl Trajectory {
    fn new(times: Vec<f64>, fields: Vec<DiscreteField>, mm: [[f64; 2]; 2]) -> Result<Self> {
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("time grid must be strictly increasing".into()));
        }
        let h_norms = fields.iter().map(|f| h_norm(f, None, mm)).collect();
        Ok(Self { times, fields, h_norms })
    }
}

/// Time-dependent forcing `f(t, x, v) -> (value, gradient)`.
pub type TimeSource<'a> = &'a (dyn Fn(f64, f64, f64) -> (f64, [f64; 2]) + Sync);

/// `(M_H + theta dt A) U^{n+1} = (M_H - (1 - theta) dt A) U^n + dt (theta b^{n+1} + (1 - theta) b^n)`.
pub struct ThetaScheme<'a> {
    ops: &'a Operators,
    dt: f64,
    theta: f64,
    lhs: LuFactor,
    rhs_op: SparseOperator,
}

impl<'a> ThetaScheme<'a> {
    pub fn new(ops: &'a Operators, dt: f64, theta: f64) -> Result<Self> {
        if !(dt > 0.0) || !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidArgument("need dt > 0 and theta in [0, 1]".into()));
        }
        let minus = &ops.space.minus_constrained;
        let lhs = SparseOperator::axpby(1.0, &ops.h_mass, theta * dt, &ops.primal_full)?.restrict(minus, minus, true);
        let rhs_op = SparseOperator::axpby(1.0, &ops.h_mass, -(1.0 - theta) * dt, &ops.primal_full)?;
        Ok(Self { ops, dt, theta, lhs: LuFactor::new(&lhs)?, rhs_op })
    }

    fn load(&self, f: Option<TimeSource>, t: f64) -> Vec<f64> {
        match f {
            None => vec![0.0; self.ops.space.n_dofs],
            Some(f) => assemble_rhs_h(&self.ops.space, &|x, v| f(t, x, v), self.ops.params.mmat(), Constraint::MinusSet),
        }
    }

    /// One step from time `t`.
    pub fn advance(&self, u: &DiscreteField, t: f64, f: Option<TimeSource>) -> Result<DiscreteField> {
        let mut rhs = self.rhs_op.spmv(&u.coeffs);
        self.ops.zero_rows(Constraint::MinusSet, &mut rhs);
        if f.is_some() {
            let b0 = self.load(f, t);
            let b1 = self.load(f, t + self.dt);
            for i in 0..rhs.len() {
                rhs[i] += self.dt * (self.theta * b1[i] + (1.0 - self.theta) * b0[i]);
            }
        }
        DiscreteField::from_coeffs(&self.ops.space, self.lhs.solve(&rhs)?, Constraint::MinusSet)
    }

    /// Integrate from `u0` at `t = 0` over `steps` steps.
    pub fn run(&self, u0: &DiscreteField, steps: usize, f: Option<TimeSource>) -> Result<Trajectory> {
        let mut fields = vec![u0.clone()];
        let mut times = vec![0.0];
        for k in 0..steps {
            let t = k as f64 * self.dt;
            let next = self.advance(fields.last().unwrap(), t, f)?;
            fields.push(next);
            times.push(t + self.dt);
        }
        Trajectory::new(times, fields, self.ops.params.mmat())
    }
}

/// Result of the time-dependent optimal control solve.
#[derive(Debug, Clone)]
pub struct TimeDepSolution {
    pub u: Trajectory,
    pub z: Trajectory,
    pub f: Trajectory,
    pub cost: f64,
    pub residual: f64,
}

/// Default cap on `K * N` for the all-at-once system.
pub const DEFAULT_SPACE_TIME_CAP: usize = 2_000_000;

/// Implicit Euler forward in time for `U` (with `U(0) = 0`) and backward in
/// time for `Z` (with `Z(T) = 0`), coupled through `F = Z / alpha`:
///
/// `(M_H + dt A) U^{n+1} - M_H U^n - dt/alpha M_H Z^{n+1} = 0`,
/// `(M_H + dt A*) Z^n - M_H Z^{n+1} + dt M_H U^n = dt b_D(t_n)`.
pub fn solve_timedep_kkt(ops: &Operators, target: TimeSource, t_end: f64, steps: usize, cap: usize) -> Result<TimeDepSolution> {
    if steps < 2 || !(t_end > 0.0) {
        return Err(Error::InvalidArgument("need K >= 2 and T > 0".into()));
    }
    let sp = &ops.space;
    let n = sp.n_dofs;
    if steps.saturating_mul(n) > cap {
        return Err(Error::MemoryGuard(format!("K*N = {} exceeds the cap {cap}", steps * n)));
    }
    let p = &ops.params;
    let dt = t_end / steps as f64;
    let minus = &sp.minus_constrained;
    let plus = &sp.plus_constrained;
    let fwd_diag = SparseOperator::axpby(1.0, &ops.h_mass, dt, &ops.primal_full)?.restrict(minus, minus, true);
    let bwd_diag = SparseOperator::axpby(1.0, &ops.h_mass, dt, &ops.adjoint_full)?.restrict(plus, plus, true);
    let m_mm = ops.h_mass_block(Constraint::MinusSet, Constraint::MinusSet);
    let m_mp = ops.h_mass_block(Constraint::MinusSet, Constraint::PlusSet);
    let m_pp = ops.h_mass_block(Constraint::PlusSet, Constraint::PlusSet);
    let m_pm = ops.h_mass_block(Constraint::PlusSet, Constraint::MinusSet);

    // unknown blocks: U^1..U^K at 0..K, Z^0..Z^{K-1} at K..2K
    let ub = |k: usize| k - 1;
    let zb = |k: usize| steps + k;
    let mut t = Vec::new();
    let mut put = |bi: usize, bj: usize, a: &SparseOperator, s: f64| {
        t.extend(a.triplets().into_iter().map(|(i, j, v)| (bi * n + i, bj * n + j, s * v)));
    };
    for k in 0..steps {
        let row = ub(k + 1);
        put(row, ub(k + 1), &fwd_diag, 1.0);
        if k >= 1 {
            put(row, ub(k), &m_mm, -1.0);
        }
        if k + 1 < steps {
            put(row, zb(k + 1), &m_mp, -dt / p.alpha);
        }
        let row = zb(k);
        put(row, zb(k), &bwd_diag, 1.0);
        if k + 1 < steps {
            put(row, zb(k + 1), &m_pp, -1.0);
        }
        if k >= 1 {
            put(row, ub(k), &m_pm, dt);
        }
    }
    let big = SparseOperator::from_triplets(2 * steps * n, 2 * steps * n, t);
    let mut rhs = vec![0.0; 2 * steps * n];
    let mut any = false;
    for k in 0..steps {
        let tk = k as f64 * dt;
        let b = assemble_rhs_h(sp, &|x, v| target(tk, x, v), p.mmat(), Constraint::PlusSet);
        any |= b.iter().any(|&v| v != 0.0);
        rhs[zb(k) * n..(zb(k) + 1) * n].iter_mut().zip(&b).for_each(|(r, bi)| *r = dt * bi);
    }
    let (x, residual) = if any {
        let (x, rep) = solve(&big, &rhs, DEFAULT_TOL)?;
        (x, rep.residual)
    } else {
        (vec![0.0; rhs.len()], 0.0)
    };

    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let mut us = vec![DiscreteField::zeros(sp, Constraint::MinusSet)];
    for k in 1..=steps {
        us.push(DiscreteField::from_coeffs(sp, x[ub(k) * n..(ub(k) + 1) * n].to_vec(), Constraint::MinusSet)?);
    }
    let mut zs = Vec::new();
    for k in 0..steps {
        zs.push(DiscreteField::from_coeffs(sp, x[zb(k) * n..(zb(k) + 1) * n].to_vec(), Constraint::PlusSet)?);
    }
    zs.push(DiscreteField::zeros(sp, Constraint::PlusSet));
    let fs: Vec<DiscreteField> = zs
        .iter()
        .map(|z| DiscreteField::from_coeffs(sp, z.coeffs.iter().map(|c| c / p.alpha).collect(), Constraint::Free))
        .collect::<Result<_>>()?;
    let costs: Vec<f64> = (0..=steps).map(|k| cost(&us[k], &fs[k], &|x, v| target(times[k], x, v), p)).collect();
    let j = crate::analysis::trapezoid(&times, &costs);
    let mm = p.mmat();
    Ok(TimeDepSolution {
        u: Trajectory::new(times.clone(), us, mm)?,
        z: Trajectory::new(times.clone(), zs, mm)?,
        f: Trajectory::new(times, fs, mm)?,
        cost: j,
        residual,
    })
}
