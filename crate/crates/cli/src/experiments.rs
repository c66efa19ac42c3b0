//! The experiment drivers: computations shared with the checks, plus the
//! artifact writers behind each subcommand.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use hypokfem_core::analysis::{
    constants, correlation, decay_report, h_norm, l2_norm, triple_norm, DecayReport, ErrorReport, ErrorRow, NormVariant,
};
use hypokfem_core::manufactured::{oc_manufactured, primal_forcing, eval_jet_order, sin4_benchmark, target_time};
use hypokfem_core::mesh::build_structured_with;
use hypokfem_core::solvers::{
    solve_box_richardson, solve_stationary_kkt, solve_stationary_primal, solve_timedep_kkt, KktSolution, Operators,
    RichardsonMap, RichardsonSettings, ThetaScheme, TimeDepSolution, DEFAULT_SPACE_TIME_CAP,
};
use hypokfem_core::space::build_space;
use hypokfem_core::{Constraint, Diagonal, DiscreteField, FunctionSpace, HParams};

use crate::checks::{self, Verdict};
use crate::config::{ConfigError, Experiment, ExperimentConfig, Target};
use crate::output::Output;
use crate::Result;

/// Position half width and quad split of the meshes.
#[derive(Debug, Clone, Copy)]
pub struct Domain {
    pub x_max: f64,
    pub diagonal: Diagonal,
}

impl From<&ExperimentConfig> for Domain {
    fn from(c: &ExperimentConfig) -> Self {
        Self { x_max: c.x_max, diagonal: c.diagonal }
    }
}

pub fn space(n: usize, r: usize, dom: Domain) -> Result<Arc<FunctionSpace>> {
    Ok(build_space(Arc::new(build_structured_with(n, n, dom.x_max, dom.diagonal)?), r)?)
}

pub fn diff(a: &DiscreteField, b: &DiscreteField) -> DiscreteField {
    let c = a.coeffs.iter().zip(&b.coeffs).map(|(p, q)| p - q).collect();
    DiscreteField::from_coeffs(&a.space, c, Constraint::Free).expect("same space")
}

/// Parameters of one configuration entry.
pub fn params(cfg: &ExperimentConfig, r: usize, eps: f64, m: f64, alpha: f64) -> Result<HParams> {
    Ok(HParams::new(eps, m, cfg.c_sigma, r, alpha)?)
}

/// Primal errors of the sin^4 benchmark over the refinements `ns` (`h = 1/n`).
pub fn primal_table(p: &HParams, ns: &[usize], dom: Domain) -> Result<(ErrorReport, DiscreteField)> {
    let u = sin4_benchmark(dom.x_max);
    let f = |x: f64, v: f64| primal_forcing(&eval_jet_order(&u, x, v, 3), v, p.eps);
    let mut report = ErrorReport::default();
    let mut last = None;
    for &n in ns {
        let sp = space(n, p.r, dom)?;
        let (uh, _) = solve_stationary_primal(&Operators::new(&sp, p)?, &f)?;
        report.rows.push(ErrorRow {
            h: 1.0 / n as f64,
            dofs: sp.n_dofs,
            err_h: h_norm(&uh, Some(&|x, v| u.value_grad(x, v)), p.mmat()),
            err_triple: triple_norm(&uh, Some(&|x, v| u.point_data(x, v)), NormVariant::Primal, p),
            ..ErrorRow::default()
        });
        last = Some(uh);
    }
    report.compute_eoc()?;
    let last = last.ok_or_else(|| ConfigError::Invalid(format!("no refinement fits the direct solver for r={}", p.r)))?;
    Ok((report, last))
}

/// Errors of the manufactured optimal control triple; `err_H` and `err_triple`
/// refer to `u`, `err_triple_dual` to `z`.
/// Largest coupled system handed to the direct solver by the convergence studies.
pub const KKT_MAX_UNKNOWNS: usize = 100_000;

/// Refinements whose coupled system fits under [`KKT_MAX_UNKNOWNS`].
pub fn kkt_refinements(ns: &[usize], r: usize) -> Vec<usize> {
    ns.iter().copied().filter(|&n| 2 * (r * n + 1).pow(2) <= KKT_MAX_UNKNOWNS).collect()
}

pub fn oc_table(p: &HParams, ns: &[usize], dom: Domain) -> Result<(ErrorReport, KktSolution)> {
    let u = sin4_benchmark(dom.x_max);
    let case = oc_manufactured(&u, p.alpha, p.eps, p.m, dom.x_max)?;
    let mut report = ErrorReport::default();
    let mut last = None;
    for &n in ns {
        let sp = space(n, p.r, dom)?;
        let sol = solve_stationary_kkt(&Operators::new(&sp, p)?, &|x, v| case.target(x, v))?;
        report.rows.push(ErrorRow {
            h: 1.0 / n as f64,
            dofs: sp.n_dofs,
            err_h: h_norm(&sol.u, Some(&|x, v| u.value_grad(x, v)), p.mmat()),
            err_triple: triple_norm(&sol.u, Some(&|x, v| u.point_data(x, v)), NormVariant::Primal, p),
            err_triple_dual: Some(triple_norm(&sol.z, Some(&|x, v| case.z.point_data(x, v)), NormVariant::Dual, p)),
            ..ErrorRow::default()
        });
        last = Some(sol);
    }
    report.compute_eoc()?;
    let last = last.ok_or_else(|| ConfigError::Invalid(format!("no refinement fits the direct solver for r={}", p.r)))?;
    Ok((report, last))
}

/// Implicit Euler free decay from the sin^4 interpolant.
pub fn decay_run(p: &HParams, n: usize, dom: Domain, t_end: f64, steps: usize) -> Result<(Vec<f64>, Vec<f64>, DecayReport)> {
    let sp = space(n, p.r, dom)?;
    let ops = Operators::new(&sp, p)?;
    let u0 = DiscreteField::interpolate(&sp, |x, v| sin4_benchmark(dom.x_max).eval(x, v), Constraint::MinusSet);
    let tr = ThetaScheme::new(&ops, t_end / steps as f64, 1.0)?.run(&u0, steps, None)?;
    let rep = decay_report(&tr.times, &tr.h_norms)?;
    Ok((tr.times, tr.h_norms, rep))
}

/// Outcome of the box-constrained control runs.
pub struct BoxOutcome {
    /// `(label, lo, hi, solution, increment history)` per bounded variant.
    pub bounded: Vec<(String, f64, f64, KktSolution, Vec<(usize, f64)>)>,
    pub unconstrained: KktSolution,
    /// `||R(U*) - U*||_H / ||U*||_H` for the unbounded map at the direct KKT solution.
    pub fixed_point_gap: f64,
}

pub fn box_run(
    p: &HParams,
    n: usize,
    dom: Domain,
    base: &RichardsonSettings,
    kappa: f64,
    target: Target,
    log: &mut dyn FnMut(&str, usize, f64),
) -> Result<BoxOutcome> {
    let sp = space(n, p.r, dom)?;
    let ops = Operators::new(&sp, p)?;
    let d = target.eval();
    let mut bounded = Vec::new();
    for (lo, hi) in [(0.0, f64::INFINITY), (0.0, kappa)] {
        let label = format!("[{lo},{}]", if hi.is_finite() { hi.to_string() } else { "inf".into() });
        let s = RichardsonSettings { lo, hi, ..*base };
        let (sol, hist) = solve_box_richardson(&ops, &d, &s, &mut |i, e| log(&label, i, e))?;
        bounded.push((label, lo, hi, sol, hist));
    }
    let unconstrained = solve_stationary_kkt(&ops, &d)?;
    let free = RichardsonSettings { lo: f64::NEG_INFINITY, hi: f64::INFINITY, ..*base };
    let next = RichardsonMap::new(&ops, &d, &free)?.apply(&unconstrained.u.coeffs)?;
    let next = DiscreteField::from_coeffs(&sp, next.u, Constraint::MinusSet)?;
    let mm = p.mmat();
    let fixed_point_gap = h_norm(&diff(&next, &unconstrained.u), None, mm) / h_norm(&unconstrained.u, None, mm);
    Ok(BoxOutcome { bounded, unconstrained, fixed_point_gap })
}

/// Time-dependent control with the pulsing target, plus the zero-target run.
pub struct TimedepOutcome {
    pub solution: TimeDepSolution,
    pub l2: Vec<f64>,
    pub pulse: Vec<f64>,
    pub correlation: f64,
    pub zero_target_is_zero: bool,
}

pub fn timedep_run(p: &HParams, n: usize, dom: Domain, t_end: f64, steps: usize) -> Result<TimedepOutcome> {
    let sp = space(n, p.r, dom)?;
    let ops = Operators::new(&sp, p)?;
    let zero = solve_timedep_kkt(&ops, &|_, _, _| (0.0, [0.0; 2]), t_end, steps, DEFAULT_SPACE_TIME_CAP)?;
    let all_zero = |fs: &[DiscreteField]| fs.iter().all(|f| f.coeffs.iter().all(|&c| c == 0.0));
    let zero_target_is_zero = all_zero(&zero.u.fields) && all_zero(&zero.z.fields) && all_zero(&zero.f.fields);
    let solution = solve_timedep_kkt(&ops, &target_time, t_end, steps, DEFAULT_SPACE_TIME_CAP)?;
    let l2: Vec<f64> = solution.u.fields.iter().map(|f| l2_norm(f, None)).collect();
    let pulse: Vec<f64> = solution.u.times.iter().map(|t| 1.0 - (2.0 * PI * t).cos()).collect();
    let correlation = correlation(&l2, &pulse);
    Ok(TimedepOutcome { solution, l2, pulse, correlation, zero_target_is_zero })
}

/// Summary, artifacts and verdicts of one run.
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub summary: Vec<(String, String)>,
    pub verdicts: Vec<Verdict>,
}

impl RunOutcome {
    fn note(&mut self, k: impl Into<String>, v: impl ToString) {
        self.summary.push((k.into(), v.to_string()));
    }
}

fn sci(x: f64) -> String {
    format!("{x:.6e}")
}

fn kkt_row(s: &KktSolution, target: Target, p: &HParams) -> Vec<String> {
    let d = target.eval();
    let dv = |x: f64, v: f64| d(x, v).0;
    vec![
        sci(s.cost),
        sci(l2_norm(&s.u, Some(&dv))),
        sci(h_norm(&s.f, None, p.mmat())),
        sci(s.residuals.primal.max(s.residuals.dual).max(s.residuals.control)),
    ]
}

/// Run one experiment and write its artifacts.
pub fn run(cfg: &ExperimentConfig, out: &mut Output, progress: &mut dyn FnMut(&str)) -> Result<RunOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let mut o = match cfg.experiment {
        Experiment::PrimalConvergence | Experiment::OcConvergence => convergence(cfg, out, progress)?,
        Experiment::AlphaSweep => alpha_sweep(cfg, out, progress)?,
        Experiment::MSweep => m_sweep(cfg, out, progress)?,
        Experiment::BoxControl => box_control(cfg, out, progress)?,
        Experiment::Timedep => timedep(cfg, out)?,
        Experiment::Decay => decay(cfg, out)?,
        Experiment::CheckAll => {
            let mut o = RunOutcome::default();
            o.verdicts = checks::check_all(cfg, progress);
            out.text("verdicts.txt", &checks::render(&o.verdicts))?;
            o
        }
    };
    o.note("elapsed_secs", format!("{:.3}", start.elapsed().as_secs_f64()));
    let mut report = String::new();
    for (k, v) in &o.summary {
        let _ = writeln!(report, "{k} = {v}");
    }
    for v in &o.verdicts {
        let _ = writeln!(report, "criterion_{} = {}", v.id, v.status);
    }
    out.text("report.txt", &report)?;
    out.manifest(cfg, &[])?;
    Ok(o)
}

fn convergence(cfg: &ExperimentConfig, out: &mut Output, progress: &mut dyn FnMut(&str)) -> Result<RunOutcome> {
    let mut o = RunOutcome::default();
    let (eps, m) = (cfg.scalar("eps", &cfg.eps)?, cfg.scalar("m", &cfg.m)?);
    let primal = cfg.experiment == Experiment::PrimalConvergence;
    let mut per_r = Vec::new();
    for &r in &cfg.r {
        let stem = if primal { "primal" } else { "oc" };
        progress(&format!("{stem} r={r} n={:?}", cfg.n));
        let (report, rates) = if primal {
            let p = params(cfg, r, eps, m, 1.0)?;
            let (rep, uh) = primal_table(&p, &cfg.n, cfg.into())?;
            out.vtk(&format!("{stem}_r{r}_u.vtk"), &uh, "u")?;
            let last = rep.rows.last().expect("rows");
            let rates = vec![("H", last.eoc_h), ("triple", last.eoc_triple)];
            (rep, rates)
        } else {
            let p = params(cfg, r, eps, m, cfg.scalar("alpha", &cfg.alpha)?)?;
            let ns = kkt_refinements(&cfg.n, r);
            if ns.len() < cfg.n.len() {
                progress(&format!("oc r={r}: coupled system too large, using n={ns:?}"));
            }
            let (rep, sol) = oc_table(&p, &ns, cfg.into())?;
            out.vtk(&format!("{stem}_r{r}_u.vtk"), &sol.u, "u")?;
            out.vtk(&format!("{stem}_r{r}_z.vtk"), &sol.z, "z")?;
            let last = rep.rows.last().expect("rows");
            let rates = vec![("u_triple", last.eoc_triple), ("z_triple_dual", last.eoc_triple_dual)];
            (rep, rates)
        };
        out.text(&format!("{stem}_r{r}.csv"), &report.to_csv())?;
        for (k, e) in &rates {
            o.note(format!("eoc_{k}_r{r}"), e.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into()));
        }
        per_r.push((r, rates.into_iter().map(|(k, e)| (k.to_string(), e)).collect::<Vec<_>>()));
    }
    let (id, name) = if primal { (1, "primal convergence") } else { (2, "optimal control convergence") };
    o.verdicts.push(if m == 0.0 { checks::skipped(id, name) } else { checks::rate_verdict(id, name, &per_r) });
    Ok(o)
}

fn alpha_sweep(cfg: &ExperimentConfig, out: &mut Output, progress: &mut dyn FnMut(&str)) -> Result<RunOutcome> {
    let mut o = RunOutcome::default();
    let (n, r, m) = (cfg.n[0], cfg.r[0], cfg.scalar("m", &cfg.m)?);
    let sp = space(n, r, cfg.into())?;
    let mut csv = String::from("eps,alpha,target,cost,misfit_L2,control_H,kkt_residual\n");
    let mut worst = 0.0f64;
    for &eps in &cfg.eps {
        for &t in &cfg.targets {
            for &alpha in &cfg.alpha {
                progress(&format!("alpha-sweep eps={eps} alpha={alpha} target={}", t.name()));
                let p = params(cfg, r, eps, m, alpha)?;
                let s = solve_stationary_kkt(&Operators::new(&sp, &p)?, &t.eval())?;
                let row = kkt_row(&s, t, &p);
                let _ = writeln!(csv, "{eps},{alpha},{},{}", t.name(), row.join(","));
                worst = worst.max(s.residuals.primal.max(s.residuals.dual).max(s.residuals.control));
                let tag = format!("eps{eps}_alpha{alpha}_{}", t.name());
                out.vtk(&format!("u_{tag}.vtk"), &s.u, "u")?;
                out.vtk(&format!("f_{tag}.vtk"), &s.f, "f")?;
            }
        }
    }
    out.text("alpha_sweep.csv", &csv)?;
    o.note("max_kkt_residual", sci(worst));
    o.verdicts.push(checks::residual_verdict("alpha sweep optimality residuals", worst));
    Ok(o)
}

fn m_sweep(cfg: &ExperimentConfig, out: &mut Output, progress: &mut dyn FnMut(&str)) -> Result<RunOutcome> {
    let mut o = RunOutcome::default();
    let (n, r) = (cfg.n[0], cfg.r[0]);
    let (eps, alpha) = (cfg.scalar("eps", &cfg.eps)?, cfg.scalar("alpha", &cfg.alpha)?);
    let sp = space(n, r, cfg.into())?;
    let mut csv = String::from("m,target,cost,misfit_L2,control_H,kkt_residual,grad_u_L2\n");
    let mut worst = 0.0f64;
    for &m in &cfg.m {
        for &t in &cfg.targets {
            progress(&format!("m-sweep m={m} target={}", t.name()));
            let p = params(cfg, r, eps, m, alpha)?;
            let s = solve_stationary_kkt(&Operators::new(&sp, &p)?, &t.eval())?;
            let grad = (h_norm(&s.u, None, [[1.0, 0.0], [0.0, 1.0]]).powi(2) - l2_norm(&s.u, None).powi(2)).max(0.0).sqrt();
            let _ = writeln!(csv, "{m},{},{},{}", t.name(), kkt_row(&s, t, &p).join(","), sci(grad));
            worst = worst.max(s.residuals.primal.max(s.residuals.dual).max(s.residuals.control));
            let tag = format!("m{m:.4}_{}", t.name());
            out.vtk(&format!("u_{tag}.vtk"), &s.u, "u")?;
            out.vtk(&format!("f_{tag}.vtk"), &s.f, "f")?;
        }
    }
    out.text("m_sweep.csv", &csv)?;
    o.note("max_kkt_residual", sci(worst));
    o.verdicts.push(checks::residual_verdict("m sweep optimality residuals", worst));
    Ok(o)
}

fn box_control(cfg: &ExperimentConfig, out: &mut Output, progress: &mut dyn FnMut(&str)) -> Result<RunOutcome> {
    let mut o = RunOutcome::default();
    let p = params(cfg, cfg.r[0], cfg.scalar("eps", &cfg.eps)?, cfg.scalar("m", &cfg.m)?, cfg.scalar("alpha", &cfg.alpha)?)?;
    let base = RichardsonSettings { omega: cfg.omega, tol: cfg.tol, max_iter: cfg.max_iter, ..RichardsonSettings::default() };
    let target = cfg.targets[0];
    let res = box_run(&p, cfg.n[0], cfg.into(), &base, cfg.kappa, target, &mut |l, i, e| {
        progress(&format!("richardson {l} iteration {i} increment {e:.3e}"))
    })?;
    let mut csv = String::from("variant,iterations,cost,misfit_L2,control_H,f_min,f_max\n");
    for (k, (label, _, _, sol, hist)) in res.bounded.iter().enumerate() {
        let row = kkt_row(sol, target, &p);
        let (lo, hi) = sol.f.coeffs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| (a.min(c), b.max(c)));
        let _ = writeln!(csv, "{label},{},{},{},{},{},{}", sol.iterations, row[0], row[1], row[2], sci(lo), sci(hi));
        let mut h = String::from("iteration,increment\n");
        for (i, e) in hist {
            let _ = writeln!(h, "{i},{}", sci(*e));
        }
        out.text(&format!("richardson_{k}.csv"), &h)?;
        out.vtk(&format!("u_box{k}.vtk"), &sol.u, "u")?;
        out.vtk(&format!("f_box{k}.vtk"), &sol.f, "f")?;
        o.note(format!("iterations_{label}"), sol.iterations);
    }
    let row = kkt_row(&res.unconstrained, target, &p);
    let _ = writeln!(csv, "unconstrained,1,{},{},{},,", row[0], row[1], row[2]);
    out.text("box_control.csv", &csv)?;
    out.vtk("u_free.vtk", &res.unconstrained.u, "u")?;
    out.vtk("f_free.vtk", &res.unconstrained.f, "f")?;
    o.note("fixed_point_gap", sci(res.fixed_point_gap));
    o.verdicts.push(checks::box_verdict(&res));
    Ok(o)
}

fn timedep(cfg: &ExperimentConfig, out: &mut Output) -> Result<RunOutcome> {
    let mut o = RunOutcome::default();
    let p = params(cfg, cfg.r[0], cfg.scalar("eps", &cfg.eps)?, cfg.scalar("m", &cfg.m)?, cfg.scalar("alpha", &cfg.alpha)?)?;
    let res = timedep_run(&p, cfg.n[0], cfg.into(), cfg.t_end, cfg.steps)?;
    let s = &res.solution;
    let mut csv = String::from("t,u_L2,f_L2,z_L2,pulse\n");
    for (k, t) in s.u.times.iter().enumerate() {
        let fz = |tr: &hypokfem_core::Trajectory| {
            tr.times.iter().position(|x| (x - t).abs() < 1e-12).map(|i| sci(l2_norm(&tr.fields[i], None))).unwrap_or_default()
        };
        let _ = writeln!(csv, "{t:.6},{},{},{},{}", sci(res.l2[k]), fz(&s.f), fz(&s.z), sci(res.pulse[k]));
    }
    out.text("timedep.csv", &csv)?;
    let quarter = (cfg.steps / 4).max(1);
    for k in (0..=cfg.steps).step_by(quarter) {
        out.vtk(&format!("u_step{k:04}.vtk"), &s.u.fields[k], "u")?;
    }
    o.note("cost", sci(s.cost));
    o.note("residual", sci(s.residual));
    o.note("correlation", format!("{:.6}", res.correlation));
    o.verdicts.push(checks::timedep_verdict(&res));
    Ok(o)
}

fn decay(cfg: &ExperimentConfig, out: &mut Output) -> Result<RunOutcome> {
    let mut o = RunOutcome::default();
    let p = params(cfg, cfg.r[0], cfg.scalar("eps", &cfg.eps)?, cfg.scalar("m", &cfg.m)?, 1.0)?;
    let (times, norms, rep) = decay_run(&p, cfg.n[0], cfg.into(), cfg.t_end, cfg.steps)?;
    let mut csv = String::from("t,u_H\n");
    for (t, n) in times.iter().zip(&norms) {
        let _ = writeln!(csv, "{t:.6},{}", sci(*n));
    }
    out.text("decay.csv", &csv)?;
    let c = constants(&p, cfg.x_max);
    o.note("monotone", rep.monotone);
    o.note("rate", format!("{:.6}", rep.rate));
    o.note("delta_tilde", sci(c.delta_tilde));
    o.note("delta_h", "not computed");
    o.verdicts.push(if p.m == 0.0 { checks::skipped(5, "decay") } else { checks::decay_verdict(&rep, c.delta_tilde) });
    Ok(o)
}
