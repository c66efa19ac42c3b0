//! Acceptance suite: one function per criterion, each returning a verdict.

use std::fmt;
use std::time::Instant;

use hypokfem_core::analysis::{constants, cost, DecayReport};
use hypokfem_core::assembly::{adjoint_parts, primal_parts, AdjointBoundary};
use hypokfem_core::linalg::{solve, SparseOperator};
use hypokfem_core::manufactured::{eval_jet, oc_manufactured, sin4_benchmark, Expr};
use hypokfem_core::solvers::{solve_stationary_kkt, Operators, RichardsonSettings, DEFAULT_TOL};
use hypokfem_core::{Constraint, DiscreteField, HParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, Target};
use crate::experiments::{self, BoxOutcome, TimedepOutcome};
use crate::Result;

/// Printed for checks that need `m > 0`.
pub const NON_HYPOCOERCIVE: &str = "non-hypocoercive mode (m = 0): check skipped";

/// Criteria whose statement relies on `m > 0`.
pub const HYPOCOERCIVE_ONLY: [u8; 4] = [1, 2, 4, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
            Self::Skipped => "SKIP",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Verdict {
    /// Criterion number, 0 for experiment-only sanity checks.
    pub id: u8,
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl Verdict {
    fn new(id: u8, name: &str, pass: bool, detail: String) -> Self {
        let status = if pass { Status::Pass } else { Status::Fail };
        Self { id, name: name.into(), status, detail }
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "criterion {} ({}): {} | {}", self.id, self.name, self.status, self.detail)
    }
}

pub fn render(verdicts: &[Verdict]) -> String {
    verdicts.iter().map(|v| format!("{v}\n")).collect()
}

pub fn skipped(id: u8, name: &str) -> Verdict {
    Verdict { id, name: name.into(), status: Status::Skipped, detail: NON_HYPOCOERCIVE.into() }
}

fn failed(id: u8, name: &str, e: impl fmt::Display) -> Verdict {
    Verdict::new(id, name, false, format!("error: {e}"))
}

/// Finest-pair rate bands `[r - 1.25, r - 0.4]`.
pub fn rate_band(r: usize) -> (f64, f64) {
    (r as f64 - 1.25, r as f64 - 0.4)
}

pub fn rate_verdict(id: u8, name: &str, per_r: &[(usize, Vec<(String, Option<f64>)>)]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (r, rates) in per_r {
        let (lo, hi) = rate_band(*r);
        for (k, e) in rates {
            let ok = e.is_some_and(|e| (lo..=hi).contains(&e));
            pass &= ok;
            let shown = e.map(|e| format!("{e:.3}")).unwrap_or_else(|| "n/a".into());
            parts.push(format!("r={r} {k}={shown} in [{lo:.2},{hi:.2}]{}", if ok { "" } else { " (out of band)" }));
        }
    }
    Verdict::new(id, name, pass, parts.join("; "))
}

pub fn residual_verdict(name: &str, worst: f64) -> Verdict {
    Verdict::new(0, name, worst <= 1e-8, format!("max relative residual {worst:.3e} <= 1e-8"))
}

pub fn decay_verdict(rep: &DecayReport, delta_tilde: f64) -> Verdict {
    let pass = rep.monotone && rep.rate >= delta_tilde;
    Verdict::new(5, "decay", pass, format!("monotone={} rate={:.4} delta_tilde={:.4e}", rep.monotone, rep.rate, delta_tilde))
}

pub fn box_verdict(res: &BoxOutcome) -> Verdict {
    let mut pass = res.fixed_point_gap <= 1e-6;
    let mut parts = Vec::new();
    for (label, lo, hi, sol, _) in &res.bounded {
        let inside = sol.f.coeffs.iter().all(|&c| c >= *lo && c <= *hi);
        pass &= inside;
        parts.push(format!("{label}: {} iterations, bounds {}", sol.iterations, if inside { "exact" } else { "violated" }));
    }
    parts.push(format!("unbounded fixed point vs direct KKT {:.3e} <= 1e-6", res.fixed_point_gap));
    Verdict::new(6, "Richardson box control", pass, parts.join("; "))
}

pub fn timedep_verdict(res: &TimedepOutcome) -> Verdict {
    let pass = res.zero_target_is_zero && res.correlation >= 0.9;
    let detail = format!(
        "zero target gives zero={} corr={:.4} >= 0.9 cost={:.4e} residual={:.2e}",
        res.zero_target_is_zero, res.correlation, res.solution.cost, res.solution.residual
    );
    Verdict::new(8, "time-dependent control", pass, detail)
}

/// Shared parameters of the suite.
fn base(cfg: &ExperimentConfig, r: usize, alpha: f64) -> Result<HParams> {
    experiments::params(cfg, r, cfg.eps[0], cfg.m[0], alpha)
}

fn refinements(cfg: &ExperimentConfig) -> Vec<usize> {
    let mut ns = vec![4, 8, 16, 32];
    if cfg.expensive {
        ns.push(64);
    }
    ns
}

pub fn criterion_1(cfg: &ExperimentConfig) -> Verdict {
    let name = "primal convergence";
    if cfg.m[0] == 0.0 {
        return skipped(1, name);
    }
    let run = || -> Result<Verdict> {
        let mut per_r = Vec::new();
        for r in [2, 3, 4] {
            let (rep, _) = experiments::primal_table(&base(cfg, r, 1.0)?, &refinements(cfg), cfg.into())?;
            let last = rep.rows.last().expect("rows");
            per_r.push((r, vec![("triple".into(), last.eoc_triple), ("H".into(), last.eoc_h)]));
        }
        Ok(rate_verdict(1, name, &per_r))
    };
    run().unwrap_or_else(|e| failed(1, name, e))
}

pub fn criterion_2(cfg: &ExperimentConfig) -> Verdict {
    let name = "optimal control convergence";
    if cfg.m[0] == 0.0 {
        return skipped(2, name);
    }
    let run = || -> Result<Verdict> {
        let mut per_r = Vec::new();
        for r in [2, 3, 4] {
            let (rep, _) = experiments::oc_table(&base(cfg, r, 1.0)?, &experiments::kkt_refinements(&refinements(cfg), r), cfg.into())?;
            let last = rep.rows.last().expect("rows");
            per_r.push((r, vec![("u_triple".into(), last.eoc_triple), ("z_triple_dual".into(), last.eoc_triple_dual)]));
        }
        Ok(rate_verdict(2, name, &per_r))
    };
    run().unwrap_or_else(|e| failed(2, name, e))
}

pub fn criterion_3(cfg: &ExperimentConfig) -> Verdict {
    let name = "adjoint identity";
    let run = || -> Result<Verdict> {
        let p = base(cfg, 2, 1.0)?;
        let sp = experiments::space(8, 2, cfg.into())?;
        let a = primal_parts(&sp, &p).volume;
        let b = adjoint_parts(&sp, &p, AdjointBoundary::Reversed).volume;
        let gap = SparseOperator::axpby(1.0, &b, -1.0, &a.transpose())?.max_abs();
        let bound = 1e-12 * a.max_abs();
        Ok(Verdict::new(3, name, gap <= bound, format!("max|A*_vol - A_vol^T| = {gap:.3e} <= {bound:.3e}")))
    };
    run().unwrap_or_else(|e| failed(3, name, e))
}

fn random_constrained(rng: &mut ChaCha8Rng, mask: &[bool]) -> Vec<f64> {
    mask.iter().map(|&m| if m { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect()
}

pub fn criterion_4(cfg: &ExperimentConfig) -> Verdict {
    let name = "coercivity positivity";
    if cfg.m[0] == 0.0 {
        return skipped(4, name);
    }
    let run = || -> Result<Verdict> {
        let p = base(cfg, 2, 1.0)?;
        let sp = experiments::space(8, 2, cfg.into())?;
        let ops = Operators::new(&sp, &p)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut worst = [f64::INFINITY; 2];
        for (k, (a, mask)) in [(&ops.primal_full, &sp.minus_constrained), (&ops.adjoint_full, &sp.plus_constrained)].into_iter().enumerate() {
            for _ in 0..100 {
                let w = random_constrained(&mut rng, mask);
                let q = a.bilinear(&w, &w) / w.iter().map(|x| x * x).sum::<f64>();
                worst[k] = worst[k].min(q);
            }
        }
        let pass = worst.iter().all(|&q| q > 0.0);
        Ok(Verdict::new(4, name, pass, format!("min W^T A W / |W|^2 = {:.3e}, min Z^T A* Z / |Z|^2 = {:.3e}", worst[0], worst[1])))
    };
    run().unwrap_or_else(|e| failed(4, name, e))
}

pub fn criterion_5(cfg: &ExperimentConfig) -> Verdict {
    let name = "decay";
    if cfg.m[0] == 0.0 {
        return skipped(5, name);
    }
    let run = || -> Result<Verdict> {
        let p = base(cfg, 2, 1.0)?;
        let (_, _, rep) = experiments::decay_run(&p, 16, cfg.into(), 2.0, 200)?;
        Ok(decay_verdict(&rep, constants(&p, cfg.x_max).delta_tilde))
    };
    run().unwrap_or_else(|e| failed(5, name, e))
}

pub fn criterion_6(cfg: &ExperimentConfig) -> Verdict {
    let name = "Richardson box control";
    let run = || -> Result<Verdict> {
        let p = base(cfg, 2, 1e-3)?;
        let n = if cfg.expensive { 90 } else { 24 };
        let s = RichardsonSettings { omega: 1e-3, tol: 1e-10, ..RichardsonSettings::default() };
        Ok(box_verdict(&experiments::box_run(&p, n, cfg.into(), &s, 1.0, Target::D2, &mut |_, _, _| {})?))
    };
    run().unwrap_or_else(|e| failed(6, name, e))
}

fn fd4(g: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
    (-g(t + 2.0 * h) + 8.0 * g(t + h) - 8.0 * g(t - h) + g(t - 2.0 * h)) / (12.0 * h)
}

/// Largest mismatch of all jet partials up to order 4 against central differences
/// of the next lower partial, scaled by `max(1, |partial|)`.
pub fn jet_fd_mismatch(e: &Expr, x: f64, v: f64) -> f64 {
    let h = 1e-3;
    let jet = eval_jet(e, x, v);
    let mut worst = (jet.value() - e.eval(x, v)).abs() / jet.value().abs().max(1.0);
    for ord in 1..=4 {
        for a in 0..=ord {
            let b = ord - a;
            let fd = if a > 0 {
                fd4(|s| eval_jet(e, s, v).d(a - 1, b), x, h)
            } else {
                fd4(|s| eval_jet(e, x, s).d(a, b - 1), v, h)
            };
            let d = jet.d(a, b);
            worst = worst.max((d - fd).abs() / d.abs().max(1.0));
        }
    }
    worst
}

pub fn criterion_7(cfg: &ExperimentConfig) -> Verdict {
    let name = "derivative oracle";
    let run = || -> Result<Verdict> {
        let u = sin4_benchmark(cfg.x_max);
        let case = oc_manufactured(&u, 1.0, cfg.eps[0], cfg.m[0], cfg.x_max)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let (x, v) = (rng.gen_range(-cfg.x_max..cfg.x_max), rng.gen_range(-1.0..1.0));
            for e in [&u, &case.z, &case.f] {
                worst = worst.max(jet_fd_mismatch(e, x, v));
            }
        }
        Ok(Verdict::new(7, name, worst <= 1e-6, format!("max relative mismatch {worst:.3e} <= 1e-6 over 50 points")))
    };
    run().unwrap_or_else(|e| failed(7, name, e))
}

pub fn criterion_8(cfg: &ExperimentConfig) -> Verdict {
    let name = "time-dependent control";
    let run = || -> Result<Verdict> {
        let p = base(cfg, 2, 1e-2)?;
        Ok(timedep_verdict(&experiments::timedep_run(&p, 8, cfg.into(), 1.0, 32)?))
    };
    run().unwrap_or_else(|e| failed(8, name, e))
}

pub fn criterion_9(cfg: &ExperimentConfig) -> Verdict {
    let name = "KKT minimiser";
    let run = || -> Result<Verdict> {
        let p = base(cfg, 2, 1.0)?;
        let sp = experiments::space(8, 2, cfg.into())?;
        let ops = Operators::new(&sp, &p)?;
        let case = oc_manufactured(&sin4_benchmark(cfg.x_max), 1.0, p.eps, p.m, cfg.x_max)?;
        let target = |x: f64, v: f64| case.target(x, v);
        let opt = solve_stationary_kkt(&ops, &target)?;
        let e0 = cost(&opt.u, &opt.f, &target, &p);
        let m_map = ops.h_mass_block(Constraint::MinusSet, Constraint::Free);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut worst = f64::INFINITY;
        // nodal amplitude 10% of the optimal control
        let amp = 0.1 * opt.f.coeffs.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
        for _ in 0..10 {
            let g: Vec<f64> = (0..sp.n_dofs).map(|_| amp * rng.gen_range(-1.0..1.0)).collect();
            let (du, _) = solve(&ops.primal, &m_map.spmv(&g), DEFAULT_TOL)?;
            let shift = |a: &DiscreteField, d: &[f64], tag| {
                DiscreteField::from_coeffs(&sp, a.coeffs.iter().zip(d).map(|(x, y)| x + y).collect(), tag)
            };
            let e1 = cost(&shift(&opt.u, &du, Constraint::MinusSet)?, &shift(&opt.f, &g, Constraint::Free)?, &target, &p);
            worst = worst.min((e1 - e0) / e0);
        }
        Ok(Verdict::new(9, name, worst > 0.0, format!("min relative cost increase {worst:.3e} > 0 over 10 perturbations, E*={e0:.6e}")))
    };
    run().unwrap_or_else(|e| failed(9, name, e))
}

pub fn criterion(id: u8, cfg: &ExperimentConfig) -> Verdict {
    match id {
        1 => criterion_1(cfg),
        2 => criterion_2(cfg),
        3 => criterion_3(cfg),
        4 => criterion_4(cfg),
        5 => criterion_5(cfg),
        6 => criterion_6(cfg),
        7 => criterion_7(cfg),
        8 => criterion_8(cfg),
        9 => criterion_9(cfg),
        _ => failed(id, "unknown", "no such criterion"),
    }
}

/// Run the selected criteria in order, reporting each line as it finishes.
pub fn check_selected(cfg: &ExperimentConfig, ids: &[u8], progress: &mut dyn FnMut(&str)) -> Vec<Verdict> {
    if cfg.m[0] == 0.0 {
        progress(NON_HYPOCOERCIVE);
    }
    ids.iter()
        .map(|&id| {
            let start = Instant::now();
            let mut v = criterion(id, cfg);
            v.detail = format!("{} ({:.1} s)", v.detail, start.elapsed().as_secs_f64());
            progress(&v.to_string());
            v
        })
        .collect()
}

pub fn check_all(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Vec<Verdict> {
    check_selected(cfg, &[1, 2, 3, 4, 5, 6, 7, 8, 9], progress)
}
