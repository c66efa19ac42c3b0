use std::sync::Arc;

use hypokfem_core::analysis::{constants, decay_report, h_norm, l2_norm};
use hypokfem_core::assembly::HParams;
use hypokfem_core::manufactured::{eval_jet_order, primal_forcing, sin4_benchmark, target_d2};
use hypokfem_core::mesh::build_structured;
use hypokfem_core::solvers::{
    solve_box_richardson, solve_stationary_kkt, solve_timedep_kkt, Operators, RichardsonSettings, ThetaScheme,
    DEFAULT_SPACE_TIME_CAP,
};
use hypokfem_core::space::{build_space, Constraint, DiscreteField, FunctionSpace};

fn space(n: usize, r: usize) -> Arc<FunctionSpace> {
    build_space(Arc::new(build_structured(n, n, 1.0).unwrap()), r).unwrap()
}

fn diff(a: &DiscreteField, b: &DiscreteField) -> DiscreteField {
    let c = a.coeffs.iter().zip(&b.coeffs).map(|(p, q)| p - q).collect();
    DiscreteField::from_coeffs(&a.space, c, Constraint::Free).unwrap()
}

#[test]
fn crank_nicolson_is_second_order_in_time() {
    let p = HParams::default();
    let sp = space(8, 2);
    let ops = Operators::new(&sp, &p).unwrap();
    let s = sin4_benchmark(1.0);
    // u = sin(t) S(x, v), f = cos(t) S + sin(t) K S
    let f = |t: f64, x: f64, v: f64| {
        let (sv, sg) = s.value_grad(x, v);
        let (kv, kg) = primal_forcing(&eval_jet_order(&s, x, v, 3), v, p.eps);
        (t.cos() * sv + t.sin() * kv, [t.cos() * sg[0] + t.sin() * kg[0], t.cos() * sg[1] + t.sin() * kg[1]])
    };
    let u0 = DiscreteField::zeros(&sp, Constraint::MinusSet);
    let end = |k: usize| {
        let ts = ThetaScheme::new(&ops, 1.0 / k as f64, 0.5).unwrap();
        ts.run(&u0, k, Some(&f)).unwrap().fields.pop().unwrap()
    };
    let (a, b, c) = (end(16), end(32), end(64));
    let mm = p.mmat();
    let rate = (h_norm(&diff(&a, &b), None, mm) / h_norm(&diff(&b, &c), None, mm)).log2();
    assert!((rate - 2.0).abs() < 0.2, "{rate}");
}

#[test]
fn free_decay_is_monotone_and_faster_than_explicit_rate() {
    let p = HParams::default();
    let sp = space(8, 2);
    let ops = Operators::new(&sp, &p).unwrap();
    let u0 = DiscreteField::interpolate(&sp, |x, v| sin4_benchmark(1.0).eval(x, v), Constraint::MinusSet);
    let tr = ThetaScheme::new(&ops, 0.02, 1.0).unwrap().run(&u0, 50, None).unwrap();
    let rep = decay_report(&tr.times, &tr.h_norms).unwrap();
    assert!(rep.monotone && rep.rate >= constants(&p, 1.0).delta_tilde);
}

#[test]
fn box_constrained_controls_respect_bounds_and_diffuse_the_state() {
    let p = HParams { alpha: 1e-3, ..HParams::default() };
    let sp = space(8, 2);
    let ops = Operators::new(&sp, &p).unwrap();
    let free = solve_stationary_kkt(&ops, &target_d2).unwrap();
    let d2 = |x: f64, v: f64| target_d2(x, v).0;
    let free_miss = l2_norm(&free.u, Some(&d2));
    for hi in [f64::INFINITY, 1.0] {
        let s = RichardsonSettings { lo: 0.0, hi, ..RichardsonSettings::default() };
        let (sol, _) = solve_box_richardson(&ops, &target_d2, &s, &mut |_, _| {}).unwrap();
        assert!(sol.f.coeffs.iter().all(|&c| (0.0..=hi).contains(&c)));
        assert!(l2_norm(&sol.u, Some(&d2)) > free_miss);
    }
}

#[test]
fn timedep_solution_is_linear_in_the_target() {
    let p = HParams { alpha: 1e-2, ..HParams::default() };
    let sp = space(4, 2);
    let ops = Operators::new(&sp, &p).unwrap();
    let g = |t: f64, x: f64, v: f64| hypokfem_core::manufactured::target_time(t, x, v);
    let g3 = |t: f64, x: f64, v: f64| {
        let (a, d) = g(t, x, v);
        (3.0 * a, [3.0 * d[0], 3.0 * d[1]])
    };
    let stab = |s: &hypokfem_core::solvers::TimeDepSolution| {
        p.alpha * s.u.h_norms.last().unwrap().powi(2) + s.z.h_norms[0].powi(2)
    };
    let s1 = solve_timedep_kkt(&ops, &g, 1.0, 8, DEFAULT_SPACE_TIME_CAP).unwrap();
    let s3 = solve_timedep_kkt(&ops, &g3, 1.0, 8, DEFAULT_SPACE_TIME_CAP).unwrap();
    assert!(stab(&s1).is_finite() && stab(&s1) > 0.0);
    assert!((stab(&s3) / stab(&s1) - 9.0).abs() < 1e-8);
    assert!(s1.residual <= 1e-9);
    assert!(s1.z.fields.last().unwrap().coeffs.iter().all(|&c| c == 0.0));
    assert!(s1.u.fields[0].coeffs.iter().all(|&c| c == 0.0));
}

#[test]
fn timedep_approaches_stationary_optimum_for_constant_target() {
    let p = HParams { alpha: 1e-1, ..HParams::default() };
    let sp = space(4, 2);
    let ops = Operators::new(&sp, &p).unwrap();
    let d = hypokfem_core::manufactured::target_d1;
    let stat = solve_stationary_kkt(&ops, &d).unwrap();
    let gap = |t_end: f64| {
        let k = (8.0 * t_end) as usize;
        let s = solve_timedep_kkt(&ops, &|_, x, v| d(x, v), t_end, k, DEFAULT_SPACE_TIME_CAP).unwrap();
        let end = h_norm(&diff(s.u.fields.last().unwrap(), &stat.u), None, p.mmat());
        let mid = h_norm(&diff(&s.u.fields[k / 2], &stat.u), None, p.mmat());
        (end, mid)
    };
    let ((e1, m1), (e2, m2)) = (gap(4.0), gap(16.0));
    assert!(e2 < e1, "{e1} {e2}");
    assert!(m2 < 1e-3 * m1, "{m1} {m2}");
}
