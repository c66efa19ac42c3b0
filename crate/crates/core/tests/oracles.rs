use std::sync::Arc;

use hypokfem_core::analysis::{constants, h_norm, l2_norm, triple_norm, NormVariant};
use hypokfem_core::assembly::{apply_to_smooth, assemble_h_mass, assemble_l2_mass, assemble_rhs_h, HParams};
use hypokfem_core::manufactured::{eval_jet_order, oc_manufactured, primal_forcing, sin4_benchmark};
use hypokfem_core::mesh::build_structured;
use hypokfem_core::solvers::{kkt_residuals, solve_stationary_primal, Operators};
use hypokfem_core::space::{build_space, l2_project, Constraint, DiscreteField, FunctionSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn space(n: usize, r: usize) -> Arc<FunctionSpace> {
    build_space(Arc::new(build_structured(n, n, 1.0).unwrap()), r).unwrap()
}

fn max_free(r: &[f64], mask: &[bool]) -> f64 {
    r.iter().zip(mask).filter(|(_, &m)| !m).map(|(v, _)| v.abs()).fold(0.0, f64::max)
}

#[test]
fn manufactured_triple_satisfies_discrete_optimality_system() {
    // Residuals of the continuous (u, z, f) in the discrete equations vanish with quadrature error.
    let p = HParams::default();
    let u = sin4_benchmark(1.0);
    let case = oc_manufactured(&u, 1.0, p.eps, p.m, 1.0).unwrap();
    let mut prev = None;
    for n in [8, 16, 32] {
        let sp = space(n, 2);
        let au = apply_to_smooth(&sp, &p, &|x, v| u.point_data(x, v), false);
        let bf = assemble_rhs_h(&sp, &|x, v| case.f.value_grad(x, v), p.mmat(), Constraint::MinusSet);
        let primal: Vec<f64> = au.iter().zip(&bf).map(|(a, b)| a - b).collect();
        let az = apply_to_smooth(&sp, &p, &|x, v| case.z.point_data(x, v), true);
        let bd = assemble_rhs_h(&sp, &|x, v| case.target(x, v), p.mmat(), Constraint::PlusSet);
        let bu = assemble_rhs_h(&sp, &|x, v| u.value_grad(x, v), p.mmat(), Constraint::PlusSet);
        let dual: Vec<f64> = az.iter().zip(&bd).zip(&bu).map(|((a, b), c)| a - b + c).collect();
        let res = (max_free(&primal, &sp.minus_constrained), max_free(&dual, &sp.plus_constrained));
        if let Some((p0, d0)) = prev {
            let (p1, d1): (f64, f64) = res;
            assert!(p1 < p0 / 10.0 && d1 < d0 / 10.0, "{p0:e} {p1:e} {d0:e} {d1:e}");
        }
        prev = Some(res);
    }
    let (p_res, d_res) = prev.unwrap();
    assert!(p_res < 1e-5 && d_res < 1e-4);
}

#[test]
fn manufactured_primal_forcing_matches_symbolic_operator() {
    let u = sin4_benchmark(1.0);
    let case = oc_manufactured(&u, 1.0, 0.1, 0.35, 1.0).unwrap();
    for &(x, v) in &[(0.25, 0.25), (-0.3, 0.7), (0.9, -0.1)] {
        let (f, g) = primal_forcing(&eval_jet_order(&u, x, v, 3), v, 0.1);
        let (fe, ge) = case.f.value_grad(x, v);
        assert!((f - fe).abs() < 1e-12 && (g[0] - ge[0]).abs() < 1e-11 && (g[1] - ge[1]).abs() < 1e-11);
    }
}

#[test]
fn l2_projection_recovers_optimal_order() {
    let g = |x: f64, v: f64| sin4_benchmark(1.0).eval(x, v);
    let e16 = l2_norm(&l2_project(&space(16, 2), g).unwrap(), Some(&g));
    let e32 = l2_norm(&l2_project(&space(32, 2), g).unwrap(), Some(&g));
    let rate = (e16 / e32).log2();
    assert!((rate - 3.0).abs() < 0.35, "{rate}");
}

#[test]
fn load_vector_converges_under_refinement() {
    // (f, phi)_H applied to the interpolant of a fixed smooth function.
    let p = HParams::default();
    let u = sin4_benchmark(1.0);
    let test_fn = |x: f64, v: f64| (1.0 - x * x) * (1.0 - v * v) * (x + 2.0 * v).cos();
    let exact_like = |n: usize| {
        let sp = space(n, 2);
        let f = |x: f64, v: f64| primal_forcing(&eval_jet_order(&u, x, v, 3), v, p.eps);
        let b = assemble_rhs_h(&sp, &f, p.mmat(), Constraint::Free);
        let w = DiscreteField::interpolate(&sp, test_fn, Constraint::Free);
        b.iter().zip(&w.coeffs).map(|(a, c)| a * c).sum::<f64>()
    };
    let (a, b, c) = (exact_like(8), exact_like(16), exact_like(32));
    assert!((c - b).abs() < (b - a).abs() / 4.0);
}

#[test]
fn norm_equivalence_sandwich() {
    let p = HParams::default();
    let sp = space(6, 2);
    let mh = assemble_h_mass(&sp, p.mmat());
    let ml = assemble_l2_mass(&sp);
    let grad = assemble_h_mass(&sp, [[1.0, 0.0], [0.0, 1.0]]);
    let c = constants(&p, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let w: Vec<f64> = (0..sp.n_dofs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = mh.bilinear(&w, &w);
        assert!(h >= ml.bilinear(&w, &w) * (1.0 - 1e-12));
        assert!(h <= c.c_eq_plus * grad.bilinear(&w, &w) * (1.0 + 1e-12));
    }
}

#[test]
fn discrete_norm_relation_for_minus_set_fields() {
    let p = HParams::default();
    let sp = space(6, 2);
    let c = constants(&p, 1.0);
    let diam = 2.0 * 2f64.sqrt();
    let bound = (diam / std::f64::consts::PI).powi(2) + c.lambda_max_m;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let w: Vec<f64> = (0..sp.n_dofs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = hypokfem_core::space::apply_constraints(DiscreteField::from_coeffs(&sp, w, Constraint::MinusSet).unwrap());
        let h = h_norm(&w, None, p.mmat()).powi(2);
        let t = triple_norm(&w, None, NormVariant::Primal, &p).powi(2);
        assert!(h <= bound * t, "{h} {t}");
    }
}

#[test]
fn primal_solution_converges_for_quadratics() {
    let p = HParams::default();
    let u = sin4_benchmark(1.0);
    let f = |x: f64, v: f64| primal_forcing(&eval_jet_order(&u, x, v, 3), v, p.eps);
    let err = |n: usize| {
        let sp = space(n, 2);
        let (uh, rep) = solve_stationary_primal(&Operators::new(&sp, &p).unwrap(), &f).unwrap();
        assert!(rep.residual <= 1e-10);
        triple_norm(&uh, Some(&|x, v| u.point_data(x, v)), NormVariant::Primal, &p)
    };
    let rate = (err(16) / err(32)).log2();
    assert!((0.75..=1.6).contains(&rate), "{rate}");
}

#[test]
fn kkt_residuals_of_exact_discrete_solution_are_small() {
    let p = HParams { alpha: 1e-2, r: 3, ..HParams::default() };
    let sp = space(8, 3);
    let ops = Operators::new(&sp, &p).unwrap();
    let s = hypokfem_core::solvers::solve_stationary_kkt(&ops, &hypokfem_core::manufactured::target_d1).unwrap();
    let b = assemble_rhs_h(&sp, &hypokfem_core::manufactured::target_d1, p.mmat(), Constraint::PlusSet);
    let r = kkt_residuals(&ops, &s.u.coeffs, &s.z.coeffs, &s.f.coeffs, &b);
    assert!(r.primal <= 1e-9 && r.dual <= 1e-9 && r.control <= 1e-9, "{r:?}");
}
