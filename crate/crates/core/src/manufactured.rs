//! Closed-form expressions in `(x, v)`, forward-mode jets up to total order 4,
//! manufactured solutions and control targets.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::assembly::PointData;
use crate::{Error, Result};

#[derive(Debug)]
enum Node {
    X,
    V,
    Const(f64),
    Add(Expr, Expr),
    Mul(Expr, Expr),
    Neg(Expr),
    Pow(Expr, u32),
    Sin(Expr),
    Cos(Expr),
    Exp(Expr),
}

/// Immutable expression tree over the variables `x` and `v`.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.0 {
            Node::X => write!(f, "x"),
            Node::V => write!(f, "v"),
            Node::Const(c) => write!(f, "{c}"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Mul(a, b) => write!(f, "{a}*{b}"),
            Node::Neg(a) => write!(f, "-({a})"),
            Node::Pow(a, n) => write!(f, "({a})^{n}"),
            Node::Sin(a) => write!(f, "sin({a})"),
            Node::Cos(a) => write!(f, "cos({a})"),
            Node::Exp(a) => write!(f, "exp({a})"),
        }
    }
}

impl Expr {
    pub fn x() -> Self {
        Expr(Arc::new(Node::X))
    }
    pub fn v() -> Self {
        Expr(Arc::new(Node::V))
    }
    pub fn c(value: f64) -> Self {
        Expr(Arc::new(Node::Const(value)))
    }

    fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn add(&self, other: &Expr) -> Expr {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Expr::c(a + b),
            (Some(a), _) if a == 0.0 => other.clone(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => Expr(Arc::new(Node::Add(self.clone(), other.clone()))),
        }
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Expr) -> Expr {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Expr::c(a * b),
            (Some(a), _) if a == 0.0 => Expr::c(0.0),
            (_, Some(b)) if b == 0.0 => Expr::c(0.0),
            (Some(a), _) if a == 1.0 => other.clone(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            _ => Expr(Arc::new(Node::Mul(self.clone(), other.clone()))),
        }
    }

    pub fn scale(&self, c: f64) -> Expr {
        Expr::c(c).mul(self)
    }

    pub fn neg(&self) -> Expr {
        match &*self.0 {
            Node::Const(c) => Expr::c(-c),
            Node::Neg(a) => a.clone(),
            _ => Expr(Arc::new(Node::Neg(self.clone()))),
        }
    }

    pub fn powi(&self, n: u32) -> Expr {
        match (n, self.as_const()) {
            (0, _) => Expr::c(1.0),
            (1, _) => self.clone(),
            (_, Some(c)) => Expr::c(c.powi(n as i32)),
            _ => Expr(Arc::new(Node::Pow(self.clone(), n))),
        }
    }

    pub fn sin(&self) -> Expr {
        Expr(Arc::new(Node::Sin(self.clone())))
    }
    pub fn cos(&self) -> Expr {
        Expr(Arc::new(Node::Cos(self.clone())))
    }
    pub fn exp(&self) -> Expr {
        Expr(Arc::new(Node::Exp(self.clone())))
    }

    /// Symbolic partial derivative; `var = 0` for `x`, `1` for `v`.
    pub fn diff(&self, var: usize) -> Expr {
        match &*self.0 {
            Node::X => Expr::c(if var == 0 { 1.0 } else { 0.0 }),
            Node::V => Expr::c(if var == 1 { 1.0 } else { 0.0 }),
            Node::Const(_) => Expr::c(0.0),
            Node::Add(a, b) => a.diff(var).add(&b.diff(var)),
            Node::Mul(a, b) => a.diff(var).mul(b).add(&a.mul(&b.diff(var))),
            Node::Neg(a) => a.diff(var).neg(),
            Node::Pow(a, n) => Expr::c(*n as f64).mul(&a.powi(n - 1)).mul(&a.diff(var)),
            Node::Sin(a) => a.cos().mul(&a.diff(var)),
            Node::Cos(a) => a.sin().mul(&a.diff(var)).neg(),
            Node::Exp(a) => self.mul(&a.diff(var)),
        }
    }

    pub fn dx(&self) -> Expr {
        self.diff(0)
    }
    pub fn dv(&self) -> Expr {
        self.diff(1)
    }

    /// Plain floating-point evaluation.
    pub fn eval(&self, x: f64, v: f64) -> f64 {
        match &*self.0 {
            Node::X => x,
            Node::V => v,
            Node::Const(c) => *c,
            Node::Add(a, b) => a.eval(x, v) + b.eval(x, v),
            Node::Mul(a, b) => a.eval(x, v) * b.eval(x, v),
            Node::Neg(a) => -a.eval(x, v),
            Node::Pow(a, n) => a.eval(x, v).powi(*n as i32),
            Node::Sin(a) => a.eval(x, v).sin(),
            Node::Cos(a) => a.eval(x, v).cos(),
            Node::Exp(a) => a.eval(x, v).exp(),
        }
    }

    /// Value and gradient.
    pub fn value_grad(&self, x: f64, v: f64) -> (f64, [f64; 2]) {
        let j = eval_jet_order(self, x, v, 1);
        (j.value(), [j.d(1, 0), j.d(0, 1)])
    }

    /// Value, gradient and Hessian `[xx, xv, vv]`.
    pub fn point_data(&self, x: f64, v: f64) -> PointData {
        let j = eval_jet_order(self, x, v, 2);
        PointData { val: j.value(), grad: [j.d(1, 0), j.d(0, 1)], hess: [j.d(2, 0), j.d(1, 1), j.d(0, 2)] }
    }
}

const NCOEF: usize = 15;

fn idx(a: usize, b: usize) -> usize {
    let d = a + b;
    d * (d + 1) / 2 + b
}

/// Truncated bivariate Taylor expansion: value and all partials up to total
/// order `order <= 4`, stored once per multi-index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet4 {
    order: usize,
    /// Taylor coefficients `d^a_x d^b_v f / (a! b!)`.
    c: [f64; NCOEF],
}

const FACT: [f64; 5] = [1.0, 1.0, 2.0, 6.0, 24.0];

impl Jet4 {
    pub fn constant(value: f64, order: usize) -> Self {
        let mut c = [0.0; NCOEF];
        c[0] = value;
        Self { order, c }
    }

    fn variable(value: f64, var: usize, order: usize) -> Self {
        let mut j = Self::constant(value, order);
        if order >= 1 {
            j.c[idx(1 - var, var)] = 1.0;
        }
        j
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Partial derivative `d^a_x d^b_v`; zero beyond the jet order.
    pub fn d(&self, a: usize, b: usize) -> f64 {
        if a + b > self.order {
            return 0.0;
        }
        FACT[a] * FACT[b] * self.c[idx(a, b)]
    }

    fn add(&self, o: &Jet4) -> Jet4 {
        let mut r = *self;
        for i in 0..NCOEF {
            r.c[i] += o.c[i];
        }
        r
    }

    fn neg(&self) -> Jet4 {
        let mut r = *self;
        for c in r.c.iter_mut() {
            *c = -*c;
        }
        r
    }

    fn mul(&self, o: &Jet4) -> Jet4 {
        let n = self.order;
        let mut r = Jet4::constant(0.0, n);
        for d1 in 0..=n {
            for b1 in 0..=d1 {
                let x = self.c[idx(d1 - b1, b1)];
                if x == 0.0 {
                    continue;
                }
                for d2 in 0..=(n - d1) {
                    for b2 in 0..=d2 {
                        r.c[idx(d1 - b1 + d2 - b2, b1 + b2)] += x * o.c[idx(d2 - b2, b2)];
                    }
                }
            }
        }
        r
    }

    /// `g(self)` from the derivatives `g^(k)(value)`, `k = 0..=order`.
    fn compose(&self, derivs: [f64; 5]) -> Jet4 {
        let mut h = *self;
        h.c[0] = 0.0;
        let mut out = Jet4::constant(derivs[0], self.order);
        let mut hp = Jet4::constant(1.0, self.order);
        for k in 1..=self.order {
            hp = hp.mul(&h);
            let s = derivs[k] / FACT[k];
            for i in 0..NCOEF {
                out.c[i] += s * hp.c[i];
            }
        }
        out
    }
}

/// Forward-mode evaluation to total order 4.
pub fn eval_jet(expr: &Expr, x: f64, v: f64) -> Jet4 {
    eval_jet_order(expr, x, v, 4)
}

/// Forward-mode evaluation truncated at `order <= 4`.
pub fn eval_jet_order(expr: &Expr, x: f64, v: f64, order: usize) -> Jet4 {
    let order = order.min(4);
    match &*expr.0 {
        Node::X => Jet4::variable(x, 0, order),
        Node::V => Jet4::variable(v, 1, order),
        Node::Const(c) => Jet4::constant(*c, order),
        Node::Add(a, b) => eval_jet_order(a, x, v, order).add(&eval_jet_order(b, x, v, order)),
        Node::Mul(a, b) => eval_jet_order(a, x, v, order).mul(&eval_jet_order(b, x, v, order)),
        Node::Neg(a) => eval_jet_order(a, x, v, order).neg(),
        Node::Pow(a, n) => {
            let j = eval_jet_order(a, x, v, order);
            let y = j.value();
            let mut d = [0.0; 5];
            let mut coef = 1.0;
            for (k, dk) in d.iter_mut().enumerate() {
                if k as u32 > *n {
                    break;
                }
                *dk = coef * y.powi(*n as i32 - k as i32);
                coef *= (*n as i32 - k as i32) as f64;
            }
            j.compose(d)
        }
        Node::Sin(a) => {
            let j = eval_jet_order(a, x, v, order);
            let (s, c) = j.value().sin_cos();
            j.compose([s, c, -s, -c, s])
        }
        Node::Cos(a) => {
            let j = eval_jet_order(a, x, v, order);
            let (s, c) = j.value().sin_cos();
            j.compose([c, -s, -c, s, c])
        }
        Node::Exp(a) => {
            let j = eval_jet_order(a, x, v, order);
            let e = j.value().exp();
            j.compose([e; 5])
        }
    }
}

/// `f = v u_x - eps u_vv` and its gradient from a jet of order at least 3.
pub fn primal_forcing(u: &Jet4, v: f64, eps: f64) -> (f64, [f64; 2]) {
    let f = v * u.d(1, 0) - eps * u.d(0, 2);
    let fx = v * u.d(2, 0) - eps * u.d(1, 2);
    let fv = u.d(1, 0) + v * u.d(1, 1) - eps * u.d(0, 3);
    (f, [fx, fv])
}

/// `sin^4(pi x) sin^4(pi v)` scaled to the domain half-width `x_max`.
pub fn sin4_benchmark(x_max: f64) -> Expr {
    let sx = Expr::x().scale(PI / x_max).sin().powi(4);
    let sv = Expr::v().scale(PI).sin().powi(4);
    sx.mul(&sv)
}

/// `K u = v u_x - eps u_vv`.
pub fn kolmogorov(u: &Expr, eps: f64) -> Expr {
    Expr::v().mul(&u.dx()).sub(&u.dv().dv().scale(eps))
}

/// `K* z = -v z_x - eps z_vv`.
pub fn kolmogorov_adjoint(z: &Expr, eps: f64) -> Expr {
    Expr::v().mul(&z.dx()).add(&z.dv().dv().scale(eps)).neg()
}

/// Manufactured optimal control solution.
///
/// The target enters the dual equation only through `(D, psi)_H`. It is stored
/// as `target_h + target_l2`, acting as `(target_h, psi)_H + (target_l2, psi)`.
/// The L2 part carries the first-order term the H-weighted transport produces
/// when the derivative is moved from the test function onto `z`.
#[derive(Debug, Clone)]
pub struct ManufacturedCase {
    pub u: Expr,
    pub z: Expr,
    pub f: Expr,
    pub target_h: Expr,
    pub target_l2: Expr,
    pub eps: f64,
    pub alpha: f64,
    pub m: f64,
}

impl ManufacturedCase {
    /// Value and gradient of the target as used by the H-weighted right-hand side.
    pub fn target(&self, x: f64, v: f64) -> (f64, [f64; 2]) {
        let (dv, dg) = self.target_h.value_grad(x, v);
        (dv + self.target_l2.eval(x, v), dg)
    }
}

/// Build `(u, z, f, D)` with `z = alpha K u`, `f = z / alpha` and a target that
/// makes the discrete dual equation consistent.
pub fn oc_manufactured(u: &Expr, alpha: f64, eps: f64, m: f64, x_max: f64) -> Result<ManufacturedCase> {
    if !(alpha > 0.0) || !(eps > 0.0) {
        return Err(Error::InvalidArgument("alpha and eps must be positive".into()));
    }
    for k in 0..=16 {
        let s = -1.0 + 2.0 * k as f64 / 16.0;
        for p in [[-x_max, s], [x_max, s], [s * x_max, -1.0], [s * x_max, 1.0]] {
            let j = eval_jet_order(u, p[0], p[1], 3);
            let worst = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (0, 3), (1, 2)]
                .iter()
                .map(|&(a, b)| j.d(a, b).abs())
                .fold(0.0, f64::max);
            if worst > 1e-10 {
                return Err(Error::InvalidArgument(format!(
                    "u and its derivatives must vanish on the boundary (|.| = {worst:e} at {p:?})"
                )));
            }
        }
    }
    let f = kolmogorov(u, eps);
    let z = f.scale(alpha);
    let (m12, m22) = (eps * m * m, eps * m);
    let target_h = u.add(&kolmogorov_adjoint(&z, eps));
    let target_l2 = z.dx().dx().scale(-2.0 * m12).sub(&z.dx().dv().scale(2.0 * m22));
    Ok(ManufacturedCase { u: u.clone(), z, f, target_h, target_l2, eps, alpha, m })
}

/// Ellipse bump `sqrt(1 - x^2/0.09 - v^2/0.25)`, zero outside.
pub fn target_d1(x: f64, v: f64) -> (f64, [f64; 2]) {
    let arg = 1.0 - x * x / 0.09 - v * v / 0.25;
    if arg <= 0.0 {
        return (0.0, [0.0, 0.0]);
    }
    let s = arg.sqrt();
    (s, [-x / (0.09 * s), -v / (0.25 * s)])
}

/// Indicator of the disc `x^2 + v^2 <= 1/16`.
pub fn target_d2(x: f64, v: f64) -> (f64, [f64; 2]) {
    (if x * x + v * v <= 1.0 / 16.0 { 1.0 } else { 0.0 }, [0.0, 0.0])
}

/// Pulsing Gaussian `(1 - cos 2 pi t) exp(-25 (x^2 + v^2))`.
pub fn target_time(t: f64, x: f64, v: f64) -> (f64, [f64; 2]) {
    let a = 1.0 - (2.0 * PI * t).cos();
    let g = (-25.0 * (x * x + v * v)).exp();
    (a * g, [-50.0 * x * a * g, -50.0 * v * a * g])
}
