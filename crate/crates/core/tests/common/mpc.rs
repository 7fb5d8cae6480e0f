use ccd_core::graph::{EdgeSpec, EdgeType, Graph, StateKind, VertexSpec, VertexType};
use ccd_core::mpc::{build_and_solve_qp, discretize_and_reduce, linearize, MpcConfig, QpProblem, ReductionRule, Tracked};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn random_qp(r: &mut impl Rng, n: usize, me: usize, mi: usize) -> QpProblem {
    let m = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
    let h = &m * m.transpose() + DMatrix::identity(n, n) * r.random_range(1e-3..1.0);
    let g = DVector::from_fn(n, |_, _| r.random_range(-5.0..5.0));
    let xf = DVector::from_fn(n, |_, _| r.random_range(-2.0..2.0));
    let ae = DMatrix::from_fn(me, n, |_, _| r.random_range(-1.0..1.0));
    let be = &ae * &xf;
    let ai = DMatrix::from_fn(mi, n, |_, _| r.random_range(-1.0..1.0));
    let bi = &ai * &xf - DVector::from_fn(mi, |_, _| r.random_range(0.0..1.0));
    QpProblem { h, g, ae, be, ai, bi }
}

/// c ẋ = −a x + b u, one state tracked to r, driven through a T7 edge from
/// a unit external.
pub fn scalar(c: f64, a: f64, b: f64) -> Graph {
    Graph::new(
        vec![
            VertexSpec::new("x", "x", VertexType::Type1, c, StateKind::Temperature),
            VertexSpec::external("ground", "g", StateKind::Temperature),
            VertexSpec::external("one", "one", StateKind::Voltage),
        ],
        vec![
            EdgeSpec::new("leak", "x", "ground", EdgeType::T1, a),
            EdgeSpec::new("drive", "one", "x", EdgeType::T7, b).with_input("u"),
        ],
        vec!["u".into()],
    )
    .unwrap()
}

pub fn scalar_cfg(dt: f64, np: usize, eps: f64, lo: f64, hi: f64, exempt: bool) -> MpcConfig {
    MpcConfig {
        dt,
        horizon: np,
        applied_steps: 1,
        eps,
        tracked: vec![Tracked { state: 0, weight: 1.0 }],
        bounds: vec![],
        u_min: vec![lo],
        u_max: vec![hi],
        band_exempt: vec![exempt],
        couplings: vec![],
        reduction: ReductionRule::default(),
        band_floor: 0.01,
        proximal: 1e-6,
    }
}

pub fn solve_scalar(cfg: &MpcConfig, x0: f64, u_prev: f64, r: f64) -> ccd_core::mpc::MpcSolution {
    let g = scalar(1.0, 1.0, 1.0);
    let xs = [0.0, 1.0];
    let lm = linearize(&g, &[x0], &[u_prev], &xs).unwrap();
    let pred = discretize_and_reduce(&lm, cfg.dt, cfg.reduction).unwrap();
    let refs = vec![vec![r]; cfg.horizon + 1];
    build_and_solve_qp(
        &pred,
        cfg,
        &DVector::from_element(1, x0),
        &DVector::from_element(1, u_prev),
        &refs,
        &DVector::from_column_slice(&xs),
    )
    .unwrap()
}

/// Written-out cost of ẋ = −x + u with forward Euler, j = 1 … N+1.
pub fn scalar_cost(dt: f64, x0: f64, r: f64, u: &[f64]) -> f64 {
    let mut x = x0;
    let mut j = (x - r).powi(2);
    for &uk in u {
        x += dt * (-x + uk);
        j += (x - r).powi(2);
    }
    j
}

/// Coordinate grid search with shrinking spacing.
pub fn grid_min(dt: f64, x0: f64, r: f64, lo: f64, hi: f64) -> (f64, f64, f64) {
    let (mut c1, mut c2) = (0.5 * (lo + hi), 0.5 * (lo + hi));
    let mut span = hi - lo;
    while span > 1e-7 {
        let mut best = (f64::INFINITY, c1, c2);
        for i in 0..=40 {
            for k in 0..=40 {
                let u1 = (c1 - span / 2.0 + span * i as f64 / 40.0).clamp(lo, hi);
                let u2 = (c2 - span / 2.0 + span * k as f64 / 40.0).clamp(lo, hi);
                let j = scalar_cost(dt, x0, r, &[u1, u2]);
                if j < best.0 {
                    best = (j, u1, u2);
                }
            }
        }
        (c1, c2) = (best.1, best.2);
        span /= 4.0;
    }
    (scalar_cost(dt, x0, r, &[c1, c2]), c1, c2)
}

/// Largest relative gap between the analytic Jacobians and central
/// differences of the effort-form right-hand side, and the largest misfit
/// of the affine model at the operating point.
pub fn linearization_error(g: &Graph, x: &[f64], u: &[f64], xs: &[f64]) -> (f64, f64) {
    let lm = linearize(g, x, u, xs).unwrap();
    let f = |x: &[f64], u: &[f64], xs: &[f64]| g.rhs(x, u, xs).unwrap();
    let f0 = f(x, u, xs);
    let lin = lm.rhs(&lm.x_op, &lm.u_op, &lm.xs_op);
    let w = (0..x.len()).map(|i| (lin[i] - f0[i]).abs() / (1.0 + f0[i].abs())).fold(0.0, f64::max);
    let mut worst = 0.0_f64;
    let mut check = |vals: &[f64], an: &DMatrix<f64>, eval: &dyn Fn(&[f64]) -> Vec<f64>| {
        for k in 0..vals.len() {
            let h = 1e-5 * (1.0 + vals[k].abs());
            let (mut p, mut m) = (vals.to_vec(), vals.to_vec());
            p[k] += h;
            m[k] -= h;
            let (fp, fm) = (eval(&p), eval(&m));
            for i in 0..fp.len() {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                worst = worst.max((an[(i, k)] - fd).abs() / an[(i, k)].abs().max(1.0));
            }
        }
    };
    check(x, &lm.a, &|v| f(v, u, xs));
    check(u, &lm.b, &|v| f(x, v, xs));
    check(xs, &lm.v, &|v| f(x, u, v));
    (worst, w)
}
