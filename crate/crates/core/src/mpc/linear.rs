//! Linear prediction model: linearization, forward-Euler discretization and
//! the capacitance reduction that keeps the discrete map stable.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{MpcError, Result};
use crate::graph::Graph;

/// C ẋ = A x + B u + V x^s + W about an operating point.
#[derive(Clone, Debug)]
pub struct LinearModel {
    /// Diagonal of C; zero on algebraic rows.
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub w: DVector<f64>,
    pub x_op: DVector<f64>,
    pub u_op: DVector<f64>,
    pub xs_op: DVector<f64>,
    pub dynamic: Vec<usize>,
    pub algebraic: Vec<usize>,
    /// Edges whose table map sat on a knot; their slope is one-sided.
    pub kinks: Vec<String>,
}

pub fn linearize(g: &Graph, x: &[f64], u: &[f64], xs: &[f64]) -> Result<LinearModel> {
    let jac = g.jacobian(x, u, xs)?;
    let c = DVector::from_vec(g.mass(x));
    let (xo, uo, so) = (DVector::from_column_slice(x), DVector::from_column_slice(u), DVector::from_column_slice(xs));
    // C ẋ_op equals f_op on dynamic rows, and f_op is the residual on the rest
    let w = &jac.f - &jac.jx * &xo - &jac.ju * &uo - &jac.js * &so;
    let (dynamic, algebraic) = (0..g.n_states()).partition(|&i| c[i] > 0.0);
    Ok(LinearModel {
        c,
        a: jac.jx,
        b: jac.ju,
        v: jac.js,
        w,
        x_op: xo,
        u_op: uo,
        xs_op: so,
        dynamic,
        algebraic,
        kinks: g.kinks(x, u, xs),
    })
}

impl LinearModel {
    /// A x + B u + V x^s + W.
    pub fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>, xs: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.v * xs + &self.w
    }
}

fn pick(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

fn pick_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}

/// Discrete, reduced prediction model. Algebraic states (including the
/// demoted ones) are eliminated:
///
/// x^a = K_d x^d + K_u u + K_s x^s + k,
/// x^d⁺ = F_d x^d + F_u u + F_s x^s + f.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub dt: f64,
    pub n: usize,
    /// C after reduction.
    pub c: DVector<f64>,
    pub dynamic: Vec<usize>,
    pub algebraic: Vec<usize>,
    /// States whose capacitance was zeroed, in the order they were found.
    pub demoted: Vec<usize>,
    pub k_d: DMatrix<f64>,
    pub k_u: DMatrix<f64>,
    pub k_s: DMatrix<f64>,
    pub k_w: DVector<f64>,
    pub f_d: DMatrix<f64>,
    pub f_u: DMatrix<f64>,
    pub f_s: DMatrix<f64>,
    pub f_w: DVector<f64>,
}

struct Elim {
    k_d: DMatrix<f64>,
    k_u: DMatrix<f64>,
    k_s: DMatrix<f64>,
    k_w: DVector<f64>,
    /// A_dd + A_da K_d, the Schur complement.
    schur: DMatrix<f64>,
}

fn eliminate(lm: &LinearModel, dynamic: &[usize], algebraic: &[usize]) -> Option<Elim> {
    let nu = lm.b.ncols();
    let ns = lm.v.ncols();
    let nd = dynamic.len();
    let a_dd = pick(&lm.a, dynamic, dynamic);
    if algebraic.is_empty() {
        return Some(Elim {
            k_d: DMatrix::zeros(0, nd),
            k_u: DMatrix::zeros(0, nu),
            k_s: DMatrix::zeros(0, ns),
            k_w: DVector::zeros(0),
            schur: a_dd,
        });
    }
    let lu = pick(&lm.a, algebraic, algebraic).lu();
    let neg = |m: DMatrix<f64>| lu.solve(&m).map(|s| -s);
    let k_d = neg(pick(&lm.a, algebraic, dynamic))?;
    let k_u = neg(pick_rows(&lm.b, algebraic))?;
    let k_s = neg(pick_rows(&lm.v, algebraic))?;
    let wa = DMatrix::from_fn(algebraic.len(), 1, |r, _| lm.w[algebraic[r]]);
    let k_w = neg(wa)?.column(0).into_owned();
    if !(k_d.iter().chain(k_u.iter()).chain(k_s.iter()).chain(k_w.iter()).all(|v| v.is_finite())) {
        return None;
    }
    let schur = a_dd + pick(&lm.a, dynamic, algebraic) * &k_d;
    Some(Elim { k_d, k_u, k_s, k_w, schur })
}

/// When a dynamic state is demoted to algebraic in the prediction model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionRule {
    /// Demote when the time constant |C_ii/A_ii| is below `ratio·dt`.
    pub ratio: f64,
    /// Largest spectral radius accepted for the discrete map. Above it the
    /// fastest remaining state (largest dt·Σ_j|S_ij|/C_ii, S the reduced
    /// state matrix) is demoted, one at a time, as long as that rate
    /// exceeds 1. Catches lightly damped fast pairs whose diagonal alone
    /// looks slow.
    pub max_radius: f64,
}

impl Default for ReductionRule {
    fn default() -> Self {
        ReductionRule { ratio: 0.1, max_radius: 1.1 }
    }
}

/// ρ(F) estimated as ‖F^64‖^(1/64) by repeated squaring.
pub fn spectral_radius_estimate(f: &DMatrix<f64>) -> f64 {
    if f.is_empty() {
        return 0.0;
    }
    let n0 = f.norm();
    if n0 == 0.0 {
        return 0.0;
    }
    let mut m = f / n0;
    let mut log_c = n0.ln();
    for _ in 0..6 {
        let sq = &m * &m;
        let n = sq.norm();
        if n == 0.0 || !n.is_finite() {
            return if n == 0.0 { 0.0 } else { f64::INFINITY };
        }
        m = sq / n;
        log_c = 2.0 * log_c + n.ln();
    }
    (log_c / 64.0).exp()
}

/// Forward-Euler discretization with step `dt`. The demotion test is
/// repeated on the Schur complement of what remains, since eliminating a
/// fast neighbour can expose another fast state.
pub fn discretize_and_reduce(lm: &LinearModel, dt: f64, rule: ReductionRule) -> Result<Prediction> {
    if !(dt > 0.0) {
        return Err(MpcError::Config(format!("prediction step must be positive, got {dt}")));
    }
    let n = lm.c.len();
    let mut c = lm.c.clone();
    let mut demoted = Vec::new();
    let fast = |cii: f64, aii: f64| aii != 0.0 && (cii / aii).abs() < rule.ratio * dt;
    for &i in &lm.dynamic {
        if fast(c[i], lm.a[(i, i)]) {
            c[i] = 0.0;
            demoted.push(i);
        }
    }
    let split = |c: &DVector<f64>| -> (Vec<usize>, Vec<usize>) { (0..n).partition(|&i| c[i] > 0.0) };
    let (mut dynamic, mut algebraic) = split(&c);
    let mut elim = match eliminate(lm, &dynamic, &algebraic) {
        Some(e) => e,
        None => return Err(MpcError::Reduction(if demoted.is_empty() { algebraic } else { demoted })),
    };
    loop {
        let more: Vec<usize> =
            dynamic.iter().enumerate().filter(|&(k, &i)| fast(c[i], elim.schur[(k, k)])).map(|(_, &i)| i).collect();
        if !more.is_empty() {
            for &i in &more {
                c[i] = 0.0;
            }
            demoted.extend(more);
            (dynamic, algebraic) = split(&c);
            elim = eliminate(lm, &dynamic, &algebraic).ok_or_else(|| MpcError::Reduction(demoted.clone()))?;
            continue;
        }
        if !rule.max_radius.is_finite() {
            break;
        }
        let nd = dynamic.len();
        let fd = DMatrix::identity(nd, nd) + DMatrix::from_fn(nd, nd, |r, q| dt * elim.schur[(r, q)] / c[dynamic[r]]);
        if spectral_radius_estimate(&fd) <= rule.max_radius {
            break;
        }
        // fastest first; a candidate that leaves the algebraic block
        // singular is skipped
        let mut cand: Vec<(f64, usize)> = (0..nd)
            .map(|k| (dt * elim.schur.row(k).abs().sum() / c[dynamic[k]], dynamic[k]))
            .filter(|&(r, _)| r > 1.0)
            .collect();
        cand.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut accepted = false;
        for (_, i) in cand {
            let mut trial = c.clone();
            trial[i] = 0.0;
            let (d, a) = split(&trial);
            if let Some(e) = eliminate(lm, &d, &a) {
                (c, dynamic, algebraic, elim) = (trial, d, a, e);
                demoted.push(i);
                accepted = true;
                break;
            }
        }
        if !accepted {
            break;
        }
    }

    // x^d⁺ = x^d + dt C⁻¹ (A_dd x^d + A_da x^a + B_d u + V_d x^s + W_d)
    let nd = dynamic.len();
    let a_da = pick(&lm.a, &dynamic, &algebraic);
    let scale = DVector::from_fn(nd, |k, _| dt / c[dynamic[k]]);
    let rows = |m: DMatrix<f64>| {
        let mut m = m;
        for (k, mut r) in m.row_iter_mut().enumerate() {
            r *= scale[k];
        }
        m
    };
    let f_d = DMatrix::identity(nd, nd) + rows(elim.schur.clone());
    let f_u = rows(pick_rows(&lm.b, &dynamic) + &a_da * &elim.k_u);
    let f_s = rows(pick_rows(&lm.v, &dynamic) + &a_da * &elim.k_s);
    let wd = DVector::from_fn(nd, |k, _| lm.w[dynamic[k]]);
    let f_w = (wd + &a_da * &elim.k_w).component_mul(&scale);
    Ok(Prediction {
        dt,
        n,
        c,
        dynamic,
        algebraic,
        demoted,
        k_d: elim.k_d,
        k_u: elim.k_u,
        k_s: elim.k_s,
        k_w: elim.k_w,
        f_d,
        f_u,
        f_s,
        f_w,
    })
}

impl Prediction {
    pub fn algebraic_part(&self, xd: &DVector<f64>, u: &DVector<f64>, xs: &DVector<f64>) -> DVector<f64> {
        &self.k_d * xd + &self.k_u * u + &self.k_s * xs + &self.k_w
    }

    pub fn step(&self, xd: &DVector<f64>, u: &DVector<f64>, xs: &DVector<f64>) -> DVector<f64> {
        &self.f_d * xd + &self.f_u * u + &self.f_s * xs + &self.f_w
    }

    pub fn dynamic_part(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dynamic.len(), |k, _| x[self.dynamic[k]])
    }

    pub fn assemble(&self, xd: &DVector<f64>, xa: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.n);
        for (k, &i) in self.dynamic.iter().enumerate() {
            x[i] = xd[k];
        }
        for (k, &i) in self.algebraic.iter().enumerate() {
            x[i] = xa[k];
        }
        x
    }

    /// Predicted x_1 … x_{N+1} for inputs u_1 … u_N from the dynamic part of
    /// `x0`. The last algebraic block repeats the one before it.
    pub fn rollout(&self, x0: &DVector<f64>, inputs: &[DVector<f64>], xs: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut xd = self.dynamic_part(x0);
        let mut out = Vec::with_capacity(inputs.len() + 1);
        let mut xa = DVector::zeros(self.algebraic.len());
        for u in inputs {
            xa = self.algebraic_part(&xd, u, xs);
            out.push(self.assemble(&xd, &xa));
            xd = self.step(&xd, u, xs);
        }
        out.push(self.assemble(&xd, &xa));
        out
    }
}
