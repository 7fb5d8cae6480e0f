//! Dense strictly convex QP by the Goldfarb–Idnani dual active-set method.
//!
//! min ½ xᵀHx + gᵀx  s.t.  A_e x = b_e,  A_i x ≥ b_i
//!
//! The factorization J = L⁻ᵀQ, JᵀN = [R; 0] over the active normals N is
//! updated with Givens rotations as constraints enter and leave.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("Hessian is not positive definite")]
    NotConvex,
    #[error("constraints are infeasible (constraint {0})")]
    Infeasible(usize),
    #[error("equality constraints are inconsistent (row {0})")]
    DependentEqualities(usize),
    #[error("active-set iteration limit reached")]
    IterationLimit,
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

#[derive(Clone, Debug)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub ae: DMatrix<f64>,
    pub be: DVector<f64>,
    pub ai: DMatrix<f64>,
    pub bi: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of the equalities (free sign).
    pub lambda: DVector<f64>,
    /// Multipliers of the inequalities (≥ 0, zero when inactive).
    pub mu: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Active inequality rows at the solution.
    pub active: Vec<usize>,
}

/// Scaled first-order optimality residuals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

impl QpProblem {
    pub fn new(h: DMatrix<f64>, g: DVector<f64>) -> Self {
        let n = g.len();
        QpProblem { h, g, ae: DMatrix::zeros(0, n), be: DVector::zeros(0), ai: DMatrix::zeros(0, n), bi: DVector::zeros(0) }
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }

    fn check(&self) -> Result<(), QpError> {
        let n = self.n();
        let bad = |m: &str| Err(QpError::Shape(m.into()));
        if self.h.shape() != (n, n) {
            return bad("H must be n×n");
        }
        if self.ae.ncols() != n || self.ae.nrows() != self.be.len() {
            return bad("equality block");
        }
        if self.ai.ncols() != n || self.ai.nrows() != self.bi.len() {
            return bad("inequality block");
        }
        Ok(())
    }

    /// Residuals of the KKT conditions at `sol`, each scaled by the size of
    /// the terms it balances.
    pub fn kkt(&self, sol: &QpSolution) -> KktReport {
        let x = &sol.x;
        let hx = &self.h * x;
        let ae_l = self.ae.transpose() * &sol.lambda;
        let ai_m = self.ai.transpose() * &sol.mu;
        let stat = &hx + &self.g - &ae_l - &ai_m;
        let scale = 1.0 + hx.amax().max(self.g.amax()).max(ae_l.amax()).max(ai_m.amax());
        let mut primal: f64 = 0.0;
        for i in 0..self.be.len() {
            let r = self.ae.row(i).dot(&x.transpose()) - self.be[i];
            primal = primal.max(r.abs() / (1.0 + self.be[i].abs()));
        }
        let mut comp: f64 = 0.0;
        for i in 0..self.bi.len() {
            let s = self.ai.row(i).dot(&x.transpose()) - self.bi[i];
            primal = primal.max((-s).max(0.0) / (1.0 + self.bi[i].abs()));
            comp = comp.max((sol.mu[i] * s).abs() / (scale * (1.0 + self.bi[i].abs())));
        }
        let dual = sol.mu.iter().fold(0.0_f64, |a, &m| a.max(-m)) / scale;
        KktReport { stationarity: stat.amax() / scale, primal, dual, complementarity: comp }
    }
}

/// A normal counts as dependent on the active set when the part of Jᵀn
/// outside the active columns carries less than this share of its energy.
const DEPENDENT: f64 = 1e-20;

struct Factor {
    n: usize,
    q: usize,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl Factor {
    /// z = J₂d₂, the primal step direction in the null space of the active set.
    fn z(&self, d: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(self.n);
        for k in self.q..self.n {
            z.axpy(d[k], &self.j.column(k), 1.0);
        }
        z
    }

    /// r = R⁻¹d₁, the change of the active multipliers.
    fn r(&self, d: &DVector<f64>) -> DVector<f64> {
        let q = self.q;
        let mut r = DVector::zeros(q);
        for i in (0..q).rev() {
            let mut s = d[i];
            for k in i + 1..q {
                s -= self.r[(i, k)] * r[k];
            }
            r[i] = s / self.r[(i, i)];
        }
        r
    }

    /// Appends the normal whose transformed image is `d`; false when it is
    /// dependent on the active set.
    fn add(&mut self, mut d: DVector<f64>) -> bool {
        let n = self.n;
        for k in (self.q + 1..n).rev() {
            let (a, b) = (d[k - 1], d[k]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            d[k - 1] = h;
            d[k] = 0.0;
            for row in 0..n {
                let (ja, jb) = (self.j[(row, k - 1)], self.j[(row, k)]);
                self.j[(row, k - 1)] = c * ja + s * jb;
                self.j[(row, k)] = -s * ja + c * jb;
            }
        }
        let q = self.q;
        if d[q] * d[q] <= DEPENDENT * d.norm_squared() || d[q] == 0.0 {
            return false;
        }
        for i in 0..=q {
            self.r[(i, q)] = d[i];
        }
        self.q += 1;
        true
    }

    /// Removes active column `l` and restores triangular R.
    fn drop(&mut self, l: usize) {
        let q = self.q;
        for c in l..q - 1 {
            for i in 0..q {
                self.r[(i, c)] = self.r[(i, c + 1)];
            }
        }
        for i in 0..q {
            self.r[(i, q - 1)] = 0.0;
        }
        for c in l..q - 1 {
            let (a, b) = (self.r[(c, c)], self.r[(c + 1, c)]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (cs, sn) = (a / h, b / h);
            for k in c..q - 1 {
                let (ra, rb) = (self.r[(c, k)], self.r[(c + 1, k)]);
                self.r[(c, k)] = cs * ra + sn * rb;
                self.r[(c + 1, k)] = -sn * ra + cs * rb;
            }
            self.r[(c + 1, c)] = 0.0;
            for row in 0..self.n {
                let (ja, jb) = (self.j[(row, c)], self.j[(row, c + 1)]);
                self.j[(row, c)] = cs * ja + sn * jb;
                self.j[(row, c + 1)] = -sn * ja + cs * jb;
            }
        }
        self.q -= 1;
    }
}

/// Solves a strictly convex QP. Inequalities are satisfied to roughly
/// 1e-12 relative to their data on return.
pub fn solve_qp(p: &QpProblem) -> Result<QpSolution, QpError> {
    p.check()?;
    let n = p.n();
    let (me, mi) = (p.be.len(), p.bi.len());
    let chol = p.h.clone().cholesky().ok_or(QpError::NotConvex)?;
    let lt = chol.l().transpose();
    let j0 = lt.solve_upper_triangular(&DMatrix::identity(n, n)).ok_or(QpError::NotConvex)?;
    let mut fac = Factor { n, q: 0, j: j0, r: DMatrix::zeros(n, n) };
    let mut x = -chol.solve(&p.g);

    // active[k] is the constraint in column k: equalities as 0..me,
    // inequalities as me + i
    let mut active: Vec<usize> = Vec::with_capacity(n);
    let mut u: Vec<f64> = Vec::with_capacity(n);
    let ai_row = |i: usize| p.ai.row(i).transpose();

    for i in 0..me {
        let np = p.ae.row(i).transpose();
        let d = fac.j.tr_mul(&np);
        let z = fac.z(&d);
        let r = fac.r(&d);
        let res = p.be[i] - np.dot(&x);
        let zn = z.dot(&np);
        if zn <= DEPENDENT * d.norm_squared() {
            if res.abs() > 1e-9 * (1.0 + p.be[i].abs()) {
                return Err(QpError::DependentEqualities(i));
            }
            continue;
        }
        let t = res / zn;
        x.axpy(t, &z, 1.0);
        for (k, uk) in u.iter_mut().enumerate() {
            *uk -= t * r[k];
        }
        if !fac.add(d) {
            return Err(QpError::DependentEqualities(i));
        }
        active.push(i);
        u.push(t);
    }
    let n_eq_active = active.len();

    let max_iter = 20 * (n + mi) + 100;
    let mut iterations = 0;
    let tol = |i: usize, x: &DVector<f64>| 1e-12 * (1.0 + p.bi[i].abs() + p.ai.row(i).amax() * x.amax());
    loop {
        iterations += 1;
        if iterations > max_iter {
            return Err(QpError::IterationLimit);
        }
        // most violated inactive inequality
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..mi {
            if active[n_eq_active..].contains(&(me + i)) {
                continue;
            }
            let s = p.ai.row(i).dot(&x.transpose()) - p.bi[i];
            if s < -tol(i, &x) && pick.is_none_or(|(_, sp)| s / (1.0 + p.bi[i].abs()) < sp) {
                pick = Some((i, s / (1.0 + p.bi[i].abs())));
            }
        }
        let Some((ip, _)) = pick else { break };
        let np = ai_row(ip);
        let mut u_plus = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::IterationLimit);
            }
            let d = fac.j.tr_mul(&np);
            let z = fac.z(&d);
            let r = fac.r(&d);
            // largest dual step that keeps active multipliers nonnegative
            let mut t1 = f64::INFINITY;
            let mut drop_at = None;
            for k in n_eq_active..fac.q {
                if r[k] > 0.0 {
                    let tk = u[k] / r[k];
                    if tk < t1 {
                        t1 = tk;
                        drop_at = Some(k);
                    }
                }
            }
            let zn = z.dot(&np);
            let s = np.dot(&x) - p.bi[ip];
            let t2 = if zn > DEPENDENT * d.norm_squared() { -s / zn } else { f64::INFINITY };
            if t1.is_infinite() && t2.is_infinite() {
                return Err(QpError::Infeasible(ip));
            }
            if t2.is_infinite() {
                for (k, uk) in u.iter_mut().enumerate() {
                    *uk -= t1 * r[k];
                }
                u_plus += t1;
                let l = drop_at.unwrap();
                fac.drop(l);
                active.remove(l);
                u.remove(l);
                continue;
            }
            let t = t1.min(t2);
            x.axpy(t, &z, 1.0);
            for (k, uk) in u.iter_mut().enumerate() {
                *uk -= t * r[k];
            }
            u_plus += t;
            if t2 <= t1 {
                if !fac.add(d) {
                    return Err(QpError::Infeasible(ip));
                }
                active.push(me + ip);
                u.push(u_plus);
                break;
            }
            let l = drop_at.unwrap();
            fac.drop(l);
            active.remove(l);
            u.remove(l);
        }
    }

    let mut lambda = DVector::zeros(me);
    let mut mu = DVector::zeros(mi);
    let mut act = Vec::new();
    for (k, &c) in active.iter().enumerate() {
        if c < me {
            lambda[c] = u[k];
        } else {
            mu[c - me] = u[k].max(0.0);
            act.push(c - me);
        }
    }
    act.sort_unstable();
    let objective = p.objective(&x);
    Ok(QpSolution { x, lambda, mu, objective, iterations, active: act })
}
