//! TR-BDF2 with a shared iteration matrix for both stages.

use nalgebra::{DMatrix, DVector, LU};

use super::trace::{Recorder, SolverStats};
use super::{AlgebraicSolver, Result, Scenario, SimError, SolverOptions};
use crate::graph::{Graph, Jacobian};

const GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;

pub(super) struct Stepper<'a> {
    g: &'a Graph,
    sc: &'a Scenario,
    opts: SolverOptions,
    n: usize,
    dynm: Vec<bool>,
    t: f64,
    x: Vec<f64>,
    /// ẋ on dynamic rows, 0 on algebraic rows.
    fx: Vec<f64>,
    h: f64,
    u: Vec<f64>,
    xs: Vec<f64>,
    alg: AlgebraicSolver,
    jac: Jacobian,
    m: Vec<f64>,
    dm: Vec<f64>,
    f: Vec<f64>,
    pub stats: SolverStats,
}

enum Attempt {
    Accepted { x1: Vec<f64>, err: f64 },
    Rejected { err: f64 },
    NewtonFailed,
}

impl<'a> Stepper<'a> {
    pub fn new(g: &'a Graph, sc: &'a Scenario, opts: SolverOptions) -> Self {
        let n = g.n_states();
        Stepper {
            g,
            sc,
            opts,
            n,
            dynm: g.dynamic_mask(),
            t: 0.0,
            x: sc.x0.clone(),
            fx: vec![0.0; n],
            h: opts.h_init.min(opts.h_max),
            u: sc.u0.clone(),
            xs: vec![0.0; g.n_externals()],
            alg: AlgebraicSolver::new(g),
            jac: Jacobian::zeros(n, g.n_inputs(), g.n_externals()),
            m: vec![0.0; n],
            dm: vec![0.0; n],
            f: vec![0.0; n],
            stats: SolverStats::default(),
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn parts(&self) -> (&'a Graph, &'a Scenario) {
        (self.g, self.sc)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn start(&mut self, u: &[f64]) -> Result<()> {
        self.set_inputs(u)
    }

    /// New held inputs: algebraic states jump to the new consistent point.
    pub fn set_inputs(&mut self, u: &[f64]) -> Result<()> {
        self.u.copy_from_slice(u);
        self.sc.externals_at(self.t, &mut self.xs);
        self.alg.solve(self.g, &mut self.x, &self.u, &self.xs)?;
        self.note_residual();
        let mut fx = std::mem::take(&mut self.fx);
        self.eval_f(&self.x.clone(), &mut fx)?;
        self.fx = fx;
        Ok(())
    }

    fn note_residual(&mut self) {
        let (r, _) = self.alg.scaled_residual(self.g, &self.x, &self.u, &self.xs);
        self.stats.max_algebraic_residual = self.stats.max_algebraic_residual.max(r);
    }

    /// F(z): ẋ on dynamic rows, the effort residual on algebraic rows.
    fn eval_f(&mut self, z: &[f64], out: &mut [f64]) -> Result<()> {
        self.g.rhs_into(z, &self.u, &self.xs, &mut self.f)?;
        self.g.mass_into(z, &mut self.m, None);
        for i in 0..self.n {
            out[i] = if self.dynm[i] { self.f[i] / self.m[i] } else { self.f[i] };
        }
        Ok(())
    }

    /// Iteration matrix [I − d·h·∂F] on dynamic rows, ∂f on algebraic rows.
    fn iteration_matrix(&mut self, dh: f64) -> Result<LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
        self.g.jacobian_into(&self.x, &self.u, &self.xs, &mut self.jac)?;
        self.g.mass_into(&self.x, &mut self.m, Some(&mut self.dm));
        self.stats.jacobians += 1;
        let n = self.n;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            if self.dynm[i] {
                let mi = self.m[i];
                for j in 0..n {
                    let mut d = self.jac.jx[(i, j)] / mi;
                    if i == j {
                        d -= self.jac.f[i] * self.dm[i] / (mi * mi);
                    }
                    a[(i, j)] = -dh * d;
                }
                a[(i, i)] += 1.0;
            } else {
                for j in 0..n {
                    a[(i, j)] = self.jac.jx[(i, j)];
                }
            }
        }
        Ok(a.lu())
    }

    fn weights(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(p, q)| self.opts.atol + self.opts.rtol * p.abs().max(q.abs())).collect()
    }

    /// Simplified Newton for z − base − dh·F(z) = 0 (dynamic rows), f(z) = 0
    /// (algebraic rows).
    fn newton(
        &mut self,
        lu: &LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
        base: &[f64],
        dh: f64,
        z: &mut [f64],
        fz: &mut [f64],
    ) -> Result<bool> {
        let n = self.n;
        let w = self.weights(&self.x, &self.x);
        let mut prev = f64::INFINITY;
        for it in 0..8 {
            self.stats.newton_iterations += 1;
            if self.eval_f(z, fz).is_err() {
                return Ok(false);
            }
            let r = DVector::from_fn(n, |i, _| if self.dynm[i] { -(z[i] - base[i] - dh * fz[i]) } else { -fz[i] });
            let Some(dz) = lu.solve(&r) else { return Ok(false) };
            let mut nrm = 0.0;
            for i in 0..n {
                z[i] += dz[i];
                nrm += (dz[i] / w[i]).powi(2);
            }
            let nrm = (nrm / n as f64).sqrt();
            if !nrm.is_finite() {
                return Ok(false);
            }
            let done = if it == 0 {
                nrm < 1e-3
            } else {
                let rate = nrm / prev;
                if rate >= 0.9 {
                    return Ok(false);
                }
                rate / (1.0 - rate) * nrm < 0.03
            };
            prev = nrm;
            if done {
                if self.eval_f(z, fz).is_err() {
                    return Ok(false);
                }
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn attempt(&mut self, h: f64) -> Result<Attempt> {
        let n = self.n;
        let d = 0.5 * GAMMA;
        let dh = d * h;
        let Ok(lu) = self.iteration_matrix(dh) else { return Ok(Attempt::NewtonFailed) };
        self.stats.factorizations += 1;

        // stage 1: trapezoid to t + γh
        let t_g = self.t + GAMMA * h;
        self.sc.externals_at(t_g, &mut self.xs);
        let base1: Vec<f64> = (0..n).map(|i| self.x[i] + dh * self.fx[i]).collect();
        let mut zg: Vec<f64> =
            (0..n).map(|i| if self.dynm[i] { self.x[i] + GAMMA * h * self.fx[i] } else { self.x[i] }).collect();
        let mut fg = vec![0.0; n];
        if !self.newton(&lu, &base1, dh, &mut zg, &mut fg)? {
            return Ok(Attempt::NewtonFailed);
        }

        // stage 2: BDF2 through x_n, x_γ to t + h
        self.sc.externals_at(self.t + h, &mut self.xs);
        let c1 = 1.0 / (GAMMA * (2.0 - GAMMA));
        // c1·x_γ − c0·x_n with c1 − c0 = 1, in increment form
        let base2: Vec<f64> = (0..n).map(|i| self.x[i] + c1 * (zg[i] - self.x[i])).collect();
        let mut z1: Vec<f64> =
            (0..n).map(|i| if self.dynm[i] { self.x[i] + (zg[i] - self.x[i]) / GAMMA } else { zg[i] }).collect();
        let mut f1 = vec![0.0; n];
        if !self.newton(&lu, &base2, dh, &mut z1, &mut f1)? {
            return Ok(Attempt::NewtonFailed);
        }

        // local error: 2kh·(F_n/γ − F_γ/(γ(1−γ)) + F_{n+1}/(1−γ)), filtered
        let k = (-3.0 * GAMMA * GAMMA + 4.0 * GAMMA - 2.0) / (12.0 * (2.0 - GAMMA));
        let est = DVector::from_fn(n, |i, _| {
            if self.dynm[i] {
                2.0 * k * h
                    * (self.fx[i] / GAMMA - fg[i] / (GAMMA * (1.0 - GAMMA)) + f1[i] / (1.0 - GAMMA))
            } else {
                0.0
            }
        });
        let e = lu.solve(&est).unwrap_or(est);
        let w = self.weights(&self.x, &z1);
        let nd = self.dynm.iter().filter(|d| **d).count().max(1);
        let err = ((0..n).filter(|&i| self.dynm[i]).map(|i| (e[i] / w[i]).powi(2)).sum::<f64>() / nd as f64).sqrt();
        if !err.is_finite() {
            return Ok(Attempt::NewtonFailed);
        }
        if err <= 1.0 {
            Ok(Attempt::Accepted { x1: z1, err })
        } else {
            Ok(Attempt::Rejected { err })
        }
    }

    /// Integrates to `t1` with the current inputs, feeding accepted steps to
    /// the recorder.
    pub fn advance(&mut self, t1: f64, u: &[f64], rec: &mut Recorder, last: bool) -> Result<()> {
        debug_assert_eq!(u, &self.u[..]);
        let tol = 1e-12 * t1.abs().max(1.0);
        while self.t < t1 - tol {
            if self.stats.steps + self.stats.rejected >= self.opts.max_steps {
                return Err(SimError::Stiffness { t: self.t, norm: norm(&self.x) });
            }
            let mut h = self.h.min(self.opts.h_max);
            if self.t + 1.05 * h >= t1 {
                h = t1 - self.t;
            }
            if h < self.opts.h_min {
                return Err(SimError::Stiffness { t: self.t, norm: norm(&self.x) });
            }
            match self.attempt(h)? {
                Attempt::Accepted { x1, err } => {
                    let (t0, x0, f0) = (self.t, std::mem::replace(&mut self.x, x1), self.fx.clone());
                    self.t = if (t1 - (t0 + h)).abs() <= tol { t1 } else { t0 + h };
                    self.sc.externals_at(self.t, &mut self.xs);
                    self.alg.solve(self.g, &mut self.x, &self.u, &self.xs)?;
                    self.note_residual();
                    let mut fx = std::mem::take(&mut self.fx);
                    self.eval_f(&self.x.clone(), &mut fx)?;
                    self.fx = fx;
                    self.stats.steps += 1;
                    rec.step(self.g, self.sc, &self.u, t0, &x0, &f0, self.t, &self.x, &self.fx, t1, last)?;
                    let grow = if err > 0.0 { 0.9 * err.powf(-1.0 / 3.0) } else { 5.0 };
                    self.h = h * grow.clamp(0.2, 5.0);
                }
                Attempt::Rejected { err } => {
                    self.stats.rejected += 1;
                    self.h = h * (0.9 * err.powf(-1.0 / 3.0)).clamp(0.1, 0.5);
                    self.sc.externals_at(self.t, &mut self.xs);
                }
                Attempt::NewtonFailed => {
                    self.stats.newton_failures += 1;
                    self.h = 0.25 * h;
                    self.sc.externals_at(self.t, &mut self.xs);
                }
            }
        }
        self.t = t1;
        Ok(())
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
