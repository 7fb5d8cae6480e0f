//! Closed-loop integration of graph models.
//!
//! The model is the semi-explicit DAE `m(x)⊙ẋ = f(x,u,xs)` on dynamic
//! rows and `0 = f` on algebraic rows, integrated with TR-BDF2 between
//! controller events. Inputs are held constant between events.

mod algebraic;
mod cycle;
mod stepper;
mod trace;

pub use algebraic::{solve_algebraic, AlgebraicSolver};
pub use cycle::{DriveCycle, Profile, SpeedUnits, MPH};
pub use trace::{record_violations, ConstraintKind, SimulationTrace, SolverStats, StateBound, TraceSummary};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError};
use stepper::Stepper;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("algebraic solve did not converge: residual {residual:.3e} at `{vertex}`")]
    Algebraic { residual: f64, vertex: String },
    #[error("step size underflow at t = {t:.6} s (|x| = {norm:.3e})")]
    Stiffness { t: f64, norm: f64 },
    #[error("controller failed at t = {t:.3} s: {msg}")]
    Controller { t: f64, msg: String },
    #[error("scenario error: {0}")]
    Scenario(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step; controllers usually shorten this to half
    /// their step.
    pub h_max: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { rtol: 1e-3, atol: 1e-6, h_max: f64::INFINITY, h_init: 1e-4, h_min: 1e-12, max_steps: 2_000_000 }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub cycle: DriveCycle,
    /// One profile per external vertex, in x^s order.
    pub externals: Vec<Profile>,
    pub t_final: f64,
    /// Spacing of the recorded (evaluation) grid.
    pub dt_eval: f64,
    pub x0: Vec<f64>,
    /// Inputs used when no controller is attached, and the "previous
    /// input" handed to the first controller call.
    pub u0: Vec<f64>,
    pub options: SolverOptions,
}

impl Scenario {
    pub fn externals_at(&self, t: f64, out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.externals) {
            *o = p.at(t);
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.t_final / self.dt_eval).round() as usize + 1
    }

    fn check(&self, g: &Graph) -> Result<()> {
        let bad = |m: String| Err(SimError::Scenario(m));
        if self.x0.len() != g.n_states() {
            return bad(format!("x0 has {} entries, graph has {} states", self.x0.len(), g.n_states()));
        }
        if self.u0.len() != g.n_inputs() {
            return bad(format!("u0 has {} entries, graph has {} inputs", self.u0.len(), g.n_inputs()));
        }
        if self.externals.len() != g.n_externals() {
            return bad(format!("{} external profiles for {} externals", self.externals.len(), g.n_externals()));
        }
        if !(self.dt_eval > 0.0 && self.t_final > 0.0) {
            return bad("t_final and dt_eval must be positive".into());
        }
        let n = self.t_final / self.dt_eval;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return bad(format!("t_final {} is not a multiple of dt_eval {}", self.t_final, self.dt_eval));
        }
        if self.cycle.duration() + 1e-9 < self.t_final {
            return bad(format!("drive cycle ends at {} s, before t_final {}", self.cycle.duration(), self.t_final));
        }
        Ok(())
    }
}

/// What a controller sees at an event.
pub struct ControlContext<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub xs: &'a [f64],
    pub u_prev: &'a [f64],
}

pub trait Controller {
    /// Duration each returned input vector is held (s).
    fn step(&self) -> f64;
    /// Input vectors for the next few steps, applied in order.
    fn control(&mut self, ctx: &ControlContext) -> std::result::Result<Vec<Vec<f64>>, String>;
}

/// Integrates `g` over the scenario, calling `controller` at its events.
pub fn integrate(g: &Graph, controller: Option<&mut dyn Controller>, sc: &Scenario) -> Result<SimulationTrace> {
    sc.check(g)?;
    let started = std::time::Instant::now();
    let mut opts = sc.options;
    if let Some(c) = controller.as_deref() {
        opts.h_max = opts.h_max.min(0.5 * c.step());
    }
    let mut st = Stepper::new(g, sc, opts);
    let mut rec = trace::Recorder::new(g, sc);
    let mut u = sc.u0.clone();
    st.start(&u)?;

    let t_end = sc.t_final;
    let tol = 1e-9 * t_end.max(1.0);
    match controller {
        None => {
            rec.segment_start(&st, &u)?;
            st.advance(t_end, &u, &mut rec, true)?;
        }
        Some(c) => {
            let dt = c.step();
            if !(dt > 0.0) {
                return Err(SimError::Scenario("controller step must be positive".into()));
            }
            let mut t = 0.0;
            'outer: while t < t_end - tol {
                let mut xs = vec![0.0; g.n_externals()];
                sc.externals_at(t, &mut xs);
                let plan = c
                    .control(&ControlContext { t, x: st.x(), xs: &xs, u_prev: &u })
                    .map_err(|msg| SimError::Controller { t, msg })?;
                st.stats.controller_calls += 1;
                if plan.is_empty() {
                    return Err(SimError::Controller { t, msg: "empty input plan".into() });
                }
                for v in plan {
                    if v.len() != g.n_inputs() || v.iter().any(|a| !a.is_finite()) {
                        return Err(SimError::Controller { t, msg: "malformed input vector".into() });
                    }
                    u = v;
                    st.set_inputs(&u)?;
                    rec.segment_start(&st, &u)?;
                    let t1 = (t + dt).min(t_end);
                    let last = t1 >= t_end - tol;
                    st.advance(if last { t_end } else { t1 }, &u, &mut rec, last)?;
                    t = if last { t_end } else { t1 };
                    if last {
                        break 'outer;
                    }
                }
            }
        }
    }
    let mut stats = st.stats.clone();
    stats.wall_seconds = started.elapsed().as_secs_f64();
    Ok(rec.finish(stats))
}
