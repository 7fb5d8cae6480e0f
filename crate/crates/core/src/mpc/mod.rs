//! Receding-horizon controller on a linearized, reduced graph model.
//!
//! Each call linearizes at the measured state, discretizes with forward
//! Euler, eliminates the algebraic block and condenses the horizon into a
//! QP over the stacked inputs and slacks.

mod linear;
mod qp;

pub use linear::{discretize_and_reduce, linearize, spectral_radius_estimate, LinearModel, Prediction, ReductionRule};
pub use qp::{solve_qp, KktReport, QpError, QpProblem, QpSolution};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError};
use crate::hev::{HevModel, InputGroup, Phi};
use crate::sim::{ConstraintKind, ControlContext, Controller, DriveCycle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("reduced prediction model is singular; offending states {0:?}")]
    Reduction(Vec<usize>),
    #[error("QP failed: {0}")]
    Qp(#[from] QpError),
    #[error("input {input} has an empty feasible range [{lo}, {hi}]")]
    EmptyInputRange { input: usize, lo: f64, hi: f64 },
    #[error("reference preview has {got} samples, {need} needed")]
    Preview { need: usize, got: usize },
    #[error("invalid MPC configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, MpcError>;

/// Λ_x,c entry: weight on (x_state − reference)².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tracked {
    pub state: usize,
    pub weight: f64,
}

/// Soft box on one predicted state with its slack weight (Λ_s,c entry).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftBound {
    pub name: String,
    pub state: usize,
    pub min: f64,
    pub max: f64,
    pub weight: f64,
}

/// Equality u[input] = a + b·x[state] (one row of Z₁u = Z₂x).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub input: usize,
    pub state: usize,
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    /// Prediction and hold step (s).
    pub dt: f64,
    pub horizon: usize,
    pub applied_steps: usize,
    /// Half-width of the move band around the previous input.
    pub eps: f64,
    pub tracked: Vec<Tracked>,
    pub bounds: Vec<SoftBound>,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    /// Inputs exempt from the move band (they follow a coupling instead).
    pub band_exempt: Vec<bool>,
    pub couplings: Vec<Coupling>,
    pub reduction: ReductionRule,
    /// Minimum band half-width as a fraction of the input range, used when
    /// eps > 0 so inputs at zero can move.
    pub band_floor: f64,
    /// Weight of ‖(u − u_prev)/range‖², relative to the largest tracking
    /// curvature, added so the QP is strictly convex.
    pub proximal: f64,
}

pub const TEMPERATURE_SLACK_WEIGHT: f64 = 1.4e3;
pub const SOC_SLACK_WEIGHT: f64 = 1.4e5;

impl MpcConfig {
    /// Controller for the vehicle with parameters φ = (Δt, ε, velocity weight).
    pub fn for_hev(model: &HevModel, phi: &Phi) -> Self {
        let nu = model.graph.n_inputs();
        let h = &model.handles;
        let mut u_min = vec![f64::NEG_INFINITY; nu];
        let mut u_max = vec![f64::INFINITY; nu];
        let mut band_exempt = vec![false; nu];
        for b in &model.input_bounds {
            let k = model.input(&b.input);
            u_min[k] = b.min;
            u_max[k] = b.max;
            band_exempt[k] = b.group == InputGroup::MassFlow;
        }
        let bounds = h
            .constraints
            .iter()
            .map(|b| SoftBound {
                name: b.name.clone(),
                state: b.state,
                min: b.min,
                max: b.max,
                weight: match b.kind {
                    ConstraintKind::Temperature => TEMPERATURE_SLACK_WEIGHT,
                    ConstraintKind::Soc => SOC_SLACK_WEIGHT,
                },
            })
            .collect();
        let couplings =
            h.mass_flows.iter().map(|m| Coupling { input: m.input, state: m.speed_state, a: m.a, b: m.b }).collect();
        MpcConfig {
            dt: phi.dt,
            horizon: 4,
            applied_steps: 2,
            eps: phi.eps,
            tracked: vec![Tracked { state: h.wheel_speed, weight: phi.w_vel }],
            bounds,
            u_min,
            u_max,
            band_exempt,
            couplings,
            reduction: ReductionRule::default(),
            band_floor: 0.035,
            proximal: 1e-6,
        }
    }

    pub fn validate(&self, n_states: usize, n_inputs: usize) -> Result<()> {
        let bad = |m: String| Err(MpcError::Config(m));
        if !(self.dt > 0.0) {
            return bad(format!("dt = {}", self.dt));
        }
        if self.applied_steps == 0 || self.applied_steps > self.horizon {
            return bad(format!("need 1 ≤ applied_steps ≤ horizon, got {} and {}", self.applied_steps, self.horizon));
        }
        if !(0.0..=1.0).contains(&self.eps) {
            return bad(format!("eps = {} outside [0, 1]", self.eps));
        }
        if self.u_min.len() != n_inputs || self.u_max.len() != n_inputs || self.band_exempt.len() != n_inputs {
            return bad("input bound vectors do not match the input count".into());
        }
        if self.u_min.iter().zip(&self.u_max).any(|(a, b)| a > b) {
            return bad("u_min exceeds u_max".into());
        }
        if self.tracked.iter().any(|t| t.state >= n_states || t.weight < 0.0)
            || self.bounds.iter().any(|b| b.state >= n_states || b.weight <= 0.0 || b.min > b.max)
            || self.couplings.iter().any(|c| c.state >= n_states || c.input >= n_inputs)
        {
            return bad("state or input index out of range, or bad weight".into());
        }
        if !(self.proximal > 0.0) {
            return bad("proximal weight must be positive".into());
        }
        Ok(())
    }

    /// Feasible range of input `i` from the box and the move band around
    /// `u_prev`.
    pub fn input_range(&self, i: usize, u_prev: f64) -> (f64, f64) {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        if !self.band_exempt[i] {
            let (a, b) = ((1.0 - self.eps) * u_prev, (1.0 + self.eps) * u_prev);
            lo = a.min(b);
            hi = a.max(b);
            let range = self.u_max[i] - self.u_min[i];
            if self.eps > 0.0 && range.is_finite() {
                let d = self.band_floor * range;
                lo = lo.min(u_prev - d);
                hi = hi.max(u_prev + d);
            }
        }
        (lo.max(self.u_min[i]), hi.min(self.u_max[i]))
    }
}

/// Result of one controller solve.
#[derive(Clone, Debug)]
pub struct MpcSolution {
    /// u_{k+1|k} … u_{k+N|k}.
    pub inputs: Vec<DVector<f64>>,
    /// s_{k+1|k} … s_{k+N|k}, one entry per soft bound.
    pub slacks: Vec<DVector<f64>>,
    /// x_{k+1|k} … x_{k+N+1|k}.
    pub states: Vec<DVector<f64>>,
    /// Cost of the optimal plan without the proximal term.
    pub j_star: f64,
    pub qp: QpProblem,
    pub qp_solution: QpSolution,
    /// Names of the active inequality rows.
    pub active: Vec<String>,
}

struct Layout {
    /// (step, input) of each free input variable.
    free: Vec<(usize, usize)>,
    /// column of (step, input) in the free block, None when fixed.
    col: Vec<Vec<Option<usize>>>,
    fixed: Vec<Vec<f64>>,
    lo: Vec<Vec<f64>>,
    hi: Vec<Vec<f64>>,
}

/// Condenses the horizon and solves the QP. `refs[j][k]` is the reference
/// of `cfg.tracked[k]` for x_{k+j+1|k}, j = 0 … N.
pub fn build_and_solve_qp(
    pred: &Prediction,
    cfg: &MpcConfig,
    x0: &DVector<f64>,
    u_prev: &DVector<f64>,
    refs: &[Vec<f64>],
    xs: &DVector<f64>,
) -> Result<MpcSolution> {
    let np = cfg.horizon;
    let nu = u_prev.len();
    let n = x0.len();
    cfg.validate(n, nu)?;
    if refs.len() < np + 1 {
        return Err(MpcError::Preview { need: np + 1, got: refs.len() });
    }
    if refs.iter().any(|r| r.len() != cfg.tracked.len()) {
        return Err(MpcError::Config("each reference row needs one value per tracked state".into()));
    }

    // variable layout: free inputs first, then slacks (step-major)
    let mut lay = Layout { free: vec![], col: vec![vec![None; nu]; np], fixed: vec![vec![0.0; nu]; np], lo: vec![], hi: vec![] };
    let mut lo_row = vec![0.0; nu];
    let mut hi_row = vec![0.0; nu];
    for i in 0..nu {
        let (lo, hi) = cfg.input_range(i, u_prev[i]);
        if lo > hi {
            return Err(MpcError::EmptyInputRange { input: i, lo, hi });
        }
        lo_row[i] = lo;
        hi_row[i] = hi;
    }
    for j in 0..np {
        for i in 0..nu {
            if lo_row[i] == hi_row[i] {
                lay.fixed[j][i] = lo_row[i];
            } else {
                lay.col[j][i] = Some(lay.free.len());
                lay.free.push((j, i));
            }
        }
        lay.lo.push(lo_row.clone());
        lay.hi.push(hi_row.clone());
    }
    let nf = lay.free.len();
    let nb = cfg.bounds.len();
    let nz = nf + np * nb;
    let slack = |j: usize, b: usize| nf + j * nb + b;

    // x_j = P_j z + q_j over the free inputs; P has zero slack columns
    let nd = pred.dynamic.len();
    let mut pd = DMatrix::<f64>::zeros(nd, nf);
    let mut qd = pred.dynamic_part(x0);
    let mut p_states: Vec<DMatrix<f64>> = Vec::with_capacity(np + 1);
    let mut q_states: Vec<DVector<f64>> = Vec::with_capacity(np + 1);
    let mut pa = DMatrix::<f64>::zeros(pred.algebraic.len(), nf);
    let mut qa = DVector::<f64>::zeros(pred.algebraic.len());
    let ks = &pred.k_s * xs + &pred.k_w;
    let fs = &pred.f_s * xs + &pred.f_w;
    let full = |pd: &DMatrix<f64>, qd: &DVector<f64>, pa: &DMatrix<f64>, qa: &DVector<f64>| {
        let mut p = DMatrix::zeros(n, nf);
        let mut q = DVector::zeros(n);
        for (k, &i) in pred.dynamic.iter().enumerate() {
            p.row_mut(i).copy_from(&pd.row(k));
            q[i] = qd[k];
        }
        for (k, &i) in pred.algebraic.iter().enumerate() {
            p.row_mut(i).copy_from(&pa.row(k));
            q[i] = qa[k];
        }
        (p, q)
    };
    for j in 0..np {
        // u_j = E_j z + fixed_j
        let uf = DVector::from_column_slice(&lay.fixed[j]);
        pa = &pred.k_d * &pd;
        qa = &pred.k_d * &qd + &pred.k_u * &uf + &ks;
        let mut pd_next = &pred.f_d * &pd;
        let qd_next = &pred.f_d * &qd + &pred.f_u * &uf + &fs;
        for i in 0..nu {
            if let Some(c) = lay.col[j][i] {
                for r in 0..pa.nrows() {
                    pa[(r, c)] += pred.k_u[(r, i)];
                }
                for r in 0..nd {
                    pd_next[(r, c)] += pred.f_u[(r, i)];
                }
            }
        }
        let (p, q) = full(&pd, &qd, &pa, &qa);
        p_states.push(p);
        q_states.push(q);
        pd = pd_next;
        qd = qd_next;
    }
    let (p, q) = full(&pd, &qd, &pa, &qa);
    p_states.push(p);
    q_states.push(q);

    // cost ½zᵀHz + gᵀz
    let mut h = DMatrix::<f64>::zeros(nz, nz);
    let mut g = DVector::<f64>::zeros(nz);
    for (j, (p, q)) in p_states.iter().zip(&q_states).enumerate() {
        for (k, t) in cfg.tracked.iter().enumerate() {
            let row = p.row(t.state);
            let e = q[t.state] - refs[j][k];
            if nf > 0 {
                h.view_mut((0, 0), (nf, nf)).ger(2.0 * t.weight, &row.transpose(), &row.transpose(), 1.0);
                g.rows_mut(0, nf).axpy(2.0 * t.weight * e, &row.transpose(), 1.0);
            }
        }
    }
    // proximal term relative to the largest tracking curvature
    let rho = cfg.proximal * (1.0 + (0..nf).map(|c| h[(c, c)]).fold(0.0, f64::max));
    for (c, &(_, i)) in lay.free.iter().enumerate() {
        let range = cfg.u_max[i] - cfg.u_min[i];
        let s = if range.is_finite() && range > 0.0 { 1.0 / range } else { 1.0 };
        h[(c, c)] += 2.0 * rho * s * s;
        g[c] -= 2.0 * rho * s * s * u_prev[i];
    }
    for j in 0..np {
        for (b, sb) in cfg.bounds.iter().enumerate() {
            h[(slack(j, b), slack(j, b))] = 2.0 * sb.weight;
        }
    }

    // inequalities A_i z ≥ b_i
    let mut rows: Vec<(DVector<f64>, f64, String)> = Vec::new();
    for j in 0..np {
        let (p, q) = (&p_states[j + 1], &q_states[j + 1]);
        for (b, sb) in cfg.bounds.iter().enumerate() {
            if sb.min.is_finite() {
                let mut a = DVector::zeros(nz);
                a.rows_mut(0, nf).copy_from(&p.row(sb.state).transpose());
                a[slack(j, b)] = 1.0;
                rows.push((a, sb.min - q[sb.state], format!("{} min @{}", sb.name, j + 2)));
            }
            if sb.max.is_finite() {
                let mut a = DVector::zeros(nz);
                a.rows_mut(0, nf).copy_from(&(-p.row(sb.state)).transpose());
                a[slack(j, b)] = 1.0;
                rows.push((a, q[sb.state] - sb.max, format!("{} max @{}", sb.name, j + 2)));
            }
            let mut a = DVector::zeros(nz);
            a[slack(j, b)] = 1.0;
            rows.push((a, 0.0, format!("{} slack ≥ 0 @{}", sb.name, j + 1)));
        }
    }
    for (c, &(j, i)) in lay.free.iter().enumerate() {
        if lay.lo[j][i].is_finite() {
            let mut a = DVector::zeros(nz);
            a[c] = 1.0;
            rows.push((a, lay.lo[j][i], format!("u{i} lower @{}", j + 1)));
        }
        if lay.hi[j][i].is_finite() {
            let mut a = DVector::zeros(nz);
            a[c] = -1.0;
            rows.push((a, -lay.hi[j][i], format!("u{i} upper @{}", j + 1)));
        }
    }

    // equalities: u_j[input] − b·x_j[state] = a
    let mut eq: Vec<(DVector<f64>, f64)> = Vec::new();
    for j in 0..np {
        let (p, q) = (&p_states[j], &q_states[j]);
        for cp in &cfg.couplings {
            let mut a = DVector::zeros(nz);
            a.rows_mut(0, nf).axpy(-cp.b, &p.row(cp.state).transpose(), 0.0);
            let mut rhs = cp.a + cp.b * q[cp.state];
            match lay.col[j][cp.input] {
                Some(c) => a[c] += 1.0,
                None => rhs -= lay.fixed[j][cp.input],
            }
            eq.push((a, rhs));
        }
    }

    let stack = |r: &[(DVector<f64>, f64)]| {
        let m = DMatrix::from_fn(r.len(), nz, |i, k| r[i].0[k]);
        let b = DVector::from_iterator(r.len(), r.iter().map(|x| x.1));
        (m, b)
    };
    let (ae, be) = stack(&eq);
    let plain: Vec<(DVector<f64>, f64)> = rows.iter().map(|(a, b, _)| (a.clone(), *b)).collect();
    let (ai, bi) = stack(&plain);
    let problem = QpProblem { h, g, ae, be, ai, bi };
    let sol = solve_qp(&problem)?;

    let z = &sol.x;
    let mut inputs = Vec::with_capacity(np);
    let mut slacks = Vec::with_capacity(np);
    for j in 0..np {
        let mut u = DVector::from_column_slice(&lay.fixed[j]);
        for i in 0..nu {
            if let Some(c) = lay.col[j][i] {
                // the active-set solution can sit a rounding error outside
                u[i] = z[c].clamp(lay.lo[j][i], lay.hi[j][i]);
            }
        }
        inputs.push(u);
        slacks.push(DVector::from_fn(nb, |b, _| z[slack(j, b)].max(0.0)));
    }
    let zf = z.rows(0, nf).into_owned();
    let states: Vec<DVector<f64>> = p_states.iter().zip(&q_states).map(|(p, q)| p * &zf + q).collect();
    let j_star = horizon_cost(cfg, &states, &slacks, refs);
    let active = sol.active.iter().map(|&r| rows[r].2.clone()).collect();
    Ok(MpcSolution { inputs, slacks, states, j_star, qp: problem, qp_solution: sol, active })
}

/// Σ_{j=1}^{N+1} ‖x_j − r_j‖²_Λx + Σ_{j=1}^{N} ‖s_j‖²_Λs.
pub fn horizon_cost(cfg: &MpcConfig, states: &[DVector<f64>], slacks: &[DVector<f64>], refs: &[Vec<f64>]) -> f64 {
    let mut j = 0.0;
    for (x, r) in states.iter().zip(refs) {
        for (t, rk) in cfg.tracked.iter().zip(r) {
            j += t.weight * (x[t.state] - rk).powi(2);
        }
    }
    for s in slacks {
        for (b, sb) in cfg.bounds.iter().enumerate() {
            j += sb.weight * s[b] * s[b];
        }
    }
    j
}

/// Largest violation of the horizon constraints by `sol`, recomputed from a
/// plain rollout of the prediction model.
pub fn constraint_violation(
    pred: &Prediction,
    cfg: &MpcConfig,
    x0: &DVector<f64>,
    u_prev: &DVector<f64>,
    xs: &DVector<f64>,
    sol: &MpcSolution,
) -> f64 {
    let states = pred.rollout(x0, &sol.inputs, xs);
    let mut v: f64 = 0.0;
    for j in 0..cfg.horizon {
        let (x, u, s) = (&states[j + 1], &sol.inputs[j], &sol.slacks[j]);
        for (b, sb) in cfg.bounds.iter().enumerate() {
            v = v.max(sb.min - s[b] - x[sb.state]).max(x[sb.state] - sb.max - s[b]).max(-s[b]);
        }
        for i in 0..u.len() {
            let (lo, hi) = cfg.input_range(i, u_prev[i]);
            v = v.max(lo - u[i]).max(u[i] - hi);
        }
        for cp in &cfg.couplings {
            v = v.max((u[cp.input] - cp.a - cp.b * states[j][cp.state]).abs());
        }
    }
    for (a, b) in states.iter().zip(&sol.states) {
        v = v.max((a - b).amax() / (1.0 + a.amax()));
    }
    v
}

/// Per-call controller record, written as JSON lines.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub j_star: f64,
    pub qp_iterations: usize,
    pub demoted: Vec<String>,
    pub active: Vec<String>,
    pub kkt: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kinks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

/// Linearize, reduce and solve at the measured state; returns the first
/// `applied_steps` inputs.
pub fn mpc_step(
    g: &Graph,
    cfg: &MpcConfig,
    x: &[f64],
    u_prev: &[f64],
    xs: &[f64],
    preview: &[Vec<f64>],
) -> Result<(Vec<DVector<f64>>, Diagnostics)> {
    if preview.len() < cfg.horizon + 1 {
        return Err(MpcError::Preview { need: cfg.horizon + 1, got: preview.len() });
    }
    let lm = linearize(g, x, u_prev, xs)?;
    let pred = discretize_and_reduce(&lm, cfg.dt, cfg.reduction)?;
    let x0 = DVector::from_column_slice(x);
    let up = DVector::from_column_slice(u_prev);
    let sol = build_and_solve_qp(&pred, cfg, &x0, &up, preview, &DVector::from_column_slice(xs))?;
    let diag = Diagnostics {
        t: 0.0,
        j_star: sol.j_star,
        qp_iterations: sol.qp_solution.iterations,
        demoted: pred.demoted.iter().map(|&i| g.state_spec(i).id.clone()).collect(),
        active: sol.active.clone(),
        kkt: sol.qp.kkt(&sol.qp_solution).max(),
        kinks: lm.kinks,
        fault: None,
    };
    Ok((sol.inputs.into_iter().take(cfg.applied_steps).collect(), diag))
}

/// MPC as a simulation controller. Faults hold the previous input and are
/// logged; they never stop the run.
pub struct MpcController<'a> {
    pub graph: &'a Graph,
    pub cfg: MpcConfig,
    pub cycle: DriveCycle,
    /// Reference divisor per tracked state (wheel radius for speed).
    pub ref_scale: f64,
    pub log: Vec<Diagnostics>,
    pub faults: usize,
    /// Keep full diagnostics for every call; otherwise only faults.
    pub keep_log: bool,
}

impl<'a> MpcController<'a> {
    pub fn new(graph: &'a Graph, cfg: MpcConfig, cycle: DriveCycle, ref_scale: f64) -> Self {
        MpcController { graph, cfg, cycle, ref_scale, log: vec![], faults: 0, keep_log: true }
    }

    /// Reference preview at t, t + dt, …, t + N·dt. Past the end of the
    /// cycle the last sample is held.
    pub fn preview(&self, t: f64) -> Vec<Vec<f64>> {
        let end = self.cycle.duration();
        (0..=self.cfg.horizon)
            .map(|j| {
                let r = self.cycle.at((t + j as f64 * self.cfg.dt).min(end)) / self.ref_scale;
                vec![r; self.cfg.tracked.len()]
            })
            .collect()
    }
}

impl Controller for MpcController<'_> {
    fn step(&self) -> f64 {
        self.cfg.dt
    }

    fn control(&mut self, ctx: &ControlContext) -> std::result::Result<Vec<Vec<f64>>, String> {
        let preview = self.preview(ctx.t);
        match mpc_step(self.graph, &self.cfg, ctx.x, ctx.u_prev, ctx.xs, &preview) {
            Ok((plan, mut d)) => {
                d.t = ctx.t;
                if self.keep_log {
                    self.log.push(d);
                }
                Ok(plan.into_iter().map(|u| u.as_slice().to_vec()).collect())
            }
            Err(e) => {
                self.faults += 1;
                self.log.push(Diagnostics { t: ctx.t, fault: Some(e.to_string()), ..Default::default() });
                Ok(vec![ctx.u_prev.to_vec(); self.cfg.applied_steps])
            }
        }
    }
}
