//! Design objectives and the genetic-algorithm studies.
//!
//! A design is scored by the shooting method: build the scaled vehicle,
//! run it closed loop under MPC over a drive cycle, and reduce the trace to
//! four objectives (tracking, constraint violation, energy, size).

mod ga;

pub use ga::{ga_optimize, ga_search, Evaluation, GaConfig, GaHistory, GaResult, Gene, Mode};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::hev::{DesignPoint, HevModel};
use crate::mpc::{Diagnostics, MpcConfig, MpcController};
use crate::sim::{
    integrate, record_violations, ConstraintKind, DriveCycle, Profile, Scenario, SimulationTrace, SolverOptions, MPH,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CcdError {
    #[error("trace and reference are misaligned: {0}")]
    Alignment(String),
    #[error("invalid GA configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, CcdError>;

/// Aggregate weights, internal weights and normalizers of the objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveWeights {
    /// (w_st, w_sc, w_en, w_size)
    pub w: [f64; 4],
    /// Compromise exponent used for selection.
    pub m_opt: u32,
    /// Exponent used in reports.
    pub m_report: u32,
    /// Λ_x on vehicle (wheel) speed.
    pub velocity: f64,
    /// Λ_s on temperature bounds.
    pub temperature: f64,
    /// Λ_s on the SOC bound.
    pub soc: f64,
    /// Nonzero diagonal of Λ_p, by edge id.
    pub energy_edges: BTreeMap<String, f64>,
    pub w_c: [f64; 6],
    /// Scale factors of (J_st, J_sc, J_en, J_size).
    pub normalizers: [f64; 4],
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights {
            w: [0.5; 4],
            m_opt: 4,
            m_report: 1,
            velocity: 100.0,
            temperature: 1.4e3,
            soc: 1.4e5,
            energy_edges: crate::hev::ENERGY_EDGES.iter().map(|e| (e.to_string(), 1.0)).collect(),
            w_c: [1.0, 1.0, 1.0, 1.0, 1.0, 0.0],
            normalizers: [1e-7, 1e-10, 1e-7, 1e-1],
        }
    }
}

/// J_st = scale · Σ_j Σ_i λ_i (x_ji − r_ji)².
pub fn tracking_objective(x: &[Vec<f64>], r: &[Vec<f64>], lambda: &[f64], scale: f64) -> Result<f64> {
    if x.len() != r.len() {
        return Err(CcdError::Alignment(format!("{} samples against {} references", x.len(), r.len())));
    }
    let mut s = 0.0;
    for (j, (xj, rj)) in x.iter().zip(r).enumerate() {
        if xj.len() != lambda.len() || rj.len() != lambda.len() {
            return Err(CcdError::Alignment(format!("sample {j} has the wrong width")));
        }
        for i in 0..lambda.len() {
            let e = xj[i] - rj[i];
            s += lambda[i] * e * e;
        }
    }
    Ok(scale * s)
}

/// J_sc = scale · Σ_j ‖s_j‖²_Λ over violation vectors.
pub fn constraint_objective(violations: &[Vec<f64>], lambda: &[f64], scale: f64) -> f64 {
    let mut s = 0.0;
    for v in violations {
        for (a, l) in v.iter().zip(lambda) {
            s += l * a * a;
        }
    }
    scale * s
}

/// Trapezoid rule on a uniform grid.
pub fn trapezoid(y: &[f64], dt: f64) -> f64 {
    match y.len() {
        0 | 1 => 0.0,
        n => dt * (0.5 * (y[0] + y[n - 1]) + y[1..n - 1].iter().sum::<f64>()),
    }
}

/// J_en = scale · Σ_edges λ_e ∫ y_e dt. `flows[e]` is the time series of
/// edge e. Flows are signed, so regeneration into the pack counts against
/// the total.
pub fn energy_objective(flows: &[Vec<f64>], lambda: &[f64], dt: f64, scale: f64) -> f64 {
    scale * flows.iter().zip(lambda).filter(|(_, &l)| l != 0.0).map(|(y, l)| l * trapezoid(y, dt)).sum::<f64>()
}

/// J_size = scale · w_c·θ.
pub fn size_objective(theta: &[f64], w_c: &[f64], scale: f64) -> f64 {
    scale * theta.iter().zip(w_c).map(|(t, w)| t * w).sum::<f64>()
}

/// Σ w_i J_i^m.
pub fn total_objective(j: [f64; 4], w: [f64; 4], m: u32) -> f64 {
    j.iter().zip(&w).map(|(j, w)| w * j.powi(m as i32)).sum()
}

/// Closed-loop run settings shared by every evaluation of a study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignScenario {
    pub cycle: DriveCycle,
    pub t_final: f64,
    /// Ambient temperature (K).
    pub ambient: f64,
    /// Evaluation grid Δt_e (s).
    pub dt_eval: f64,
    /// MPC prediction horizon and applied steps.
    pub horizon: usize,
    pub applied_steps: usize,
    pub options: SolverOptions,
}

impl DesignScenario {
    pub fn udds_300s() -> Self {
        DesignScenario {
            cycle: DriveCycle::udds_300s(),
            t_final: 300.0,
            ambient: crate::hev::AMBIENT,
            dt_eval: 1.0,
            horizon: 4,
            applied_steps: 2,
            options: SolverOptions::default(),
        }
    }

    pub fn truncated(&self, t_final: f64) -> Self {
        DesignScenario { cycle: self.cycle.truncated(t_final), t_final, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    pub j_st: f64,
    pub j_sc: f64,
    pub j_en: f64,
    pub j_size: f64,
    /// Mean |v − v_ref| over the evaluation grid.
    pub avg_velocity_error_mph: f64,
    /// Largest violation per named state bound.
    pub max_violation: BTreeMap<String, f64>,
    pub mpc_faults: usize,
    pub design: DesignPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl ObjectiveReport {
    pub fn components(&self) -> [f64; 4] {
        [self.j_st, self.j_sc, self.j_en, self.j_size]
    }

    /// J_tot(m); +∞ for a failed run.
    pub fn total(&self, w: &ObjectiveWeights, m: u32) -> f64 {
        if self.failure.is_some() {
            return f64::INFINITY;
        }
        total_objective(self.components(), w.w, m)
    }

    pub fn failed(dp: &DesignPoint, msg: String) -> Self {
        ObjectiveReport {
            j_st: f64::INFINITY,
            j_sc: f64::INFINITY,
            j_en: f64::INFINITY,
            j_size: f64::INFINITY,
            avg_velocity_error_mph: f64::INFINITY,
            max_violation: BTreeMap::new(),
            mpc_faults: 0,
            design: dp.clone(),
            failure: Some(msg),
        }
    }
}

/// Inputs of the three trace objectives, pulled from a trace.
pub struct TraceObjectives {
    pub j_st: f64,
    pub j_sc: f64,
    pub j_en: f64,
    pub avg_velocity_error_mph: f64,
    pub max_violation: BTreeMap<String, f64>,
}

/// Reduces a vehicle trace to J_st, J_sc and J_en.
pub fn score_trace(model: &HevModel, trace: &SimulationTrace, w: &ObjectiveWeights) -> Result<TraceObjectives> {
    let h = &model.handles;
    let n = trace.times.len();
    if trace.reference.len() != n {
        return Err(CcdError::Alignment(format!("{} samples against {} references", n, trace.reference.len())));
    }
    let dt = if n > 1 { trace.times[1] - trace.times[0] } else { 0.0 };
    if trace.times.windows(2).any(|p| ((p[1] - p[0]) - dt).abs() > 1e-9 * dt.max(1.0)) {
        return Err(CcdError::Alignment("trace is not on a uniform grid".into()));
    }
    let x: Vec<Vec<f64>> = trace.states.iter().map(|s| vec![s[h.wheel_speed]]).collect();
    let r: Vec<Vec<f64>> = trace.reference.iter().map(|v| vec![v / h.wheel_radius]).collect();
    let j_st = tracking_objective(&x, &r, &[w.velocity], w.normalizers[0])?;

    let viol = record_violations(trace, &h.constraints);
    let mut lambda_s = vec![0.0; trace.state_ids.len()];
    for b in &h.constraints {
        lambda_s[b.state] = match b.kind {
            ConstraintKind::Temperature => w.temperature,
            ConstraintKind::Soc => w.soc,
        };
    }
    let j_sc = constraint_objective(&viol, &lambda_s, w.normalizers[1]);

    let mut flows = Vec::new();
    let mut lambda_p = Vec::new();
    for (id, &l) in &w.energy_edges {
        let k = trace
            .edge_ids
            .iter()
            .position(|e| e == id)
            .ok_or_else(|| CcdError::Alignment(format!("trace has no edge `{id}`")))?;
        flows.push(trace.flow_column(k));
        lambda_p.push(l);
    }
    let j_en = energy_objective(&flows, &lambda_p, dt, w.normalizers[2]);

    let err: f64 = trace.states.iter().zip(&trace.reference).map(|(s, v)| (model.vehicle_speed(s) - v).abs()).sum();
    let summary = trace.summary(&h.constraints);
    Ok(TraceObjectives {
        j_st,
        j_sc,
        j_en,
        avg_velocity_error_mph: err / n.max(1) as f64 / MPH,
        max_violation: summary.max_violation,
    })
}

/// Output of one closed-loop run.
pub struct ClosedLoopRun {
    pub trace: SimulationTrace,
    pub faults: usize,
    /// Per-call controller diagnostics (faults only unless requested).
    pub log: Vec<Diagnostics>,
}

/// Runs the closed loop for one design.
pub fn simulate_design(
    model: &HevModel,
    dp: &DesignPoint,
    sc: &DesignScenario,
    keep_log: bool,
) -> std::result::Result<ClosedLoopRun, String> {
    dp.validate().map_err(|e| e.to_string())?;
    let g = model.apply_plant_design(&dp.theta).map_err(|e| e.to_string())?;
    let x0 = model.initial_state(sc.ambient);
    let u0 = model.initial_inputs(&x0);
    let scenario = Scenario {
        cycle: sc.cycle.clone(),
        externals: model.external_values(sc.ambient).into_iter().map(Profile::Constant).collect(),
        t_final: sc.t_final,
        dt_eval: sc.dt_eval,
        x0,
        u0,
        options: sc.options,
    };
    let mut cfg = MpcConfig::for_hev(model, &dp.phi);
    cfg.horizon = sc.horizon;
    cfg.applied_steps = sc.applied_steps;
    let mut c = MpcController::new(&g, cfg, sc.cycle.clone(), model.handles.wheel_radius);
    c.keep_log = keep_log;
    let trace = integrate(&g, Some(&mut c), &scenario).map_err(|e| e.to_string())?;
    Ok(ClosedLoopRun { trace, faults: c.faults, log: c.log })
}

/// Shooting-method evaluation of one design point. Simulation failures
/// come back as a report with infinite objectives and the failure text.
pub fn evaluate_design(model: &HevModel, dp: &DesignPoint, sc: &DesignScenario, w: &ObjectiveWeights) -> ObjectiveReport {
    let run = match simulate_design(model, dp, sc, false) {
        Ok(r) => r,
        Err(e) => return ObjectiveReport::failed(dp, e),
    };
    report_for(model, dp, &run, w)
}

/// Objective report of a finished run.
pub fn report_for(model: &HevModel, dp: &DesignPoint, run: &ClosedLoopRun, w: &ObjectiveWeights) -> ObjectiveReport {
    let t = match score_trace(model, &run.trace, w) {
        Ok(t) => t,
        Err(e) => return ObjectiveReport::failed(dp, e.to_string()),
    };
    ObjectiveReport {
        j_st: t.j_st,
        j_sc: t.j_sc,
        j_en: t.j_en,
        j_size: size_objective(&dp.theta, &w.w_c, w.normalizers[3]),
        avg_velocity_error_mph: t.avg_velocity_error_mph,
        max_violation: t.max_violation,
        mpc_faults: run.faults,
        design: dp.clone(),
        failure: None,
    }
}
