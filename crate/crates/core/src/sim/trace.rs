use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::{AlgebraicSolver, Result, Scenario};
use crate::graph::Graph;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub steps: usize,
    pub rejected: usize,
    pub newton_failures: usize,
    pub newton_iterations: usize,
    pub jacobians: usize,
    pub factorizations: usize,
    pub controller_calls: usize,
    /// Largest scaled algebraic residual after any accepted step.
    pub max_algebraic_residual: f64,
    /// Excluded from determinism comparisons.
    pub wall_seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Temperature,
    Soc,
}

/// Box constraint on one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateBound {
    pub name: String,
    pub state: usize,
    pub kind: ConstraintKind,
    pub min: f64,
    pub max: f64,
}

impl StateBound {
    /// Violation magnitude max(0, min − x, x − max).
    pub fn violation(&self, x: f64) -> f64 {
        (self.min - x).max(x - self.max).max(0.0)
    }
}

/// Closed-loop run sampled on the evaluation grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    /// Reference speed (m/s) at each sample.
    pub reference: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub flows: Vec<Vec<f64>>,
    /// Per-sample violation vectors, empty until [`record_violations`].
    #[serde(default)]
    pub violations: Vec<Vec<f64>>,
    pub state_ids: Vec<String>,
    pub input_ids: Vec<String>,
    pub edge_ids: Vec<String>,
    pub stats: SolverStats,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

/// Violation vectors s_j (one entry per state, zero where unconstrained).
pub fn record_violations(trace: &SimulationTrace, bounds: &[StateBound]) -> Vec<Vec<f64>> {
    trace
        .states
        .iter()
        .map(|x| {
            let mut s = vec![0.0_f64; x.len()];
            for b in bounds {
                s[b.state] = s[b.state].max(b.violation(x[b.state]));
            }
            s
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub samples: usize,
    pub t_final: f64,
    /// Largest violation per named bound.
    pub max_violation: BTreeMap<String, f64>,
    /// Range of every bounded state over the run.
    pub state_range: BTreeMap<String, (f64, f64)>,
    pub stats: SolverStats,
}

impl SimulationTrace {
    pub fn column(&self, state: usize) -> Vec<f64> {
        self.states.iter().map(|x| x[state]).collect()
    }

    pub fn flow_column(&self, edge: usize) -> Vec<f64> {
        self.flows.iter().map(|y| y[edge]).collect()
    }

    pub fn summary(&self, bounds: &[StateBound]) -> TraceSummary {
        let mut max_violation = BTreeMap::new();
        let mut state_range = BTreeMap::new();
        for b in bounds {
            let col = self.column(b.state);
            let v = col.iter().map(|&x| b.violation(x)).fold(0.0, f64::max);
            max_violation.insert(b.name.clone(), v);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            state_range.insert(b.name.clone(), (lo, hi));
        }
        TraceSummary {
            samples: self.times.len(),
            t_final: *self.times.last().unwrap_or(&0.0),
            max_violation,
            state_range,
            stats: self.stats.clone(),
        }
    }

    /// CSV with `t`, `v_ref`, then `x:<state>`, `u:<input>`, `y:<edge>`
    /// columns. Values use Rust's shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string(), "v_ref".to_string()];
        header.extend(self.state_ids.iter().map(|s| format!("x:{s}")));
        header.extend(self.input_ids.iter().map(|s| format!("u:{s}")));
        header.extend(self.edge_ids.iter().map(|s| format!("y:{s}")));
        wr.write_record(&header)?;
        for k in 0..self.times.len() {
            let mut row = vec![self.times[k].to_string(), self.reference[k].to_string()];
            row.extend(self.states[k].iter().map(|v| v.to_string()));
            row.extend(self.inputs[k].iter().map(|v| v.to_string()));
            row.extend(self.flows[k].iter().map(|v| v.to_string()));
            wr.write_record(&row)?;
        }
        wr.flush()
    }

    pub fn save_csv(&self, path: &Path) -> std::io::Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Samples the evaluation grid while the integrator runs.
pub(super) struct Recorder {
    dt: f64,
    n: usize,
    k: usize,
    alg: AlgebraicSolver,
    xs: Vec<f64>,
    trace: SimulationTrace,
}

impl Recorder {
    pub fn new(g: &Graph, sc: &Scenario) -> Self {
        let n = sc.n_samples();
        Recorder {
            dt: sc.dt_eval,
            n,
            k: 0,
            alg: AlgebraicSolver::new(g),
            xs: vec![0.0; g.n_externals()],
            trace: SimulationTrace {
                times: Vec::with_capacity(n),
                reference: Vec::with_capacity(n),
                states: Vec::with_capacity(n),
                inputs: Vec::with_capacity(n),
                flows: Vec::with_capacity(n),
                violations: vec![],
                state_ids: g.state_ids(),
                input_ids: g.inputs().to_vec(),
                edge_ids: g.edges().iter().map(|e| e.id.clone()).collect(),
                stats: SolverStats::default(),
                meta: BTreeMap::new(),
            },
        }
    }

    fn tk(&self) -> f64 {
        self.k as f64 * self.dt
    }

    fn tol(&self) -> f64 {
        1e-9 * self.tk().max(1.0)
    }

    fn push(&mut self, g: &Graph, sc: &Scenario, t: f64, x: Vec<f64>, u: &[f64]) {
        sc.externals_at(t, &mut self.xs);
        let tk = self.tk();
        self.trace.flows.push(g.flows(&x, u, &self.xs));
        self.trace.times.push(tk);
        self.trace.reference.push(sc.cycle.at(tk));
        self.trace.states.push(x);
        self.trace.inputs.push(u.to_vec());
        self.k += 1;
    }

    pub fn segment_start(&mut self, st: &super::stepper::Stepper, u: &[f64]) -> Result<()> {
        if self.k < self.n && (self.tk() - st.t()).abs() <= self.tol() {
            let (g, sc) = st.parts();
            self.push(g, sc, st.t(), st.x().to_vec(), u);
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        g: &Graph,
        sc: &Scenario,
        u: &[f64],
        t0: f64,
        x0: &[f64],
        f0: &[f64],
        t1: f64,
        x1: &[f64],
        f1: &[f64],
        seg_end: f64,
        last: bool,
    ) -> Result<()> {
        let h = t1 - t0;
        while self.k < self.n && self.tk() < t1 - self.tol() {
            let ts = self.tk();
            let th = (ts - t0) / h;
            // cubic Hermite, written around x0 so constants stay exact
            let (h10, h01, h11) = (
                th.powi(3) - 2.0 * th * th + th,
                -2.0 * th.powi(3) + 3.0 * th * th,
                th.powi(3) - th * th,
            );
            let mut x: Vec<f64> = (0..x0.len())
                .map(|i| {
                    if g.is_dynamic(i) {
                        x0[i] + h01 * (x1[i] - x0[i]) + h * (h10 * f0[i] + h11 * f1[i])
                    } else {
                        (1.0 - th) * x0[i] + th * x1[i]
                    }
                })
                .collect();
            sc.externals_at(ts, &mut self.xs);
            self.alg.solve(g, &mut x, u, &self.xs)?;
            self.push(g, sc, ts, x, u);
        }
        let at_end = (self.tk() - t1).abs() <= self.tol();
        if self.k < self.n && at_end && (t1 < seg_end - self.tol() || last) {
            self.push(g, sc, t1, x1.to_vec(), u);
        }
        Ok(())
    }

    pub fn finish(mut self, stats: SolverStats) -> SimulationTrace {
        debug_assert_eq!(self.k, self.n, "every grid point sampled");
        self.trace.stats = stats;
        self.trace
    }
}
