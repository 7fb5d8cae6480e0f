use serde::{Deserialize, Serialize};

use crate::maps::{self, Table1};

/// Edge multiplier α = gain · map(...).
///
/// The map is a closed set of named functions of other graph states and
/// inputs. They are referenced by id so a graph stays serializable and can be
/// re-indexed after composition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub gain: f64,
    #[serde(default, skip_serializing_if = "ParamMap::is_unit")]
    pub map: ParamMap,
}

impl Param {
    pub fn constant(gain: f64) -> Self {
        Param { gain, map: ParamMap::Unit }
    }

    pub fn with(gain: f64, map: ParamMap) -> Self {
        Param { gain, map }
    }

    pub fn is_constant(&self) -> bool {
        self.map.is_unit()
    }
}

impl From<f64> for Param {
    fn from(g: f64) -> Self {
        Param::constant(g)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "snake_case")]
pub enum ParamMap {
    #[default]
    Unit,
    /// Cell open-circuit voltage of the referenced SOC state.
    Ocv { soc: String },
    /// Engine torque map at (throttle input, crankshaft speed state).
    EngineTorque { throttle: String, speed: String },
    /// Offset sigmoid of a state.
    Sigmoid { state: String },
    /// cos(grade(distance)) · f_sig(speed).
    RollingResistance {
        speed: String,
        distance: String,
        #[serde(default, skip_serializing_if = "Table1::is_empty")]
        grade: Table1,
    },
    /// sin(grade(distance)).
    GradeLoad {
        distance: String,
        #[serde(default, skip_serializing_if = "Table1::is_empty")]
        grade: Table1,
    },
    /// The state value itself.
    Linear { state: String },
    /// An input value, e.g. a coolant mass flow.
    Input { input: String },
}

impl ParamMap {
    pub fn is_unit(&self) -> bool {
        matches!(self, ParamMap::Unit)
    }

    /// Vertex ids this map reads.
    pub fn state_refs(&self) -> Vec<&str> {
        use ParamMap::*;
        match self {
            Unit | Input { .. } => vec![],
            Ocv { soc } => vec![soc],
            EngineTorque { speed, .. } => vec![speed],
            Sigmoid { state } | Linear { state } => vec![state],
            RollingResistance { speed, distance, .. } => vec![speed, distance],
            GradeLoad { distance, .. } => vec![distance],
        }
    }

    pub fn input_refs(&self) -> Vec<&str> {
        match self {
            ParamMap::EngineTorque { throttle, .. } => vec![throttle],
            ParamMap::Input { input } => vec![input],
            _ => vec![],
        }
    }

    /// Rewrites vertex references through `f`.
    pub fn map_states(&mut self, f: impl Fn(&str) -> String) {
        use ParamMap::*;
        match self {
            Unit | Input { .. } => {}
            Ocv { soc } => *soc = f(soc),
            EngineTorque { speed, .. } => *speed = f(speed),
            Sigmoid { state } | Linear { state } => *state = f(state),
            RollingResistance { speed, distance, .. } => {
                *speed = f(speed);
                *distance = f(distance);
            }
            GradeLoad { distance, .. } => *distance = f(distance),
        }
    }

    pub fn map_inputs(&mut self, f: impl Fn(&str) -> String) {
        match self {
            ParamMap::EngineTorque { throttle, .. } => *throttle = f(throttle),
            ParamMap::Input { input } => *input = f(input),
            _ => {}
        }
    }
}

/// Resolved reference to a scalar the graph can read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    /// Internal state by index.
    X(usize),
    /// External state by index.
    S(usize),
    /// Input by index.
    U(usize),
}

/// Index-resolved form of a `ParamMap`.
#[derive(Clone, Debug)]
pub(crate) enum CMap {
    Unit,
    Ocv(Var),
    Engine(Var, Var),
    Sigmoid(Var),
    Rolling(Var, Var, Table1),
    Grade(Var, Table1),
    Linear(Var),
    Input(Var),
}

/// A map value with up to two partial derivatives.
#[derive(Clone, Copy, Debug)]
pub(crate) struct MapEval {
    pub v: f64,
    pub g: [(Var, f64); 2],
    pub n: usize,
}

impl MapEval {
    fn c(v: f64) -> Self {
        MapEval { v, g: [(Var::X(0), 0.0); 2], n: 0 }
    }
    fn one(v: f64, a: Var, da: f64) -> Self {
        MapEval { v, g: [(a, da), (Var::X(0), 0.0)], n: 1 }
    }
    fn two(v: f64, a: Var, da: f64, b: Var, db: f64) -> Self {
        MapEval { v, g: [(a, da), (b, db)], n: 2 }
    }
    pub fn grads(&self) -> &[(Var, f64)] {
        &self.g[..self.n]
    }
}

impl CMap {
    /// True when a table argument sits exactly on a knot.
    pub fn at_kink(&self, read: impl Fn(Var) -> f64) -> bool {
        match self {
            CMap::Ocv(s) => maps::v_oc_table().is_knot(read(*s)),
            CMap::Engine(th, w) => maps::engine_table().is_knot(read(*th), read(*w)),
            CMap::Rolling(_, d, grade) | CMap::Grade(d, grade) => grade.is_knot(read(*d)),
            _ => false,
        }
    }

    pub fn eval(&self, read: impl Fn(Var) -> f64) -> MapEval {
        match self {
            CMap::Unit => MapEval::c(1.0),
            CMap::Ocv(s) => {
                let q = read(*s);
                let sl = maps::v_oc_table().eval(q.clamp(0.0, 1.0));
                let d = if (0.0..=1.0).contains(&q) { sl.d } else { 0.0 };
                MapEval::one(sl.v, *s, d)
            }
            CMap::Engine(th, w) => {
                let e = maps::engine_table().eval(read(*th), read(*w));
                MapEval::two(e.v, *th, e.da, *w, e.db)
            }
            CMap::Sigmoid(s) => {
                let sl = maps::sigmoid_offset_slope(read(*s));
                MapEval::one(sl.v, *s, sl.d)
            }
            CMap::Rolling(w, d, grade) => {
                let sl = maps::sigmoid_offset_slope(read(*w));
                if grade.is_empty() {
                    return MapEval::one(sl.v, *w, sl.d);
                }
                let g = grade.eval(read(*d));
                let (c, s) = (g.v.cos(), g.v.sin());
                MapEval::two(c * sl.v, *w, c * sl.d, *d, -s * g.d * sl.v)
            }
            CMap::Grade(d, grade) => {
                if grade.is_empty() {
                    return MapEval::one(0.0, *d, 0.0);
                }
                let g = grade.eval(read(*d));
                MapEval::one(g.v.sin(), *d, g.v.cos() * g.d)
            }
            CMap::Linear(s) => MapEval::one(read(*s), *s, 1.0),
            CMap::Input(u) => MapEval::one(read(*u), *u, 1.0),
        }
    }
}
