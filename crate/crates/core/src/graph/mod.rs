//! Conservation-graph models.
//!
//! Vertices hold energy-storage states, edges carry power flows, and the
//! dynamics are `C ẋ = −M̄ y` where `M̄` has +1 at an edge's tail and −1 at
//! its head.
//!
//! State-proportional (Type2) vertices have `C = c·x`. Evaluating them as
//! `ẋ = −(M̄y)/(c·x)` breaks down whenever the state crosses zero, which
//! currents, torques and speeds do all the time. Every law incident to such a
//! vertex in practice has the vertex state as a factor, so the balance is
//! evaluated in its divided ("effort") form `c ẋ = −(M̄y)/x`, with the
//! division done symbolically per edge law. The same form is used for
//! Type2 vertices with `c = 0`, which gives the algebraic junction equations
//! (e.g. `V_in − V_out − R·I = 0`) instead of the trivially satisfied
//! `I·(...) = 0`.

mod compose;
mod design;
mod law;
mod param;

pub use compose::{compose, Connection, Side};
pub use design::{augment, DesignMap, Scale};
pub use law::{EdgeType, Local};
pub use param::{Param, ParamMap, Var};

use nalgebra::{DMatrix, DVector};
use param::{CMap, MapEval};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("`{owner}` references unknown {what} `{id}`")]
    UnknownRef { owner: String, what: &'static str, id: String },
    #[error("edge `{0}` has the same tail and head")]
    SelfLoop(String),
    #[error("input binding error on edge `{edge}`: {msg}")]
    InputBinding { edge: String, msg: String },
    #[error("singular capacitance at vertex `{0}`")]
    SingularCapacitance(String),
    #[error("edge `{0}` appears in more than one connection")]
    ConnectionConflict(String),
    #[error("composition error in connection {row}: {msg}")]
    Composition { row: usize, msg: String },
    #[error("design-domain error: {0}")]
    DesignDomain(String),
}

pub type Result<T> = std::result::Result<T, GraphError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VertexType {
    /// C = c
    Type1,
    /// C = c·x
    Type2,
    /// C = c·g(x)
    Type3,
}

/// Physical role of a state, used for units, ambient assignment and naming.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Temperature,
    Voltage,
    Current,
    Speed,
    Torque,
    Charge,
    Distance,
    #[default]
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexSpec {
    pub id: String,
    pub state_name: String,
    pub vertex_type: VertexType,
    /// Capacitance coefficient c.
    pub capacitance: f64,
    /// Shape g of a Type3 capacitance, C = c·g(x).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacitance_fn: Option<ParamMap>,
    #[serde(default)]
    pub is_external: bool,
    #[serde(default)]
    pub kind: StateKind,
}

impl VertexSpec {
    pub fn new(id: impl Into<String>, name: impl Into<String>, ty: VertexType, c: f64, kind: StateKind) -> Self {
        VertexSpec {
            id: id.into(),
            state_name: name.into(),
            vertex_type: ty,
            capacitance: c,
            capacitance_fn: None,
            is_external: false,
            kind,
        }
    }

    pub fn external(id: impl Into<String>, name: impl Into<String>, kind: StateKind) -> Self {
        VertexSpec {
            id: id.into(),
            state_name: name.into(),
            vertex_type: VertexType::Type1,
            capacitance: 0.0,
            capacitance_fn: None,
            is_external: true,
            kind,
        }
    }

    pub fn is_algebraic(&self) -> bool {
        !self.is_external && self.capacitance == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub id: String,
    pub tail: String,
    pub head: String,
    pub edge_type: EdgeType,
    pub alpha: Param,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
}

impl EdgeSpec {
    pub fn new(
        id: impl Into<String>,
        tail: impl Into<String>,
        head: impl Into<String>,
        ty: EdgeType,
        alpha: impl Into<Param>,
    ) -> Self {
        EdgeSpec {
            id: id.into(),
            tail: tail.into(),
            head: head.into(),
            edge_type: ty,
            alpha: alpha.into(),
            input: None,
        }
    }

    pub fn with_input(mut self, input: impl Into<String>) -> Self {
        self.input = Some(input.into());
        self
    }
}

/// C_i for a vertex at state x. A Type3 shape must be a function of the
/// vertex's own state only, so it is evaluated at `x`.
pub fn evaluate_capacitance(v: &VertexSpec, x: f64) -> Result<f64> {
    match v.vertex_type {
        VertexType::Type1 => Ok(v.capacitance),
        VertexType::Type2 => Ok(v.capacitance * x),
        VertexType::Type3 => {
            let f = v.capacitance_fn.as_ref().ok_or_else(|| {
                GraphError::Config(format!("Type3 vertex `{}` has no capacitance_fn", v.id))
            })?;
            let m = compile_map(f, &|_| Some(Var::X(0)), &|_| None)
                .ok_or_else(|| GraphError::Config(format!("capacitance_fn of `{}` reads an input", v.id)))?;
            Ok(v.capacitance * m.eval(|_| x).v)
        }
    }
}

/// Flow of a single edge with a constant multiplier.
pub fn evaluate_flow(e: &EdgeSpec, x_tail: f64, x_head: f64, u: Option<f64>) -> Result<f64> {
    if !e.alpha.is_constant() {
        return Err(GraphError::Config(format!(
            "edge `{}` has a state-dependent parameter; evaluate it through its graph",
            e.id
        )));
    }
    let u = match (e.edge_type.needs_input(), u) {
        (true, Some(u)) => u,
        (true, None) => {
            return Err(GraphError::InputBinding { edge: e.id.clone(), msg: "missing input".into() })
        }
        (false, _) => 0.0,
    };
    Ok(e.alpha.gain * e.edge_type.law(x_tail, x_head, u).v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct GraphData {
    pub vertices: Vec<VertexSpec>,
    pub edges: Vec<EdgeSpec>,
    /// Input registry; defines the ordering of u.
    pub inputs: Vec<String>,
    /// Ids removed by composition, mapped to the id that absorbed them.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aliases: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub connections: Vec<Connection>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Node {
    Int(usize),
    Ext(usize),
}

impl Node {
    fn var(self) -> Var {
        match self {
            Node::Int(i) => Var::X(i),
            Node::Ext(k) => Var::S(k),
        }
    }
}

/// How an edge's flow enters the balance of one of its endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Div {
    /// External endpoint, no balance.
    Skip,
    /// Undivided flow (Type1/Type3 vertex).
    Raw,
    /// Flow divided by the endpoint state in closed form.
    Closed,
    /// Flow divided numerically, singular at zero.
    Numeric,
}

#[derive(Clone, Debug)]
struct CEdge {
    law: EdgeType,
    tail: Node,
    head: Node,
    input: Option<usize>,
    gain: f64,
    map: CMap,
    tail_div: Div,
    head_div: Div,
}

#[derive(Clone, Debug)]
struct CMass {
    c: f64,
    shape: Option<CMap>,
}

#[derive(Clone, Debug)]
struct Compiled {
    internal: Vec<usize>,
    external: Vec<usize>,
    node: HashMap<String, Node>,
    edge_index: HashMap<String, usize>,
    input_index: HashMap<String, usize>,
    edges: Vec<CEdge>,
    mass: Vec<CMass>,
}

/// Immutable, validated graph with an index-resolved evaluation form.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GraphData", into = "GraphData")]
pub struct Graph {
    data: GraphData,
    c: Compiled,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

impl TryFrom<GraphData> for Graph {
    type Error = GraphError;
    fn try_from(d: GraphData) -> Result<Graph> {
        Graph::from_data(d)
    }
}

impl From<Graph> for GraphData {
    fn from(g: Graph) -> GraphData {
        g.data
    }
}

fn compile_map(
    m: &ParamMap,
    state: &dyn Fn(&str) -> Option<Var>,
    input: &dyn Fn(&str) -> Option<Var>,
) -> Option<CMap> {
    use ParamMap as P;
    Some(match m {
        P::Unit => CMap::Unit,
        P::Ocv { soc } => CMap::Ocv(state(soc)?),
        P::EngineTorque { throttle, speed } => CMap::Engine(input(throttle)?, state(speed)?),
        P::Sigmoid { state: s } => CMap::Sigmoid(state(s)?),
        P::RollingResistance { speed, distance, grade } => {
            CMap::Rolling(state(speed)?, state(distance)?, grade.clone())
        }
        P::GradeLoad { distance, grade } => CMap::Grade(state(distance)?, grade.clone()),
        P::Linear { state: s } => CMap::Linear(state(s)?),
        P::Input { input: u } => CMap::Input(input(u)?),
    })
}

/// Local flow law (raw or divided) with gradient, times the multiplier.
#[derive(Clone, Copy, Debug)]
struct Contribution {
    v: f64,
    g: [(Var, f64); 5],
    n: usize,
}

impl Contribution {
    fn grads(&self) -> &[(Var, f64)] {
        &self.g[..self.n]
    }
}

impl Graph {
    pub fn new(vertices: Vec<VertexSpec>, edges: Vec<EdgeSpec>, inputs: Vec<String>) -> Result<Graph> {
        Graph::from_data(GraphData { vertices, edges, inputs, ..Default::default() })
    }

    pub fn from_data(data: GraphData) -> Result<Graph> {
        let c = compile(&data)?;
        Ok(Graph { data, c })
    }

    pub fn data(&self) -> &GraphData {
        &self.data
    }

    pub fn into_data(self) -> GraphData {
        self.data
    }

    pub fn vertices(&self) -> &[VertexSpec] {
        &self.data.vertices
    }

    pub fn edges(&self) -> &[EdgeSpec] {
        &self.data.edges
    }

    pub fn inputs(&self) -> &[String] {
        &self.data.inputs
    }

    pub fn n_states(&self) -> usize {
        self.c.internal.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.data.inputs.len()
    }

    pub fn n_externals(&self) -> usize {
        self.c.external.len()
    }

    pub fn n_edges(&self) -> usize {
        self.data.edges.len()
    }

    /// Internal vertex specs in state order.
    pub fn states(&self) -> impl Iterator<Item = &VertexSpec> + '_ {
        self.c.internal.iter().map(move |&i| &self.data.vertices[i])
    }

    /// External vertex specs in x^s order.
    pub fn externals(&self) -> impl Iterator<Item = &VertexSpec> + '_ {
        self.c.external.iter().map(move |&i| &self.data.vertices[i])
    }

    pub fn state_spec(&self, i: usize) -> &VertexSpec {
        &self.data.vertices[self.c.internal[i]]
    }

    fn resolve<'a>(&'a self, id: &'a str) -> &'a str {
        let mut id = id;
        while let Some(next) = self.data.aliases.get(id) {
            id = next;
        }
        id
    }

    /// Position of a vertex id (after alias resolution).
    pub fn node(&self, id: &str) -> Option<Node> {
        self.c.node.get(self.resolve(id)).copied()
    }

    pub fn state_index(&self, id: &str) -> Option<usize> {
        match self.node(id)? {
            Node::Int(i) => Some(i),
            Node::Ext(_) => None,
        }
    }

    pub fn external_index(&self, id: &str) -> Option<usize> {
        match self.node(id)? {
            Node::Ext(k) => Some(k),
            Node::Int(_) => None,
        }
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.c.edge_index.get(self.resolve(id)).copied()
    }

    pub fn input_index(&self, id: &str) -> Option<usize> {
        self.c.input_index.get(id).copied()
    }

    /// Canonical id after following composition aliases.
    pub fn canonical_id(&self, id: &str) -> String {
        self.resolve(id).to_string()
    }

    pub fn is_dynamic(&self, i: usize) -> bool {
        self.c.mass[i].c > 0.0
    }

    pub fn dynamic_mask(&self) -> Vec<bool> {
        (0..self.n_states()).map(|i| self.is_dynamic(i)).collect()
    }

    /// Signed incidence over internal vertices (N_v × N_e).
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_states(), self.n_edges());
        for (j, e) in self.c.edges.iter().enumerate() {
            if let Node::Int(i) = e.tail {
                m[(i, j)] = 1.0;
            }
            if let Node::Int(i) = e.head {
                m[(i, j)] = -1.0;
            }
        }
        m
    }

    /// Signed incidence over external vertices (N_t × N_e).
    pub fn external_incidence(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_externals(), self.n_edges());
        for (j, e) in self.c.edges.iter().enumerate() {
            if let Node::Ext(k) = e.tail {
                m[(k, j)] = 1.0;
            }
            if let Node::Ext(k) = e.head {
                m[(k, j)] = -1.0;
            }
        }
        m
    }

    #[inline]
    fn read(x: &[f64], u: &[f64], xs: &[f64], v: Var) -> f64 {
        match v {
            Var::X(i) => x[i],
            Var::S(k) => xs[k],
            Var::U(j) => u[j],
        }
    }

    #[inline]
    fn node_val(x: &[f64], xs: &[f64], n: Node) -> f64 {
        match n {
            Node::Int(i) => x[i],
            Node::Ext(k) => xs[k],
        }
    }

    /// Edge flows y.
    pub fn flows(&self, x: &[f64], u: &[f64], xs: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_edges()];
        self.flows_into(x, u, xs, &mut y);
        y
    }

    pub fn flows_into(&self, x: &[f64], u: &[f64], xs: &[f64], y: &mut [f64]) {
        for (j, e) in self.c.edges.iter().enumerate() {
            let xt = Self::node_val(x, xs, e.tail);
            let xh = Self::node_val(x, xs, e.head);
            let uu = e.input.map_or(0.0, |k| u[k]);
            let a = e.gain * e.map.eval(|v| Self::read(x, u, xs, v)).v;
            y[j] = a * e.law.law(xt, xh, uu).v;
        }
    }

    /// Net power into each internal vertex, −(M̄y).
    pub fn balance(&self, x: &[f64], u: &[f64], xs: &[f64]) -> Vec<f64> {
        let y = self.flows(x, u, xs);
        let mut b = vec![0.0; self.n_states()];
        for (j, e) in self.c.edges.iter().enumerate() {
            if let Node::Int(i) = e.tail {
                b[i] -= y[j];
            }
            if let Node::Int(i) = e.head {
                b[i] += y[j];
            }
        }
        b
    }

    /// Diagonal of the effort-form mass matrix: c for Type1/Type2, c·g(x)
    /// for Type3, 0 for algebraic states.
    pub fn mass(&self, x: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.n_states()];
        self.mass_into(x, &mut m, None);
        m
    }

    /// Mass diagonal and, optionally, its derivative in the own state.
    pub fn mass_into(&self, x: &[f64], m: &mut [f64], mut dm: Option<&mut [f64]>) {
        for (i, cm) in self.c.mass.iter().enumerate() {
            match &cm.shape {
                None => {
                    m[i] = cm.c;
                    if let Some(d) = dm.as_deref_mut() {
                        d[i] = 0.0;
                    }
                }
                Some(s) => {
                    let e = s.eval(|_| x[i]);
                    m[i] = cm.c * e.v;
                    if let Some(d) = dm.as_deref_mut() {
                        d[i] = cm.c * e.grads().iter().map(|g| g.1).sum::<f64>();
                    }
                }
            }
        }
    }

    /// Physical capacitances C_i (Type2 multiplied back by x_i).
    pub fn capacitances(&self, x: &[f64]) -> Vec<f64> {
        let mut m = self.mass(x);
        for (i, v) in self.states().enumerate() {
            if v.vertex_type == VertexType::Type2 {
                m[i] *= x[i];
            }
        }
        m
    }

    fn contribution(
        &self,
        e: &CEdge,
        at_tail: bool,
        xt: f64,
        xh: f64,
        uu: f64,
        me: &MapEval,
        j: usize,
    ) -> Result<Option<Contribution>> {
        let div = if at_tail { e.tail_div } else { e.head_div };
        let q = match div {
            Div::Skip => return Ok(None),
            Div::Raw => e.law.law(xt, xh, uu),
            Div::Closed => {
                if at_tail {
                    e.law.law_over_tail(xt, xh, uu).expect("closed form checked at compile")
                } else {
                    e.law.law_over_head(xt, xh, uu).expect("closed form checked at compile")
                }
            }
            Div::Numeric => {
                let l = e.law.law(xt, xh, uu);
                let xi = if at_tail { xt } else { xh };
                if xi == 0.0 {
                    let node = if at_tail { e.tail } else { e.head };
                    let id = match node {
                        Node::Int(i) => self.state_spec(i).id.clone(),
                        Node::Ext(_) => self.data.edges[j].id.clone(),
                    };
                    return Err(GraphError::SingularCapacitance(id));
                }
                let inv = 1.0 / xi;
                if at_tail {
                    Local { v: l.v * inv, dt: (l.dt * xt - l.v) * inv * inv, dh: l.dh * inv, du: l.du * inv }
                } else {
                    Local { v: l.v * inv, dt: l.dt * inv, dh: (l.dh * xh - l.v) * inv * inv, du: l.du * inv }
                }
            }
        };
        let a = e.gain * me.v;
        let mut c = Contribution { v: a * q.v, g: [(Var::X(0), 0.0); 5], n: 0 };
        let mut push = |v: Var, d: f64| {
            c.g[c.n] = (v, d);
            c.n += 1;
        };
        push(e.tail.var(), a * q.dt);
        push(e.head.var(), a * q.dh);
        if let Some(k) = e.input {
            push(Var::U(k), a * q.du);
        }
        for &(v, d) in me.grads() {
            push(v, e.gain * d * q.v);
        }
        Ok(Some(c))
    }

    /// Effort-form right-hand side f with `mass(x) ⊙ ẋ = f` on dynamic rows
    /// and `0 = f` on algebraic rows.
    pub fn rhs(&self, x: &[f64], u: &[f64], xs: &[f64]) -> Result<Vec<f64>> {
        let mut f = vec![0.0; self.n_states()];
        self.rhs_into(x, u, xs, &mut f)?;
        Ok(f)
    }

    pub fn rhs_into(&self, x: &[f64], u: &[f64], xs: &[f64], f: &mut [f64]) -> Result<()> {
        f.iter_mut().for_each(|v| *v = 0.0);
        for (j, e) in self.c.edges.iter().enumerate() {
            let xt = Self::node_val(x, xs, e.tail);
            let xh = Self::node_val(x, xs, e.head);
            let uu = e.input.map_or(0.0, |k| u[k]);
            let me = e.map.eval(|v| Self::read(x, u, xs, v));
            if let (Some(c), Node::Int(i)) = (self.contribution(e, true, xt, xh, uu, &me, j)?, e.tail) {
                f[i] -= c.v;
            }
            if let (Some(c), Node::Int(i)) = (self.contribution(e, false, xt, xh, uu, &me, j)?, e.head) {
                f[i] += c.v;
            }
        }
        Ok(())
    }

    /// Σ|contribution| per vertex in the effort form; the natural scale for
    /// judging |f_i|.
    pub fn rhs_scale(&self, x: &[f64], u: &[f64], xs: &[f64]) -> Result<Vec<f64>> {
        let mut s = vec![0.0; self.n_states()];
        for (j, e) in self.c.edges.iter().enumerate() {
            let xt = Self::node_val(x, xs, e.tail);
            let xh = Self::node_val(x, xs, e.head);
            let uu = e.input.map_or(0.0, |k| u[k]);
            let me = e.map.eval(|v| Self::read(x, u, xs, v));
            for (at_tail, node) in [(true, e.tail), (false, e.head)] {
                if let (Some(c), Node::Int(i)) = (self.contribution(e, at_tail, xt, xh, uu, &me, j)?, node) {
                    s[i] += c.v.abs();
                }
            }
        }
        Ok(s)
    }

    /// Effort-form right-hand side together with its Jacobians in x, u and
    /// x^s, written into caller-owned buffers.
    pub fn jacobian_into(&self, x: &[f64], u: &[f64], xs: &[f64], jac: &mut Jacobian) -> Result<()> {
        jac.f.fill(0.0);
        jac.jx.fill(0.0);
        jac.ju.fill(0.0);
        jac.js.fill(0.0);
        for (j, e) in self.c.edges.iter().enumerate() {
            let xt = Self::node_val(x, xs, e.tail);
            let xh = Self::node_val(x, xs, e.head);
            let uu = e.input.map_or(0.0, |k| u[k]);
            let me = e.map.eval(|v| Self::read(x, u, xs, v));
            for (at_tail, node, sign) in [(true, e.tail, -1.0), (false, e.head, 1.0)] {
                let Node::Int(i) = node else { continue };
                let Some(c) = self.contribution(e, at_tail, xt, xh, uu, &me, j)? else { continue };
                jac.f[i] += sign * c.v;
                for &(v, d) in c.grads() {
                    match v {
                        Var::X(k) => jac.jx[(i, k)] += sign * d,
                        Var::U(k) => jac.ju[(i, k)] += sign * d,
                        Var::S(k) => jac.js[(i, k)] += sign * d,
                    }
                }
            }
        }
        Ok(())
    }

    /// Edges whose table map is evaluated exactly on a knot, where the
    /// Jacobian holds a one-sided slope.
    pub fn kinks(&self, x: &[f64], u: &[f64], xs: &[f64]) -> Vec<String> {
        self.c
            .edges
            .iter()
            .zip(&self.data.edges)
            .filter(|(e, _)| e.map.at_kink(|v| Self::read(x, u, xs, v)))
            .map(|(_, d)| d.id.clone())
            .collect()
    }

    pub fn jacobian(&self, x: &[f64], u: &[f64], xs: &[f64]) -> Result<Jacobian> {
        let mut jac = Jacobian::zeros(self.n_states(), self.n_inputs(), self.n_externals());
        self.jacobian_into(x, u, xs, &mut jac)?;
        Ok(jac)
    }

    /// ẋ on dynamic vertices and the raw residual −(M̄y)_i on algebraic ones.
    pub fn state_derivative(&self, x: &[f64], u: &[f64], xs: &[f64]) -> Result<Vec<f64>> {
        let f = self.rhs(x, u, xs)?;
        let m = self.mass(x);
        let raw = self.balance(x, u, xs);
        Ok((0..self.n_states())
            .map(|i| if m[i] > 0.0 { f[i] / m[i] } else { raw[i] })
            .collect())
    }

    /// States whose balance divides some flow numerically; these raise
    /// [`GraphError::SingularCapacitance`] at zero.
    pub fn numeric_division_states(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for e in &self.c.edges {
            for (n, d) in [(e.tail, e.tail_div), (e.head, e.head_div)] {
                if let (Node::Int(i), Div::Numeric) = (n, d) {
                    if !out.contains(&i) {
                        out.push(i);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Sum of |y_j| over the edges incident to each internal vertex.
    pub fn flow_scale(&self, x: &[f64], u: &[f64], xs: &[f64]) -> Vec<f64> {
        let y = self.flows(x, u, xs);
        let mut s = vec![0.0; self.n_states()];
        for (j, e) in self.c.edges.iter().enumerate() {
            for n in [e.tail, e.head] {
                if let Node::Int(i) = n {
                    s[i] += y[j].abs();
                }
            }
        }
        s
    }

    /// Ids of every internal state in order.
    pub fn state_ids(&self) -> Vec<String> {
        self.states().map(|v| v.id.clone()).collect()
    }

    pub fn external_ids(&self) -> Vec<String> {
        self.externals().map(|v| v.id.clone()).collect()
    }

    /// Graph with inputs renamed through `map`. Inputs that collapse onto
    /// the same name become one shared input.
    pub fn rename_inputs(&self, map: &HashMap<String, String>) -> Result<Graph> {
        let rn = |s: &str| map.get(s).cloned().unwrap_or_else(|| s.to_string());
        let mut d = self.data.clone();
        let mut inputs: Vec<String> = Vec::new();
        for i in &d.inputs {
            let n = rn(i);
            if !inputs.contains(&n) {
                inputs.push(n);
            }
        }
        d.inputs = inputs;
        for e in &mut d.edges {
            if let Some(i) = &e.input {
                e.input = Some(rn(i));
            }
            e.alpha.map.map_inputs(rn);
        }
        Graph::from_data(d)
    }
}

/// Effort-form right-hand side and its Jacobians.
#[derive(Clone, Debug)]
pub struct Jacobian {
    pub f: DVector<f64>,
    pub jx: DMatrix<f64>,
    pub ju: DMatrix<f64>,
    pub js: DMatrix<f64>,
}

impl Jacobian {
    pub fn zeros(n: usize, nu: usize, ns: usize) -> Self {
        Jacobian {
            f: DVector::zeros(n),
            jx: DMatrix::zeros(n, n),
            ju: DMatrix::zeros(n, nu),
            js: DMatrix::zeros(n, ns),
        }
    }
}

fn compile(d: &GraphData) -> Result<Compiled> {
    let mut node = HashMap::new();
    let mut internal = Vec::new();
    let mut external = Vec::new();
    for (k, v) in d.vertices.iter().enumerate() {
        let n = if v.is_external {
            external.push(k);
            Node::Ext(external.len() - 1)
        } else {
            internal.push(k);
            Node::Int(internal.len() - 1)
        };
        if node.insert(v.id.clone(), n).is_some() {
            return Err(GraphError::DuplicateId(v.id.clone()));
        }
        if !(v.capacitance >= 0.0 && v.capacitance.is_finite()) {
            return Err(GraphError::Config(format!("vertex `{}` has capacitance {}", v.id, v.capacitance)));
        }
    }
    let mut input_index = HashMap::new();
    for (k, u) in d.inputs.iter().enumerate() {
        if input_index.insert(u.clone(), k).is_some() {
            return Err(GraphError::DuplicateId(u.clone()));
        }
    }
    let state = |s: &str| node.get(s).map(|n: &Node| n.var());
    let input = |s: &str| input_index.get(s).map(|&k| Var::U(k));

    let mut mass = Vec::with_capacity(internal.len());
    for &k in &internal {
        let v = &d.vertices[k];
        let shape = match (v.vertex_type, &v.capacitance_fn) {
            (VertexType::Type3, None) => {
                return Err(GraphError::Config(format!("Type3 vertex `{}` has no capacitance_fn", v.id)))
            }
            (VertexType::Type3, Some(f)) => {
                if f.state_refs().iter().any(|r| *r != v.id) || !f.input_refs().is_empty() {
                    return Err(GraphError::Config(format!(
                        "capacitance_fn of `{}` must depend on its own state only",
                        v.id
                    )));
                }
                Some(compile_map(f, &state, &input).expect("refs checked"))
            }
            (_, Some(_)) => {
                return Err(GraphError::Config(format!("vertex `{}` is not Type3 but has a capacitance_fn", v.id)))
            }
            (_, None) => None,
        };
        mass.push(CMass { c: v.capacitance, shape });
    }

    let div_for = |n: Node, closed: bool| -> Div {
        match n {
            Node::Ext(_) => Div::Skip,
            Node::Int(i) => {
                if d.vertices[internal[i]].vertex_type == VertexType::Type2 {
                    if closed {
                        Div::Closed
                    } else {
                        Div::Numeric
                    }
                } else {
                    Div::Raw
                }
            }
        }
    };

    let mut edge_index = HashMap::new();
    let mut edges = Vec::with_capacity(d.edges.len());
    for (j, e) in d.edges.iter().enumerate() {
        if edge_index.insert(e.id.clone(), j).is_some() || node.contains_key(&e.id) {
            return Err(GraphError::DuplicateId(e.id.clone()));
        }
        let look = |id: &str| {
            node.get(id).copied().ok_or_else(|| GraphError::UnknownRef {
                owner: e.id.clone(),
                what: "vertex",
                id: id.to_string(),
            })
        };
        let tail = look(&e.tail)?;
        let head = look(&e.head)?;
        if tail == head {
            return Err(GraphError::SelfLoop(e.id.clone()));
        }
        let inp = match (&e.input, e.edge_type.needs_input()) {
            (Some(i), true) => Some(*input_index.get(i).ok_or_else(|| GraphError::InputBinding {
                edge: e.id.clone(),
                msg: format!("input `{i}` is not registered"),
            })?),
            (None, true) => {
                return Err(GraphError::InputBinding { edge: e.id.clone(), msg: "law needs an input".into() })
            }
            (Some(_), false) => {
                return Err(GraphError::InputBinding {
                    edge: e.id.clone(),
                    msg: "only T7/T8 laws take an input".into(),
                })
            }
            (None, false) => None,
        };
        for r in e.alpha.map.state_refs() {
            look(r)?;
        }
        for r in e.alpha.map.input_refs() {
            if !input_index.contains_key(r) {
                return Err(GraphError::UnknownRef { owner: e.id.clone(), what: "input", id: r.to_string() });
            }
        }
        if !e.alpha.gain.is_finite() {
            return Err(GraphError::Config(format!("edge `{}` has a non-finite parameter", e.id)));
        }
        let map = compile_map(&e.alpha.map, &state, &input).expect("refs checked");
        edges.push(CEdge {
            law: e.edge_type,
            tail,
            head,
            input: inp,
            gain: e.alpha.gain,
            map,
            tail_div: div_for(tail, e.edge_type.law_over_tail(1.0, 1.0, 1.0).is_some()),
            head_div: div_for(head, e.edge_type.law_over_head(1.0, 1.0, 1.0).is_some()),
        });
    }
    Ok(Compiled { internal, external, node, edge_index, input_index, edges, mass })
}
