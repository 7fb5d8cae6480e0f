use serde::{Deserialize, Serialize};

use super::{Graph, GraphError, Result};

/// Scale factor as a function of one design variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "snake_case")]
pub enum Scale {
    /// θ_i
    Theta { index: usize },
    /// 1/θ_i
    InvTheta { index: usize },
    /// a + b·θ_i
    Affine { index: usize, a: f64, b: f64 },
}

impl Scale {
    pub fn eval(&self, theta: &[f64]) -> Result<f64> {
        let idx = match self {
            Scale::Theta { index } | Scale::InvTheta { index } | Scale::Affine { index, .. } => *index,
        };
        let t = *theta
            .get(idx)
            .ok_or_else(|| GraphError::DesignDomain(format!("design vector has no entry {idx}")))?;
        Ok(match self {
            Scale::Theta { .. } => t,
            Scale::InvTheta { .. } => 1.0 / t,
            Scale::Affine { a, b, .. } => a + b * t,
        })
    }
}

/// Diagonal design matrices as sparse id → scale lists. Several entries for
/// the same id multiply.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DesignMap {
    /// Ψ_c over θ.
    #[serde(default)]
    pub capacitance: Vec<(String, Scale)>,
    /// Ψ over θ.
    #[serde(default)]
    pub flow: Vec<(String, Scale)>,
    /// Φ_c over z.
    #[serde(default)]
    pub discrete_capacitance: Vec<(String, Scale)>,
    /// Φ over z.
    #[serde(default)]
    pub discrete_flow: Vec<(String, Scale)>,
}

impl DesignMap {
    pub fn is_empty(&self) -> bool {
        self.capacitance.is_empty()
            && self.flow.is_empty()
            && self.discrete_capacitance.is_empty()
            && self.discrete_flow.is_empty()
    }
}

fn factor(s: &Scale, v: &[f64], id: &str) -> Result<f64> {
    let f = s.eval(v)?;
    if f > 0.0 && f.is_finite() {
        Ok(f)
    } else {
        Err(GraphError::DesignDomain(format!("scale {f} on `{id}` is not positive")))
    }
}

/// Returns the graph with capacitances scaled by Ψ_c·Φ_c and edge multipliers
/// by Ψ·Φ. The input graph is not modified.
pub fn augment(g: &Graph, dm: &DesignMap, theta: &[f64], z: &[f64]) -> Result<Graph> {
    if dm.is_empty() {
        return Ok(g.clone());
    }
    let mut d = g.data().clone();
    let cap = dm.capacitance.iter().map(|e| (e, theta)).chain(dm.discrete_capacitance.iter().map(|e| (e, z)));
    for ((id, s), v) in cap {
        let k = d
            .vertices
            .iter()
            .position(|x| x.id == g.canonical_id(id))
            .ok_or_else(|| GraphError::Config(format!("design map names unknown vertex `{id}`")))?;
        d.vertices[k].capacitance *= factor(s, v, id)?;
    }
    let flow = dm.flow.iter().map(|e| (e, theta)).chain(dm.discrete_flow.iter().map(|e| (e, z)));
    for ((id, s), v) in flow {
        let k = g
            .edge_index(id)
            .ok_or_else(|| GraphError::Config(format!("design map names unknown edge `{id}`")))?;
        d.edges[k].alpha.gain *= factor(s, v, id)?;
    }
    Graph::from_data(d)
}
