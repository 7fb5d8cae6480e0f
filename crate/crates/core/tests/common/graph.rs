use std::collections::HashMap;

use ccd_core::graph::{evaluate_flow, EdgeSpec, EdgeType, Graph, StateKind, VertexSpec, VertexType};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Net inflow per internal vertex and Σ|y| over its edges, computed edge by
/// edge from the specs without touching the compiled graph.
pub fn oracle_balance(g: &Graph, x: &[f64], u: &[f64], xs: &[f64]) -> HashMap<String, (f64, f64)> {
    let mut val: HashMap<&str, f64> = HashMap::new();
    let (mut i, mut k) = (0, 0);
    for v in g.vertices() {
        if v.is_external {
            val.insert(&v.id, xs[k]);
            k += 1;
        } else {
            val.insert(&v.id, x[i]);
            i += 1;
        }
    }
    let mut out: HashMap<String, (f64, f64)> =
        g.vertices().iter().filter(|v| !v.is_external).map(|v| (v.id.clone(), (0.0, 0.0))).collect();
    for e in g.edges() {
        let ue = e.input.as_ref().map(|n| u[g.inputs().iter().position(|m| m == n).unwrap()]);
        let y = evaluate_flow(e, val[e.tail.as_str()], val[e.head.as_str()], ue).unwrap();
        if let Some(b) = out.get_mut(&e.tail) {
            b.0 -= y;
            b.1 += y.abs();
        }
        if let Some(b) = out.get_mut(&e.head) {
            b.0 += y;
            b.1 += y.abs();
        }
    }
    out
}

/// Closed network of Type1 vertices exchanging energy through T1, T4, T5
/// and T6 edges; Σ C_i x_i is invariant.
pub fn closed_network(r: &mut ChaCha8Rng) -> (Graph, Vec<f64>) {
    let n = r.random_range(2..7);
    let vs: Vec<VertexSpec> = (0..n)
        .map(|k| VertexSpec::new(format!("v{k}"), "T", VertexType::Type1, r.random_range(0.5..5.0), StateKind::Temperature))
        .collect();
    let mut es = Vec::new();
    for k in 1..n {
        let j = r.random_range(0..k);
        es.push(EdgeSpec::new(format!("c{k}"), format!("v{j}"), format!("v{k}"), EdgeType::T5, r.random_range(0.2..2.0)));
    }
    let laws = [EdgeType::T1, EdgeType::T4, EdgeType::T5, EdgeType::T6];
    for m in 0..r.random_range(0..n + 2) {
        let (a, b) = (r.random_range(0..n), r.random_range(0..n));
        if a != b {
            let ty = laws[r.random_range(0..laws.len())];
            es.push(EdgeSpec::new(format!("x{m}"), format!("v{a}"), format!("v{b}"), ty, r.random_range(0.05..0.5)));
        }
    }
    let x0 = (0..n).map(|_| r.random_range(0.2..2.0)).collect();
    (Graph::new(vs, es, vec![]).unwrap(), x0)
}
