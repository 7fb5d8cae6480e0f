#![allow(dead_code)]

use ccd_core::graph::{EdgeSpec, EdgeType, Graph, ParamMap, StateKind, VertexSpec, VertexType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod graph;
pub mod mpc;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random graph over Type1/Type2/Type3 vertices, a few algebraic ones and
/// two externals, with every edge law and some inputs. Type2 vertices only
/// touch edges that divide by them in closed form; algebraic vertices get
/// a T5 edge to an external so their balance is solvable.
pub fn random_graph(r: &mut ChaCha8Rng) -> Graph {
    loop {
        if let Some(g) = try_random_graph(r) {
            return g;
        }
    }
}

fn try_random_graph(r: &mut ChaCha8Rng) -> Option<Graph> {
    let n1 = r.random_range(1..5);
    let n2 = r.random_range(0..3);
    let n3 = r.random_range(0..2);
    let na = r.random_range(0..3);
    let mut vs = Vec::new();
    let mut plain = Vec::new();
    for k in 0..n1 {
        let id = format!("a{k}");
        vs.push(VertexSpec::new(&id, "T", VertexType::Type1, r.random_range(0.5..5.0), StateKind::Temperature));
        plain.push(id);
    }
    let mut t2 = Vec::new();
    for k in 0..n2 {
        let id = format!("b{k}");
        vs.push(VertexSpec::new(&id, "w", VertexType::Type2, r.random_range(0.5..3.0), StateKind::Speed));
        t2.push(id);
    }
    for k in 0..n3 {
        let id = format!("q{k}");
        vs.push(VertexSpec {
            capacitance_fn: Some(ParamMap::Ocv { soc: id.clone() }),
            ..VertexSpec::new(&id, "soc", VertexType::Type3, r.random_range(1.0..10.0), StateKind::Charge)
        });
        plain.push(id);
    }
    let mut alg = Vec::new();
    for k in 0..na {
        let id = format!("z{k}");
        vs.push(VertexSpec::new(&id, "i", VertexType::Type1, 0.0, StateKind::Current));
        alg.push(id);
    }
    vs.push(VertexSpec::external("s0", "ambient", StateKind::Temperature));
    vs.push(VertexSpec::external("s1", "source", StateKind::Voltage));
    let sinks = ["s0", "s1"];

    let mut es = Vec::new();
    let mut inputs: Vec<String> = Vec::new();
    let mut eid = 0;
    let push = |e: EdgeSpec, es: &mut Vec<EdgeSpec>| es.push(e);
    let mut next = || {
        eid += 1;
        format!("e{eid}")
    };
    // every plain vertex leaks to an external so the graph is not closed
    for id in plain.iter().chain(&alg) {
        let s = sinks[r.random_range(0..2)];
        push(EdgeSpec::new(next(), id, s, EdgeType::T5, r.random_range(0.2..2.0)), &mut es);
    }
    let laws = [EdgeType::T1, EdgeType::T2, EdgeType::T3, EdgeType::T4, EdgeType::T5, EdgeType::T6, EdgeType::T7, EdgeType::T8];
    let m = r.random_range(1..7);
    for _ in 0..m {
        let pool: Vec<&String> = plain.iter().chain(&alg).collect();
        let t = pool[r.random_range(0..pool.len())].clone();
        let h = if r.random_bool(0.3) { sinks[r.random_range(0..2)].to_string() } else { pool[r.random_range(0..pool.len())].clone() };
        if t == h {
            continue;
        }
        let ty = laws[r.random_range(0..laws.len())];
        let mut e = EdgeSpec::new(next(), &t, &h, ty, r.random_range(0.05..0.5));
        if ty.needs_input() {
            let name = format!("u{}", r.random_range(0..3));
            if !inputs.contains(&name) {
                inputs.push(name.clone());
            }
            e = e.with_input(name);
        }
        push(e, &mut es);
    }
    // Type2 vertices: T3 products with a plain vertex divide cleanly
    for id in &t2 {
        let other = plain[r.random_range(0..plain.len())].clone();
        let (t, h) = if r.random_bool(0.5) { (id.clone(), other) } else { (other, id.clone()) };
        push(EdgeSpec::new(next(), &t, &h, EdgeType::T3, r.random_range(0.05..0.5)), &mut es);
        push(EdgeSpec::new(next(), id, "s0", EdgeType::T3, r.random_range(0.001..0.01)), &mut es);
    }
    Graph::new(vs, es, inputs).ok()
}

/// Random point with positive states (Type2 vertices must be nonzero).
pub fn random_point(g: &Graph, r: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let x = (0..g.n_states())
        .map(|i| {
            let v = g.state_spec(i);
            match v.kind {
                StateKind::Charge => r.random_range(0.05..0.95),
                _ => r.random_range(0.2..3.0),
            }
        })
        .collect();
    let u = (0..g.n_inputs()).map(|_| r.random_range(0.0..1.0)).collect();
    let xs = (0..g.n_externals()).map(|_| r.random_range(0.5..2.0)).collect();
    (x, u, xs)
}
