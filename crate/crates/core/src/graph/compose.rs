use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};

use super::{Graph, GraphData, GraphError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// One row of a connection table: two edges that describe the same power
/// flow from two component graphs. Edge ids are the global hierarchical ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub row: usize,
    pub edge_a: String,
    pub edge_b: String,
    pub dominant: Side,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut i = i;
        while self.0[i] != r {
            let next = self.0[i];
            self.0[i] = r;
            i = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        // keep the smaller index as root so the earliest vertex names the class
        if ra < rb {
            self.0[rb] = ra;
        } else if rb < ra {
            self.0[ra] = rb;
        }
    }
}

/// Merges component graphs along connected edge pairs.
///
/// For each connection the tails of both edges are identified, and so are
/// the heads. The non-dominant edge is dropped. A merged vertex class may
/// hold at most one internal vertex; its id names the class, otherwise the
/// first external id does. Absorbed ids are kept as aliases.
pub fn compose(components: &[Graph], connections: &[Connection]) -> Result<Graph> {
    let mut d = GraphData::default();
    for g in components {
        let gd = g.data();
        d.vertices.extend(gd.vertices.iter().cloned());
        d.edges.extend(gd.edges.iter().cloned());
        for i in &gd.inputs {
            if !d.inputs.contains(i) {
                d.inputs.push(i.clone());
            }
        }
        d.aliases.extend(gd.aliases.iter().map(|(k, v)| (k.clone(), v.clone())));
        d.connections.extend(gd.connections.iter().cloned());
    }
    let vpos: HashMap<String, usize> = d.vertices.iter().enumerate().map(|(k, v)| (v.id.clone(), k)).collect();
    if vpos.len() != d.vertices.len() {
        let mut seen = HashSet::new();
        let dup = d.vertices.iter().find(|v| !seen.insert(&v.id)).unwrap();
        return Err(GraphError::DuplicateId(dup.id.clone()));
    }
    let epos: HashMap<String, usize> = d.edges.iter().enumerate().map(|(k, e)| (e.id.clone(), k)).collect();

    let mut uf = UnionFind((0..d.vertices.len()).collect());
    let mut used: HashSet<&str> = HashSet::new();
    let mut dropped = HashSet::new();
    let mut edge_alias = BTreeMap::new();
    for c in connections {
        for id in [&c.edge_a, &c.edge_b] {
            if !epos.contains_key(id.as_str()) {
                return Err(GraphError::Composition { row: c.row, msg: format!("unknown edge `{id}`") });
            }
            if !used.insert(id.as_str()) {
                return Err(GraphError::ConnectionConflict(id.clone()));
            }
        }
        let (ea, eb) = (&d.edges[epos[&c.edge_a]], &d.edges[epos[&c.edge_b]]);
        uf.union(vpos[&ea.tail], vpos[&eb.tail]);
        uf.union(vpos[&ea.head], vpos[&eb.head]);
        let (keep, drop) = match c.dominant {
            Side::A => (&c.edge_a, &c.edge_b),
            Side::B => (&c.edge_b, &c.edge_a),
        };
        dropped.insert(epos[drop]);
        edge_alias.insert(drop.clone(), keep.clone());
    }

    // pick a representative per class
    let n = d.vertices.len();
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for k in 0..n {
        classes.entry(uf.find(k)).or_default().push(k);
    }
    let mut rep = vec![0usize; n];
    for members in classes.values() {
        let internals: Vec<usize> = members.iter().copied().filter(|&k| !d.vertices[k].is_external).collect();
        if internals.len() > 1 {
            let ids: Vec<&str> = internals.iter().map(|&k| d.vertices[k].id.as_str()).collect();
            let row = connections
                .iter()
                .find(|c| {
                    let (ea, eb) = (&d.edges[epos[&c.edge_a]], &d.edges[epos[&c.edge_b]]);
                    [&ea.tail, &ea.head, &eb.tail, &eb.head].iter().any(|v| ids.contains(&v.as_str()))
                })
                .map_or(0, |c| c.row);
            return Err(GraphError::Composition {
                row,
                msg: format!("would merge internal vertices {}", ids.join(", ")),
            });
        }
        let r = internals.first().copied().unwrap_or(members[0]);
        for &k in members {
            rep[k] = r;
        }
    }
    let rep_id: HashMap<String, String> =
        (0..n).map(|k| (d.vertices[k].id.clone(), d.vertices[rep[k]].id.clone())).collect();
    let rn = |s: &str| rep_id.get(s).cloned().unwrap_or_else(|| s.to_string());

    let mut out = GraphData {
        inputs: Vec::new(),
        aliases: d.aliases.clone(),
        connections: d.connections.clone(),
        ..Default::default()
    };
    for k in 0..n {
        if rep[k] == k {
            out.vertices.push(d.vertices[k].clone());
        } else {
            out.aliases.insert(d.vertices[k].id.clone(), d.vertices[rep[k]].id.clone());
        }
    }
    out.aliases.extend(edge_alias);
    for (j, e) in d.edges.iter().enumerate() {
        if dropped.contains(&j) {
            continue;
        }
        let mut e = e.clone();
        e.tail = rn(&e.tail);
        e.head = rn(&e.head);
        e.alpha.map.map_states(rn);
        out.edges.push(e);
    }
    // inputs survive only if something still reads them
    let mut live = HashSet::new();
    for e in &out.edges {
        if let Some(i) = &e.input {
            live.insert(i.clone());
        }
        for i in e.alpha.map.input_refs() {
            live.insert(i.to_string());
        }
    }
    out.inputs = d.inputs.into_iter().filter(|i| live.contains(i)).collect();
    out.connections.extend(connections.iter().cloned());

    Graph::from_data(out).map_err(|e| match e {
        GraphError::SelfLoop(id) => {
            let row = connections.iter().find(|c| c.edge_a == id || c.edge_b == id).map_or(0, |c| c.row);
            GraphError::Composition { row, msg: format!("edge `{id}` collapses onto a single vertex") }
        }
        other => other,
    })
}
