//! Row-by-row conformance of the component builders against the bundled
//! machine-readable copy of the component tables.

// 3.14 is a table coefficient, not π
#![allow(clippy::approx_constant)]

use ccd_core::components::{build_component, ComponentKind};
use ccd_core::graph::{ParamMap, VertexType};

const TABLES: &str = include_str!("../data/component_tables.csv");

struct Row {
    component: String,
    item: String,
    index: usize,
    tail: String,
    head: String,
    ty: String,
    value: String,
}

fn rows() -> Vec<Row> {
    let mut rdr = csv::Reader::from_reader(TABLES.as_bytes());
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            Row {
                component: r[0].to_string(),
                item: r[1].to_string(),
                index: r[2].parse().unwrap(),
                tail: r[3].to_string(),
                head: r[4].to_string(),
                ty: r[5].to_string(),
                value: r[6].to_string(),
            }
        })
        .collect()
}

fn local(prefix: &str, r: &str) -> String {
    match r.strip_suffix('s') {
        Some(k) => format!("{prefix}/s/{k}"),
        None => format!("{prefix}/v/{r}"),
    }
}

/// (gain, expected map tag, needs input slot)
fn parse_value(v: &str) -> (f64, &'static str, bool) {
    let num = |s: &str| s.parse::<f64>().unwrap();
    match v {
        "tau_e" => (1.0, "engine", false),
        "f_w1" => (0.0105, "sigmoid", false),
        "f_w2" => (0.0178, "rolling", false),
        "f_w3" => (3.14, "grade", false),
        "f_w4*u" => (3840.0, "sigmoid", true),
        "f_w5" => (0.32, "linear", false),
        _ => {
            if let Some(g) = v.strip_suffix("*v_oc") {
                (num(g), "ocv", false)
            } else if let Some(g) = v.strip_suffix("*mdot") {
                (num(g), "input", false)
            } else if let Some(g) = v.strip_suffix("*u") {
                (num(g), "unit", true)
            } else {
                (num(v), "unit", false)
            }
        }
    }
}

fn tag(m: &ParamMap) -> &'static str {
    match m {
        ParamMap::Unit => "unit",
        ParamMap::Ocv { .. } => "ocv",
        ParamMap::EngineTorque { .. } => "engine",
        ParamMap::Sigmoid { .. } => "sigmoid",
        ParamMap::RollingResistance { .. } => "rolling",
        ParamMap::GradeLoad { .. } => "grade",
        ParamMap::Linear { .. } => "linear",
        ParamMap::Input { .. } => "input",
    }
}

#[test]
fn builders_match_the_tables() {
    let rows = rows();
    let mut checked = 0;
    for kind in ComponentKind::ALL {
        let name = kind.name();
        let g = build_component(kind);
        let mine: Vec<&Row> = rows.iter().filter(|r| r.component == name).collect();
        assert!(!mine.is_empty(), "no table rows for {name}");
        let n_v = mine.iter().filter(|r| r.item == "vertex").count();
        let n_s = mine.iter().filter(|r| r.item == "external").count();
        let n_e = mine.iter().filter(|r| r.item == "edge").count();
        assert_eq!((g.n_states(), g.n_externals(), g.n_edges()), (n_v, n_s, n_e), "{name}");
        for r in mine {
            match r.item.as_str() {
                "vertex" => {
                    let id = format!("{name}/v/{}", r.index);
                    let v = g.vertices().iter().find(|v| v.id == id).unwrap_or_else(|| panic!("{id}"));
                    let ty = match r.ty.as_str() {
                        "1" => VertexType::Type1,
                        "2" => VertexType::Type2,
                        _ => VertexType::Type3,
                    };
                    assert_eq!(v.vertex_type, ty, "{id}");
                    let (c, t, _) = parse_value(&r.value);
                    assert_eq!(v.capacitance, c, "{id}");
                    assert_eq!(v.capacitance_fn.as_ref().map_or("unit", tag), t, "{id}");
                    assert!(!v.is_external);
                }
                "external" => {
                    let id = format!("{name}/s/{}", r.index);
                    assert!(g.vertices().iter().any(|v| v.id == id && v.is_external), "{id}");
                }
                _ => {
                    let id = format!("{name}/e/{}", r.index);
                    let e = &g.edges()[g.edge_index(&id).unwrap_or_else(|| panic!("{id}"))];
                    assert_eq!(e.tail, local(name, &r.tail), "{id} tail");
                    assert_eq!(e.head, local(name, &r.head), "{id} head");
                    assert_eq!(e.edge_type.code().to_string(), r.ty, "{id} type");
                    let (gain, t, slot) = parse_value(&r.value);
                    assert_eq!(e.alpha.gain, gain, "{id} gain");
                    assert_eq!(tag(&e.alpha.map), t, "{id} map");
                    assert_eq!(e.input.is_some(), slot, "{id} input slot");
                }
            }
            checked += 1;
        }
    }
    assert_eq!(checked, rows.len(), "every table row belongs to a known component");
}
