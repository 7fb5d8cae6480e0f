use std::collections::{BTreeSet, HashMap};

use ccd_core::components::ComponentKind;
use ccd_core::graph::augment;
use ccd_core::hev::{assemble_hev, input_bounds, InputGroup, AMBIENT, INSTANCES};

const TABLES: &str = include_str!("../data/component_tables.csv");

/// Edge counts per component kind, read straight from the table mirror.
fn edge_counts() -> HashMap<String, usize> {
    let mut m = HashMap::new();
    let mut rdr = csv::Reader::from_reader(TABLES.as_bytes());
    for r in rdr.records() {
        let r = r.unwrap();
        if &r[1] == "edge" {
            *m.entry(r[0].to_string()).or_insert(0) += 1;
        }
    }
    m
}

#[test]
fn edge_count_is_audited_sum_minus_connections() {
    let counts = edge_counts();
    let total: usize = INSTANCES.iter().map(|(k, _)| counts[k.name()]).sum();
    let m = assemble_hev().unwrap();
    assert_eq!(m.graph.n_edges(), total - 60);
    assert_eq!(total, 271);
}

#[test]
fn connection_4_couples_motor_and_transmission() {
    let m = assemble_hev().unwrap();
    let g = &m.graph;
    let c = &g.data().connections[3];
    assert_eq!((c.row, c.edge_a.as_str(), c.edge_b.as_str()), (4, "4/e/5", "5/e/4"));
    // the transmission edge now lives under the motor edge's id
    assert_eq!(g.edge_index("5/e/4"), g.edge_index("4/e/5"));
    let e = &g.edges()[g.edge_index("4/e/5").unwrap()];
    assert_eq!(e.tail, "4/v/2");
    assert_eq!(e.head, "5/v/2");
}

#[test]
fn assembly_is_deterministic() {
    let a = assemble_hev().unwrap();
    let b = assemble_hev().unwrap();
    assert_eq!(a.graph, b.graph);
    assert_eq!(a.handles, b.handles);
    assert_eq!(serde_json::to_string(&a.graph).unwrap(), serde_json::to_string(&b.graph).unwrap());
}

#[test]
fn json_round_trip() {
    let m = assemble_hev().unwrap();
    let s = serde_json::to_string(&m.graph).unwrap();
    let g: ccd_core::graph::Graph = serde_json::from_str(&s).unwrap();
    assert_eq!(g, m.graph);
}

#[test]
fn minimum_design_keeps_battery_and_sets_chassis() {
    let m = assemble_hev().unwrap();
    let th = [0.1, 0.1, 0.1, 0.1, 0.1, 1.0];
    let g = m.apply_plant_design(&th).unwrap();
    for k in 1..=5 {
        let i = g.state_index(&format!("1/v/{k}")).unwrap();
        assert_eq!(g.state_spec(i).capacitance, m.graph.state_spec(i).capacitance);
    }
    let w = g.state_index("6/v/1").unwrap();
    assert!((g.state_spec(w).capacitance - 187.591).abs() < 1e-12);
    let e3 = g.edge_index("6/e/3").unwrap();
    assert!((g.edges()[e3].alpha.gain - 0.0178 * 1813.776).abs() < 1e-9);
}

#[test]
fn planetary_exchanger_conductance() {
    let m = assemble_hev().unwrap();
    let g = m.apply_plant_design(&[1.0, 1.0, 1.0, 1.0, 13.7, 1.0]).unwrap();
    let e = g.edge_index("32/e/4").unwrap();
    assert!((g.edges()[e].alpha.gain - 21920.0).abs() < 1e-9);
}

#[test]
fn battery_cooling_edge_carries_both_scalings() {
    // battery edge 9 merged into the battery-loop exchanger edge
    let m = assemble_hev().unwrap();
    let g = m.apply_plant_design(&[2.0, 1.0, 1.0, 1.0, 1.0, 3.0]).unwrap();
    let e = g.edge_index("1/e/9").unwrap();
    assert_eq!(Some(e), g.edge_index("23/e/5"));
    assert!((g.edges()[e].alpha.gain - 43.75 * 6.0).abs() < 1e-9);
}

#[test]
fn out_of_bounds_design_is_rejected() {
    let m = assemble_hev().unwrap();
    for th in [[0.05, 1.0, 1.0, 1.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0, 1.0, 11.0], [1.0, 1.0, 1.0, 1.0, f64::NAN, 1.0]] {
        assert!(m.apply_plant_design(&th).is_err());
    }
}

#[test]
fn neutral_design_matches_outside_the_chassis() {
    let m = assemble_hev().unwrap();
    let g = m.apply_plant_design(&[1.0; 6]).unwrap();
    let x = m.initial_state(AMBIENT);
    let u = m.initial_inputs(&x);
    let xs = m.external_values(AMBIENT);
    let (y0, y1) = (m.graph.flows(&x, &u, &xs), g.flows(&x, &u, &xs));
    let chassis = [g.edge_index("6/e/3").unwrap(), g.edge_index("6/e/4").unwrap()];
    for (j, (a, b)) in y0.iter().zip(&y1).enumerate() {
        if !chassis.contains(&j) {
            assert_eq!(a, b, "{}", g.edges()[j].id);
        }
    }
}

#[test]
fn scalings_compose_multiplicatively() {
    let m = assemble_hev().unwrap();
    let (a, b) = ([2.0, 3.0, 0.5, 4.0, 1.5, 1.0], [1.5, 0.5, 3.0, 2.0, 2.0, 1.0]);
    let ab: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p * q).collect();
    let twice = augment(&augment(&m.graph, &m.design_map, &a, &[]).unwrap(), &m.design_map, &b, &[]).unwrap();
    let once = augment(&m.graph, &m.design_map, &ab, &[]).unwrap();
    // the chassis mass law is affine in theta_6, so only the pure theta
    // scalings compose; theta_6 stays at 1 here
    for (p, q) in twice.edges().iter().zip(once.edges()).filter(|(p, _)| !p.id.starts_with("6/")) {
        assert!((p.alpha.gain - q.alpha.gain).abs() <= 4.0 * f64::EPSILON * q.alpha.gain.abs());
    }
    for (p, q) in twice.vertices().iter().zip(once.vertices()).filter(|(p, _)| !p.id.starts_with("6/")) {
        assert!((p.capacitance - q.capacitance).abs() <= 4.0 * f64::EPSILON * q.capacitance.abs());
    }
}

#[test]
fn handles_resolve_to_distinct_states() {
    let m = assemble_hev().unwrap();
    let h = &m.handles;
    let mut idx = vec![h.wheel_speed, h.soc, h.battery_surface_temp, h.motor_temp, h.generator_temp];
    idx.extend(h.pe_temps.values());
    let set: BTreeSet<usize> = idx.iter().copied().collect();
    assert_eq!(set.len(), idx.len());
    assert_eq!(h.pe_temps.len(), 9);
    assert_eq!(h.energy_edges.len(), 5);
    let e: BTreeSet<usize> = h.energy_edges.values().copied().collect();
    assert_eq!(e.len(), 5);
    assert_eq!(h.constraints.len(), 13);
}

#[test]
fn every_input_has_exactly_one_bound_row() {
    let m = assemble_hev().unwrap();
    assert_eq!(m.graph.n_inputs(), 16);
    let rows = input_bounds();
    for i in m.graph.inputs() {
        assert_eq!(rows.iter().filter(|r| &r.input == i).count(), 1, "{i}");
    }
    let find = |n: &str| rows.iter().find(|r| r.input == n).unwrap().clone();
    assert_eq!((find("throttle").min, find("throttle").max), (0.0, 1.0));
    assert_eq!((find("conv3_duty").min, find("conv3_duty").max), (0.04, 0.05));
    assert_eq!((find("conv6_duty").min, find("conv6_duty").max), (0.04, 0.05));
    assert_eq!((find("conv1_duty").min, find("conv1_duty").max), (0.19, 0.2));
    assert_eq!((find("conv4_duty").min, find("conv4_duty").max), (0.09, 0.1));
    assert_eq!(find("fan2_mdot").group, InputGroup::MassFlow);
    for (k, b) in m.input_bounds.iter().enumerate() {
        assert_eq!(&m.graph.inputs()[k], &b.input);
    }
}

#[test]
fn every_instance_contributes_a_vertex_or_alias() {
    let m = assemble_hev().unwrap();
    for (k, (kind, _)) in INSTANCES.iter().enumerate() {
        let n = k + 1;
        let id = format!("{n}/v/1");
        assert!(m.graph.state_index(&id).is_some(), "{kind:?} {id}");
    }
    assert!(INSTANCES.iter().filter(|(k, _)| *k == ComponentKind::VirtualInductor).count() == 6);
}

#[test]
fn initial_point_evaluates() {
    let m = assemble_hev().unwrap();
    let g = m.apply_plant_design(&[100.0, 100.0, 100.0, 100.0, 100.0, 3.0]).unwrap();
    let x = m.initial_state(AMBIENT);
    let u = m.initial_inputs(&x);
    let xs = m.external_values(AMBIENT);
    let f = g.rhs(&x, &u, &xs).unwrap();
    assert!(f.iter().all(|v| v.is_finite()));
}

#[test]
fn no_vehicle_state_divides_numerically() {
    // every Type2 balance in the vehicle has a closed-form effort law, so
    // resting speeds and currents are not singular
    let m = assemble_hev().unwrap();
    assert!(m.graph.numeric_division_states().is_empty());
    assert_eq!(m.graph.n_states(), 120);
}
