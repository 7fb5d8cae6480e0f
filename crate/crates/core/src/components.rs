//! Factories for the HEV component graphs.
//!
//! Ids follow `prefix/kind/index`: `v` for internal vertices, `s` for
//! external (sink/source) vertices, `e` for edges and `u` for inputs. Indices
//! are the 1-based numbers of the component tables.

use serde::{Deserialize, Serialize};

use crate::graph::{EdgeSpec, EdgeType, Graph, Param, ParamMap, StateKind, VertexSpec, VertexType};
use crate::maps::Table1;

pub use crate::maps::{
    battery_ocv, chassis_params, engine_torque, mass_flow, mass_scaling, sigmoid_offset, ChassisParams, Coolant,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComponentKind {
    Battery,
    HighVoltageBus,
    LowVoltageBus,
    Inverter,
    Rectifier,
    Converter,
    Motor,
    Generator,
    Pump,
    Fan,
    Engine,
    PlanetaryGear,
    Transmission,
    WheelsChassis,
    AirCoolingPath,
    PELiquidLoop,
    BatteryLiquidLoop,
    VCSLiquidLoop,
    TransaxleLiquidLoop,
    Cabin,
    CabinAirPath,
    VCS,
    VirtualInductor,
    Gearbox,
    Radiator,
    ThermalCombiner,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 26] = [
        ComponentKind::Battery,
        ComponentKind::HighVoltageBus,
        ComponentKind::LowVoltageBus,
        ComponentKind::Inverter,
        ComponentKind::Rectifier,
        ComponentKind::Converter,
        ComponentKind::Motor,
        ComponentKind::Generator,
        ComponentKind::Pump,
        ComponentKind::Fan,
        ComponentKind::Engine,
        ComponentKind::PlanetaryGear,
        ComponentKind::Transmission,
        ComponentKind::WheelsChassis,
        ComponentKind::AirCoolingPath,
        ComponentKind::PELiquidLoop,
        ComponentKind::BatteryLiquidLoop,
        ComponentKind::VCSLiquidLoop,
        ComponentKind::TransaxleLiquidLoop,
        ComponentKind::Cabin,
        ComponentKind::CabinAirPath,
        ComponentKind::VCS,
        ComponentKind::VirtualInductor,
        ComponentKind::Gearbox,
        ComponentKind::Radiator,
        ComponentKind::ThermalCombiner,
    ];

    pub fn name(self) -> &'static str {
        use ComponentKind::*;
        match self {
            Battery => "battery",
            HighVoltageBus => "hv_bus",
            LowVoltageBus => "lv_bus",
            Inverter => "inverter",
            Rectifier => "rectifier",
            Converter => "converter",
            Motor => "motor",
            Generator => "generator",
            Pump => "pump",
            Fan => "fan",
            Engine => "engine",
            PlanetaryGear => "planetary",
            Transmission => "transmission",
            WheelsChassis => "wheels",
            AirCoolingPath => "air_path",
            PELiquidLoop => "pe_loop",
            BatteryLiquidLoop => "battery_loop",
            VCSLiquidLoop => "vcs_loop",
            TransaxleLiquidLoop => "transaxle_loop",
            Cabin => "cabin",
            CabinAirPath => "cabin_air",
            VCS => "vcs",
            VirtualInductor => "virtual_inductor",
            Gearbox => "gearbox",
            Radiator => "radiator",
            ThermalCombiner => "combiner",
        }
    }
}

/// Options that are not part of the component tables.
#[derive(Clone, Debug, Default)]
pub struct BuildOptions {
    /// Road grade (radians) as a function of distance; empty means flat.
    pub grade: Table1,
}

struct B {
    p: String,
    vs: Vec<VertexSpec>,
    es: Vec<EdgeSpec>,
    inputs: Vec<String>,
}

impl B {
    fn new(p: &str) -> Self {
        B { p: p.to_string(), vs: vec![], es: vec![], inputs: vec![] }
    }

    /// "3" is internal vertex 3, "3s" external vertex 3.
    fn id(&self, r: &str) -> String {
        match r.strip_suffix('s') {
            Some(k) => format!("{}/s/{}", self.p, k),
            None => format!("{}/v/{}", self.p, r),
        }
    }

    fn input(&mut self, name: &str) -> String {
        let id = format!("{}/u/{}", self.p, name);
        if !self.inputs.contains(&id) {
            self.inputs.push(id.clone());
        }
        id
    }

    fn v(&mut self, k: usize, name: &str, ty: VertexType, c: f64, kind: StateKind) {
        let id = format!("{}/v/{}", self.p, k);
        self.vs.push(VertexSpec::new(id, name, ty, c, kind));
    }

    fn t1(&mut self, k: usize, name: &str, c: f64) {
        self.v(k, name, VertexType::Type1, c, StateKind::Temperature);
    }

    fn s(&mut self, k: usize, name: &str, kind: StateKind) {
        let id = format!("{}/s/{}", self.p, k);
        self.vs.push(VertexSpec::external(id, name, kind));
    }

    fn e(&mut self, k: usize, tail: &str, head: &str, code: u8, alpha: impl Into<Param>) {
        let ty = EdgeType::from_code(code).expect("edge type code");
        let (t, h) = (self.id(tail), self.id(head));
        self.es.push(EdgeSpec::new(format!("{}/e/{}", self.p, k), t, h, ty, alpha));
    }

    fn eu(&mut self, k: usize, tail: &str, head: &str, code: u8, alpha: impl Into<Param>, input: &str) {
        let u = self.input(input);
        self.e(k, tail, head, code, alpha);
        self.es.last_mut().unwrap().input = Some(u);
    }

    /// Edge multiplier proportional to a coolant mass-flow input.
    fn flow(&mut self, cp: f64) -> Param {
        let u = self.input("mdot");
        Param::with(cp, ParamMap::Input { input: u })
    }

    fn reverse(&mut self, edges: &[usize]) {
        for &k in edges {
            let e = &mut self.es[k - 1];
            std::mem::swap(&mut e.tail, &mut e.head);
        }
    }

    fn build(self) -> Graph {
        Graph::new(self.vs, self.es, self.inputs).expect("component tables are self-consistent")
    }
}

/// Component graph with ids prefixed by the kind name.
pub fn build_component(kind: ComponentKind) -> Graph {
    build_instance(kind, kind.name(), &BuildOptions::default())
}

/// Component graph with ids prefixed by `prefix` (the instance number in
/// the assembled vehicle).
pub fn build_instance(kind: ComponentKind, prefix: &str, opts: &BuildOptions) -> Graph {
    use ComponentKind::*;
    use StateKind::*;
    use VertexType::*;
    let mut b = B::new(prefix);
    match kind {
        Battery => {
            let soc = b.id("1");
            b.vs.push(VertexSpec {
                capacitance_fn: Some(ParamMap::Ocv { soc: soc.clone() }),
                ..VertexSpec::new(soc.clone(), "State of Charge", Type3, 1.368e6, Charge)
            });
            b.v(2, "Voltage 1", Type2, 3.35e5, Voltage);
            b.v(3, "Voltage 2", Type2, 9.21e6, Voltage);
            b.t1(4, "Core Temperature", 4765.2);
            b.t1(5, "Surface Temperature", 342.0);
            b.v(6, "Current", Type2, 0.0, Current);
            b.s(1, "Voltage", Voltage);
            b.s(2, "Temperature", Temperature);
            b.e(1, "1", "6", 2, Param::with(76.0, ParamMap::Ocv { soc }));
            b.e(2, "6", "2", 3, 76.0);
            b.e(3, "6", "3", 3, 76.0);
            b.e(4, "6", "4", 4, 0.754);
            b.e(5, "2", "4", 4, 2.02e4);
            b.e(6, "3", "4", 4, 1.10e4);
            b.e(7, "4", "5", 5, 39.2);
            b.e(8, "6", "1s", 3, 1.0);
            b.e(9, "5", "2s", 5, 1.0);
        }
        HighVoltageBus => {
            b.v(1, "Bus Voltage", Type2, 1.0, Voltage);
            for k in 2..=4 {
                b.v(k, "Current", Type2, 0.0, Current);
            }
            b.s(1, "Current", Current);
            for k in 2..=4 {
                b.s(k, "Voltage", Voltage);
            }
            b.s(5, "Temperature", Temperature);
            b.e(1, "1s", "1", 3, 1.0);
            b.e(2, "2", "1", 3, 1.0);
            b.e(3, "1", "3", 3, 1.0);
            b.e(4, "1", "4", 3, 1.0);
            b.e(5, "2s", "2", 3, 1.0);
            b.e(6, "3", "3s", 3, 1.0);
            b.e(7, "4", "4s", 3, 1.0);
            for k in 1..=4 {
                b.e(7 + k, &k.to_string(), "5s", 4, 1.0e-4);
            }
        }
        LowVoltageBus => {
            b.v(1, "Bus Voltage", Type2, 1.0, Voltage);
            b.v(2, "Current", Type2, 0.0, Current);
            b.s(1, "Voltage", Voltage);
            for k in 2..=6 {
                b.s(k, "Current", Current);
            }
            b.s(7, "Temperature", Temperature);
            b.s(8, "Current", Current);
            b.e(1, "1s", "2", 3, 1.0);
            b.e(2, "2", "1", 3, 1.0);
            for k in 3..=7 {
                b.e(k, "1", &format!("{}s", k - 1), 3, 1.0);
            }
            b.e(8, "1", "7s", 4, 1.0e-4);
            b.e(9, "2", "7s", 4, 1.0e-4);
            b.e(10, "1", "8s", 3, 1.0);
        }
        Inverter | Rectifier | Converter => {
            let c4 = match kind {
                Inverter => 8849.0,
                Rectifier => 6055.0,
                _ => 2950.0,
            };
            b.v(1, "Voltage", Type2, 0.05, Voltage);
            b.v(2, "Current", Type2, 0.0, Current);
            b.v(3, "Voltage", Type2, 0.05, Voltage);
            b.t1(4, "Temperature", c4);
            b.s(1, "Current", Current);
            b.s(2, "Current", Current);
            b.s(3, "Temperature", Temperature);
            b.e(1, "1s", "1", 3, 1.0);
            b.eu(2, "1", "2", 8, 1.0, "duty");
            b.e(3, "1", "4", 4, 1.0e-4);
            b.e(4, "2", "3", 3, 1.0);
            b.e(5, "2", "4", 4, 0.005);
            b.e(6, "3", "2s", 3, 1.0);
            b.e(7, "3", "4", 4, 1.0e-4);
            b.e(8, "4", "3s", 5, 100.0);
            if kind == Rectifier {
                b.reverse(&[1, 2, 4, 6]);
            }
        }
        Motor | Generator | Pump | Fan => {
            let (c3, k, r, visc, h) = match kind {
                Motor => (3.0e4, 0.15, 0.01, 0.0, 100.0),
                Generator => (1.33e4, 0.15, 0.01, 0.0, 100.0),
                _ => (10.0, 0.25, 0.05, 0.05, 1000.0),
            };
            b.v(1, "Current", Type2, 0.05, Current);
            b.v(2, "Angular Velocity", Type2, 0.05, Speed);
            b.t1(3, "Temperature", c3);
            b.s(1, "Voltage", Voltage);
            b.s(2, "Torque", Torque);
            b.s(3, "Temperature", Temperature);
            b.e(1, "1s", "1", 3, 1.0);
            b.e(2, "1", "2", 3, k);
            b.e(3, "1", "3", 4, r);
            b.e(4, "2", "3", 4, visc);
            b.e(5, "2", "2s", 3, 1.0);
            b.e(6, "3", "3s", 5, h);
            if kind == Generator {
                b.reverse(&[1, 2, 5]);
            }
        }
        Engine => {
            b.v(1, "Angular Velocity", Type2, 0.18, Speed);
            b.s(1, "Torque", Torque);
            b.s(2, "Torque", Torque);
            let th = b.input("throttle");
            let w = b.id("1");
            b.e(1, "1s", "1", 2, Param::with(1.0, ParamMap::EngineTorque { throttle: th, speed: w }));
            b.e(2, "1", "2s", 3, 1.0);
        }
        PlanetaryGear => {
            b.v(1, "Sun Angular Velocity", Type2, 0.0, Speed);
            b.v(2, "Torque", Type2, 0.0, Torque);
            b.v(3, "Carrier Angular Velocity", Type2, 0.0, Speed);
            b.v(4, "Ring Angular Velocity", Type2, 0.0, Speed);
            b.t1(5, "Temperature", 1.33e3);
            for k in 1..=3 {
                b.s(k, "Torque", Torque);
            }
            b.s(4, "Temperature", Temperature);
            b.e(1, "1", "1s", 3, 1.0);
            b.e(2, "2", "1", 3, 1.0);
            b.e(3, "1", "5", 4, 0.01);
            b.e(4, "2", "3", 3, 2.53);
            b.e(5, "4", "2", 3, 3.53);
            b.e(6, "3s", "4", 3, 1.0);
            b.e(7, "4", "5", 4, 0.01);
            b.e(8, "2s", "3", 3, 1.0);
            b.e(9, "3", "5", 4, 0.01);
            b.e(10, "5", "4s", 5, 100.0);
            b.e(11, "2", "5", 4, 0.0);
        }
        Transmission => {
            b.v(1, "Angular Velocity", Type2, 0.0, Speed);
            for k in 2..=4 {
                b.v(k, "Torque", Type2, 0.0, Torque);
            }
            for k in 1..=3 {
                b.s(k, "Angular Velocity", Speed);
            }
            b.s(4, "Temperature", Temperature);
            b.e(1, "2", "1", 3, 3.58);
            b.e(2, "1", "3", 3, 1.0);
            b.e(3, "1", "4", 3, 1.0);
            b.e(4, "1s", "2", 3, 1.0);
            b.e(5, "3", "2s", 3, 0.714);
            b.e(6, "4", "3s", 3, 2.57);
            for k in 2..=4 {
                b.e(5 + k, &k.to_string(), "4s", 4, 1.0e-4);
            }
        }
        WheelsChassis => {
            b.v(1, "Wheel Angular Velocity", Type2, 1.0, Speed);
            b.v(2, "Distance Traveled", Type2, 1.0, Distance);
            b.s(1, "Torque", Torque);
            b.s(2, "Temperature", Temperature);
            b.s(3, "Temperature", Temperature);
            b.s(4, "Ground", Other);
            b.s(5, "Temperature", Temperature);
            b.s(6, "Ground", Other);
            b.s(7, "Ground", Other);
            let (w, d) = (b.id("1"), b.id("2"));
            let grade = opts.grade.clone();
            b.e(1, "1s", "1", 3, 1.0);
            b.e(2, "1", "2s", 6, Param::with(0.0105, ParamMap::Sigmoid { state: w.clone() }));
            b.e(
                3,
                "1",
                "3s",
                1,
                Param::with(
                    0.0178,
                    ParamMap::RollingResistance { speed: w.clone(), distance: d.clone(), grade: grade.clone() },
                ),
            );
            b.e(4, "1", "4s", 1, Param::with(crate::maps::GRADE_COEFF, ParamMap::GradeLoad { distance: d, grade }));
            b.eu(5, "1", "5s", 7, Param::with(3840.0, ParamMap::Sigmoid { state: w.clone() }), "brake");
            // the table lists head 3 for edge 6; the chassis has no vertex 3,
            // distance (vertex 2) is the only state f_w5 can drive
            b.e(6, "6s", "2", 2, Param::with(crate::maps::WHEEL_RADIUS, ParamMap::Linear { state: w }));
            b.e(7, "1", "7s", 4, 0.3468);
        }
        AirCoolingPath => {
            for k in 1..=5 {
                b.t1(k, "Temperature", 77.8);
            }
            for k in 1..=7 {
                b.s(k, "Temperature", Temperature);
            }
            let chain = ["1s", "1", "2", "3", "4", "5", "2s"];
            for k in 1..=6 {
                let f = b.flow(1008.0);
                b.e(k, chain[k - 1], chain[k], 1, f);
            }
            for k in 7..=11 {
                b.e(k, &format!("{}s", k - 4), &(k - 6).to_string(), 5, 0.0);
            }
        }
        PELiquidLoop => {
            // vertex 1 has no listed value; it mirrors vertex 3
            for (k, c) in [(1, 671.0), (2, 336.0), (3, 671.0), (4, 336.0)] {
                b.t1(k, "Temperature", c);
            }
            for k in 1..=4 {
                b.s(k, "Temperature", Temperature);
            }
            for k in 1..=4 {
                let f = b.flow(4000.0);
                b.e(k, &k.to_string(), &(k % 4 + 1).to_string(), 1, f);
            }
            b.e(5, "1s", "1", 5, 905.0);
            b.e(6, "2", "2s", 5, 0.0);
            b.e(7, "3", "3s", 5, 151.0);
            b.e(8, "4s", "4", 5, 100.0);
        }
        Cabin => {
            b.t1(1, "Temperature", 3.84e3);
            for k in 1..=3 {
                b.s(k, "Temperature", Temperature);
            }
            let f = b.flow(1008.0);
            b.e(1, "1s", "1", 1, f.clone());
            b.e(2, "2s", "1", 1, 1.0);
            b.e(3, "1", "3s", 1, f);
        }
        CabinAirPath => {
            b.t1(1, "Temperature", 25.7);
            b.t1(2, "Temperature", 25.7);
            for k in 1..=4 {
                b.s(k, "Temperature", Temperature);
            }
            let f = b.flow(1008.0);
            b.e(1, "1", "2", 1, f.clone());
            b.e(2, "1", "1s", 5, 33.3);
            b.e(3, "2s", "1", 1, f.clone());
            b.e(4, "2", "3s", 1, f);
            b.e(5, "4s", "2", 5, 1000.0);
        }
        VCS => {
            b.v(1, "VCS State 1", Type1, 1.0, Other);
            b.v(2, "VCS State 2", Type1, 0.0, Other);
            b.s(1, "Voltage", Voltage);
            for k in 2..=4 {
                b.s(k, "Temperature", Temperature);
            }
            b.e(1, "1s", "1", 4, 1.64);
            b.e(2, "1", "2", 1, 0.85);
            b.e(3, "1", "2s", 1, 0.15);
            b.e(4, "3s", "2", 2, 4.16);
            b.e(5, "2", "4s", 1, 5.16);
        }
        BatteryLiquidLoop => {
            for (k, c) in [(1, 555.0), (2, 1.11e3), (3, 278.0)] {
                b.t1(k, "Temperature", c);
            }
            for k in 1..=3 {
                b.s(k, "Temperature", Temperature);
            }
            for k in 1..=3 {
                b.eu(k, &k.to_string(), &(k % 3 + 1).to_string(), 7, 4000.0, "mdot");
            }
            b.e(4, "1", "1s", 5, 1000.0);
            b.e(5, "2s", "2", 5, 43.75);
            b.e(6, "3s", "3", 5, 1000.0);
        }
        VCSLiquidLoop => {
            for k in 1..=3 {
                b.t1(k, "Temperature", 6.0e3);
            }
            for k in 1..=3 {
                b.s(k, "Temperature", Temperature);
            }
            for k in 1..=3 {
                b.e(k, &k.to_string(), &(k % 3 + 1).to_string(), 1, 400.0);
            }
            b.e(4, "1", "1s", 5, 1000.0);
            b.e(5, "2s", "2", 5, 1000.0);
            b.e(6, "3s", "3", 5, 1000.0);
        }
        TransaxleLiquidLoop => {
            let caps = [645.0, 1.29e3, 2.58e3, 3.87e3, 645.0, 645.0, 3.87e3, 645.0];
            for (k, c) in caps.iter().enumerate() {
                b.t1(k + 1, "Temperature", *c);
            }
            for k in 1..=6 {
                b.s(k, "Temperature", Temperature);
            }
            b.eu(1, "1", "2", 7, 1333.0, "mdot");
            b.eu(2, "1", "3", 7, 1333.0, "mdot");
            b.eu(3, "1", "4", 7, 1333.0, "mdot");
            b.e(4, "1s", "2", 5, 1600.0);
            b.e(5, "2s", "3", 5, 53.33);
            b.e(6, "3s", "4", 5, 216.7);
            b.eu(7, "2", "5", 7, 1333.0, "mdot");
            b.eu(8, "3", "5", 7, 1333.0, "mdot");
            b.eu(9, "4", "5", 7, 1333.0, "mdot");
            b.eu(10, "5", "6", 7, 4000.0, "mdot");
            b.e(11, "6", "4s", 5, 0.0);
            b.eu(12, "6", "7", 7, 4000.0, "mdot");
            b.e(13, "7", "5s", 5, 1.0);
            b.eu(14, "7", "8", 7, 4000.0, "mdot");
            b.eu(15, "8", "1", 7, 4000.0, "mdot");
            b.e(16, "6s", "8", 5, 1.0);
        }
        VirtualInductor => {
            b.v(1, "Current", Type2, 0.0, Current);
            for k in 1..=3 {
                b.s(k, "Terminal", Other);
            }
            b.e(1, "1s", "1", 3, 1.0);
            b.e(2, "1", "2s", 3, 1.0);
            b.e(3, "1", "3s", 4, 1.0e-4);
        }
        Gearbox => {
            b.v(1, "Torque", Type2, 0.0, Torque);
            for k in 1..=3 {
                b.s(k, "Terminal", Other);
            }
            b.e(1, "1s", "1", 3, 1.0);
            b.e(2, "1", "2s", 3, 1.0);
            b.e(3, "1", "3s", 4, 0.0);
        }
        Radiator => {
            b.t1(1, "Temperature", 1.0);
            b.s(1, "Temperature", Temperature);
            b.s(2, "Temperature", Temperature);
            b.e(1, "1s", "1", 5, 1000.0);
            b.e(2, "1", "2s", 5, 1000.0);
        }
        ThermalCombiner => {
            b.t1(1, "Temperature", 884.9);
            for k in 1..=10 {
                b.s(k, "Temperature", Temperature);
            }
            b.e(1, "1", "1s", 5, 100.0);
            for k in 2..=10 {
                b.e(k, &format!("{k}s"), "1", 5, 100.0);
            }
        }
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_builds_and_validates() {
        for k in ComponentKind::ALL {
            let g = build_component(k);
            assert!(g.n_edges() > 0, "{k:?}");
            let m = g.incidence();
            for j in 0..g.n_edges() {
                let col = m.column(j);
                assert!(col.iter().filter(|&&v| v == 1.0).count() <= 1);
                assert!(col.iter().filter(|&&v| v == -1.0).count() <= 1);
            }
        }
    }

    #[test]
    fn battery_shape() {
        let g = build_component(ComponentKind::Battery);
        assert_eq!((g.n_states(), g.n_externals(), g.n_edges()), (6, 2, 9));
        let e7 = &g.edges()[6];
        assert_eq!((e7.edge_type, e7.alpha.gain), (EdgeType::T5, 39.2));
    }

    #[test]
    fn virtual_inductor_shape() {
        let g = build_component(ComponentKind::VirtualInductor);
        assert_eq!((g.n_states(), g.n_edges()), (1, 3));
        assert_eq!(g.vertices()[0].capacitance, 0.0);
        assert_eq!((g.edges()[2].edge_type, g.edges()[2].alpha.gain), (EdgeType::T4, 1.0e-4));
    }

    fn reversed_incidence(g: &Graph, rev: &[usize]) -> nalgebra::DMatrix<f64> {
        let mut m = g.incidence();
        for &k in rev {
            m.column_mut(k - 1).neg_mut();
        }
        m
    }

    #[test]
    fn structural_duals() {
        let inv = build_component(ComponentKind::Inverter);
        let rec = build_component(ComponentKind::Rectifier);
        assert_eq!(reversed_incidence(&inv, &[1, 2, 4, 6]), rec.incidence());
        assert_eq!(reversed_incidence(&inv, &[1, 2, 4, 6]).len(), inv.incidence().len());
        assert_eq!(rec.vertices()[3].capacitance, 6055.0);
        let mot = build_component(ComponentKind::Motor);
        let gen = build_component(ComponentKind::Generator);
        assert_eq!(reversed_incidence(&mot, &[1, 2, 5]), gen.incidence());
    }
}
