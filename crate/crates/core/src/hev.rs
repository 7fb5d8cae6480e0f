//! The power-split HEV with cooling, assembled from 42 numbered component
//! instances.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

use crate::components::{build_instance, BuildOptions, ComponentKind};
use crate::graph::{augment, compose, Connection, DesignMap, Graph, GraphError, Result, Scale, Side, StateKind};
use crate::sim::{ConstraintKind, StateBound};
use crate::maps::{battery_ocv, mass_flow_coeffs, Coolant, WHEEL_RADIUS};

/// Instance number (1-based position) → component kind and label.
pub const INSTANCES: [(ComponentKind, &str); 42] = {
    use ComponentKind::*;
    [
        (Battery, "battery"),
        (HighVoltageBus, "hv_bus"),
        (Inverter, "inverter"),
        (Motor, "motor"),
        (Transmission, "transmission"),
        (WheelsChassis, "wheels"),
        (Converter, "conv1"),
        (LowVoltageBus, "lv_bus"),
        (AirCoolingPath, "air_path"),
        (PELiquidLoop, "pe_loop"),
        (Radiator, "radiator1"),
        (ThermalCombiner, "combiner"),
        (VirtualInductor, "vi1"),
        (VirtualInductor, "vi2"),
        (Converter, "conv2"),
        (Converter, "conv3"),
        (Pump, "pump1"),
        (Fan, "fan1"),
        (VCS, "vcs"),
        (Converter, "conv4"),
        (VirtualInductor, "vi3"),
        (VCSLiquidLoop, "vcs_loop"),
        (BatteryLiquidLoop, "battery_loop"),
        (Pump, "pump2"),
        (Converter, "conv5"),
        (VirtualInductor, "vi4"),
        (CabinAirPath, "cabin_air"),
        (Cabin, "cabin"),
        (Fan, "fan2"),
        (Converter, "conv6"),
        (VirtualInductor, "vi5"),
        (TransaxleLiquidLoop, "transaxle_loop"),
        (Radiator, "radiator2"),
        (Pump, "pump3"),
        (Converter, "conv7"),
        (VirtualInductor, "vi6"),
        (Rectifier, "rectifier"),
        (Generator, "generator"),
        (Gearbox, "gearbox1"),
        (Gearbox, "gearbox2"),
        (Engine, "engine"),
        (PlanetaryGear, "planetary"),
    ]
};

/// Connection table: (graph A, edge A, graph B, edge B, dominant graph).
/// Row numbers are positions in this array, starting at 1.
pub const CONNECTIONS: [(usize, usize, usize, usize, usize); 60] = [
    (1, 8, 2, 1, 1),
    (2, 6, 3, 1, 2),
    (3, 6, 4, 1, 3),
    (4, 5, 5, 4, 4),
    (5, 6, 6, 1, 5),
    (2, 7, 7, 1, 2),
    (7, 6, 8, 1, 7),
    (9, 7, 11, 2, 11),
    (11, 1, 10, 7, 11),
    (18, 6, 9, 11, 18),
    (17, 6, 10, 8, 17),
    (24, 6, 23, 6, 24),
    (34, 6, 32, 16, 34),
    (17, 1, 15, 6, 17),
    (18, 1, 16, 6, 18),
    (19, 1, 20, 6, 19),
    (24, 1, 25, 6, 24),
    (29, 1, 30, 6, 29),
    (34, 1, 35, 6, 34),
    (8, 3, 13, 1, 8),
    (8, 4, 14, 1, 8),
    (8, 5, 21, 1, 8),
    (8, 6, 26, 1, 8),
    (8, 7, 31, 1, 8),
    (8, 10, 36, 1, 8),
    (15, 1, 13, 2, 15),
    (16, 1, 14, 2, 16),
    (20, 1, 21, 2, 20),
    (25, 1, 26, 2, 25),
    (30, 1, 31, 2, 30),
    (35, 1, 36, 2, 35),
    (12, 1, 10, 5, 10),
    (12, 3, 3, 8, 12),
    (12, 4, 7, 8, 12),
    (12, 5, 15, 8, 12),
    (12, 6, 16, 8, 12),
    (12, 7, 20, 8, 12),
    (12, 8, 25, 8, 12),
    (12, 9, 30, 8, 12),
    (12, 10, 35, 8, 12),
    (12, 2, 37, 8, 12),
    (9, 10, 19, 5, 19),
    (19, 4, 22, 4, 19),
    (22, 5, 23, 4, 22),
    (22, 6, 27, 2, 22),
    (27, 4, 28, 1, 27),
    (29, 6, 27, 5, 29),
    (23, 5, 1, 9, 23),
    (32, 6, 4, 6, 32),
    (32, 5, 38, 6, 32),
    (32, 4, 42, 10, 32),
    (32, 13, 33, 1, 33),
    (9, 8, 33, 2, 33),
    (2, 5, 37, 1, 2),
    (37, 6, 38, 1, 37),
    (38, 5, 39, 2, 38),
    (39, 1, 42, 1, 39),
    (41, 2, 40, 1, 41),
    (40, 2, 42, 6, 40),
    (42, 8, 5, 5, 5),
];

pub fn connections() -> Vec<Connection> {
    CONNECTIONS
        .iter()
        .enumerate()
        .map(|(k, &(ga, ea, gb, eb, dom))| Connection {
            row: k + 1,
            edge_a: format!("{ga}/e/{ea}"),
            edge_b: format!("{gb}/e/{eb}"),
            dominant: if dom == ga { Side::A } else { Side::B },
        })
        .collect()
}

/// Instance-local input ids → vehicle-level names. Both air streams driven
/// by fan 2 collapse onto one input.
const INPUT_NAMES: [(&str, &str); 17] = [
    ("3/u/duty", "inverter_duty"),
    ("37/u/duty", "rectifier_duty"),
    ("7/u/duty", "conv1_duty"),
    ("15/u/duty", "conv2_duty"),
    ("16/u/duty", "conv3_duty"),
    ("20/u/duty", "conv4_duty"),
    ("25/u/duty", "conv5_duty"),
    ("30/u/duty", "conv6_duty"),
    ("35/u/duty", "conv7_duty"),
    ("41/u/throttle", "throttle"),
    ("6/u/brake", "brake"),
    ("9/u/mdot", "fan1_mdot"),
    ("10/u/mdot", "pump1_mdot"),
    ("23/u/mdot", "pump2_mdot"),
    ("27/u/mdot", "fan2_mdot"),
    ("28/u/mdot", "fan2_mdot"),
    ("32/u/mdot", "pump3_mdot"),
];

/// Mass-flow input, the pump or fan instance that drives it, coolant.
const MASS_FLOWS: [(&str, usize, Coolant); 5] = [
    ("fan1_mdot", 18, Coolant::Air),
    ("pump1_mdot", 17, Coolant::Liquid),
    ("pump2_mdot", 24, Coolant::Liquid),
    ("fan2_mdot", 29, Coolant::Air),
    ("pump3_mdot", 34, Coolant::Liquid),
];

/// Converter instance, duty input, bound group.
const CONVERTERS: [(usize, &str, InputGroup); 7] = [
    (7, "conv1_duty", InputGroup::HvLvConverter),
    (15, "conv2_duty", InputGroup::PumpConverter),
    (16, "conv3_duty", InputGroup::FanConverter),
    (20, "conv4_duty", InputGroup::VcsConverter),
    (25, "conv5_duty", InputGroup::PumpConverter),
    (30, "conv6_duty", InputGroup::FanConverter),
    (35, "conv7_duty", InputGroup::PumpConverter),
];

/// Power-electronics instances whose temperature (vertex 4) is constrained.
const POWER_ELECTRONICS: [(usize, &str); 9] = [
    (3, "inverter"),
    (37, "rectifier"),
    (7, "conv1"),
    (15, "conv2"),
    (16, "conv3"),
    (20, "conv4"),
    (25, "conv5"),
    (30, "conv6"),
    (35, "conv7"),
];

/// Edges whose integrated flow is the energy objective.
pub const ENERGY_EDGES: [&str; 5] = ["1/e/4", "1/e/5", "1/e/6", "1/e/8", "41/e/1"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputGroup {
    HvLvConverter,
    VcsConverter,
    FanConverter,
    PumpConverter,
    /// inverter, rectifier, throttle, brake
    UnitInterval,
    /// set by the pump/fan speed equality, no box bound
    MassFlow,
}

impl InputGroup {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            InputGroup::HvLvConverter => (0.19, 0.2),
            InputGroup::VcsConverter => (0.09, 0.1),
            InputGroup::FanConverter => (0.04, 0.05),
            InputGroup::PumpConverter => (0.0, 0.3),
            InputGroup::UnitInterval => (0.0, 1.0),
            InputGroup::MassFlow => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputBound {
    pub input: String,
    pub group: InputGroup,
    pub min: f64,
    pub max: f64,
}

fn input_group(name: &str) -> InputGroup {
    if let Some(&(_, _, g)) = CONVERTERS.iter().find(|c| c.1 == name) {
        return g;
    }
    if name.ends_with("_mdot") {
        InputGroup::MassFlow
    } else {
        InputGroup::UnitInterval
    }
}

/// One box-bound row per vehicle input. [`HevModel::input_bounds`] holds
/// the same rows in registry order.
pub fn input_bounds() -> Vec<InputBound> {
    let mut names: Vec<&str> = Vec::new();
    for (_, n) in INPUT_NAMES {
        if !names.contains(&n) {
            names.push(n);
        }
    }
    names
        .into_iter()
        .map(|n| {
            let group = input_group(n);
            let (min, max) = group.bounds();
            InputBound { input: n.to_string(), group, min, max }
        })
        .collect()
}

/// Affine speed → mass-flow equality u = a + b·x[speed].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassFlowCoupling {
    pub input: usize,
    pub name: String,
    pub speed_state: usize,
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Handles {
    /// Wheel angular velocity (rad/s); vehicle speed is this times
    /// `wheel_radius`.
    pub wheel_speed: usize,
    pub wheel_radius: f64,
    pub soc: usize,
    pub battery_core_temp: usize,
    pub battery_surface_temp: usize,
    pub motor_temp: usize,
    pub generator_temp: usize,
    pub planetary_temp: usize,
    pub pe_temps: BTreeMap<String, usize>,
    pub inputs: BTreeMap<String, usize>,
    pub mass_flows: Vec<MassFlowCoupling>,
    pub energy_edges: BTreeMap<String, usize>,
    pub constraints: Vec<StateBound>,
}

#[derive(Clone, Debug)]
pub struct HevModel {
    pub graph: Graph,
    pub design_map: DesignMap,
    pub handles: Handles,
    pub input_bounds: Vec<InputBound>,
}

pub const AMBIENT: f64 = 298.15;

/// Plant design variable bounds.
pub const THETA_MIN: [f64; 6] = [0.1, 0.1, 0.1, 0.1, 0.1, 1.0];
pub const THETA_MAX: [f64; 6] = [100.0, 100.0, 100.0, 100.0, 100.0, 10.0];
pub const DT_CATALOG: [f64; 4] = [0.5, 1.0, 2.0, 3.0];
pub const EPS_CATALOG: [f64; 5] = [0.2, 0.25, 0.3, 0.35, 0.4];
/// Velocity weights as listed; the list has 20 entries.
pub const WEIGHT_CATALOG: [f64; 20] = [
    10.0, 25.0, 50.0, 100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0, 900.0, 1000.0, 1500.0, 2000.0,
    3000.0, 5000.0, 10000.0, 50000.0, 100000.0,
];

/// Controller design variables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phi {
    /// Controller step Δt (s).
    pub dt: f64,
    /// Constraint band fraction ε.
    pub eps: f64,
    /// Velocity tracking weight.
    pub w_vel: f64,
}

impl Default for Phi {
    fn default() -> Self {
        Phi { dt: 1.0, eps: 0.25, w_vel: 100.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub theta: [f64; 6],
    #[serde(default)]
    pub z: Vec<f64>,
    pub phi: Phi,
}

impl DesignPoint {
    /// The validation design: large heat exchangers, three parallel cells.
    pub fn baseline() -> Self {
        DesignPoint { theta: [100.0, 100.0, 100.0, 100.0, 100.0, 3.0], z: vec![], phi: Phi::default() }
    }

    pub fn validate(&self) -> Result<()> {
        check_theta(&self.theta)?;
        let p = &self.phi;
        let member = |v: f64, cat: &[f64]| cat.contains(&v);
        if !member(p.dt, &DT_CATALOG) {
            return Err(GraphError::DesignDomain(format!("controller step {} is not in the catalog", p.dt)));
        }
        if !member(p.eps, &EPS_CATALOG) {
            return Err(GraphError::DesignDomain(format!("constraint band {} is not in the catalog", p.eps)));
        }
        if !member(p.w_vel, &WEIGHT_CATALOG) {
            return Err(GraphError::DesignDomain(format!("velocity weight {} is not in the catalog", p.w_vel)));
        }
        if !self.z.is_empty() {
            return Err(GraphError::DesignDomain("discrete design variables are not supported".into()));
        }
        Ok(())
    }
}

pub fn check_theta(theta: &[f64]) -> Result<()> {
    if theta.len() != 6 {
        return Err(GraphError::DesignDomain(format!("expected 6 plant variables, got {}", theta.len())));
    }
    for (k, &t) in theta.iter().enumerate() {
        if !(t >= THETA_MIN[k] && t <= THETA_MAX[k]) {
            return Err(GraphError::DesignDomain(format!(
                "theta_{} = {t} outside [{}, {}]",
                k + 1,
                THETA_MIN[k],
                THETA_MAX[k]
            )));
        }
    }
    Ok(())
}

/// Plant design bindings.
pub fn design_map() -> DesignMap {
    let th = |index| Scale::Theta { index };
    let mut dm = DesignMap::default();
    // heat exchangers: (theta index, vertex, edge)
    for (k, v, e) in [(0, "23/v/2", "23/e/5"), (1, "10/v/1", "10/e/5"), (2, "32/v/4", "32/e/6"), (3, "32/v/3", "32/e/5"), (4, "32/v/2", "32/e/4")] {
        dm.capacitance.push((v.into(), th(k)));
        dm.flow.push((e.into(), th(k)));
    }
    // battery cells in parallel and the mass they add
    for k in 1..=5 {
        dm.capacitance.push((format!("1/v/{k}"), th(5)));
    }
    for e in ["1/e/5", "1/e/6", "1/e/7", "1/e/9"] {
        dm.flow.push((e.into(), th(5)));
    }
    dm.flow.push(("1/e/4".into(), Scale::InvTheta { index: 5 }));
    dm.capacitance.push(("6/v/1".into(), Scale::Affine { index: 5, a: 187.0, b: 0.591 }));
    for e in ["6/e/3", "6/e/4"] {
        dm.flow.push((e.into(), Scale::Affine { index: 5, a: 1808.0, b: 5.776 }));
    }
    dm
}

pub fn assemble_hev() -> Result<HevModel> {
    assemble_hev_with(&BuildOptions::default())
}

pub fn assemble_hev_with(opts: &BuildOptions) -> Result<HevModel> {
    let parts: Vec<Graph> = INSTANCES
        .iter()
        .enumerate()
        .map(|(k, &(kind, _))| build_instance(kind, &(k + 1).to_string(), opts))
        .collect();
    let g = compose(&parts, &connections())?;
    let rename: HashMap<String, String> =
        INPUT_NAMES.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    let graph = g.rename_inputs(&rename)?;

    let bounds: HashMap<String, InputBound> = input_bounds().into_iter().map(|b| (b.input.clone(), b)).collect();
    let mut input_bounds = Vec::new();
    for i in graph.inputs() {
        let b = bounds.get(i).ok_or_else(|| GraphError::Config(format!("input `{i}` has no bound group")))?;
        input_bounds.push(b.clone());
    }
    if input_bounds.len() != bounds.len() {
        return Err(GraphError::Config("some bounded inputs are missing from the vehicle".into()));
    }
    let handles = handles(&graph)?;
    Ok(HevModel { graph, design_map: design_map(), handles, input_bounds })
}

fn state(g: &Graph, id: &str) -> Result<usize> {
    g.state_index(id).ok_or_else(|| GraphError::Config(format!("vehicle has no state `{id}`")))
}

fn handles(g: &Graph) -> Result<Handles> {
    let mut pe_temps = BTreeMap::new();
    let mut constraints = Vec::new();
    let mut temp = |name: &str, id: &str, lo: f64, hi: f64| -> Result<usize> {
        let i = state(g, id)?;
        constraints.push(StateBound { name: name.into(), state: i, kind: ConstraintKind::Temperature, min: lo, max: hi });
        Ok(i)
    };
    let c = 273.15;
    let battery_surface_temp = temp("battery_surface", "1/v/5", c + 20.0, c + 40.0)?;
    let motor_temp = temp("motor", "4/v/3", c, c + 80.0)?;
    let generator_temp = temp("generator", "38/v/3", c, c + 80.0)?;
    for (n, name) in POWER_ELECTRONICS {
        let i = temp(name, &format!("{n}/v/4"), c + 10.0, c + 110.0)?;
        pe_temps.insert(name.to_string(), i);
    }
    let soc = state(g, "1/v/1")?;
    constraints.push(StateBound { name: "soc".into(), state: soc, kind: ConstraintKind::Soc, min: 0.3, max: 0.7 });

    let inputs: BTreeMap<String, usize> = g.inputs().iter().enumerate().map(|(k, i)| (i.clone(), k)).collect();
    let mut mass_flows = Vec::new();
    for (name, inst, coolant) in MASS_FLOWS {
        let (a, b) = mass_flow_coeffs(coolant);
        let input = *inputs.get(name).ok_or_else(|| GraphError::Config(format!("missing input `{name}`")))?;
        mass_flows.push(MassFlowCoupling {
            input,
            name: name.into(),
            speed_state: state(g, &format!("{inst}/v/2"))?,
            a,
            b,
        });
    }
    let mut energy_edges = BTreeMap::new();
    for e in ENERGY_EDGES {
        let k = g.edge_index(e).ok_or_else(|| GraphError::Config(format!("vehicle has no edge `{e}`")))?;
        energy_edges.insert(e.to_string(), k);
    }
    Ok(Handles {
        wheel_speed: state(g, "6/v/1")?,
        wheel_radius: WHEEL_RADIUS,
        soc,
        battery_core_temp: state(g, "1/v/4")?,
        battery_surface_temp,
        motor_temp,
        generator_temp,
        planetary_temp: state(g, "42/v/5")?,
        pe_temps,
        inputs,
        mass_flows,
        energy_edges,
        constraints,
    })
}

impl HevModel {
    /// Graph scaled by the plant design variables.
    pub fn apply_plant_design(&self, theta: &[f64]) -> Result<Graph> {
        check_theta(theta)?;
        augment(&self.graph, &self.design_map, theta, &[])
    }

    pub fn input(&self, name: &str) -> usize {
        self.handles.inputs[name]
    }

    pub fn vehicle_speed(&self, x: &[f64]) -> f64 {
        x[self.handles.wheel_speed] * self.handles.wheel_radius
    }

    /// External state values: temperatures at ambient, everything else 0.
    pub fn external_values(&self, ambient: f64) -> Vec<f64> {
        self.graph
            .externals()
            .map(|v| if v.kind == StateKind::Temperature { ambient } else { 0.0 })
            .collect()
    }

    /// Nominal inputs at rest: mid-range converter duties, everything that
    /// moves the vehicle at zero, mass flows from the resting pump speeds.
    pub fn initial_inputs(&self, x: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.graph.n_inputs()];
        for b in &self.input_bounds {
            let k = self.input(&b.input);
            u[k] = match b.group {
                InputGroup::UnitInterval | InputGroup::MassFlow => 0.0,
                g => {
                    let (lo, hi) = g.bounds();
                    0.5 * (lo + hi)
                }
            };
        }
        for m in &self.handles.mass_flows {
            u[m.input] = m.a + m.b * x[m.speed_state];
        }
        u
    }

    /// Resting vehicle: SOC 0.5, temperatures at ambient, electrical states
    /// at the steady state of the nominal duties. Algebraic states are
    /// only a guess here.
    pub fn initial_state(&self, ambient: f64) -> Vec<f64> {
        let g = &self.graph;
        let mut x: Vec<f64> = g
            .states()
            .map(|v| if v.kind == StateKind::Temperature { ambient } else { 0.0 })
            .collect();
        let mut set = |id: &str, v: f64| {
            if let Some(i) = g.state_index(id) {
                x[i] = v;
            }
        };
        set("1/v/1", 0.5);
        let vb = 76.0 * battery_ocv(0.5);
        for id in ["2/v/1", "3/v/1", "7/v/1", "37/v/1"] {
            set(id, vb);
        }
        let duty = |name: &str| {
            let (lo, hi) = input_group(name).bounds();
            0.5 * (lo + hi)
        };
        let vlv = duty("conv1_duty") * vb;
        set("7/v/3", vlv);
        set("8/v/1", vlv);
        for &(n, name, _) in &CONVERTERS[1..] {
            set(&format!("{n}/v/1"), vlv);
            set(&format!("{n}/v/3"), duty(name) * vlv);
        }
        // motor coupled to a viscous load: V = R i + k w, k i = b w
        let (k, r, b) = (0.25, 0.05, 0.05);
        for (inst, conv) in [(17, 15), (18, 16), (24, 25), (29, 30), (34, 35)] {
            let v = duty(CONVERTERS.iter().find(|c| c.0 == conv).unwrap().1) * vlv;
            let w = k * v / (k * k + r * b);
            set(&format!("{inst}/v/1"), b * w / k);
            set(&format!("{inst}/v/2"), w);
        }
        let v4 = duty("conv4_duty") * vlv;
        set("19/v/1", 1.64 * v4 * v4);
        set("19/v/2", 0.85 * 1.64 * v4 * v4);
        x
    }
}
