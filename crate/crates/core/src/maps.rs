//! Nonlinear parameter maps used by the HEV component graphs.
//!
//! The open-circuit voltage curve and the engine torque map only exist as
//! plotted figures, so they ship as digitized tables in `data/`. Treat them
//! as calibration-approximate.

use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

const V_OC_CSV: &str = include_str!("../data/v_oc.csv");
const ENGINE_CSV: &str = include_str!("../data/engine_torque.csv");

/// Effective wheel radius in metres, the coefficient of f_w5.
pub const WHEEL_RADIUS: f64 = 0.32;

/// Value of a scalar map and its derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slope {
    pub v: f64,
    pub d: f64,
}

/// Offset sigmoid 2/(1+e^-x) - 1, written as tanh(x/2) to stay accurate
/// far from the origin.
pub fn sigmoid_offset(x: f64) -> f64 {
    (0.5 * x).tanh()
}

pub fn sigmoid_offset_slope(x: f64) -> Slope {
    let t = (0.5 * x).tanh();
    Slope { v: t, d: 0.5 * (1.0 - t * t) }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coolant {
    Air,
    Liquid,
}

/// Mass flow (kg/s) delivered by a fan (air) or pump (liquid) at speed ω.
pub fn mass_flow(kind: Coolant, omega: f64) -> f64 {
    let (a, b) = mass_flow_coeffs(kind);
    a + b * omega
}

/// Intercept and slope of the affine speed to mass-flow maps.
pub fn mass_flow_coeffs(kind: Coolant) -> (f64, f64) {
    match kind {
        Coolant::Air => (0.0139, 0.0137),
        Coolant::Liquid => (0.0, 0.0040),
    }
}

/// Vehicle mass scalings (f1, f2) as a function of the battery cell count
/// multiplier. f1 is the wheel-referred inertia and f2 the vehicle mass.
pub fn mass_scaling(theta6: f64) -> (f64, f64) {
    (187.0 + 0.591 * theta6, 1808.0 + 5.776 * theta6)
}

/// Chassis loss coefficients (f_w1 .. f_w5).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChassisParams {
    pub f_w1: f64,
    pub f_w2: f64,
    pub f_w3: f64,
    pub f_w4: f64,
    pub f_w5: f64,
}

/// Grade-load coefficient per unit mass (≈ g·r); not π.
#[allow(clippy::approx_constant)]
pub const GRADE_COEFF: f64 = 3.14;

/// Chassis coefficients at wheel speed `x_wheel` on a road of grade
/// `grade` radians. The brake command multiplies f_w4 through the edge law,
/// not here.
pub fn chassis_params(x_wheel: f64, grade: f64) -> ChassisParams {
    let s = sigmoid_offset(x_wheel);
    ChassisParams {
        f_w1: 0.0105 * s,
        f_w2: 0.0178 * grade.cos() * s,
        f_w3: GRADE_COEFF * grade.sin(),
        f_w4: 3840.0 * s,
        f_w5: WHEEL_RADIUS * x_wheel,
    }
}

/// Piecewise-linear table y(x) on strictly increasing knots, clamped at the
/// ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct Table1 {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Table1 {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len());
        assert!(x.windows(2).all(|w| w[1] > w[0]), "knots must increase");
        Table1 { x, y }
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// True when `q` sits exactly on a knot, where the slope is one-sided.
    pub fn is_knot(&self, q: f64) -> bool {
        self.x.len() > 1 && self.x.binary_search_by(|k| k.total_cmp(&q)).is_ok()
    }

    /// Interpolated value and the slope of the segment containing `q`.
    /// Exactly at an interior knot the right segment is used; outside the
    /// hull the value is clamped and the slope is zero.
    pub fn eval(&self, q: f64) -> Slope {
        let n = self.x.len();
        match n {
            0 => return Slope { v: 0.0, d: 0.0 },
            1 => return Slope { v: self.y[0], d: 0.0 },
            _ => {}
        }
        if q <= self.x[0] {
            return Slope { v: self.y[0], d: 0.0 };
        }
        if q >= self.x[n - 1] {
            return Slope { v: self.y[n - 1], d: 0.0 };
        }
        let k = self.x.partition_point(|&k| k <= q) - 1;
        let (x0, x1, y0, y1) = (self.x[k], self.x[k + 1], self.y[k], self.y[k + 1]);
        let d = (y1 - y0) / (x1 - x0);
        Slope { v: y0 + d * (q - x0), d }
    }
}

/// Bilinear table z(a, b) on a rectangular grid, clamped to the hull.
#[derive(Clone, Debug, PartialEq)]
pub struct Table2 {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Row-major, `z[i * b.len() + j]` at (a[i], b[j]).
    pub z: Vec<f64>,
}

/// Bilinear value with partials in both arguments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slope2 {
    pub v: f64,
    pub da: f64,
    pub db: f64,
}

fn bracket(knots: &[f64], q: f64) -> (usize, f64, bool) {
    let n = knots.len();
    if q <= knots[0] {
        return (0, 0.0, true);
    }
    if q >= knots[n - 1] {
        return (n - 2, 1.0, true);
    }
    let k = knots.partition_point(|&k| k <= q) - 1;
    (k, (q - knots[k]) / (knots[k + 1] - knots[k]), false)
}

impl Table2 {
    pub fn is_knot(&self, qa: f64, qb: f64) -> bool {
        self.a.binary_search_by(|k| k.total_cmp(&qa)).is_ok() || self.b.binary_search_by(|k| k.total_cmp(&qb)).is_ok()
    }

    pub fn eval(&self, qa: f64, qb: f64) -> Slope2 {
        let nb = self.b.len();
        let (i, ta, ca) = bracket(&self.a, qa);
        let (j, tb, cb) = bracket(&self.b, qb);
        let z = |i: usize, j: usize| self.z[i * nb + j];
        let (z00, z01, z10, z11) = (z(i, j), z(i, j + 1), z(i + 1, j), z(i + 1, j + 1));
        let v = (1.0 - ta) * ((1.0 - tb) * z00 + tb * z01) + ta * ((1.0 - tb) * z10 + tb * z11);
        let ha = self.a[i + 1] - self.a[i];
        let hb = self.b[j + 1] - self.b[j];
        let da = if ca { 0.0 } else { ((1.0 - tb) * (z10 - z00) + tb * (z11 - z01)) / ha };
        let db = if cb { 0.0 } else { ((1.0 - ta) * (z01 - z00) + ta * (z11 - z10)) / hb };
        Slope2 { v, da, db }
    }
}

fn parse_rows(text: &str) -> Vec<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.records()
        .map(|r| {
            let r = r.expect("bundled table is valid csv");
            r.iter().map(|s| s.trim().parse::<f64>().expect("numeric cell")).collect()
        })
        .collect()
}

/// Bundled open-circuit voltage table (SOC to volts per cell).
pub fn v_oc_table() -> &'static Table1 {
    static T: OnceLock<Table1> = OnceLock::new();
    T.get_or_init(|| {
        let rows = parse_rows(V_OC_CSV);
        Table1::new(rows.iter().map(|r| r[0]).collect(), rows.iter().map(|r| r[1]).collect())
    })
}

/// Bundled engine torque grid (throttle × ω → N·m).
pub fn engine_table() -> &'static Table2 {
    static T: OnceLock<Table2> = OnceLock::new();
    T.get_or_init(|| {
        let rows = parse_rows(ENGINE_CSV);
        let mut a: Vec<f64> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        for r in &rows {
            if !a.contains(&r[0]) {
                a.push(r[0]);
            }
            if !b.contains(&r[1]) {
                b.push(r[1]);
            }
        }
        assert_eq!(a.len() * b.len(), rows.len(), "engine map must be a full grid");
        let z = rows.iter().map(|r| r[2]).collect();
        Table2 { a, b, z }
    })
}

/// Cell open-circuit voltage at `soc` (clamped to [0, 1]).
pub fn battery_ocv(soc: f64) -> f64 {
    v_oc_table().eval(soc.clamp(0.0, 1.0)).v
}

/// Engine torque at a throttle command and crankshaft speed.
pub fn engine_torque(throttle: f64, omega: f64) -> f64 {
    engine_table().eval(throttle, omega).v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_matches_logistic_form() {
        for &x in &[-7.0, -1.0, -0.1, 0.0, 0.3, 2.0, 9.0] {
            let logistic = 2.0 / (1.0 + (-x as f64).exp()) - 1.0;
            assert!((sigmoid_offset(x) - logistic).abs() < 1e-15);
        }
        assert_eq!(sigmoid_offset(0.0), 0.0);
        assert!(sigmoid_offset(50.0) > 0.999999);
    }

    #[test]
    fn mass_flow_maps() {
        assert!((mass_flow(Coolant::Air, 0.0) - 0.0139).abs() < 1e-15);
        assert!((mass_flow(Coolant::Air, 1.0) - 0.0276).abs() < 1e-15);
        assert_eq!(mass_flow(Coolant::Liquid, 0.0), 0.0);
    }

    #[test]
    fn mass_scaling_values() {
        let (f1, _) = mass_scaling(3.0);
        assert!((f1 - 188.773).abs() < 1e-12);
        assert_eq!(mass_scaling(0.0), (187.0, 1808.0));
        assert!((mass_scaling(10.0).1 - 1865.76).abs() < 1e-9);
    }

    #[test]
    fn chassis_at_rest_and_flat() {
        let p = chassis_params(0.0, 0.0);
        assert_eq!((p.f_w1, p.f_w2, p.f_w3, p.f_w4, p.f_w5), (0.0, 0.0, 0.0, 0.0, 0.0));
        let p = chassis_params(10.0, 0.0);
        assert!((p.f_w5 - 3.2).abs() < 1e-15);
        assert_eq!(p.f_w2, 0.0178 * sigmoid_offset(10.0));
    }

    #[test]
    fn ocv_table_round_trip() {
        let t = v_oc_table();
        assert_eq!(t.x.len(), 21);
        for (x, y) in t.x.iter().zip(&t.y) {
            assert_eq!(battery_ocv(*x), *y);
        }
    }

    #[test]
    fn engine_grid_shape_and_knots() {
        let t = engine_table();
        assert_eq!((t.a.len(), t.b.len()), (6, 20));
        for (i, a) in t.a.iter().enumerate() {
            for (j, b) in t.b.iter().enumerate() {
                assert_eq!(engine_torque(*a, *b), t.z[i * 20 + j]);
            }
        }
        // zero throttle row is the lower boundary
        assert!(t.b.iter().all(|&w| engine_torque(0.0, w) <= 0.0 + 1e-12));
    }

    proptest! {
        #[test]
        fn sigmoid_is_odd_and_bounded(x in -60.0f64..60.0) {
            prop_assert_eq!(sigmoid_offset(-x), -sigmoid_offset(x));
            prop_assert!(sigmoid_offset(x).abs() <= 1.0);
        }

        #[test]
        fn ocv_is_monotone_and_bounded(a in -0.2f64..1.2, b in -0.2f64..1.2) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(battery_ocv(lo) <= battery_ocv(hi));
            let t = v_oc_table();
            let v = battery_ocv(a);
            prop_assert!(v >= t.y[0] && v <= t.y[t.y.len() - 1]);
        }

        #[test]
        fn torque_monotone_in_throttle(a in 0.0f64..1.0, b in 0.0f64..1.0, w in 0.0f64..600.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(engine_torque(lo, w) <= engine_torque(hi, w) + 1e-12);
        }

        #[test]
        fn torque_within_cell_hull(th in 0.0f64..1.0, w in 0.0f64..570.0) {
            let t = engine_table();
            let (i, _, _) = bracket(&t.a, th);
            let (j, _, _) = bracket(&t.b, w);
            let nb = t.b.len();
            let c = [t.z[i*nb+j], t.z[i*nb+j+1], t.z[(i+1)*nb+j], t.z[(i+1)*nb+j+1]];
            let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let v = engine_torque(th, w);
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }

        #[test]
        fn slopes_match_finite_differences(th in 0.05f64..0.95, w in 10.0f64..560.0, s in 0.01f64..0.99) {
            let h = 1e-7;
            let e = engine_table().eval(th, w);
            // stay inside the cell so the bilinear patch is smooth
            let t = engine_table();
            let (_, ta, _) = bracket(&t.a, th);
            let (_, tb, _) = bracket(&t.b, w);
            prop_assume!(ta > 1e-3 && ta < 1.0 - 1e-3 && tb > 1e-3 && tb < 1.0 - 1e-3);
            let fd_a = (engine_torque(th + h, w) - engine_torque(th - h, w)) / (2.0 * h);
            let fd_b = (engine_torque(th, w + h) - engine_torque(th, w - h)) / (2.0 * h);
            prop_assert!((fd_a - e.da).abs() < 1e-5 * (1.0 + e.da.abs()));
            prop_assert!((fd_b - e.db).abs() < 1e-5 * (1.0 + e.db.abs()));
            let o = v_oc_table().eval(s);
            let k = (s * 20.0).fract();
            prop_assume!(k > 1e-4 && k < 1.0 - 1e-4);
            let fd = (battery_ocv(s + h) - battery_ocv(s - h)) / (2.0 * h);
            prop_assert!((fd - o.d).abs() < 1e-5);
        }
    }
}
