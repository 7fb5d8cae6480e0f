use serde::{Deserialize, Serialize};

/// Edge power-flow laws. The multiplier α is applied outside these
/// functions, so every law below is the bare polynomial in the endpoint
/// states and the optional input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeType {
    /// α·x_tail
    T1,
    /// α·x_head
    T2,
    /// α·x_tail·x_head
    T3,
    /// α·x_tail²
    T4,
    /// α·(x_tail − x_head)
    T5,
    /// α·x_tail³
    T6,
    /// α·u·x_tail
    T7,
    /// α·u·x_tail·x_head
    T8,
}

/// Value of a law together with its partial derivatives in
/// (x_tail, x_head, u).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Local {
    pub v: f64,
    pub dt: f64,
    pub dh: f64,
    pub du: f64,
}

impl Local {
    fn new(v: f64, dt: f64, dh: f64, du: f64) -> Self {
        Local { v, dt, dh, du }
    }
}

impl EdgeType {
    pub fn from_code(code: u8) -> Option<EdgeType> {
        use EdgeType::*;
        Some(match code {
            1 => T1,
            2 => T2,
            3 => T3,
            4 => T4,
            5 => T5,
            6 => T6,
            7 => T7,
            8 => T8,
            _ => return None,
        })
    }

    pub fn code(self) -> u8 {
        self as u8 + 1
    }

    pub fn needs_input(self) -> bool {
        matches!(self, EdgeType::T7 | EdgeType::T8)
    }

    /// Bare law L(x_t, x_h, u) with gradient.
    pub fn law(self, xt: f64, xh: f64, u: f64) -> Local {
        use EdgeType::*;
        match self {
            T1 => Local::new(xt, 1.0, 0.0, 0.0),
            T2 => Local::new(xh, 0.0, 1.0, 0.0),
            T3 => Local::new(xt * xh, xh, xt, 0.0),
            T4 => Local::new(xt * xt, 2.0 * xt, 0.0, 0.0),
            T5 => Local::new(xt - xh, 1.0, -1.0, 0.0),
            T6 => Local::new(xt * xt * xt, 3.0 * xt * xt, 0.0, 0.0),
            T7 => Local::new(u * xt, u, 0.0, xt),
            T8 => Local::new(u * xt * xh, u * xh, u * xt, xt * xh),
        }
    }

    /// L / x_tail in closed form, when the tail state factors out of the law.
    pub fn law_over_tail(self, xt: f64, xh: f64, u: f64) -> Option<Local> {
        use EdgeType::*;
        match self {
            T1 => Some(Local::new(1.0, 0.0, 0.0, 0.0)),
            T3 => Some(Local::new(xh, 0.0, 1.0, 0.0)),
            T4 => Some(Local::new(xt, 1.0, 0.0, 0.0)),
            T6 => Some(Local::new(xt * xt, 2.0 * xt, 0.0, 0.0)),
            T7 => Some(Local::new(u, 0.0, 0.0, 1.0)),
            T8 => Some(Local::new(u * xh, 0.0, u, xh)),
            T2 | T5 => None,
        }
    }

    /// L / x_head in closed form, when the head state factors out of the law.
    pub fn law_over_head(self, xt: f64, _xh: f64, u: f64) -> Option<Local> {
        use EdgeType::*;
        match self {
            T2 => Some(Local::new(1.0, 0.0, 0.0, 0.0)),
            T3 => Some(Local::new(xt, 1.0, 0.0, 0.0)),
            T8 => Some(Local::new(u * xt, u, 0.0, xt)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [EdgeType; 8] = [
        EdgeType::T1,
        EdgeType::T2,
        EdgeType::T3,
        EdgeType::T4,
        EdgeType::T5,
        EdgeType::T6,
        EdgeType::T7,
        EdgeType::T8,
    ];

    #[test]
    fn codes_round_trip() {
        for t in ALL {
            assert_eq!(EdgeType::from_code(t.code()), Some(t));
        }
        assert_eq!(EdgeType::from_code(9), None);
    }

    #[test]
    fn divided_laws_agree_with_division() {
        let (xt, xh, u) = (1.7, -0.6, 0.3);
        for t in ALL {
            let l = t.law(xt, xh, u);
            if let Some(d) = t.law_over_tail(xt, xh, u) {
                assert!((d.v * xt - l.v).abs() < 1e-14, "{t:?}");
                // d(L/xt)/dxt = (L_t xt - L) / xt^2
                assert!((d.dt - (l.dt * xt - l.v) / (xt * xt)).abs() < 1e-12, "{t:?}");
                assert!((d.dh - l.dh / xt).abs() < 1e-12, "{t:?}");
                assert!((d.du - l.du / xt).abs() < 1e-12, "{t:?}");
            }
            if let Some(d) = t.law_over_head(xt, xh, u) {
                assert!((d.v * xh - l.v).abs() < 1e-14, "{t:?}");
                assert!((d.dh - (l.dh * xh - l.v) / (xh * xh)).abs() < 1e-12, "{t:?}");
                assert!((d.dt - l.dt / xh).abs() < 1e-12, "{t:?}");
                assert!((d.du - l.du / xh).abs() < 1e-12, "{t:?}");
            }
        }
    }
}
