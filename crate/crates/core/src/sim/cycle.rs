use serde::{Deserialize, Serialize};
use std::path::Path;
use std::str::FromStr;

use super::{Result, SimError};
use crate::maps::Table1;

const UDDS_300S: &str = include_str!("../../data/udds_300s.csv");

pub const MPH: f64 = 0.44704;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedUnits {
    Mph,
    Mps,
}

impl FromStr for SpeedUnits {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mph" => Ok(SpeedUnits::Mph),
            "mps" | "m/s" => Ok(SpeedUnits::Mps),
            other => Err(format!("unknown speed unit `{other}` (expected mph or mps)")),
        }
    }
}

/// Reference vehicle speed (m/s) against time, linearly interpolated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveCycle {
    pub time: Vec<f64>,
    pub speed: Vec<f64>,
}

impl DriveCycle {
    pub fn new(time: Vec<f64>, speed: Vec<f64>) -> Result<Self> {
        if time.len() != speed.len() || time.len() < 2 {
            return Err(SimError::Scenario("drive cycle needs at least two samples".into()));
        }
        if time[0] != 0.0 {
            return Err(SimError::Scenario("drive cycle must start at t = 0".into()));
        }
        if !time.windows(2).all(|w| w[1] > w[0]) {
            return Err(SimError::Scenario("drive cycle times must increase".into()));
        }
        if speed.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SimError::Scenario("drive cycle speeds must be finite and non-negative".into()));
        }
        Ok(DriveCycle { time, speed })
    }

    /// Parses `time_s,speed` CSV text.
    pub fn from_csv_str(text: &str, units: SpeedUnits) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| SimError::Scenario(format!("drive cycle: {e}")))?.clone();
        if headers.len() < 2 || headers[0].trim() != "time_s" {
            return Err(SimError::Scenario("drive cycle header must be `time_s,speed`".into()));
        }
        let k = match units {
            SpeedUnits::Mph => MPH,
            SpeedUnits::Mps => 1.0,
        };
        let (mut t, mut v) = (Vec::new(), Vec::new());
        for (line, r) in rdr.records().enumerate() {
            let r = r.map_err(|e| SimError::Scenario(format!("drive cycle: {e}")))?;
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| SimError::Scenario(format!("drive cycle row {}: bad number `{s}`", line + 2)))
            };
            t.push(num(&r[0])?);
            v.push(num(&r[1])? * k);
        }
        DriveCycle::new(t, v)
    }

    pub fn load(path: &Path, units: SpeedUnits) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Scenario(format!("cannot read {}: {e}", path.display())))?;
        Self::from_csv_str(&text, units)
    }

    /// The first 300 s of the UDDS schedule, bundled.
    pub fn udds_300s() -> Self {
        Self::from_csv_str(UDDS_300S, SpeedUnits::Mps).expect("bundled cycle parses")
    }

    pub fn duration(&self) -> f64 {
        *self.time.last().unwrap()
    }

    pub fn at(&self, t: f64) -> f64 {
        let n = self.time.len();
        if t <= self.time[0] {
            return self.speed[0];
        }
        if t >= self.time[n - 1] {
            return self.speed[n - 1];
        }
        let k = self.time.partition_point(|&s| s <= t) - 1;
        let w = (t - self.time[k]) / (self.time[k + 1] - self.time[k]);
        self.speed[k] + w * (self.speed[k + 1] - self.speed[k])
    }

    /// The cycle cut at `t_end`.
    pub fn truncated(&self, t_end: f64) -> Self {
        let mut time = Vec::new();
        let mut speed = Vec::new();
        for (&t, &v) in self.time.iter().zip(&self.speed) {
            if t < t_end {
                time.push(t);
                speed.push(v);
            }
        }
        time.push(t_end);
        speed.push(self.at(t_end));
        DriveCycle { time, speed }
    }
}

/// Exogenous profile of one external vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Profile {
    Constant(f64),
    Table(Table1),
}

impl Profile {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Profile::Constant(v) => *v,
            Profile::Table(tb) => tb.eval(t).v,
        }
    }
}
