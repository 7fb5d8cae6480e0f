use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use ccd_core::ccd::{DesignScenario, GaConfig, ObjectiveWeights};
use ccd_core::hev::{DesignPoint, Phi};
use ccd_core::sim::{DriveCycle, SolverOptions, SpeedUnits};

use crate::{usage, Common, Result};

/// `"hev"` or `{"graph": "path.json"}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelChoice {
    #[default]
    Hev,
    Graph(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// `time_s,speed` CSV; the bundled 300 s excerpt when absent.
    pub cycle: Option<PathBuf>,
    pub units: SpeedUnits,
    pub t_final: f64,
    pub ambient_c: f64,
    pub dt_eval: f64,
    pub horizon: usize,
    pub applied_steps: usize,
    pub solver: SolverOptions,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let d = DesignScenario::udds_300s();
        ScenarioConfig {
            cycle: None,
            units: SpeedUnits::Mph,
            t_final: d.t_final,
            ambient_c: d.ambient - 273.15,
            dt_eval: d.dt_eval,
            horizon: d.horizon,
            applied_steps: d.applied_steps,
            solver: d.options,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignOverrides {
    pub theta: Option<[f64; 6]>,
    pub phi: Option<Phi>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelChoice,
    pub scenario: ScenarioConfig,
    pub design: DesignOverrides,
    pub weights: ObjectiveWeights,
    pub ga: GaConfig,
    pub out: PathBuf,
    /// Overrides `ga.seed` when set.
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelChoice::Hev,
            scenario: ScenarioConfig::default(),
            design: DesignOverrides::default(),
            weights: ObjectiveWeights::default(),
            ga: GaConfig::default(),
            out: PathBuf::from("out"),
            seed: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(p) = path else { return Ok(RunConfig::default()) };
        let text = std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", p.display())))
    }

    /// Config file, then command-line flags.
    pub fn resolve(c: &Common) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(c.config.as_deref())?;
        if let Some(s) = cfg.seed {
            cfg.ga.seed = s;
        }
        if let Some(s) = c.seed {
            cfg.seed = Some(s);
            cfg.ga.seed = s;
        }
        if let Some(u) = c.units {
            cfg.scenario.units = u;
        }
        if let Some(p) = &c.cycle {
            cfg.scenario.cycle = Some(p.clone());
        }
        if let Some(o) = &c.out {
            cfg.out = o.clone();
        }
        Ok(cfg)
    }

    pub fn design(&self) -> DesignPoint {
        let mut dp = DesignPoint::baseline();
        if let Some(t) = self.design.theta {
            dp.theta = t;
        }
        if let Some(p) = self.design.phi {
            dp.phi = p;
        }
        dp
    }

    /// Drive cycle and closed-loop settings; fails before anything is
    /// written.
    pub fn scenario(&self) -> Result<DesignScenario> {
        let s = &self.scenario;
        let cycle = match &s.cycle {
            Some(p) => DriveCycle::load(p, s.units).map_err(usage)?,
            None => DriveCycle::udds_300s(),
        };
        if !(s.t_final > 0.0) || s.t_final > cycle.duration() + 1e-9 {
            return Err(usage(format!(
                "t_final {} must be positive and within the {} s drive cycle",
                s.t_final,
                cycle.duration()
            )));
        }
        Ok(DesignScenario {
            cycle,
            t_final: s.t_final,
            ambient: s.ambient_c + 273.15,
            dt_eval: s.dt_eval,
            horizon: s.horizon,
            applied_steps: s.applied_steps,
            options: s.solver,
        })
    }
}
