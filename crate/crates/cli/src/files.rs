use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ccd_core::ccd::{
    ga_optimize, report_for, simulate_design, total_objective, GaConfig, Mode, ObjectiveReport, ObjectiveWeights,
};
use ccd_core::graph::Graph;
use ccd_core::hev::{assemble_hev, DesignPoint, HevModel};
use ccd_core::sim::{SolverStats, MPH};

use crate::config::{ModelChoice, RunConfig};
use crate::{run_err, usage, Common, Result};

const KELVIN: f64 = 273.15;

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| run_err(format!("cannot create {}: {e}", p.display())))
}

fn write_json<T: Serialize>(p: &Path, v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(run_err)?;
    fs::write(p, s + "\n").map_err(|e| run_err(format!("{}: {e}", p.display())))
}

fn write_csv(p: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let f = fs::File::create(p).map_err(|e| run_err(format!("{}: {e}", p.display())))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    w.write_record(header).map_err(run_err)?;
    for r in rows {
        w.write_record(&r).map_err(run_err)?;
    }
    w.flush().map_err(run_err)
}

fn hev() -> Result<HevModel> {
    assemble_hev().map_err(run_err)
}

/// Wall-clock fields live under `meta` so the rest of every file is
/// reproducible.
#[derive(Serialize, Deserialize)]
struct Meta {
    wall_seconds: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    design: &'a DesignPoint,
    avg_velocity_error_mph: f64,
    max_violation: &'a BTreeMap<String, f64>,
    state_range: BTreeMap<String, (f64, f64)>,
    j_st: f64,
    j_sc: f64,
    j_en: f64,
    j_size: f64,
    j_tot_m1: f64,
    j_tot_m4: f64,
    mpc_faults: usize,
    solver: SolverStats,
    meta: Meta,
}

pub fn validate(c: &Common) -> Result<()> {
    let cfg = RunConfig::resolve(c)?;
    if let ModelChoice::Graph(p) = &cfg.model {
        // custom graphs are checked and exported; the closed loop needs the
        // vehicle handles
        let text = fs::read_to_string(p).map_err(|e| usage(format!("cannot read graph {}: {e}", p.display())))?;
        let g: Graph = serde_json::from_str(&text).map_err(|e| usage(format!("graph {}: {e}", p.display())))?;
        create_dir(&cfg.out)?;
        return write_json(&cfg.out.join("model.json"), g.data());
    }
    let sc = cfg.scenario()?;
    let dp = cfg.design();
    dp.validate().map_err(usage)?;
    let model = hev()?;
    let run = simulate_design(&model, &dp, &sc, true).map_err(run_err)?;
    let rep = report_for(&model, &dp, &run, &cfg.weights);
    if let Some(f) = &rep.failure {
        return Err(run_err(f));
    }

    let out = &cfg.out;
    create_dir(out)?;
    write_json(&out.join("hev_model.json"), model.graph.data())?;
    write_json(&out.join("handles.json"), &model.handles)?;
    let tr = &run.trace;
    tr.save_csv(&out.join("trace.csv")).map_err(run_err)?;

    let w = &cfg.weights;
    let mut solver = tr.stats.clone();
    solver.wall_seconds = 0.0;
    let summary = Summary {
        design: &dp,
        avg_velocity_error_mph: rep.avg_velocity_error_mph,
        max_violation: &rep.max_violation,
        state_range: tr.summary(&model.handles.constraints).state_range,
        j_st: rep.j_st,
        j_sc: rep.j_sc,
        j_en: rep.j_en,
        j_size: rep.j_size,
        j_tot_m1: rep.total(w, w.m_report),
        j_tot_m4: rep.total(w, w.m_opt),
        mpc_faults: run.faults,
        solver,
        meta: Meta { wall_seconds: tr.stats.wall_seconds },
    };
    write_json(&out.join("summary.json"), &summary)?;

    let f = fs::File::create(out.join("mpc_diagnostics.jsonl")).map_err(run_err)?;
    let mut f = BufWriter::new(f);
    for d in &run.log {
        writeln!(f, "{}", serde_json::to_string(d).map_err(run_err)?).map_err(run_err)?;
    }
    f.flush().map_err(run_err)?;

    // plot data for the SOC, velocity and temperature panels
    let h = &model.handles;
    let t = |k: usize| tr.times[k].to_string();
    let n = tr.times.len();
    write_csv(&out.join("soc.csv"), &["t", "soc"], (0..n).map(|k| vec![t(k), tr.states[k][h.soc].to_string()]))?;
    write_csv(
        &out.join("velocity.csv"),
        &["t", "reference_mph", "velocity_mph"],
        (0..n).map(|k| vec![t(k), (tr.reference[k] / MPH).to_string(), (model.vehicle_speed(&tr.states[k]) / MPH).to_string()]),
    )?;
    write_csv(
        &out.join("battery_temperature.csv"),
        &["t", "core_c", "surface_c"],
        (0..n).map(|k| {
            let x = &tr.states[k];
            vec![t(k), (x[h.battery_core_temp] - KELVIN).to_string(), (x[h.battery_surface_temp] - KELVIN).to_string()]
        }),
    )?;
    write_csv(
        &out.join("planetary_gear_temperature.csv"),
        &["t", "temperature_c"],
        (0..n).map(|k| vec![t(k), (tr.states[k][h.planetary_temp] - KELVIN).to_string()]),
    )
}

/// One line of history.jsonl. Non-finite objectives (failed runs) are
/// written as null.
#[derive(Serialize, Deserialize)]
struct HistoryLine {
    generation: usize,
    genes: Vec<f64>,
    design: DesignPoint,
    j_st: Option<f64>,
    j_sc: Option<f64>,
    j_en: Option<f64>,
    j_size: Option<f64>,
    j_tot_m1: Option<f64>,
    j_tot_m4: Option<f64>,
    #[serde(default)]
    avg_velocity_error_mph: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    failure: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<Meta>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl HistoryLine {
    fn components(&self) -> [f64; 4] {
        [self.j_st, self.j_sc, self.j_en, self.j_size].map(|v| v.unwrap_or(f64::INFINITY))
    }
}

#[derive(Clone, Serialize, Deserialize)]
struct Scored {
    design: DesignPoint,
    j_st: Option<f64>,
    j_sc: Option<f64>,
    j_en: Option<f64>,
    j_size: Option<f64>,
    j_tot_m1: Option<f64>,
    j_tot_m4: Option<f64>,
    avg_velocity_error_mph: Option<f64>,
}

impl Scored {
    fn new(r: &ObjectiveReport, w: &ObjectiveWeights) -> Self {
        Scored {
            design: r.design.clone(),
            j_st: finite(r.j_st),
            j_sc: finite(r.j_sc),
            j_en: finite(r.j_en),
            j_size: finite(r.j_size),
            j_tot_m1: finite(r.total(w, w.m_report)),
            j_tot_m4: finite(r.total(w, w.m_opt)),
            avg_velocity_error_mph: finite(r.avg_velocity_error_mph),
        }
    }

    fn values(&self) -> [f64; 5] {
        [self.j_st, self.j_sc, self.j_en, self.j_size, self.j_tot_m1].map(|v| v.unwrap_or(f64::INFINITY))
    }
}

#[derive(Serialize, Deserialize)]
struct BestFile {
    mode: Mode,
    seed: u64,
    best: Scored,
    /// Best member of the initial population, the reference of the
    /// comparison table. A sequential study inherits its plant study's.
    initial_best: Scored,
    best_per_generation: Vec<Option<f64>>,
}

/// 100·(1 − new/old); 0 when both vanish and −∞ when a zero grows.
fn reduction(old: f64, new: f64) -> f64 {
    if old == 0.0 {
        if new == 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        100.0 * (1.0 - new / old)
    }
}

pub fn optimize(
    c: &Common,
    mode: Mode,
    plant_optimum: Option<&Path>,
    generations: Option<usize>,
    jobs: Option<usize>,
) -> Result<()> {
    let cfg = RunConfig::resolve(c)?;
    if matches!(cfg.model, ModelChoice::Graph(_)) {
        return Err(usage("optimization needs the built-in hev model"));
    }
    let mut ga: GaConfig = cfg.ga.clone();
    ga.mode = mode;
    if let Some(g) = generations {
        ga.generations = g;
    }
    if jobs.is_some() {
        ga.jobs = jobs;
    }
    let mut inherited = None;
    if mode == Mode::Sequential {
        let p = plant_optimum
            .ok_or_else(|| usage("sequential mode needs --plant-optimum best.json from a plant study"))?;
        let text = fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
        let b: BestFile = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?;
        ga.fixed_theta = Some(b.best.design.theta);
        inherited = Some(b.initial_best);
    }
    ga.validate().map_err(usage)?;
    let sc = cfg.scenario()?;
    let model = hev()?;
    let w = &cfg.weights;
    let res = ga_optimize(&model, &ga, &sc, w).map_err(run_err)?;

    let out = &cfg.out;
    create_dir(out)?;
    let f = fs::File::create(out.join("history.jsonl")).map_err(run_err)?;
    let mut f = BufWriter::new(f);
    for e in &res.history.evaluations {
        let r = &e.record;
        let line = HistoryLine {
            generation: e.generation,
            genes: e.genes.clone(),
            design: r.design.clone(),
            j_st: finite(r.j_st),
            j_sc: finite(r.j_sc),
            j_en: finite(r.j_en),
            j_size: finite(r.j_size),
            j_tot_m1: finite(r.total(w, w.m_report)),
            j_tot_m4: finite(r.total(w, w.m_opt)),
            avg_velocity_error_mph: finite(r.avg_velocity_error_mph),
            failure: r.failure.clone(),
            meta: Some(Meta { wall_seconds: e.wall_seconds }),
        };
        writeln!(f, "{}", serde_json::to_string(&line).map_err(run_err)?).map_err(run_err)?;
    }
    f.flush().map_err(run_err)?;

    let best = Scored::new(&res.best().record, w);
    let initial = inherited.unwrap_or_else(|| Scored::new(&res.initial_best().record, w));
    let (b, i) = (best.values(), initial.values());
    let label = match mode {
        Mode::PlantOnly => "plant",
        Mode::Sequential => "sequential",
        Mode::Simultaneous => "simultaneous",
    };
    write_csv(
        &out.join("comparison.csv"),
        &[
            "design",
            "tracking_reduction_pct",
            "constraint_reduction_pct",
            "energy_reduction_pct",
            "size_reduction_pct",
            "total_reduction_pct",
        ],
        [std::iter::once(label.to_string()).chain((0..5).map(|k| reduction(i[k], b[k]).to_string())).collect()],
    )?;
    write_json(
        &out.join("best.json"),
        &BestFile {
            mode,
            seed: ga.seed,
            best,
            initial_best: initial,
            best_per_generation: res.history.best_per_generation.iter().map(|&v| finite(v)).collect(),
        },
    )
}

fn label_of(p: &Path) -> String {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if stem == "history" {
        if let Some(d) = p.parent().and_then(|d| d.file_name()) {
            return d.to_string_lossy().into_owned();
        }
    }
    stem
}

pub fn report(histories: &[PathBuf], config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let w = &cfg.weights;
    let mut rows = Vec::new();
    for p in histories {
        let text = fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
        let mut best: Option<(f64, [f64; 4])> = None;
        for (k, l) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let h: HistoryLine =
                serde_json::from_str(l).map_err(|e| usage(format!("{}:{}: {e}", p.display(), k + 1)))?;
            let j = h.components();
            let f = total_objective(j, w.w, w.m_opt);
            if best.is_none_or(|(b, _)| f < b) {
                best = Some((f, j));
            }
        }
        let (_, j) = best.ok_or_else(|| usage(format!("{} holds no evaluations", p.display())))?;
        rows.push((label_of(p), j));
    }
    let out = out.map(Path::to_path_buf).unwrap_or(cfg.out);
    create_dir(&out)?;
    write_csv(
        &out.join("spider.csv"),
        &["design", "tracking", "constraint", "energy", "size"],
        rows.iter().map(|(l, j)| std::iter::once(l.clone()).chain((0..4).map(|k| (w.w[k] * j[k]).to_string())).collect()),
    )?;
    write_csv(
        &out.join("totals.csv"),
        &["design", "j_tot"],
        rows.iter().map(|(l, j)| vec![l.clone(), total_objective(*j, w.w, w.m_report).to_string()]),
    )
}
