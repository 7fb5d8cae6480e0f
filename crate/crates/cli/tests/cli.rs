// 6.28 is a table value, not τ
#![allow(clippy::approx_constant)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ccd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccd")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr_line(o: &Output) -> String {
    let e = String::from_utf8_lossy(&o.stderr).into_owned();
    assert_eq!(e.trim_end().lines().count(), 1, "stderr: {e}");
    e
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// History lines with every J field set; the design is irrelevant to report.
fn history_line(j: [f64; 4]) -> String {
    format!(
        r#"{{"generation":0,"genes":[],"design":{{"theta":[1,1,1,1,1,1],"phi":{{"dt":1.0,"eps":0.25,"w_vel":100.0}}}},"j_st":{},"j_sc":{},"j_en":{},"j_size":{},"j_tot_m1":null,"j_tot_m4":null}}"#,
        j[0], j[1], j[2], j[3]
    )
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(p).unwrap().lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn validate_writes_all_artifacts() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("v");
    let o = ccd(&["validate", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "hev_model.json",
        "handles.json",
        "trace.csv",
        "summary.json",
        "mpc_diagnostics.jsonl",
        "soc.csv",
        "velocity.csv",
        "battery_temperature.csv",
        "planetary_gear_temperature.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let err = v["avg_velocity_error_mph"].as_f64().unwrap();
    assert!(err < 3.0, "{err}");
    assert_eq!(fs::read_to_string(out.join("velocity.csv")).unwrap().lines().count(), 302);
}

#[test]
fn speed_units_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let mph: Vec<(f64, f64)> = (0..=20).map(|t| (t as f64, (t as f64 * 0.7).min(9.0))).collect();
    let text = |f: &dyn Fn(f64) -> f64| {
        let mut s = String::from("time_s,speed\n");
        for (t, v) in &mph {
            s += &format!("{t},{}\n", f(*v));
        }
        s
    };
    let a = write(d.path(), "mph.csv", &text(&|v| v));
    let b = write(d.path(), "mps.csv", &text(&|v| v * 0.44704));
    let cfg = write(d.path(), "cfg.json", r#"{"scenario": {"t_final": 20}}"#);
    let run = |cycle: &Path, units: &str, out: &str| {
        let out = d.path().join(out);
        let o = ccd(&["validate", "--config", s(&cfg), "--cycle", s(cycle), "--units", units, "--out", s(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("trace.csv")).unwrap()
    };
    assert_eq!(run(&a, "mph", "a"), run(&b, "mps", "b"));
}

#[test]
fn missing_cycle_fails_fast() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("out");
    let o = ccd(&["validate", "--cycle", "/no/such/cycle.csv", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_line(&o).starts_with("error:"));
    assert!(!out.exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "cfg.json", r#"{"scenario": {"t_finale": 20}}"#);
    let o = ccd(&["validate", "--config", s(&cfg), "--out", s(&d.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_line(&o).contains("t_finale"));
}

#[test]
fn bad_modes_and_missing_plant_optimum_exit_2() {
    let o = ccd(&["optimize", "--mode", "hybrid"]);
    assert_eq!(o.status.code(), Some(2));
    stderr_line(&o);
    let o = ccd(&["optimize", "--mode", "sequential"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_line(&o).contains("--plant-optimum"));
}

fn strip_meta(text: &str) -> Vec<serde_json::Value> {
    text.lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("meta");
            v
        })
        .collect()
}

#[test]
fn studies_are_reproducible_and_chain() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "cfg.json", r#"{"scenario": {"t_final": 4}, "ga": {"population": 4}}"#);
    let plant = |out: &str| {
        let out = d.path().join(out);
        let o = ccd(&["optimize", "--mode", "plant", "--seed", "7", "--generations", "2", "--config", s(&cfg), "--out", s(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (plant("a"), plant("b"));
    let ha = fs::read_to_string(a.join("history.jsonl")).unwrap();
    assert_eq!(strip_meta(&ha), strip_meta(&fs::read_to_string(b.join("history.jsonl")).unwrap()));
    assert!(ha.lines().count() >= 4);
    assert_eq!(fs::read(a.join("comparison.csv")).unwrap(), fs::read(b.join("comparison.csv")).unwrap());
    let rows = csv_rows(&a.join("comparison.csv"));
    assert_eq!(
        rows[0],
        [
            "design",
            "tracking_reduction_pct",
            "constraint_reduction_pct",
            "energy_reduction_pct",
            "size_reduction_pct",
            "total_reduction_pct"
        ]
    );
    assert_eq!(rows[1][0], "plant");

    let seq = d.path().join("seq");
    let o = ccd(&[
        "optimize",
        "--mode",
        "sequential",
        "--plant-optimum",
        s(&a.join("best.json")),
        "--generations",
        "1",
        "--config",
        s(&cfg),
        "--out",
        s(&seq),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let best: serde_json::Value = serde_json::from_str(&fs::read_to_string(seq.join("best.json")).unwrap()).unwrap();
    let plant_best: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("best.json")).unwrap()).unwrap();
    assert_eq!(best["best"]["design"]["theta"], plant_best["best"]["design"]["theta"]);
    assert_eq!(best["initial_best"], plant_best["initial_best"]);
}

#[test]
fn report_tabulates_weighted_components() {
    let d = tempfile::tempdir().unwrap();
    let tables = [
        ("initial", [13.1, 0.0, 1.48, 15.0]),
        ("plant", [10.7, 0.0, 1.25, 6.28]),
        ("sequential", [7.69, 0.0, 1.24, 6.28]),
        ("simultaneous", [5.58, 0.0752, 1.32, 5.66]),
    ];
    let mut paths = Vec::new();
    for (name, j) in tables {
        // a worse line first, so the report must pick the best one
        let worse = j.map(|v| v + 1.0);
        paths.push(write(d.path(), &format!("{name}.jsonl"), &format!("{}\n{}\n", history_line(worse), history_line(j))));
    }
    let out = d.path().join("r");
    let mut args = vec!["report", "--out", s(&out)];
    args.extend(paths.iter().map(|p| s(p)));
    let o = ccd(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let totals = csv_rows(&out.join("totals.csv"));
    let spider = csv_rows(&out.join("spider.csv"));
    assert_eq!(totals.len(), 5);
    for (k, (name, j)) in tables.iter().enumerate() {
        assert_eq!(totals[k + 1][0], *name);
        let t: f64 = totals[k + 1][1].parse().unwrap();
        assert_eq!(t, 0.5 * j[0] + 0.5 * j[1] + 0.5 * j[2] + 0.5 * j[3]);
        for c in 0..4 {
            assert_eq!(spider[k + 1][c + 1].parse::<f64>().unwrap(), 0.5 * j[c]);
        }
    }

    let one = d.path().join("one");
    let o = ccd(&["report", "--out", s(&one), s(&paths[0])]);
    assert!(o.status.success());
    assert_eq!(csv_rows(&one.join("totals.csv")).len(), 2);
}
