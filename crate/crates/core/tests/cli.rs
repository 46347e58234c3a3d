use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rdasim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdasim")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = rdasim(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

// a short light-traffic run keeps the binary tests quick
const SHORT: &str = r#"{"congestion":"light","overrides":{"duration":500,"warmup":100}}"#;
const SHORT_ATTACK: &str =
    r#"{"congestion":"light","attack":"strong","compromise_fraction":0.2,"overrides":{"duration":500,"warmup":100}}"#;

#[test]
fn simulate_baseline_and_attack() {
    let dir = tempfile::tempdir().unwrap();
    let base_cfg = dir.path().join("base.json");
    let att_cfg = dir.path().join("att.json");
    fs::write(&base_cfg, SHORT).unwrap();
    fs::write(&att_cfg, SHORT_ATTACK).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    ok(&["simulate", "--config", p(&base_cfg), "--out", p(&a)]);
    ok(&["simulate", "--config", p(&base_cfg), "--out", p(&b)]);
    ok(&["simulate", "--config", p(&att_cfg), "--out", p(&c)]);

    assert!(json(&a.join("impact.json")).get("aac").is_none());
    let att = json(&c.join("impact.json"));
    assert!(att["aac"].as_f64().unwrap() >= 0.0);
    assert!(c.join("baseline_impact.json").exists());

    // same config and seed: byte-identical trajectories
    assert_eq!(fs::read(a.join("trajectories.csv")).unwrap(), fs::read(b.join("trajectories.csv")).unwrap());

    let m = json(&a.join("manifest.json"));
    assert_eq!(m["tool"], "rdasim");
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert!(m["config_hash"].is_string());
    assert_eq!(m["seed"], m["config"]["seed"]);

    // --seed changes the run
    let d = dir.path().join("d");
    ok(&["--seed", "9", "simulate", "--config", p(&base_cfg), "--out", p(&d)]);
    assert_eq!(json(&d.join("manifest.json"))["seed"], 9);
    assert_ne!(fs::read(a.join("trajectories.csv")).unwrap(), fs::read(d.join("trajectories.csv")).unwrap());
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"congestion\": \"medium\",\n  \"sed\": 3\n}\n").unwrap();
    let out = rdasim(&["simulate", "--config", p(&bad), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sed") && err.contains("line 3"), "{err}");

    let out = rdasim(&["simulate", "--config", p(&dir.path().join("missing.json")), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn watchdog_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("stall.json");
    fs::write(
        &cfg,
        r#"{"congestion":"light","compromise_fraction":1.0,
            "overrides":{"acc_fraction":1.0,"duration":700,"warmup":100,
                         "attack":{"mean_interarrival":0.001,"t_attack":1000}}}"#,
    )
    .unwrap();
    let out = rdasim(&["simulate", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gridlock"));
}

#[test]
fn grid_resumes_and_reports_failures() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("grid.json");
    fs::write(
        &spec,
        r#"{"attacks":["strong"],"congestion":["light"],"compromise":[0.2],"seeds":[1,2],
            "overrides":{"duration":500,"warmup":100}}"#,
    )
    .unwrap();
    let out = dir.path().join("g");
    ok(&["--jobs", "2", "grid", "--config", p(&spec), "--out", p(&out)]);
    let ledger = fs::read_to_string(out.join("ledger.csv")).unwrap();
    assert_eq!(ledger.lines().count(), 1 + 4);
    assert!(ledger.lines().filter(|l| l.contains(",attack,")).all(|l| !l.ends_with(",,")));

    // drop one cell and rerun: only that cell runs, the ledger is unchanged
    let cells: Vec<_> = fs::read_dir(out.join("cells")).unwrap().map(|e| e.unwrap().path()).collect();
    fs::remove_dir_all(&cells[0]).unwrap();
    let rerun = rdasim(&["--jobs", "1", "grid", "--config", p(&spec), "--out", p(&out)]);
    assert!(rerun.status.success());
    assert!(String::from_utf8_lossy(&rerun.stderr).contains("1 run, 3 reused"));
    assert_eq!(fs::read_to_string(out.join("ledger.csv")).unwrap(), ledger);

    // single cell: one ledger row
    let one = dir.path().join("one.json");
    fs::write(&one, r#"{"attacks":[],"congestion":["light"],"seeds":[3],"overrides":{"duration":500,"warmup":100}}"#)
        .unwrap();
    ok(&["grid", "--config", p(&one), "--out", p(&dir.path().join("o1"))]);
    assert_eq!(fs::read_to_string(dir.path().join("o1/ledger.csv")).unwrap().lines().count(), 2);

    // stalled attack cells fail without stopping the grid
    let stall = dir.path().join("stall.json");
    fs::write(
        &stall,
        r#"{"attacks":["strong"],"congestion":["light"],"compromise":[1.0],"acc_fraction":1.0,"seeds":[1],
            "overrides":{"duration":700,"warmup":100,"attack":{"mean_interarrival":0.001,"t_attack":1000}}}"#,
    )
    .unwrap();
    let res = rdasim(&["grid", "--config", p(&stall), "--out", p(&dir.path().join("o2"))]);
    assert_eq!(res.status.code(), Some(3));
    let ledger = fs::read_to_string(dir.path().join("o2/ledger.csv")).unwrap();
    assert!(ledger.contains(",baseline,none,light,0,1,ok,"));
    assert!(ledger.contains(",failed,"));
    assert_eq!(json(&dir.path().join("o2/manifest.json"))["status"], "partial");
}

#[test]
fn detector_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("base.json");
    fs::write(&cfg, SHORT).unwrap();
    let run = dir.path().join("run");
    ok(&["simulate", "--config", p(&cfg), "--out", p(&run)]);
    let model = dir.path().join("model");
    ok(&[
        "detector",
        "train",
        "--run",
        p(&run),
        "--out",
        p(&model),
        "--epochs",
        "5",
        "--vehicles",
        "0",
        "--samples-per-vehicle",
        "2",
    ]);
    let m = json(&model.join("model.json"));
    assert_eq!(m["format"], "rdasim-autoencoder");

    // scoring the training run flags nobody
    let scores = dir.path().join("scores");
    ok(&["detector", "score", "--model", p(&model.join("model.json")), "--run", p(&run), "--out", p(&scores)]);
    let csv = fs::read_to_string(scores.join("scores.csv")).unwrap();
    assert!(csv.lines().count() > 10);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",benign")), "{csv}");

    let sweep = dir.path().join("sweep");
    ok(&[
        "detector",
        "sweep",
        "--model",
        p(&model.join("model.json")),
        "--start-speed",
        "25",
        "--out",
        p(&sweep),
        "--a-steps",
        "3",
        "--t-steps",
        "4",
    ]);
    let surface = fs::read_to_string(sweep.join("loss_surface.csv")).unwrap();
    assert_eq!(surface.lines().count(), 1 + 12);

    let out = rdasim(&[
        "detector",
        "score",
        "--model",
        p(&dir.path().join("nope.json")),
        "--run",
        p(&run),
        "--out",
        p(&scores),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing model"));

    let st = dir.path().join("st");
    ok(&[
        "export-spacetime",
        "--run",
        p(&run),
        "--channel",
        "anomaly-score",
        "--model",
        p(&model.join("model.json")),
        "--out",
        p(&st),
    ]);
    let text = fs::read_to_string(st.join("spacetime.csv")).unwrap();
    assert!(text.starts_with("vehicle_id,t,position_m,lane,anomaly_score"));
    assert!(text.lines().count() > 100);
}

#[test]
fn canbus_commands() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    ok(&["--seed", "2", "canbus", "generate", "--out", p(&gen), "--duration", "60"]);
    for (mode, sub) in [("overwrite", "ow"), ("flood", "fl")] {
        let inj = dir.path().join(sub);
        ok(&["canbus", "inject", "--log", p(&gen.join("test.csv")), "--mode", mode, "--out", p(&inj)]);
        let det = dir.path().join(format!("{sub}-det"));
        ok(&[
            "canbus",
            "detect",
            "--train",
            p(&gen.join("train.csv")),
            "--test",
            p(&inj.join("test.csv")),
            "--out",
            p(&det),
        ]);
        let ev = dir.path().join(format!("{sub}-ev"));
        ok(&[
            "canbus",
            "evaluate",
            "--log",
            p(&inj.join("test.csv")),
            "--predictions",
            p(&det.join("predictions.csv")),
            "--out",
            p(&ev),
        ]);
        let m = json(&ev.join("metrics.json"));
        let tpr = m["transition"]["tpr"].as_f64().unwrap();
        if mode == "overwrite" {
            assert_eq!(tpr, 0.0);
            assert_eq!(m["frequency"]["tpr"].as_f64().unwrap(), 0.0);
        } else {
            assert!(tpr >= 0.9, "{m}");
        }
    }

    // predictions that do not cover the log are rejected
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "timestamp_s,msg_id_hex,transition_label,frequency_label\n").unwrap();
    let out = rdasim(&[
        "canbus",
        "evaluate",
        "--log",
        p(&gen.join("test.csv")),
        "--predictions",
        p(&empty),
        "--out",
        p(&dir.path().join("x")),
    ]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("length mismatch"));

    let out = rdasim(&[
        "canbus",
        "inject",
        "--log",
        p(&gen.join("test.csv")),
        "--mode",
        "overwrite",
        "--start",
        "0",
        "--end",
        "1e6",
        "--out",
        p(&dir.path().join("y")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
