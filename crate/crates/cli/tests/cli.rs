use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chainreach"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn graph_edges() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let text = ok(d, &["graph", "--model", "quad4", "--out", "q"]);
    let edges: Vec<&str> = text.lines().filter(|l| l.contains(" -> ") && !l.starts_with("model")).collect();
    assert_eq!(edges, ["z1 -> z2", "z2 -> z3", "z3 -> z4"]);
    let g = json(&d.join("q/graph.json"));
    assert_eq!(g["edges"].as_array().unwrap().len(), 3);
    assert_eq!(g["labels"][0], "z1");

    ok(d, &["graph", "--model", "bicycle6", "--out", "b"]);
    assert_eq!(json(&d.join("b/graph.json"))["edges"].as_array().unwrap().len(), 13);
    ok(d, &["graph", "--model", "decoupled", "--param", "n=3", "--out", "c"]);
    assert_eq!(json(&d.join("c/graph.json"))["edges"].as_array().unwrap().len(), 0);
}

#[test]
fn plan_ranking_and_validation() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let text = ok(d, &["plan", "--model", "quad4", "--plan", "auto:2"]);
    let first = text.lines().nth(1).unwrap();
    assert!(first.ends_with("z1,z2|z2,z3|z3,z4"), "{first}");
    let cols: Vec<&str> = first.split_whitespace().collect();
    assert_eq!(&cols[..4], ["1", "3", "2", "3"]);

    let text = ok(d, &["plan", "--model", "bicycle6"]);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(&row[2..4], ["3", "4"]);

    let text = ok(d, &["plan", "--model", "quad4", "--plan", "auto:4"]);
    assert!(text.lines().nth(1).unwrap().ends_with("z1,z2,z3,z4"));

    let out = run(d, &["plan", "--model", "quad4", "--plan", "z1,z2|z3,z4"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(d, &["plan", "--model", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

fn listed(manifest: &Value) -> BTreeSet<String> {
    manifest["series"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|s| s["checkpoints"].as_array().unwrap().iter())
        .map(|c| c["file"].as_str().unwrap().to_string())
        .collect()
}

fn dir_files(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|f| f != "manifest.json")
        .collect()
}

#[test]
fn solve_writes_complete_reproducible_runs() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let common = ["--model", "quad4", "--grid", "7", "--horizon", "0.3"];
    for (mode, out) in [("full", "f"), ("decomposed", "a"), ("decomposed", "b")] {
        let mut args = vec!["solve", "--mode", mode, "--out", out];
        args.extend(common);
        ok(d, &args);
    }
    let f = json(&d.join("f/manifest.json"));
    assert_eq!(f["series"].as_array().unwrap().len(), 1);
    assert_eq!(f["mode"], "full");
    assert_eq!(listed(&f), dir_files(&d.join("f")));

    let a = json(&d.join("a/manifest.json"));
    assert_eq!(a["series"].as_array().unwrap().len(), 3);
    assert_eq!(a["plan"], "z1,z2|z2,z3|z3,z4");
    assert_eq!(a["horizon"], 0.3);
    assert_eq!(a["target"].as_array().unwrap().len(), 3);
    assert_eq!(a["scheme"], "o1,euler,llf,running");
    assert_eq!(listed(&a), dir_files(&d.join("a")));
    // four checkpoints per series: 0, -0.1, -0.2, -0.3
    assert_eq!(listed(&a).len(), 12);

    for f in dir_files(&d.join("a")).iter().chain([&"manifest.json".to_string()]) {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }

    let text = ok(d, &["compare", "f", "f"]);
    assert!(text.contains("max(V_approx - V_ref) = 0.000000e0"), "{text}");
    assert!(text.contains("violations (V_approx > V_ref + 1e-6): 0"));
    let text = ok(d, &["compare", "f", "a"]);
    assert!(text.contains("volume ratio"));
    let text = ok(d, &["compare", "f/manifest.json", "a", "--time", "-0.1"]);
    assert!(text.contains("reference s = -0.1"), "{text}");
}

#[test]
fn horizon_zero_writes_initial_fields_only() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    ok(d, &["solve", "--model", "quad4", "--grid", "5", "--horizon", "0", "--out", "z"]);
    let m = json(&d.join("z/manifest.json"));
    assert_eq!(listed(&m).len(), 3);
    assert_eq!(m["dt_history"].as_array().unwrap().len(), 0);
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let cap = run(d, &["solve", "--model", "quad4", "--grid", "31", "--mode", "full", "--mem-cap-points", "1000"]);
    assert_eq!(cap.status.code(), Some(4));
    let bad = run(d, &["solve", "--model", "quad4", "--target", "z9 < 0"]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = run(d, &["solve", "--model", "quad4", "--scheme", "o7"]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = run(d, &["solve", "--model", "quad4", "--cfl", "1.5"]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = run(d, &["solve"]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = run(d, &["compare", "missing", "missing"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_file_and_flag_precedence() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    fs::write(
        d.join("run.toml"),
        "[model]\nname = \"double_int\"\n[grid]\nk = 9\n[target]\nconstraints = [\"z1 < -1\"]\n\
         [solver]\nhorizon = 0.2\ncheckpoint_dt = 0.1\n[run]\nout = \"from_file\"\nseed = 5\n",
    )
    .unwrap();
    ok(d, &["solve", "--config", "run.toml", "--mode", "full"]);
    let m = json(&d.join("from_file/manifest.json"));
    assert_eq!(m["model"], "double_int");
    assert_eq!(m["grid"]["counts"], serde_json::json!([9, 9]));
    assert_eq!(m["target"], serde_json::json!(["z1 < -1"]));
    assert_eq!(m["seed"], 5);

    ok(d, &["solve", "--config", "run.toml", "--mode", "full", "--grid", "11", "--horizon", "0.1", "--out", "flags"]);
    let m = json(&d.join("flags/manifest.json"));
    assert_eq!(m["grid"]["counts"], serde_json::json!([11, 11]));
    assert_eq!(m["horizon"], 0.1);
    assert_eq!(m["target"], serde_json::json!(["z1 < -1"]));
}

#[test]
fn simulate_slice_and_bench() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    ok(d, &["solve", "--model", "quad4", "--grid", "9", "--horizon", "0.5", "--out", "run"]);
    let text = ok(d, &["simulate", "--from", "run", "--samples", "3", "--z0", "0,-5,-3,0", "--out", "sim"]);
    assert!(text.contains("of 4 safe"), "{text}");
    let summary = json(&d.join("sim/simulate.json"));
    let rows = summary["trajectories"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    // starts inside the target are unsafe from the first sample
    assert_eq!(rows[0]["safe"], false);
    for k in 0..4 {
        let csv = fs::read_to_string(d.join(format!("sim/traj_{k}.csv"))).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "time,z1,z2,z3,z4,u,d,l");
    }

    let again = ok(d, &["simulate", "--from", "run", "--samples", "3", "--z0", "0,-5,-3,0", "--out", "sim2"]);
    assert_eq!(text, again);
    assert_eq!(fs::read(d.join("sim/traj_3.csv")).unwrap(), fs::read(d.join("sim2/traj_3.csv")).unwrap());

    let m = json(&d.join("run/manifest.json"));
    let last = m["series"][1]["checkpoints"].as_array().unwrap().last().unwrap()["file"].as_str().unwrap().to_string();
    let text = ok(d, &["slice", &format!("run/{last}"), "--fix", "z3=-2", "--out", "sl"]);
    assert!(text.contains("slice over z2"), "{text}");
    let csv = fs::read_to_string(d.join("sl/slice.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);
    let bad = run(d, &["slice", &format!("run/{last}"), "--fix", "z1=0"]);
    assert_eq!(bad.status.code(), Some(2));

    let text = ok(d, &["bench", "--model", "quad4", "--ks", "5"]);
    assert!(text.contains("n/a"), "{text}");
    let text = ok(d, &["bench", "--model", "double_int", "--mode", "full", "--ks", "11,21", "--horizon", "0.2"]);
    assert!(text.contains("log-log slope: "), "{text}");
}
