use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn timeleak(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_timeleak"))
        .current_dir(dir)
        .env_remove("TIMELEAK_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = timeleak(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = timeleak(dir, args);
    (out.status.code().expect("exited"), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn json_at(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn manifest_hash(path: PathBuf) -> String {
    json_at(path)["manifest_hash"].as_str().unwrap().to_string()
}

/// Quick sweep flags: small budget, one restart per width.
const FAST: [&str; 10] = [
    "--preset", "R_2", "--max-epochs", "40", "--patience", "5", "--seeds-per-k", "1", "--kmax", "2",
];

fn r2_data(dir: &Path) {
    ok(dir, &["gen", "--family", "rn", "--preset", "R_2", "--rows", "200", "--seed", "3", "--out", "d/r2.csv"]);
}

fn sweep(dir: &Path, out_dir: &str, extra: &[&str]) -> String {
    let mut args = vec!["sweep", "--data", "d/r2.csv", "--out-dir", out_dir];
    args.extend(FAST);
    args.extend(extra);
    ok(dir, &args)
}

#[test]
fn gen_writes_csv_and_sidecars() {
    let t = TempDir::new().unwrap();
    let out = ok(t.path(), &["gen", "--family", "rn", "--preset", "R_3", "--rows", "800", "--seed", "1", "--out", "r3.csv"]);
    assert!(out.contains("800 rows"));
    let csv = std::fs::read_to_string(t.path().join("r3.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "s_0,s_1,s_2,p_0,p_1,p_2,p_3,p_4,p_5,p_6,time");
    assert_eq!(lines.count(), 800);

    let schema = json_at(t.path().join("r3.schema.json"));
    assert_eq!(schema["secret"].as_array().unwrap().len(), 3);
    let truth = json_at(t.path().join("r3.truth.json"));
    let mut sizes: Vec<u64> = truth["class_sizes"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    sizes.sort();
    assert_eq!(sizes, vec![2, 3, 3]);
    // (2 log2 2 + 3 log2 3 + 3 log2 3) / 8
    let se_o = (2.0 + 6.0 * 3f64.log2()) / 8.0;
    assert!((truth["se_o"].as_f64().unwrap() - se_o).abs() < 1e-12);

    let m = json_at(t.path().join("r3.manifest.json"));
    let hash = m["manifest_hash"].as_str().unwrap();
    assert_eq!(schema["manifest_hash"], hash);
    assert_eq!(truth["manifest_hash"], hash);
    assert_eq!(m["manifest"]["seed"], 1);
    assert!(m["wall_clock_seconds"]["generate"].is_number());
}

#[test]
fn gen_families_and_determinism() {
    let t = TempDir::new().unwrap();
    ok(t.path(), &["gen", "--family", "bl", "--i", "2", "--rows", "1512", "--out", "bl.csv"]);
    let bl = std::fs::read_to_string(t.path().join("bl.csv")).unwrap();
    assert_eq!(bl.lines().count(), 1513);
    assert!(bl.lines().next().unwrap().ends_with("p_n,time"));
    let truth = json_at(t.path().join("bl.truth.json"));
    assert_eq!(truth["classes"], 8);

    ok(t.path(), &["gen", "--family", "sort", "--rows", "500", "--out", "sort.csv"]);
    assert_eq!(std::fs::read_to_string(t.path().join("sort.csv")).unwrap().lines().count(), 501);
    assert!(!t.path().join("sort.truth.json").exists());

    let files = ["bl.csv", "bl.schema.json", "bl.truth.json"];
    let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(t.path().join(f)).unwrap()).collect();
    ok(t.path(), &["gen", "--family", "bl", "--i", "2", "--rows", "1512", "--out", "bl.csv"]);
    for (f, bytes) in files.iter().zip(first) {
        assert_eq!(std::fs::read(t.path().join(f)).unwrap(), bytes, "{f}");
    }
}

#[test]
fn gen_errors_exit_2() {
    let t = TempDir::new().unwrap();
    for args in [
        vec!["gen", "--family", "rn", "--out", "x.csv"],
        vec!["gen", "--family", "rn", "--preset", "R_99", "--out", "x.csv"],
        vec!["gen", "--family", "bl", "--i", "0", "--out", "x.csv"],
        vec!["gen", "--family", "rn", "--preset", "R_2", "--noise", "-1", "--out", "x.csv"],
        vec!["gen", "--family", "sort", "--noise", "0.1", "--out", "x.csv"],
    ] {
        let (c, err) = code(t.path(), &args);
        assert_eq!(c, 2, "{args:?}: {err}");
        assert!(err.starts_with("error: "), "{err}");
    }
    assert!(!t.path().join("x.csv").exists());
}

#[test]
fn pipeline_artifacts_reference_their_manifests() {
    let t = TempDir::new().unwrap();
    let dir = t.path();
    r2_data(dir);
    let out = sweep(dir, "sw", &[]);
    assert!(out.contains("k*="));
    let hash = manifest_hash(dir.join("sw/manifest.json"));
    let sw = json_at(dir.join("sw/sweep.json"));
    assert_eq!(sw["manifest_hash"], hash.as_str());
    assert_eq!(sw["records"].as_array().unwrap().len(), 3);
    for k in 0..=2 {
        assert_eq!(sw["records"][k]["model_path"], format!("model_k{k}.json"));
        assert_eq!(json_at(dir.join(format!("sw/model_k{k}.json")))["manifest_hash"], hash.as_str());
    }
    let svg = std::fs::read_to_string(dir.join("sw/sse.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("k*="));

    ok(dir, &["analyze", "--model", "sw/model_k1.json", "--out", "c1.json"]);
    let census = json_at(dir.join("c1.json"));
    assert_eq!(census["manifest_hash"], manifest_hash(dir.join("c1.manifest.json")).as_str());
    assert_eq!(census["k"], 1);
    assert_eq!(census["cap"], 4);
    assert_eq!(census["complete"], true);
    let total: u64 = census["classes"].as_array().unwrap().iter().map(|c| c["count"].as_u64().unwrap()).sum();
    assert_eq!(total, 4);

    let summary = ok(dir, &["report", "--census", "c1.json", "--out", "rep.json"]);
    assert!(summary.starts_with("k=1, K="), "{summary}");
    assert!(summary.trim_end().ends_with(" bits"));
    let rep = json_at(dir.join("rep.json"));
    assert_eq!(rep["provenance"]["manifest_hash"], manifest_hash(dir.join("rep.manifest.json")).as_str());
    assert_eq!(rep["provenance"]["model_hash"], census["model_hash"]);
}

#[test]
fn sweep_is_reproducible_across_thread_counts() {
    let t = TempDir::new().unwrap();
    let dir = t.path();
    r2_data(dir);
    sweep(dir, "sw", &["--threads", "1"]);
    let names = ["sweep.json", "model_k0.json", "model_k1.json", "model_k2.json", "sse.svg"];
    let first: Vec<Vec<u8>> = names.iter().map(|n| std::fs::read(dir.join("sw").join(n)).unwrap()).collect();
    sweep(dir, "sw", &["--threads", "3"]);
    for (n, bytes) in names.iter().zip(first) {
        assert_eq!(std::fs::read(dir.join("sw").join(n)).unwrap(), bytes, "{n}");
    }
}

#[test]
fn larger_tau_never_picks_a_wider_interface() {
    let t = TempDir::new().unwrap();
    let dir = t.path();
    r2_data(dir);
    sweep(dir, "a", &["--tau", "0.05"]);
    sweep(dir, "b", &["--tau", "0.5"]);
    let (a, b) = (json_at(dir.join("a/sweep.json")), json_at(dir.join("b/sweep.json")));
    assert_eq!(a["records"], b["records"]);
    assert!(b["chosen_k"].as_u64() <= a["chosen_k"].as_u64());
}

#[test]
fn config_file_fills_in_and_flags_win() {
    let t = TempDir::new().unwrap();
    let dir = t.path();
    r2_data(dir);
    std::fs::write(dir.join("cfg.json"), json!({ "kmax": 1, "max_epochs": 20, "patience": 3 }).to_string()).unwrap();
    let base = ["sweep", "--data", "d/r2.csv", "--preset", "R_2", "--seeds-per-k", "1", "--config", "cfg.json"];
    ok(dir, &[&base[..], &["--out-dir", "one"]].concat());
    assert_eq!(json_at(dir.join("one/sweep.json"))["records"].as_array().unwrap().len(), 2);
    let m = json_at(dir.join("one/manifest.json"));
    assert_eq!(m["manifest"]["config"]["train"]["max_epochs"], 20);

    ok(dir, &[&base[..], &["--out-dir", "two", "--kmax", "2"]].concat());
    assert_eq!(json_at(dir.join("two/sweep.json"))["records"].as_array().unwrap().len(), 3);

    std::fs::write(dir.join("bad.json"), r#"{"k_max": 1}"#).unwrap();
    let (c, err) = code(dir, &["sweep", "--data", "d/r2.csv", "--config", "bad.json", "--out-dir", "x"]);
    assert_eq!(c, 3);
    assert!(err.contains("k_max"), "{err}");
}

#[test]
fn training_failures_exit_3() {
    let t = TempDir::new().unwrap();
    let dir = t.path();
    std::fs::write(dir.join("bad.csv"), "s_0,p_0,time\n1,2,oops\n").unwrap();
    std::fs::write(dir.join("cfg.json"), "{ not json").unwrap();
    for args in [
        vec!["train", "--data", "bad.csv", "--out", "m.json"],
        vec!["train", "--data", "missing.csv", "--out", "m.json"],
        vec!["sweep", "--data", "bad.csv", "--out-dir", "s"],
        vec!["sweep", "--data", "bad.csv", "--config", "cfg.json", "--out-dir", "s"],
        vec!["train", "--data", "bad.csv", "--preset", "R_0", "--out", "m.json"],
    ] {
        let (c, err) = code(dir, &args);
        assert_eq!(c, 3, "{args:?}: {err}");
    }
    r2_data(dir);
    let (c, err) = code(dir, &["train", "--data", "d/r2.csv", "--lr", "0", "--out", "m.json"]);
    assert_eq!(c, 3, "{err}");
    let (c, _) = code(dir, &["sweep", "--data", "d/r2.csv", "--kmax", "0", "--out-dir", "s"]);
    assert_eq!(c, 3);
}

#[test]
fn train_then_analyze_with_cap_one() {
    let t = TempDir::new().unwrap();
    let dir = t.path();
    r2_data(dir);
    let out = ok(dir, &["train", "--data", "d/r2.csv", "--preset", "R_2", "--k", "2", "--max-epochs", "30", "--out", "m.json"]);
    assert!(out.starts_with("k=2 "), "{out}");
    let model = json_at(dir.join("m.json"));
    assert_eq!(model["manifest_hash"], manifest_hash(dir.join("m.manifest.json")).as_str());
    assert!(model["metrics"]["r2"].is_number());

    ok(dir, &["analyze", "--model", "m.json", "--cap", "1", "--out", "c.json"]);
    let census = json_at(dir.join("c.json"));
    let model_hash = hex_sha256(&std::fs::read(dir.join("m.json")).unwrap());
    assert_eq!(census["model_hash"], model_hash.as_str());
    for c in census["classes"].as_array().unwrap() {
        let status = c["status"].as_str().unwrap();
        assert!(status == "cap_hit" || status == "infeasible", "{c}");
        if status == "cap_hit" {
            assert_eq!(c["count"], 1);
        }
    }
}

#[test]
fn analyze_failures_exit_4() {
    let t = TempDir::new().unwrap();
    let dir = t.path();
    r2_data(dir);
    ok(dir, &["train", "--data", "d/r2.csv", "--k", "0", "--max-epochs", "5", "--out", "m0.json"]);
    let (c, err) = code(dir, &["analyze", "--model", "m0.json", "--out", "c.json"]);
    assert_eq!(c, 4);
    assert!(err.contains("k=0 model has no reducer"), "{err}");
    let (c, _) = code(dir, &["analyze", "--model", "d/r2.csv", "--out", "c.json"]);
    assert_eq!(c, 4);
    let (c, _) = code(dir, &["analyze", "--model", "nowhere.json", "--out", "c.json"]);
    assert_eq!(c, 4);

    // A budget of one node cannot settle a 2-bit interface: the partial
    // census is still written.
    ok(dir, &["train", "--data", "d/r2.csv", "--k", "2", "--max-epochs", "5", "--out", "m2.json"]);
    let (c, err) = code(dir, &["analyze", "--model", "m2.json", "--budget", "1", "--out", "partial.json"]);
    if c != 0 {
        assert_eq!(c, 4);
        assert!(err.contains("budget"), "{err}");
        assert_eq!(json_at(dir.join("partial.json"))["complete"], false);
    }
}

fn census_json(k: usize, counts: &[u64]) -> String {
    let classes: Vec<Value> = (0..1usize << k)
        .map(|v| {
            let valuation: String = (0..k).rev().map(|b| if v >> b & 1 == 1 { '1' } else { '0' }).collect();
            match counts.get(v) {
                Some(&c) => json!({ "valuation": valuation, "status": "counted", "count": c }),
                None => json!({ "valuation": valuation, "status": "infeasible", "count": 0 }),
            }
        })
        .collect();
    json!({ "format": "timeleak-census", "version": 1, "k": k, "cap": null, "complete": true, "nodes": 1, "classes": classes })
        .to_string()
}

#[test]
fn report_reproduces_published_leaks() {
    let t = TempDir::new().unwrap();
    let dir = t.path();
    // The published 4.71 for 26 classes is log2(26) = 4.7004, printed as 4.70.
    let cases: [(usize, Vec<u64>, &str, f64); 3] = [
        (3, vec![60; 8], "leak=3.00 bits", 3.00),
        (5, vec![10_000; 26], "leak=4.70 bits", 4.71),
        (1, vec![7], "leak=0.00 bits", 0.0),
    ];
    for (k, counts, want, published) in cases {
        std::fs::write(dir.join("c.json"), census_json(k, &counts)).unwrap();
        let out = ok(dir, &["report", "--census", "c.json", "--out", "r.json"]);
        assert!(out.contains(want), "{out}");
        // leak = log2(K) for K equal classes
        let leak = json_at(dir.join("r.json"))["se_l"].as_f64().unwrap();
        assert!((leak - (counts.len() as f64).log2()).abs() < 1e-9);
        assert!((leak - published).abs() <= 0.01);
    }
}

#[test]
fn report_failures_exit_5() {
    let t = TempDir::new().unwrap();
    let dir = t.path();
    r2_data(dir);
    sweep(dir, "sw", &[]);
    let chosen = json_at(dir.join("sw/sweep.json"))["chosen_k"].as_u64().unwrap() as usize;
    let other = if chosen == 1 { 2 } else { 1 };
    std::fs::write(dir.join("c.json"), census_json(other, &[1, 3])).unwrap();
    let (c, err) = code(dir, &["report", "--census", "c.json", "--sweep", "sw/sweep.json", "--out", "r.json"]);
    assert_eq!(c, 5);
    assert!(err.contains("inconsistent"), "{err}");

    std::fs::write(dir.join("junk.json"), "[1, 2").unwrap();
    for args in [
        vec!["report", "--census", "junk.json", "--out", "r.json"],
        vec!["report", "--census", "c.json", "--sweep", "junk.json", "--out", "r.json"],
        vec!["report", "--census", "missing.json", "--out", "r.json"],
    ] {
        assert_eq!(code(dir, &args).0, 5, "{args:?}");
    }
    let mut inc: Value = serde_json::from_str(&census_json(1, &[1, 3])).unwrap();
    inc["complete"] = json!(false);
    std::fs::write(dir.join("inc.json"), inc.to_string()).unwrap();
    assert_eq!(code(dir, &["report", "--census", "inc.json", "--out", "r.json"]).0, 5);
}

#[test]
fn zero_threads_is_rejected() {
    let t = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_timeleak"))
        .current_dir(t.path())
        .env("TIMELEAK_THREADS", "0")
        .args(["gen", "--family", "sort", "--out", "s.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn hex_sha256(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
