use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn graphlet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphlet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = graphlet(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn freq_of(v: &Value, alias: &str) -> f64 {
    v["entries"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["alias"] == alias)
        .map_or(0.0, |e| e["freq"].as_f64().unwrap())
}

#[test]
fn exact_on_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "c5.txt", "a b\nb c\nc d\nd e\ne a\n");
    let v = ok_json(&["exact", "--graph", &g]);
    assert_eq!(v["total"], 6);
    assert_eq!(freq_of(&v, "4-path"), 5.0 / 6.0);
    assert_eq!(freq_of(&v, "5-cycle"), 1.0 / 6.0);

    let out = graphlet(&["exact", "--graph", &g, "--k", "5", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("code,alias,count,freq"));
    assert!(text.contains("5-cycle"));
}

#[test]
fn sample_metadata_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(
        dir.path(),
        "g.txt",
        "0 1\n1 2\n2 0\n2 3\n3 4\n4 5\n5 3\n5 6\n6 7\n7 4\n1 6\n",
    );
    for method in ["naive", "mhrw"] {
        let args = [
            "--workers", "1", "sample", "--method", method, "--graph", &g, "--samples", "3000",
            "--seed", "4",
        ];
        let mut a = ok_json(&args);
        let mut b = ok_json(&args);
        let meta = a["meta"].clone();
        assert_eq!(meta["method"], method);
        assert_eq!(meta["S"], 3000);
        assert_eq!(meta["seed"], 4);
        assert!(meta["wall_time_s"].as_f64().unwrap() >= 0.0);
        assert!(meta.get("acceptance_rate").is_some());
        assert!(meta.get("burn_in").is_some());
        a.as_object_mut().unwrap().remove("meta");
        b.as_object_mut().unwrap().remove("meta");
        assert_eq!(a, b);
        let sum: f64 = a["entries"]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| e["freq"].as_f64().unwrap())
            .sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}

#[test]
fn mhrw_partial_run_reports_only_k4() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "p.txt", "0 1\n1 2\n2 3\n3 4\n4 5\n");
    let v = ok_json(&["sample", "--method", "mhrw", "--graph", &g, "--k", "4", "--samples", "200"]);
    assert_eq!(v["k_set"], serde_json::json!([4]));
    assert_eq!(freq_of(&v, "4-path"), 1.0);
}

#[test]
fn dataset_train_sample_bench_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ds = d.join("ds");
    let ds_s = ds.to_str().unwrap();
    let out = graphlet(&[
        "gen-dataset", "--random-source", "24:40", "--out", ds_s, "--count", "20", "--seed", "3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(ds.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["n_nodes"], 24);
    assert!(ds.join("train/0000.edges").exists());

    let ck = d.join("m.json");
    let ck_s = ck.to_str().unwrap();
    let log = d.join("log.csv");
    let out = graphlet(&[
        "train", "--dataset-dir", ds_s, "--out", ck_s, "--epochs", "2", "--samples", "16",
        "--embed-dim", "8", "--hidden", "8", "--mlp-hidden", "8", "--log",
        log.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = fs::read_to_string(log).unwrap();
    assert!(log.starts_with("epoch,mean_loss,recon,kl,aux_type_acc,mean_component_size"));
    assert_eq!(log.lines().count(), 3);

    let info = ok_json(&["inspect-checkpoint", "--checkpoint", ck_s]);
    assert_eq!(info["n_nodes"], 24);
    assert_eq!(info["embed_dim"], 8);
    assert_eq!(info["overflow_slot"], 15);

    let test_graph = ds.join("test/0000.edges");
    let tg = test_graph.to_str().unwrap();
    let hist = d.join("hist.csv");
    let args = [
        "--workers", "1", "sample", "--method", "gnns", "--graph", tg, "--checkpoint", ck_s,
        "--samples", "2000", "--histogram", hist.to_str().unwrap(),
    ];
    let mut a = ok_json(&args);
    assert_eq!(a["meta"]["method"], "gnns");
    assert!(a["meta"]["m_effective"].as_u64().unwrap() <= 2000);
    assert!(fs::read_to_string(&hist).unwrap().starts_with("rank,label,code,freq"));
    let mut b = ok_json(&args);
    a.as_object_mut().unwrap().remove("meta");
    b.as_object_mut().unwrap().remove("meta");
    assert_eq!(a, b);

    let rep = d.join("rep");
    let out = graphlet(&[
        "bench", "--dataset-dir", ds_s, "--checkpoint", ck_s, "--samples", "500", "--out",
        rep.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(rep.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema"], 1);
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert!(r["wall_time_s"].as_f64().unwrap() > 0.0);
        assert!(r["mse_mean"].as_f64().unwrap().is_finite());
    }
    let csv = fs::read_to_string(rep.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    // a checkpoint for another node count is a configuration error
    let c5 = write(d, "c5.txt", "0 1\n1 2\n2 3\n3 4\n4 0\n");
    let out = graphlet(&["sample", "--method", "gnns", "--graph", &c5, "--checkpoint", ck_s]);
    assert_eq!(out.status.code(), Some(2));

    // overflowing weights surface as a numeric failure
    let mut raw: Value = serde_json::from_str(&fs::read_to_string(&ck).unwrap()).unwrap();
    for x in raw["tensors"]["w0"]["data"].as_array_mut().unwrap() {
        *x = serde_json::json!(1e308);
    }
    let bad = d.join("bad.json");
    fs::write(&bad, raw.to_string()).unwrap();
    let out = graphlet(&[
        "sample", "--method", "gnns", "--graph", tg, "--checkpoint", bad.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "g.txt", "0 1\n1 2\n2 3\n");
    let bad = write(dir.path(), "bad.txt", "0 1\n1 2 3\n");

    assert_eq!(graphlet(&["exact", "--graph", &g, "--k", "6"]).status.code(), Some(2));
    assert_eq!(
        graphlet(&["sample", "--method", "gnns", "--graph", &g]).status.code(),
        Some(2)
    );
    assert_eq!(
        graphlet(&["bench", "--dataset-dir", dir.path().to_str().unwrap()]).status.code(),
        Some(3)
    );
    let missing = dir.path().join("missing.txt");
    let out = graphlet(&["exact", "--graph", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let out = graphlet(&["exact", "--graph", &bad]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert_eq!(graphlet(&["--workers", "0", "exact", "--graph", &g]).status.code(), Some(2));
    // unknown flags are usage errors
    assert_eq!(graphlet(&["exact", "--nope"]).status.code(), Some(2));
}
