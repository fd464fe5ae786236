//! End-to-end runs of the `cnma` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn cnma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cnma")).args(args).output().expect("binary runs")
}

fn bundled(dir: &Path) -> PathBuf {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/simulated_c1.csv");
    let dst = dir.join("simulated_c1.csv");
    fs::copy(src, &dst).unwrap();
    dst
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const STAR: &str = "studlab,treat1,treat2,TE,seTE
s1,A,P,0.3,0.2
s2,B,P,0.1,0.25
s3,A+B,P,0.5,0.3
s4,A,P,0.2,0.2
";

#[test]
fn bundled_selection_ends_at_the_true_interaction() {
    let dir = tempfile::tempdir().unwrap();
    let input = bundled(dir.path());
    let out = cnma(&["select", s(&input), "--reference", "P"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = json(&dir.path().join("simulated_c1.select.json"));
    assert_eq!(trace["selected"], serde_json::json!(["A*B"]));
    assert_eq!(trace["stopped_because"], "threshold");
    assert_eq!(trace["additive"]["df"], 24);
}

#[test]
fn threshold_zero_keeps_the_additive_model() {
    let dir = tempfile::tempdir().unwrap();
    let input = bundled(dir.path());
    let out = cnma(&["select", s(&input), "--reference", "P", "--threshold", "0"]);
    assert!(out.status.success());
    let trace = json(&dir.path().join("simulated_c1.select.json"));
    assert_eq!(trace["selected"], serde_json::json!([]));
    let fit = cnma(&["fit", s(&input), "--reference", "P", "--model", "additive"]);
    assert!(fit.status.success());
    let additive = json(&dir.path().join("simulated_c1.fit.json"));
    assert_eq!(trace["final_model"]["Q"], additive["Q"]);
}

#[test]
fn additive_equals_nma_without_combinations() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("plain.csv");
    fs::write(&input, "studlab,treat1,treat2,TE,seTE\ns1,A,P,0.3,0.2\ns2,B,P,0.1,0.25\ns3,A,B,0.4,0.3\n").unwrap();
    let mut q = Vec::new();
    for model in ["nma", "additive"] {
        let out = cnma(&["fit", s(&input), "--reference", "P", "--model", model]);
        assert!(out.status.success());
        let fit = json(&dir.path().join("plain.fit.json"));
        q.push((fit["Q"].as_f64().unwrap(), fit["df"].clone()));
    }
    assert!((q[0].0 - q[1].0).abs() < 1e-10);
    assert_eq!(q[0].1, q[1].1);
}

#[test]
fn exit_codes_distinguish_input_and_model_errors() {
    let dir = tempfile::tempdir().unwrap();
    let input = bundled(dir.path());
    assert_eq!(cnma(&["fit", s(&input), "--reference", "Z"]).status.code(), Some(2));
    assert_eq!(cnma(&["fit", s(&dir.path().join("missing.csv")), "--reference", "P"]).status.code(), Some(2));
    assert_eq!(cnma(&["fit", s(&input)]).status.code(), Some(2));
    assert_eq!(cnma(&["disconnect", s(&input), "--reference", "P", "--apply", "100000"]).status.code(), Some(2));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "studlab,treat1,treat2,TE,seTE\ns1,A,P,0.3,-1\n").unwrap();
    assert_eq!(cnma(&["fit", s(&bad), "--reference", "P"]).status.code(), Some(2));

    let split = dir.path().join("split.csv");
    fs::write(&split, "studlab,treat1,treat2,TE,seTE\ns1,A,P,0.3,0.2\ns2,B,C,0.1,0.25\n").unwrap();
    let out = cnma(&["fit", s(&split), "--reference", "P"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--per-subnetwork"));
    assert!(cnma(&["fit", s(&split), "--reference", "P", "--per-subnetwork"]).status.success());
}

#[test]
fn star_network_has_no_disconnected_designs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("star.csv");
    fs::write(&input, STAR).unwrap();
    let out = cnma(&["disconnect", s(&input), "--reference", "P", "--enumerate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let designs = json(&dir.path().join("star.designs.json"));
    assert_eq!(designs["designs"].as_array().unwrap().len(), 0);
}

#[test]
fn applied_design_is_disconnected_and_fits_per_subnetwork() {
    let dir = tempfile::tempdir().unwrap();
    let input = bundled(dir.path());
    assert!(cnma(&["disconnect", s(&input), "--reference", "P", "--enumerate"]).status.success());
    let designs = json(&dir.path().join("simulated_c1.designs.json"));
    let first = &designs["designs"][0];
    assert_eq!(first["id"], 1);
    assert!(cnma(&["disconnect", s(&input), "--reference", "P", "--apply", "1"]).status.success());
    let part = dir.path().join("simulated_c1.disconnected-1.csv");
    let rows = fs::read_to_string(&part).unwrap().lines().count() - 1;
    assert_eq!(rows as u64, first["resulting_counts"]["m"].as_u64().unwrap());
    assert_eq!(cnma(&["fit", s(&part), "--reference", "P"]).status.code(), Some(3));
    assert!(cnma(&["fit", s(&part), "--reference", "P", "--per-subnetwork"]).status.success());
}

#[test]
fn replay_reproduces_recorded_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = bundled(dir.path());
    assert!(cnma(&["fit", s(&input), "--reference", "P", "--model", "interactions=A*B"]).status.success());
    let original = fs::read(dir.path().join("simulated_c1.fit.json")).unwrap();
    let again = dir.path().join("again");
    let manifest = dir.path().join("simulated_c1.fit.manifest.json");
    let out = cnma(&["replay", s(&manifest), "--out", s(&again)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(again.join("simulated_c1.fit.json")).unwrap(), original);

    // a changed input is refused
    fs::write(&input, STAR).unwrap();
    assert_ne!(cnma(&["replay", s(&manifest)]).status.code(), Some(0));
}

#[test]
fn generate_then_fit_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        assert!(cnma(&["generate", "--scenario", "C1", "--seed", "42", "--output", s(p)]).status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let bundled = fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/simulated_c1.csv")).unwrap();
    assert_eq!(fs::read(&a).unwrap(), bundled);
}

/// Runs only when `CNMA_COCHRANE_CSV` points at the PONV data set (treatment labels such as
/// `plac`, `onda+scop`). Expected values: Q 44.80 on 46 df (NMA), 103.53 on 55 df (additive,
/// placebo as a component), selection onda*scop, then + apre*scop, then + meto*trop.
#[test]
fn ponv_walkthrough_when_data_is_available() {
    let Ok(path) = std::env::var("CNMA_COCHRANE_CSV") else {
        eprintln!("CNMA_COCHRANE_CSV not set; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("ponv.csv");
    fs::copy(&path, &input).unwrap();
    let common = [s(&input), "--reference", "plac", "--inactive", ""];
    let fit = |model: &str| {
        let out = cnma(&[&["fit"][..], &common, &["--model", model]].concat());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let v = json(&dir.path().join("ponv.fit.json"));
        (v["Q"].as_f64().unwrap(), v["df"].as_u64().unwrap())
    };
    let (q, df) = fit("nma");
    assert!((q - 44.80).abs() < 0.005 && df == 46, "NMA Q {q} df {df}");
    let (q, df) = fit("additive");
    assert!((q - 103.53).abs() < 0.005 && df == 55, "additive Q {q} df {df}");
    let out = cnma(&[&["select"][..], &common].concat());
    assert!(out.status.success());
    let trace = json(&dir.path().join("ponv.select.json"));
    assert_eq!(
        trace["selected"],
        serde_json::json!(["apre*scop", "meto*trop", "onda*scop"])
    );
}
