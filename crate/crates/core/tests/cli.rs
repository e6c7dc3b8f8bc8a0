//! End-to-end runs of the `dld` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn dld(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dld"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = dld(args);
    assert!(
        out.status.success(),
        "dld {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two coarse fields, a small dataset and a briefly trained model, shared by the tests.
struct Fixture {
    _dir: tempfile::TempDir,
    fields: PathBuf,
    data: PathBuf,
    model: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let fields = dir.path().join("fields");
        ok(&["gen", "--f", "0.4,0.5", "--n", "5", "--grid", "64", "--out", s(&fields)]);
        let data = dir.path().join("data.csv");
        ok(&["dataset", "--fields", s(&fields), "--samples", "60", "--n-wall", "20", "--n-io", "10", "--out", s(&data)]);
        let model = dir.path().join("periodic.json");
        ok(&["train", "--data", s(&data), "--variant", "periodic", "--epochs", "3", "--batch", "30", "--out", s(&model)]);
        Fixture {
            fields,
            data,
            model,
            _dir: dir,
        }
    })
}

#[test]
fn gen_writes_field_and_manifest_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&["gen", "--f", "0.5", "--n", "10", "--grid", "64", "--out", s(&a)]);
    ok(&["gen", "--f", "0.5", "--n", "10", "--grid", "64", "--out", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(dir.path().join("a.json").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "gen");
    assert_eq!(manifest["config"]["grid"], 64);
}

#[test]
fn gen_rejects_out_of_range_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let out = dld(&["gen", "--f", "1.2", "--n", "10", "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("domain error"));
}

#[test]
fn gen_reports_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dld(&[
        "gen", "--f", "0.5", "--n", "10", "--grid", "64", "--tol", "1e-300", "--max-iters", "1",
        "--out", s(&dir.path().join("x.csv")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("residual"));
}

#[test]
fn train_is_reproducible_and_tagged() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let again = dir.path().join("again.json");
    ok(&["train", "--data", s(&fx.data), "--variant", "periodic", "--epochs", "3", "--batch", "30", "--out", s(&again)]);
    assert_eq!(std::fs::read(&fx.model).unwrap(), std::fs::read(&again).unwrap());
    assert!(dir.path().join("again.history.csv").exists());
    let soft = dir.path().join("soft.json");
    ok(&["train", "--data", s(&fx.data), "--variant", "soft", "--epochs", "1", "--batch", "30", "--out", s(&soft)]);
    let ckpt: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&soft).unwrap()).unwrap();
    assert_eq!(ckpt["variant"], "soft_periodic");
}

#[test]
fn train_without_data_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dld(&["train", "--data", s(&dir.path().join("missing.csv")), "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupt_model_is_an_io_class_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    std::fs::write(&m, "{\"format_version\": 1, \"vari").unwrap();
    let out = dld(&["periodicity", "--model", s(&m)]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn periodicity_of_periodic_model_is_zero() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("scan.json");
    ok(&["periodicity", "--model", s(&fx.model), "--out", s(&out_path)]);
    let scans: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let scans = scans.as_array().unwrap();
    assert_eq!(scans.len(), 5);
    for sc in scans {
        for k in ["avg", "max"] {
            for v in sc[k].as_array().unwrap() {
                assert_eq!(v.as_f64(), Some(0.0));
            }
        }
    }
}

#[test]
fn dc_writes_result_with_bracket() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("dc.json");
    let field = fx.fields.join("field_F0.5_N5.csv");
    ok(&["dc", "--field", s(&field), "--tol", "1e-3", "--out", s(&out_path)]);
    let res: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let dc = res["dc"].as_f64().unwrap();
    let lo = res["bracket"][0].as_f64().unwrap();
    let hi = res["bracket"][1].as_f64().unwrap();
    assert!(lo < dc && dc <= hi);
    assert!(dir.path().join("dc.manifest.json").exists());
    let out = dld(&["dc", "--model", s(&fx.model), "--out", s(&out_path)]);
    assert_eq!(out.status.code(), Some(2), "geometry flags are required with a model");
}

#[test]
fn trace_exports_trajectory() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("t.csv");
    let field = fx.fields.join("field_F0.4_N5.csv");
    ok(&["trace", "--field", s(&field), "--diameter", "0.02", "--out", s(&out_path)]);
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.starts_with("t,x_device,y_device,column\n"));
    assert!(text.lines().count() > 10);
}

#[test]
fn eval_writes_maps_and_summary() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eval");
    ok(&["eval", "--model", s(&fx.model), "--fields", s(&fx.fields), "--out", s(&out)]);
    assert!(out.join("eval.json").exists());
    assert!(out.join("error_map_F0.5_N5.csv").exists());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn sweep_builds_comparison_table() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report");
    let models = format!("{},{}", s(&fx.model), s(&fx.model));
    ok(&[
        "sweep", "--models", &models, "--fields", s(&fx.fields), "--geometries", "0.5:5,0.35:5", "--tol", "1e-2",
        "--out", s(&out),
    ]);
    let table = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert!(table.starts_with("model,F,geometries,r2_u,r2_v,r2_p,dc_error_pct\n"));
    assert_eq!(table.lines().filter(|l| l.contains(",average,")).count(), 2);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("periodic").join("report.json")).unwrap()).unwrap();
    assert_eq!(report["skipped"][0]["f"], 0.35);
    assert_eq!(report["geometries"].as_array().unwrap().len(), 1);
}
