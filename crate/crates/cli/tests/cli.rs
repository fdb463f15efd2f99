use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use qvar_core::mesh::{Cube, Mesh};
use qvar_core::qfield::{AffineQMap, QSheetField};
use serde_json::{json, Value};
use tempfile::TempDir;

fn qvar(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qvar"));
    cmd.args(args).env_remove("QVAR_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Self {
        Run { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, value: &Value) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, serde_json::to_vec(value).unwrap()).unwrap();
        p
    }

    fn exec(&self, command: &str, config: &Value, extra: &[&str]) -> (Output, Option<Value>) {
        let cfg = self.config(&format!("{command}.json"), config);
        let out = self.path(&format!("{command}.out.json"));
        let _ = fs::remove_file(&out);
        let mut args = vec![command, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let output = qvar(&args, &[]);
        let doc = fs::read(&out).ok().map(|b| serde_json::from_slice(&b).unwrap());
        (output, doc)
    }
}

fn ok(output: &Output) {
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
}

fn unit_field(q: usize, n: usize, k: usize, f: impl Fn(&[f64]) -> Vec<Vec<f64>>) -> Value {
    let field = QSheetField::from_sheets(Mesh::new(Cube::centered(2, 1.0), k).unwrap(), q, n, f).unwrap();
    serde_json::to_value(field).unwrap()
}

#[test]
fn metric_sqrt_two() {
    let run = Run::new();
    let (output, doc) = run.exec("metric", &json!({"t1": [[0.0], [1.0]], "t2": [[1.0], [2.0]]}), &[]);
    ok(&output);
    let doc = doc.unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["command"], "metric");
    assert!((doc["result"]["g"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-15);
    assert!(String::from_utf8_lossy(&output.stdout).starts_with("metric: G = 1.4142135623730951e0"));
}

#[test]
fn qc_test_dirichlet_and_reproducibility() {
    let run = Run::new();
    let cfg = json!({
        "integrand": {"kind": "dirichlet"},
        "affine": {"m": 2, "n": 1, "groups": [{"multiplicity": 2, "offset": [0.5], "linear": [[1.0, -0.5]]}]},
        "optimizer": {"cells_per_side": 4, "restarts": 3, "max_iters": 20, "seed": 7, "tol": 1e-9, "laminate_seeds": true},
        "seed": 3
    });
    let (output, doc) = run.exec("qc-test", &cfg, &[]);
    ok(&output);
    let first = fs::read(run.path("qc-test.out.json")).unwrap();
    let doc = doc.unwrap();
    assert_eq!(doc["result"]["status"], "no-violation-found");
    assert!(doc["result"]["margin"].as_f64().unwrap() >= -1e-9);
    assert_eq!(doc["result"]["search_log"]["seed"], 3);
    let (output, _) = run.exec("qc-test", &cfg, &["--threads", "1"]);
    ok(&output);
    assert_eq!(first, fs::read(run.path("qc-test.out.json")).unwrap());
    let (output, doc) = run.exec("qc-test", &cfg, &["--seed", "11"]);
    ok(&output);
    assert_eq!(doc.unwrap()["result"]["search_log"]["seed"], 11);
}

#[test]
fn config_errors_exit_two_without_output() {
    let run = Run::new();
    let bad = run.path("bad.json");
    fs::write(&bad, "{\"t1\": [[0.0]], ").unwrap();
    let out = run.path("never.json");
    let output = qvar(&["metric", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(output.status.code(), Some(2));
    assert!(!out.exists());

    let (output, doc) = run.exec("metric", &json!({"t1": [[0.0]], "t2": [[1.0]], "extra": 1}), &[]);
    assert_eq!(output.status.code(), Some(2));
    assert!(doc.is_none());

    let (output, doc) = run.exec("rank-one", &json!({"m": 2, "n": 2, "matrix": [[1.0]]}), &[]);
    assert_eq!(output.status.code(), Some(2));
    assert!(doc.is_none());

    let cfg = run.config("ok.json", &json!({"t1": [[0.0]], "t2": [[1.0]]}));
    let output = qvar(&["metric", "--config", cfg.to_str().unwrap()], &[("QVAR_THREADS", "zero")]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn non_finite_results_exit_three() {
    let run = Run::new();
    let big = 1e308;
    let cfg = json!({
        "integrand": {"kind": "quadratic", "matrix": [[big, 0.0], [0.0, big]]},
        "field": unit_field(1, 1, 2, |x| vec![vec![10.0 * x[0]]]),
    });
    let (output, doc) = run.exec("energy", &cfg, &[]);
    assert_eq!(output.status.code(), Some(3));
    assert!(doc.is_none());
}

#[test]
fn quadratic_form_commands() {
    let run = Run::new();
    let det = json!([[0.0, 0.0, 0.0, 1.0], [0.0, 0.0, -1.0, 0.0], [0.0, -1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]]);
    let (output, doc) = run.exec("rank-one", &json!({"m": 2, "n": 2, "matrix": det}), &[]);
    ok(&output);
    assert!(doc.unwrap()["result"]["value"].as_f64().unwrap().abs() < 1e-12);
    let (output, doc) = run.exec("polyconvex-cert", &json!({"m": 2, "n": 2, "matrix": det}), &[]);
    ok(&output);
    assert_eq!(doc.unwrap()["result"]["feasible"], true);
    let neg = json!([[-1.0, 0.0], [0.0, -1.0]]);
    let (output, doc) = run.exec(
        "semielliptic",
        &json!({"m": 2, "n": 1, "matrix": neg, "Q": 2, "optimizer": {"cells_per_side": 4}}),
        &[],
    );
    ok(&output);
    let doc = doc.unwrap();
    assert_eq!(doc["result"]["status"], "violation");
    assert_eq!(doc["result"]["certificate"]["Q"], 2);
}

#[test]
fn currents_commands() {
    let run = Run::new();
    let field = unit_field(2, 1, 3, |x| vec![vec![x[0] * x[1]], vec![1.0 - x[0]]]);
    let (output, doc) = run.exec("stokes", &json!({"field": field, "random_forms": 3}), &["--seed", "5"]);
    ok(&output);
    let doc = doc.unwrap();
    assert!(doc["result"]["max_abs_residual"].as_f64().unwrap() < 1e-12);
    assert_eq!(doc["result"]["entries"].as_array().unwrap().len(), 3);

    let w1 = unit_field(1, 2, 4, |x| vec![x.to_vec()]);
    let w2 = unit_field(1, 2, 4, |x| {
        let b = (0.25 - x[0] * x[0]) * (0.25 - x[1] * x[1]);
        vec![vec![x[0] + 2.0 * b, x[1] - 3.0 * b]]
    });
    let cfg = json!({"polyaffine": {"m": 2, "n": 2, "c0": 1.0, "zeta": [1.0, 2.0, 3.0, 4.0, 5.0]}, "w1": w1, "w2": w2});
    let (output, doc) = run.exec("null-lagrangian", &cfg, &[]);
    ok(&output);
    assert!(doc.unwrap()["result"]["gap"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn fold_and_lsc() {
    let run = Run::new();
    let u = AffineQMap::single(1, vec![0.0], DMatrix::from_row_slice(1, 2, &[1.0, 0.5])).unwrap();
    let bump = |x: &[f64]| vec![vec![x[0] + 0.5 * x[1] + 3.0 * (0.25 - x[0] * x[0]) * (0.25 - x[1] * x[1])]];
    let w = unit_field(1, 1, 4, bump);
    let affine = serde_json::to_value(&u).unwrap();
    let (output, doc) = run.exec("fold", &json!({"affine": affine, "competitors": [w], "k": 2, "r": 0.5}), &[]);
    ok(&output);
    assert!(doc.unwrap()["result"]["boundary_sup_distance"].as_f64().unwrap() < 1e-12);

    let csv = run.path("lsc.csv");
    let cfg = json!({
        "integrand": {"kind": "quadratic", "matrix": [[-1.0, 0.0], [0.0, -1.0]]},
        "affine": affine, "competitors": [w], "ks": [1, 2, 4], "r": 0.5, "csv": csv
    });
    let (output, doc) = run.exec("lsc", &cfg, &[]);
    ok(&output);
    let doc = doc.unwrap();
    assert_eq!(doc["result"]["lower_semicontinuity_fails"], true);
    assert_eq!(doc["result"]["weak_convergence"]["consistent_with_weak_convergence"], true);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("k,energy,lp_distance"));
}

#[test]
fn blowup_command() {
    let run = Run::new();
    let field = {
        let mesh = Mesh::new(Cube::centered(2, 1.0), 16).unwrap();
        QSheetField::from_sheets(mesh, 1, 1, |x| vec![vec![x[0] + 2.0 * x[1]]]).unwrap()
    };
    let model = json!({"m": 2, "n": 1, "groups": [{"multiplicity": 1, "offset": [0.0], "linear": [[1.0, 2.0]]}]});
    let cfg = json!({"field": field, "x0": [0.0, 0.0], "model": model, "rhos": [0.5, 0.25, 0.125]});
    let (output, doc) = run.exec("blowup", &cfg, &[]);
    ok(&output);
    for r in doc.unwrap()["result"]["residuals"].as_array().unwrap() {
        assert!(r.as_f64().unwrap() < 1e-24);
    }
}

fn write_spikes_csv(path: &Path, levels: u32) {
    let cells = 1usize << levels;
    let mut text = String::from("k,cell_index,value\n");
    for e in 0..=levels {
        let k = 1usize << e;
        for c in 0..cells {
            let v = if c < cells / k { k as f64 } else { 0.0 };
            text.push_str(&format!("{e},{c},{v}\n"));
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn equi_integrability_commands() {
    let run = Run::new();
    let input = run.path("spikes.csv");
    write_spikes_csv(&input, 8);
    let series = run.path("biting.csv");
    let (output, doc) = run.exec("biting", &json!({"csv": input, "csv_out": series}), &[]);
    ok(&output);
    let doc = doc.unwrap();
    let idx = doc["result"]["indices"].as_array().unwrap();
    assert!(idx.len() >= 3);
    assert_eq!(fs::read_to_string(&series).unwrap().lines().count(), idx.len() + 1);

    let (output, doc) = run.exec("dlvp", &json!({"csv": input, "phi": {"kind": "power", "exponent": 2.0}, "cap": 100.0}), &[]);
    ok(&output);
    let doc = doc.unwrap();
    assert_eq!(doc["result"]["bounded"], false);
    assert!((doc["result"]["sup"].as_f64().unwrap() - 256.0).abs() < 1e-9);

    let (output, _) = run.exec("dlvp", &json!({"samples": [[1.0]], "csv": input, "phi": {"kind": "t_log_t"}, "cap": 1.0}), &[]);
    assert_eq!(output.status.code(), Some(2));
}
