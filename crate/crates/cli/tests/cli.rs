use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn plap(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_plap"));
    cmd.args(args).arg("--out").arg(out).env("PLAP_LOG", "quiet");
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().expect("plap runs")
}

fn write_config(dir: &Path, name: &str, config: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn interval(resolution: usize, p: f64, reaction: Value) -> Value {
    json!({
        "domain": {"kind": "interval", "a": 0.0, "b": 1.0},
        "resolution": resolution,
        "p": p,
        "reaction": reaction,
    })
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let k = reader.headers().unwrap().iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    reader.records().map(|r| r.unwrap()[k].to_string()).collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn eigen_row_matches_pi_squared_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &interval(256, 2.0, json!({"preset": "constant", "value": 1.0})));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = plap(&["eigen"], Some(&cfg), dir);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let lambda: f64 = column(&a.join("eigen.csv"), "lambda1")[0].parse().unwrap();
    let pi2 = std::f64::consts::PI.powi(2);
    assert!((lambda - pi2).abs() < 1e-3 * pi2, "{lambda}");
    for f in ["eigen.csv", "phi1.csv", "eigen.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    assert_eq!(csv_rows(&a.join("phi1.csv")).len(), 257);
}

#[test]
fn malformed_config_exits_2_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (interval(16, 0.5, json!({"preset": "constant", "value": 1.0})), "`p`"),
        (interval(1, 2.0, json!({"preset": "constant", "value": 1.0})), "`resolution`"),
        (interval(16, 2.0, json!({"preset": "staircase_singular", "gamma": 1.2})), "`reaction.gamma`"),
        (
            {
                let mut c = interval(16, 2.0, json!({"preset": "constant", "value": 1.0}));
                c["tolerances"] = json!({"solve": 0.0});
                c
            },
            "`tolerances.solve`",
        ),
        (
            {
                let mut c = interval(16, 2.0, json!({"preset": "constant", "value": 1.0}));
                c["colour"] = json!("blue");
                c
            },
            "colour",
        ),
    ];
    for (k, (config, field)) in cases.iter().enumerate() {
        let path = write_config(tmp.path(), &format!("bad{k}.json"), config);
        let o = plap(&["eigen"], Some(&path), &tmp.path().join("out"));
        assert_eq!(o.status.code(), Some(2), "case {k}: {}", stderr(&o));
        assert!(stderr(&o).contains(field), "case {k}: {}", stderr(&o));
    }
    let ok = write_config(tmp.path(), "ok.json", &interval(16, 2.0, json!({"preset": "constant", "value": 1.0})));
    let o = plap(&["eigen", "--tol-eigen=-1"], Some(&ok), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("tolerances.eigen"));
    assert_eq!(plap(&["eigen"], None, &tmp.path().join("out")).status.code(), Some(2));
}

#[test]
fn solve_then_verify_constant_reaction() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &interval(128, 2.0, json!({"preset": "constant", "value": 1.0})));
    let run = tmp.path().join("run");
    let o = plap(&["solve"], Some(&cfg), &run);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "config.json",
        "mesh.txt",
        "nodes.csv",
        "eigen.csv",
        "hypotheses.json",
        "solution.csv",
        "continuation.csv",
        "iterates.csv",
        "energy.csv",
        "solve.json",
    ] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    assert!(!run.join("FAILED").exists());
    let sup = column(&run.join("solution.csv"), "u").iter().map(|s| s.parse::<f64>().unwrap()).fold(0.0, f64::max);
    assert!((sup - 0.125).abs() < 1e-3, "{sup}");
    let steps = csv_rows(&run.join("continuation.csv")).len();
    assert_eq!(csv_rows(&run.join("iterates.csv")).len(), steps * 129);
    // Each minimization is monotone in energy.
    let trace: Vec<(String, f64)> =
        csv_rows(&run.join("energy.csv")).iter().map(|r| (r[0].to_string(), r[3].parse().unwrap())).collect();
    assert!(trace.windows(2).all(|w| w[0].0 != w[1].0 || w[1].1 <= w[0].1 + 1e-12), "{trace:?}");

    let o = Command::new(env!("CARGO_BIN_EXE_plap"))
        .args(["verify", "--run"])
        .arg(&run)
        .env("PLAP_LOG", "quiet")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(run.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["inclusion"]["status"], "done");
    assert_eq!(report["inclusion"]["fraction"], 1.0);
    assert_eq!(report["passed"], true);
    assert!(csv_rows(&run.join("inclusion.csv")).len() > 100);
}

#[test]
fn verify_without_solution_fails_with_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &interval(16, 2.0, json!({"preset": "constant", "value": 1.0})));
    let run = tmp.path().join("empty");
    let o = Command::new(env!("CARGO_BIN_EXE_plap"))
        .args(["verify", "--run"])
        .arg(&run)
        .arg("--config")
        .arg(&cfg)
        .env("PLAP_LOG", "quiet")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(run.join("FAILED").exists());
}

#[test]
fn hypotheses_flag_the_eigenvalue_boundary() {
    let tmp = tempfile::tempdir().unwrap();
    let probe = write_config(tmp.path(), "probe.json", &interval(64, 2.0, json!({"preset": "constant", "value": 1.0})));
    let o = plap(&["eigen"], Some(&probe), &tmp.path().join("eig"));
    assert!(o.status.success());
    let lambda1: f64 = column(&tmp.path().join("eig/eigen.csv"), "lambda1")[0].parse().unwrap();

    let boundary = write_config(
        tmp.path(),
        "b.json",
        &interval(64, 2.0, json!({"preset": "power", "coef": lambda1, "exponent": 1.0})),
    );
    let out = tmp.path().join("hyp");
    let o = plap(&["hypotheses"], Some(&boundary), &out);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("hypotheses.json")).unwrap()).unwrap();
    assert_eq!(report["holds_iii"], false);
    assert!(plap(&["hypotheses", "--report-only"], Some(&boundary), &out).status.success());

    // A solve on the same reaction stops after the hypothesis stage.
    let run = tmp.path().join("solve");
    let o = plap(&["solve"], Some(&boundary), &run);
    assert_eq!(o.status.code(), Some(1));
    assert!(std::fs::read_to_string(run.join("FAILED")).unwrap().contains("(iii)"));
}

#[test]
fn mesh_export_writes_a_readable_mesh() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = interval(4, 2.0, json!({"preset": "constant", "value": 1.0}));
    config["domain"] = json!({"kind": "unit_disk"});
    let cfg = write_config(tmp.path(), "c.json", &config);
    let out = tmp.path().join("mesh");
    assert!(plap(&["mesh-export"], Some(&cfg), &out).status.success());
    let mesh = plap_core::mesh::read_mesh(std::io::BufReader::new(std::fs::File::open(out.join("mesh.txt")).unwrap()))
        .unwrap();
    assert_eq!(mesh.elements().len(), 6 * 16);
    assert_eq!(csv_rows(&out.join("nodes.csv")).len(), mesh.n_nodes());
}

#[test]
fn sweep_over_gamma_writes_runs_and_index() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = interval(64, 2.0, json!({"preset": "staircase_singular", "gamma": 0.5}));
    config["schedule"] = json!({"n_start": 2, "n_end": 8, "geometric": true});
    config["sweep"] = json!({"gamma": [0.3, 0.5, 0.7]});
    let cfg = write_config(tmp.path(), "sweep.json", &config);
    let out = tmp.path().join("sweep");
    let o = plap(&["sweep", "--jobs", "3", "--report-only"], Some(&cfg), &out);
    assert!(o.status.success(), "{}", stderr(&o));
    for k in 0..3 {
        assert!(out.join(format!("run_{k:03}/solution.csv")).exists());
        assert!(out.join(format!("run_{k:03}/verify.json")).exists());
    }
    let index = out.join("index.csv");
    assert_eq!(column(&index, "parameters"), ["gamma=0.3", "gamma=0.5", "gamma=0.7"]);
    for name in ["lambda1", "l_bound", "inclusion_fraction", "linf", "l_hat"] {
        assert!(column(&index, name).iter().all(|v| v.parse::<f64>().is_ok()), "{name}");
    }
    // Parallel scheduling does not change the outputs.
    let serial = tmp.path().join("serial");
    assert!(plap(&["sweep", "--jobs", "1", "--report-only"], Some(&cfg), &serial).status.success());
    assert_eq!(std::fs::read(&index).unwrap(), std::fs::read(serial.join("index.csv")).unwrap());
}

#[test]
fn sweep_records_failed_runs_without_aborting() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = interval(32, 2.0, json!({"preset": "staircase_singular", "gamma": 0.5}));
    config["schedule"] = json!({"n_start": 2, "n_end": 4, "geometric": true});
    // λ = 20 exceeds λ₁ ≈ 9.87, so (iii) fails for that run only.
    config["sweep"] = json!({"lambda": [0.0, 20.0]});
    let cfg = write_config(tmp.path(), "sweep.json", &config);
    let out = tmp.path().join("sweep");
    let o = plap(&["sweep", "--report-only"], Some(&cfg), &out);
    assert_eq!(o.status.code(), Some(1));
    let status = column(&out.join("index.csv"), "status");
    assert!(!status[0].starts_with("failed"), "{status:?}");
    assert!(status[1].starts_with("failed"), "{status:?}");
    assert!(out.join("run_001/FAILED").exists());
    assert!(!out.join("run_000/FAILED").exists());
}
