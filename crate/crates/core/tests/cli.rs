use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fzzlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fzzlab"))
        .args(args)
        .env_remove("FZZLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter(|l| l.starts_with('{'))
        .map(|l| serde_json::from_str(l).expect("json line"))
        .collect()
}

#[test]
fn eval_mot_variance_at_sqrt2() {
    let out = fzzlab(&["eval", "mot_variance", "--gamma", "1.4142135"]);
    assert_eq!(out.status.code(), Some(0));
    let v = &lines(&out)[0];
    assert!((v["value"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    let gamma: f64 = "1.4142135".parse().unwrap();
    assert_eq!(v["params"]["gamma"].as_f64(), Some(gamma));
}

#[test]
fn eval_u0_bar_is_pi() {
    let out = fzzlab(&["eval", "u0_bar", "--gamma", "1", "--alpha", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let first = String::from_utf8_lossy(&out.stdout).lines().next().unwrap().to_string();
    let v: f64 = first.parse().unwrap();
    assert!((v - std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn eval_pole_exits_2() {
    let out = fzzlab(&["eval", "u_fzz", "--gamma", "1", "--alpha", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Gamma pole at Gamma(2 alpha/gamma - 4/gamma^2 - 1)"), "{err}");
}

#[test]
fn eval_branch_diagnostics() {
    let out = fzzlab(&["eval", "u_fzz", "--gamma", "1", "--alpha", "2.2", "--mu", "1", "--mu-b", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = &lines(&out)[0];
    assert_eq!(v["diagnostics"]["branch"], "ImaginaryS");
    assert!(v["diagnostics"]["x"].as_f64().unwrap() > 1.0);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(fzzlab(&["eval", "nonsense", "--gamma", "1"]).status.code(), Some(2));
    assert_eq!(fzzlab(&["eval", "u0_bar", "--gamma", "1"]).status.code(), Some(2));
    assert_eq!(fzzlab(&["eval", "r_bar", "--gamma", "2.5"]).status.code(), Some(2));
    assert_eq!(fzzlab(&["verify", "gmc", "--preset", "huge"]).status.code(), Some(2));
    assert_eq!(fzzlab(&["verify", "identities", "--tol", "x"]).status.code(), Some(2));
    assert_eq!(fzzlab(&["--threads", "0", "eval", "r_bar", "--gamma", "1"]).status.code(), Some(2));
}

#[test]
fn verify_identities_passes_with_config_echo() {
    let out = fzzlab(&["verify", "identities", "--gamma", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let reports = lines(&out);
    assert!(reports.len() > 20);
    for r in &reports {
        assert_eq!(r["verdict"], "pass", "{r}");
        assert_eq!(r["config"]["gamma"], 1.0);
        assert_eq!(r["config"]["target"], "identities");
        for key in ["check", "params", "target", "estimate", "abs_err", "rel_err", "tolerance", "runtime_ms"] {
            assert!(r.get(key).is_some(), "missing {key}");
        }
    }
}

#[test]
fn verify_is_reproducible_from_echo() {
    let strip = |mut v: Vec<Value>| {
        for r in &mut v {
            r.as_object_mut().unwrap().remove("runtime_ms");
        }
        v
    };
    let a = strip(lines(&fzzlab(&["verify", "identities", "--gamma", "1.2"])));
    let b = strip(lines(&fzzlab(&["verify", "identities", "--gamma", "1.2"])));
    assert_eq!(a, b);
}

#[test]
fn tolerance_override_can_fail_a_check() {
    let out = fzzlab(&["verify", "identities", "--gamma", "1", "--tol", "variance_identity=1e-300"]);
    assert_eq!(out.status.code(), Some(1));
    let reports = lines(&out);
    let r = reports.iter().find(|r| r["check"] == "variance_identity").unwrap();
    assert_eq!(r["verdict"], "fail");
    assert_eq!(r["details"]["default_tolerance"], 1e-10);
}

#[test]
fn verify_gmc_small_preset() {
    let out = fzzlab(&["verify", "gmc", "--preset", "boundary-small", "--seed", "7", "--draws", "4000"]);
    let reports = lines(&out);
    assert_eq!(reports.len(), 1);
    let r = &reports[0];
    assert_eq!(r["check"], "gmc_u0_bar");
    assert!(r["stderr"].as_f64().unwrap() > 0.0);
    assert!(r["details"]["tail_bound"].as_f64().is_some());
    assert_eq!(r["config"]["lattice"]["n_cells"], 512);
    assert_eq!(r["seed"], 7);
    let code = out.status.code().unwrap();
    assert_eq!(code, if r["verdict"] == "pass" { 0 } else { 1 });
}

#[test]
fn threads_flag_beats_env() {
    let out = Command::new(env!("CARGO_BIN_EXE_fzzlab"))
        .args(["--threads", "2", "verify", "gmc", "--preset", "boundary-small", "--draws", "100"])
        .env("FZZLAB_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(lines(&out)[0]["config"]["threads"], 2);
    let out = Command::new(env!("CARGO_BIN_EXE_fzzlab"))
        .args(["verify", "gmc", "--preset", "boundary-small", "--draws", "100"])
        .env("FZZLAB_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(lines(&out)[0]["config"]["threads"], 3);
}

fn dump(kind: &str, out: &Path, seed: &str) -> Output {
    fzzlab(&[
        "dump", kind, "--n", "40", "--seed", seed, "--dt-scale", "1e-3", "--preset", "boundary-small", "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn cone_dump_schema_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert_eq!(dump("cone", &a, "4").status.code(), Some(0));
    assert_eq!(dump("cone", &b, "4").status.code(), Some(0));
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().next().unwrap(), "stream_id,path_id,A,L,weight,exit_side");
    assert_eq!(text.lines().count(), 41);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());

    let side: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.csv.json")).unwrap()).unwrap();
    assert_eq!(side["rows"], 40);
    assert!(side["attempts"].as_u64().unwrap() >= 40);
    assert_eq!(side["run_config"]["seed"], 4);
}

#[test]
fn gmc_dump_schema_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.csv");
    assert_eq!(dump("gmc", &path, "2").status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "stream_id,draw_id,nu,mu,weight");
    assert_eq!(text.lines().count(), 41);
    let side: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("g.csv.json")).unwrap()).unwrap();
    assert_eq!(side["lattice"]["kind"], "boundary_1d");
}

#[test]
fn io_errors_exit_3() {
    let out = dump("gmc", Path::new("/nonexistent-dir/x.csv"), "1");
    assert_eq!(out.status.code(), Some(3));
    let out = fzzlab(&["verify", "identities", "--out", "/nonexistent-dir/r.ndjson"]);
    assert_eq!(out.status.code(), Some(3));
}
