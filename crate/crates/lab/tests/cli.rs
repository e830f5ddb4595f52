use std::path::Path;
use std::process::{Command, Output};

use matsq_lab::config::{ExperimentConfig, FiltrationSpec, FunctionSpec, WeightSpec};

fn matsq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_matsq")).args(args).output().expect("binary runs")
}

fn small(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        filtration: FiltrationSpec::Random {
            depth: 4,
            max_children: 3,
            measure_skew: 0.5,
        },
        trials: 3,
        out_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn generate_then_validate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("gen");
    let cfg = write_config(tmp.path(), &small(&out));
    for cmd in ["gen-filtration", "gen-weight", "gen-function"] {
        let o = matsq(&[cmd, "--config", &cfg]);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let p = |f: &str| out.join(f).to_str().unwrap().to_string();
    let o = matsq(&[
        "validate",
        "--filtration",
        &p("filtration.json"),
        "--weight",
        &p("weight_u.json"),
        "--weight",
        &p("weight_v.json"),
        "--function",
        &p("function.json"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[W]_A2"));
}

#[test]
fn corrupt_weight_file_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("gen");
    let cfg = write_config(tmp.path(), &small(&out));
    assert_eq!(code(&matsq(&["gen-weight", "--config", &cfg])), 0);
    let fl = out.join("filtration.json");
    let w = out.join("weight_u.json");

    // Truncated JSON.
    let text = std::fs::read_to_string(&w).unwrap();
    std::fs::write(&w, &text[..text.len() / 2]).unwrap();
    let o = matsq(&["validate", "--filtration", fl.to_str().unwrap(), "--weight", w.to_str().unwrap()]);
    assert_eq!(code(&o), 3);

    // Well-formed JSON with an indefinite leaf: the error names the leaf.
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    let leaf = &mut doc["leaves"][0];
    let id = leaf["id"].as_str().unwrap().to_string();
    leaf["matrix"] = serde_json::json!([-1.0, 0.0, 0.0, 1.0]);
    std::fs::write(&w, doc.to_string()).unwrap();
    let o = matsq(&["validate", "--filtration", fl.to_str().unwrap(), "--weight", w.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains(&id));

    // A run configured with the broken file fails the same way.
    let mut c = small(&tmp.path().join("run"));
    c.filtration = FiltrationSpec::File { path: fl.clone() };
    c.u_weight = WeightSpec::File { path: w.clone() };
    let cfg = write_config(tmp.path(), &c);
    assert_eq!(code(&matsq(&["run-theorem1", "--config", &cfg])), 3);
}

#[test]
fn bad_configs_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.json");
    std::fs::write(&p, "{ not json").unwrap();
    assert_eq!(code(&matsq(&["run-sparse", "--config", p.to_str().unwrap()])), 3);

    let mut c = small(tmp.path());
    c.schema_version = 99;
    let cfg = write_config(tmp.path(), &c);
    assert_eq!(code(&matsq(&["verify-all", "--config", &cfg])), 3);

    let mut c = small(tmp.path());
    c.d = 3; // rotation_power needs d = 2
    let cfg = write_config(tmp.path(), &c);
    assert_eq!(code(&matsq(&["run-theorem1", "--config", &cfg])), 3);

    assert_eq!(code(&matsq(&["run-vs", "--config", "/nonexistent/config.json"])), 3);
    assert_eq!(code(&matsq(&["run-vs", "--jobs", "0"])), 3);
}

#[test]
fn loose_audit_still_exits_0() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sparse");
    let mut c = small(&out);
    c.audit_eps = 0.9;
    let cfg = write_config(tmp.path(), &c);
    let o = matsq(&["run-sparse", "--config", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(out.join("trials/sparse_0000_family.json").is_file());
}

#[test]
fn zero_trials_give_an_empty_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("empty");
    let mut c = small(&out);
    c.trials = 0;
    let cfg = write_config(tmp.path(), &c);
    let o = matsq(&["run-theorem1", "--config", &cfg]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(out.join("theorem1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("trial,ratio,a2,ainf"));
}

#[test]
fn runs_are_reproducible_and_seed_sensitive() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small(&tmp.path().join("x")));
    let run = |dir: &str, seed: &str| {
        let out = tmp.path().join(dir);
        let o = matsq(&["run-theorem1", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
        std::fs::read(out.join("theorem1.csv")).unwrap()
    };
    assert_eq!(run("a", "5"), run("b", "5"));
    assert_ne!(run("a", "5"), run("c", "6"));
}

#[test]
fn every_run_command_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small(&tmp.path().join("runs"));
    c.function = FunctionSpec::Gaussian { scale: 2.0 };
    let cfg = write_config(tmp.path(), &c);
    for (cmd, file) in [
        ("run-corollary", "corollary.csv"),
        ("run-sparse", "sparse.csv"),
        ("run-vs", "vs.csv"),
    ] {
        let o = matsq(&[cmd, "--config", &cfg, "--jobs", "1"]);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stdout));
        let csv = std::fs::read_to_string(tmp.path().join("runs").join(file)).unwrap();
        assert_eq!(csv.lines().count(), 4);
    }
    assert!(tmp.path().join("runs/trials/vs_0002_kernel.csv").is_file());
}
