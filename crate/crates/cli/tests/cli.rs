use std::path::Path;
use std::process::{Command, Output};

use hardgen_core::fixtures::{hardened_two_scenario_selection, two_scenario_selection};
use hardgen_core::{build_uncertainty, solve_exact, Instance};
use serde_json::Value;

fn hardgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hardgen"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_ru_is_deterministic() {
    let args = ["generate", "--problem", "selection", "--n", "4", "--scenarios", "2", "--p", "2", "--method", "none", "--seed", "7"];
    let a = hardgen(&args);
    let b = hardgen(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let inst = Instance::parse(&String::from_utf8(a.stdout).unwrap()).unwrap();
    assert_eq!((inst.n(), inst.scenarios()), (4, 2));
    assert!(inst.costs().iter().flatten().all(|&c| c.fract() == 0.0 && (0.0..=100.0).contains(&c)));
}

#[test]
fn harden_fixture_with_exact_method() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("fixture.hiro");
    let out = dir.path().join("hard.hiro");
    two_scenario_selection().write(&input).unwrap();
    let res = hardgen(&["generate", "--in", path_str(&input), "--method", "mro-ex", "--budget", "1", "--out", path_str(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let hard = Instance::read(&out).unwrap();
    assert!(solve_exact(&hard, None).unwrap().value >= 10.0 - 1e-6);
    let boxes = build_uncertainty(&two_scenario_selection(), 1.0).unwrap();
    assert!(boxes.iter().zip(hard.costs()).all(|(b, c)| b.contains(c, 1e-7)));

    let log: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("hard.hiro.log.json")).unwrap()).unwrap();
    assert_eq!(log["method"], "mro-ex");
    assert_eq!(log["stop"], "converged");
    assert!(log["generation_time"].is_number());
}

#[test]
fn evaluate_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    for (inst, value) in [(two_scenario_selection(), 8.0), (hardened_two_scenario_selection(), 10.0)] {
        let path = dir.path().join("x.hiro");
        inst.write(&path).unwrap();
        let res = hardgen(&["evaluate", "--in", path_str(&path)]);
        assert!(res.status.success());
        let v: Value = serde_json::from_slice(&res.stdout).unwrap();
        assert_eq!(v["value"], value);
        assert_eq!(v["solution"], serde_json::json!([1, 4]));
        assert_eq!(v["optimal"], true);
        assert!(v["nodes"].as_u64().unwrap() >= 1);
    }
}

#[test]
fn single_scenario_evaluates_to_nominal() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.hiro");
    let res = hardgen(&["generate", "--problem", "selection", "--n", "10", "--scenarios", "1", "--seed", "3", "--out", path_str(&path)]);
    assert!(res.status.success());
    let inst = Instance::read(&path).unwrap();
    let mut c = inst.costs()[0].clone();
    c.sort_by(f64::total_cmp);
    let nominal: f64 = c[..5].iter().sum();
    let v: Value = serde_json::from_slice(&hardgen(&["evaluate", "--in", path_str(&path)]).stdout).unwrap();
    assert_eq!(v["value"], nominal);
    assert!(v["nodes"].as_u64().unwrap() <= 3);
}

#[test]
fn large_scale_mode_records_generation_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ls.hiro");
    let res = hardgen(&[
        "generate", "--problem", "selection", "--n", "20", "--method", "mro-lsheu", "--budget", "20", "--seed", "1", "--out",
        path_str(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let log: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("ls.hiro.log.json")).unwrap()).unwrap();
    assert!(log["generation_time"].as_f64().unwrap() >= 0.0);
    assert_eq!(Instance::read(&out).unwrap().n(), 20);
}

#[test]
fn bad_flags_exit_with_2() {
    assert_eq!(hardgen(&["generate", "--problem", "selection"]).status.code(), Some(2));
    assert_eq!(hardgen(&["generate", "--problem", "selection", "--n", "4", "--method", "magic"]).status.code(), Some(2));
    assert_eq!(hardgen(&["generate", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(hardgen(&["evaluate", "--in", "/nonexistent/file.hiro"]).status.code(), Some(2));
    assert_eq!(
        hardgen(&["generate", "--problem", "tsp", "--m", "4", "--method", "mro-ldr", "--budget", "1"]).status.code(),
        Some(2)
    );
}

#[test]
fn time_limit_without_incumbent_exits_with_3() {
    // Past 18 nodes the TSP search starts without a seed tour.
    let res = hardgen(&[
        "generate", "--problem", "tsp", "--m", "19", "--scenarios", "2", "--method", "mro-heu", "--budget", "1",
        "--time-limit", "0",
    ]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.hiro");
    let gen = hardgen(&["generate", "--problem", "tsp", "--m", "19", "--scenarios", "2", "--out", path_str(&path)]);
    assert!(gen.status.success());
    let res = hardgen(&["evaluate", "--in", path_str(&path), "--time-limit", "0"]);
    assert_eq!(res.status.code(), Some(3));
    let v: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert!(v["value"].is_null());
    assert_eq!(v["optimal"], false);
}

#[test]
fn batch_writes_table_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("b.toml");
    std::fs::write(
        &cfg,
        "seed = 5\n[[cells]]\nproblem = \"selection\"\nn = 8\nscenarios = 4\nbudgets = [0, 2]\nmethods = [\"mro-heu\"]\ncount = 10\n",
    )
    .unwrap();
    let report = dir.path().join("r.json");
    let run = |jobs: &str| {
        let res = hardgen(&["batch", "--config", path_str(&cfg), "--jobs", jobs, "--out", path_str(&report), "--no-timing"]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        (String::from_utf8(res.stdout).unwrap(), std::fs::read_to_string(&report).unwrap())
    };
    let (table, json) = run("4");
    let (_, again) = run("1");
    assert_eq!(json, again);
    assert!(table.starts_with("problem"));
    let v: Value = serde_json::from_str(&json).unwrap();
    let rows = v["aggregates"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["mean_node_ratio"], 1.0);
    assert!(rows[1]["mean_node_ratio"].is_number());
    assert!(rows[1].get("mean_time_ratio").is_none());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = hardgen_core::BatchConfig::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(cfg.cells.iter().all(|c| (10..=30).contains(&c.count)));
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
