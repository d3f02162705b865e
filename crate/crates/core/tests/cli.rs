mod common;

use common::*;
use dirreg::cli::{run_scenario, AnalysisStatus, RunOptions};
use proptest::prelude::*;
use std::path::Path;
use std::process::{Command, Output};

fn dirreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dirreg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_to(scenario: &Path, out: &Path, extra: &[&str]) -> (i32, serde_json::Value) {
    let mut args = vec![
        "run",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ];
    args.extend_from_slice(extra);
    let o = dirreg(&args);
    let report = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    (o.status.code().unwrap(), report)
}

fn without_clock(mut v: serde_json::Value) -> serde_json::Value {
    v.as_object_mut().unwrap().remove("wall_clock_ms");
    v
}

#[test]
fn cubic_scenario_exits_zero_within_bound() {
    let dir = tempfile::tempdir().unwrap();
    let (code, report) = run_to(&scenario_dir().join("cubic.json"), &dir.path().join("r.json"), &[]);
    assert_eq!(code, 0);
    assert_eq!(report["exit_code"], 0);
    let tau = report["analyses"][0]["result"]["tau_estimate"].as_f64().unwrap();
    assert!(tau <= 1.1225, "{tau}");
    assert_eq!(report["scenario"]["name"], "cubic-difference");
    assert_eq!(report["determinism_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn square_gamma_one_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let (code, report) = run_to(
        &scenario_dir().join("square-gamma1.json"),
        &dir.path().join("r.json"),
        &[],
    );
    assert_eq!(code, 3);
    assert_eq!(report["analyses"][0]["result"]["verdict"]["verdict"], "violation-found");
}

#[test]
fn malformed_files_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("truncated.json", "{\"version\": 1,"),
        (
            "wrong-type.json",
            r#"{"version": 1, "map": {"f": {"builtin": "square"}}, "analyses": [{"kind": "slope", "x": [0], "y": [1], "gamma": "half", "slope_kind": "local", "region": {"lo": [-1], "hi": [1]}}]}"#,
        ),
        (
            "unknown-kind.json",
            r#"{"version": 1, "map": {"f": {"builtin": "square"}}, "analyses": [{"kind": "bogus"}]}"#,
        ),
        (
            "unknown-builtin.json",
            r#"{"version": 1, "map": {"f": {"builtin": "quartic"}}, "analyses": []}"#,
        ),
        (
            "no-analyses.json",
            r#"{"version": 1, "map": {"f": {"builtin": "square"}}, "analyses": []}"#,
        ),
        (
            "bad-dims.json",
            r#"{"version": 1, "map": {"f": {"builtin": "square"}}, "analyses": [{"kind": "modulus", "base_x": [0, 0], "base_y": [0], "gamma": 1, "delta": 1, "region": {"lo": [-1], "hi": [1]}}]}"#,
        ),
    ];
    for (name, text) in cases {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        let o = dirreg(&["run", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "{name}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(name), "{name}: {err}");
        assert!(o.stdout.is_empty(), "{name}");
    }
    let o = dirreg(&["run", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn diagnostics_name_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.json");
    std::fs::write(&p, "{\n  \"version\": 1,\n  \"seed\": -3,\n  \"analyses\": []\n}").unwrap();
    let err = String::from_utf8_lossy(&dirreg(&["run", p.to_str().unwrap()]).stderr).to_string();
    assert!(err.contains(":3:"), "{err}");
    assert!(err.contains("`seed`"), "{err}");
}

#[test]
fn reports_are_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario_dir().join("identity.json");
    let (_, a) = run_to(
        &s,
        &dir.path().join("a.json"),
        &["--csv", dir.path().join("a.csv").to_str().unwrap()],
    );
    let (_, b) = run_to(
        &s,
        &dir.path().join("b.json"),
        &["--csv", dir.path().join("b.csv").to_str().unwrap()],
    );
    assert_eq!(without_clock(a.clone()), without_clock(b));
    assert_eq!(
        std::fs::read(dir.path().join("a.csv")).unwrap(),
        std::fs::read(dir.path().join("b.csv")).unwrap()
    );
    let (_, c) = run_to(&s, &dir.path().join("c.json"), &["--seed", "43"]);
    assert_ne!(a["determinism_hash"], c["determinism_hash"]);
    assert_eq!(c["seed"], 43);
}

#[test]
fn csv_has_one_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("s.csv");
    let (_, report) = run_to(
        &scenario_dir().join("perturbation.json"),
        &dir.path().join("r.json"),
        &["--samples", "120", "--csv", csv_path.to_str().unwrap()],
    );
    let total = report["analyses"][0]["result"]["modulus_f"]["total"].as_u64().unwrap()
        + report["analyses"][0]["result"]["modulus_perturbed"]["total"]
            .as_u64()
            .unwrap();
    assert_eq!(total, 240);
    let mut r = csv::Reader::from_path(&csv_path).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len() as u64, total);
    let stages: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.get(2).unwrap()).collect();
    assert_eq!(
        stages.into_iter().collect::<Vec<_>>(),
        ["modulus-f", "modulus-perturbed"]
    );
}

#[test]
fn report_goes_to_stdout_without_out() {
    let o = dirreg(&[
        "run",
        scenario_dir().join("coderivative.json").to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["tool"], "dirreg");
    assert!(o.stderr.is_empty());
}

#[test]
fn list_builtins_names_registry() {
    let o = dirreg(&["list-builtins"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    for name in [
        "cubic-difference",
        "identity",
        "square",
        "linear",
        "lp-toy-leq",
        "square-geq",
        "min-two-leq",
        "polyhedron",
    ] {
        assert!(text.contains(name), "{name}");
    }
}

#[test]
fn bundled_scenarios_match_the_schema_file() {
    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scenario_dir().join("../schema/scenario.schema.json")).unwrap())
            .unwrap();
    let kinds: Vec<&str> = schema["$defs"]["analysis"]["oneOf"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["properties"]["kind"]["const"].as_str().unwrap())
        .collect();
    assert_eq!(
        kinds,
        [
            "slope",
            "modulus",
            "criterion",
            "equiv1",
            "mf",
            "perturb",
            "sensitivity"
        ]
    );
    for p in bundled() {
        let (s, _) = dirreg::cli::load_scenario(&p).unwrap();
        for a in &s.analyses {
            assert!(kinds.contains(&a.kind()));
        }
    }
}

/// True when some nested modulus record carries a violation verdict.
fn has_violation(v: &serde_json::Value) -> bool {
    match v {
        serde_json::Value::Object(m) => {
            m.get("verdict")
                .and_then(|v| v.get("verdict"))
                .is_some_and(|v| v == "violation-found")
                || m.values().any(has_violation)
        }
        serde_json::Value::Array(a) => a.iter().any(has_violation),
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn violations_exit_three(index in 0usize..64, seed in 0u64..10_000, samples in 60usize..400) {
        let paths = bundled();
        let (s, echo) = dirreg::cli::load_scenario(&paths[index % paths.len()]).unwrap();
        let out = run_scenario(&s, &echo, &RunOptions { seed: Some(seed), samples: Some(samples) }).unwrap();
        let worst = out.report.analyses.iter().map(|a| a.status).max().unwrap();
        let violation = out.report.analyses.iter().any(|a| has_violation(&a.result));
        prop_assert_eq!(violation, out.report.exit_code == 3);
        prop_assert_eq!(violation, worst == AnalysisStatus::Violation);
        let expected = match worst {
            AnalysisStatus::Ok => 0,
            AnalysisStatus::Inconclusive => 2,
            AnalysisStatus::Violation => 3,
        };
        prop_assert_eq!(out.report.exit_code, expected);
    }
}
