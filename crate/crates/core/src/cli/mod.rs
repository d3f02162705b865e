//! Scenario-driven front end: run analyses, assemble reports and sample dumps.

mod scenario;

pub use scenario::{
    load_scenario, parse_scenario, Analysis, DirectionInput, InputError, MapSpec, MfCheck, OutputSpec, ProgramSpec,
    QuerySpec, Scenario, SCENARIO_VERSION,
};

use crate::error::Error;
use crate::maps::SetValuedMap;
use crate::regularity::{
    coderivative_slope, estimate_modulus, gamma1_equivalence_check, local_criterion, nonlocal_criterion,
    perturbation_condition, perturbation_experiment, ModulusReport, PerturbationCondition, Verdict,
};
use crate::sensitivity::{
    robinson_check, sandwich_check, solve_program, ParametricProgram, ProgramSolution, RobinsonReport, SandwichReport,
    SandwichStatus, BUILTIN_PROGRAMS,
};
use crate::serde_ext::{real, real_opt};
use crate::slopes::{holder_slope_of_phi, SlopeKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisStatus {
    Ok,
    Inconclusive,
    Violation,
}

impl AnalysisStatus {
    fn exit_code(self) -> i32 {
        match self {
            AnalysisStatus::Ok => EXIT_OK,
            AnalysisStatus::Inconclusive => EXIT_INCONCLUSIVE,
            AnalysisStatus::Violation => EXIT_VIOLATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutcome {
    pub index: usize,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub seed: u64,
    pub status: AnalysisStatus,
    /// Set when the analysis stopped with a numerical error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub result: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub tool_version: String,
    pub report_version: u32,
    pub scenario_name: String,
    pub seed: u64,
    pub scenario: serde_json::Value,
    pub analyses: Vec<AnalysisOutcome>,
    pub exit_code: i32,
    /// SHA-256 over every sampled input pair and every analysis result.
    pub determinism_hash: String,
    /// Excluded from determinism comparisons.
    pub wall_clock_ms: u64,
}

impl Report {
    /// Pretty JSON with `wall_clock_ms` zeroed, for run-to-run comparison.
    pub fn canonical_json(&self) -> String {
        let mut r = self.clone();
        r.wall_clock_ms = 0;
        serde_json::to_string_pretty(&r).expect("report serializes")
    }
}

/// One CSV row per sampled `(x, y)` pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub analysis: usize,
    pub label: String,
    pub stage: String,
    pub sample: usize,
    pub shell: usize,
    pub x: String,
    pub y: String,
    pub offset_norm: f64,
    pub class: String,
    pub image_distance: String,
    pub inverse_distance: String,
    pub ratio: String,
}

fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:e}")
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| fmt_real(*x)).collect::<Vec<_>>().join(";")
}

fn class_name(c: crate::regularity::SampleClass) -> String {
    serde_json::to_value(c)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

struct Collector {
    hasher: Sha256,
    rows: Vec<CsvRow>,
}

impl Collector {
    fn modulus(&mut self, analysis: usize, label: &str, stage: &str, m: &ModulusReport) {
        for s in &m.samples {
            for v in s.x.iter().chain(&s.y) {
                self.hasher.update(v.to_le_bytes());
            }
            self.rows.push(CsvRow {
                analysis,
                label: label.to_string(),
                stage: stage.to_string(),
                sample: s.index,
                shell: s.shell,
                x: fmt_vec(&s.x),
                y: fmt_vec(&s.y),
                offset_norm: s.offset_norm,
                class: class_name(s.class),
                image_distance: fmt_real(s.image_distance),
                inverse_distance: s.inverse_distance.map(fmt_real).unwrap_or_default(),
                ratio: s.ratio.map(fmt_real).unwrap_or_default(),
            });
        }
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
}

pub struct RunOutput {
    pub report: Report,
    pub rows: Vec<CsvRow>,
}

fn verdict_status(v: &Verdict) -> AnalysisStatus {
    match v {
        Verdict::Regular { .. } => AnalysisStatus::Ok,
        Verdict::ViolationFound => AnalysisStatus::Violation,
        Verdict::Inconclusive => AnalysisStatus::Inconclusive,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareResult {
    #[serde(with = "real")]
    pub c: f64,
    pub condition: PerturbationCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfResult {
    #[serde(with = "real")]
    pub m_f: f64,
    pub checks: Vec<CompareResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub solution: ProgramSolution,
    pub sandwich: SandwichReport,
    /// Robinson probes around `d` and `−d` at each found solution.
    pub robinson: Vec<[RobinsonReport; 2]>,
    /// Largest primal–dual gap of the linearized problems; absent when none is finite.
    #[serde(with = "real_opt")]
    pub max_duality_gap: Option<f64>,
}

enum Ctx<'a> {
    Map(&'a SetValuedMap),
    Program(&'a ParametricProgram),
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("result serializes")
}

/// Runs one analysis. `Err` is reserved for input problems.
fn run_analysis(
    a: &Analysis,
    index: usize,
    seed: u64,
    opts: &RunOptions,
    ctx: Ctx<'_>,
    col: &mut Collector,
) -> Result<(AnalysisStatus, serde_json::Value), Error> {
    let label = a.label().unwrap_or("").to_string();
    let map = || match ctx {
        Ctx::Map(m) => Ok(m),
        Ctx::Program(_) => Err(Error::InvalidInput("analysis needs a map".into())),
    };
    Ok(match a {
        Analysis::Slope {
            x,
            y,
            gamma,
            slope_kind,
            region,
            ..
        } => {
            let s = holder_slope_of_phi(map()?, y, x, *gamma, *slope_kind, region)?;
            let status = if s.converged {
                AnalysisStatus::Ok
            } else {
                AnalysisStatus::Inconclusive
            };
            (status, to_value(&s))
        }
        Analysis::Modulus { query, .. } => {
            let q = query.build(map()?, seed, opts.samples)?;
            let r = estimate_modulus(&q)?;
            col.modulus(index, &label, "modulus", &r);
            (verdict_status(&r.verdict), to_value(&r))
        }
        Analysis::Criterion { query, slope_kind, .. } => {
            let q = query.build(map()?, seed, opts.samples)?;
            let r = match slope_kind {
                SlopeKind::Local => local_criterion(&q)?,
                SlopeKind::Nonlocal => nonlocal_criterion(&q)?,
            };
            let status = if r.inconclusive {
                AnalysisStatus::Inconclusive
            } else {
                AnalysisStatus::Ok
            };
            (status, to_value(&r))
        }
        Analysis::Equiv1 { query, .. } => {
            let q = query.build(map()?, seed, opts.samples)?;
            let r = gamma1_equivalence_check(&q)?;
            col.modulus(index, &label, "modulus", &r.modulus);
            let status = match (&r.modulus.verdict, r.consistent) {
                (Verdict::ViolationFound, _) => AnalysisStatus::Violation,
                (_, true) => AnalysisStatus::Ok,
                (_, false) => AnalysisStatus::Inconclusive,
            };
            (status, to_value(&r))
        }
        Analysis::Mf { x, y, check, .. } => {
            let m = map()?;
            let m_f = coderivative_slope(m, x, y)?;
            let mut checks = Vec::new();
            if let Some(chk) = check {
                let q = chk.query.build(m, seed, opts.samples)?;
                for &c in &chk.c {
                    checks.push(CompareResult {
                        c,
                        condition: perturbation_condition(m, &chk.perturbation, &q, c)?,
                    });
                }
            }
            (AnalysisStatus::Ok, to_value(&MfResult { m_f, checks }))
        }
        Analysis::Perturb {
            query, perturbation, ..
        } => {
            let q = query.build(map()?, seed, opts.samples)?;
            let r = perturbation_experiment(&q, perturbation)?;
            col.modulus(index, &label, "modulus-f", &r.modulus_f);
            col.modulus(index, &label, "modulus-perturbed", &r.modulus_perturbed);
            let worst = verdict_status(&r.modulus_f.verdict).max(verdict_status(&r.modulus_perturbed.verdict));
            let status = if worst == AnalysisStatus::Ok && !r.within_bound {
                AnalysisStatus::Inconclusive
            } else {
                worst
            };
            (status, to_value(&r))
        }
        Analysis::Sensitivity {
            d,
            schedule,
            robinson_rho,
            ..
        } => {
            let Ctx::Program(p) = ctx else {
                return Err(Error::InvalidInput("sensitivity needs a program".into()));
            };
            let mut sched = schedule.unwrap_or_default();
            if schedule.is_none() {
                sched.seed = seed;
            }
            let solution = solve_program(p, &vec![0.0; p.y_dim()])?;
            let sandwich = sandwich_check(p, d, &sched)?;
            let rho = robinson_rho.unwrap_or(1e-3);
            let neg: Vec<f64> = d.iter().map(|v| -v).collect();
            let mut robinson = Vec::new();
            for c in &solution.clusters {
                robinson.push([
                    robinson_check(p, &c.x, d, rho, seed)?,
                    robinson_check(p, &c.x, &neg, rho, seed)?,
                ]);
            }
            let max_duality_gap = sandwich.solutions.iter().filter_map(|s| s.duality_gap).reduce(f64::max);
            let status = match sandwich.status {
                SandwichStatus::Holds => AnalysisStatus::Ok,
                SandwichStatus::Fails | SandwichStatus::Inconclusive => AnalysisStatus::Inconclusive,
            };
            let r = SensitivityResult {
                solution,
                sandwich,
                robinson,
                max_duality_gap,
            };
            (status, to_value(&r))
        }
    })
}

fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::NotInSet { .. }
    )
}

/// Runs every analysis in declaration order.
pub fn run_scenario(scenario: &Scenario, echo: &serde_json::Value, opts: &RunOptions) -> Result<RunOutput, InputError> {
    let start = std::time::Instant::now();
    let seed = opts.seed.unwrap_or(scenario.seed);
    let map = match &scenario.map {
        Some(spec) => Some(spec.build().map_err(|e| InputError(format!("at `map`: {e}")))?),
        None => None,
    };
    let program = match &scenario.program {
        Some(spec) => Some(spec.build().map_err(|e| InputError(format!("at `program`: {e}")))?),
        None => None,
    };
    let mut col = Collector {
        hasher: Sha256::new(),
        rows: Vec::new(),
    };
    let mut outcomes = Vec::new();
    for (i, a) in scenario.analyses.iter().enumerate() {
        let a_seed = seed.wrapping_add(i as u64);
        let ctx = match (a, &map, &program) {
            (Analysis::Sensitivity { .. }, _, Some(p)) => Ctx::Program(p),
            (_, Some(m), _) => Ctx::Map(m),
            _ => return Err(InputError(format!("at `analyses[{i}]`: missing map or program"))),
        };
        let (status, error, result) = match run_analysis(a, i, a_seed, opts, ctx, &mut col) {
            Ok((s, v)) => (s, None, v),
            Err(e) if is_input_error(&e) => return Err(InputError(format!("at `analyses[{i}]`: {e}"))),
            Err(e) => (
                AnalysisStatus::Inconclusive,
                Some(e.to_string()),
                serde_json::Value::Null,
            ),
        };
        col.hasher
            .update(serde_json::to_string(&result).expect("result serializes").as_bytes());
        outcomes.push(AnalysisOutcome {
            index: i,
            kind: a.kind().to_string(),
            label: a.label().map(String::from),
            seed: a_seed,
            status,
            error,
            result,
        });
    }
    let worst = outcomes.iter().map(|o| o.status).max().unwrap_or(AnalysisStatus::Ok);
    let digest = col.hasher.finalize();
    let report = Report {
        tool: "dirreg".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        report_version: REPORT_VERSION,
        scenario_name: scenario.name.clone(),
        seed,
        scenario: echo.clone(),
        analyses: outcomes,
        exit_code: worst.exit_code(),
        determinism_hash: digest.iter().map(|b| format!("{b:02x}")).collect(),
        wall_clock_ms: start.elapsed().as_millis() as u64,
    };
    Ok(RunOutput { report, rows: col.rows })
}

pub fn write_csv(path: &Path, rows: &[CsvRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record([
            "analysis",
            "label",
            "stage",
            "sample",
            "shell",
            "x",
            "y",
            "offset_norm",
            "class",
            "image_distance",
            "inverse_distance",
            "ratio",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

/// One line per analysis for the terminal.
pub fn summary(report: &Report) -> String {
    let mut out = String::new();
    for a in &report.analyses {
        let label = a.label.as_deref().map(|l| format!(" `{l}`")).unwrap_or_default();
        let detail = match (a.kind.as_str(), &a.result) {
            ("modulus", r) => format!(
                "tau={} admissible={} empty_inverse={} max_ratio_with_empty={}",
                r["tau_estimate"], r["admissible_count"], r["empty_inverse"], r["max_ratio_empty_as_infinite"]
            ),
            ("criterion", r) => format!("liminf={} positive={}", r["liminf_estimate"], r["positive"]),
            ("equiv1", r) => format!("consistent={}", r["consistent"]),
            ("slope", r) => format!("value={}", r["value"]),
            ("mf", r) => format!("m_F={}", r["m_f"]),
            ("perturb", r) => format!("tau_perturbed={} bound={}", r["tau_perturbed"], r["bound"]),
            ("sensitivity", r) => format!(
                "[{}, {}] vs fd [{}, {}]",
                r["sandwich"]["lower_bound"],
                r["sandwich"]["upper_bound"],
                r["sandwich"]["fd_lower"],
                r["sandwich"]["fd_upper"]
            ),
            _ => String::new(),
        };
        let status = serde_json::to_value(a.status)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        out.push_str(&format!("[{}] {}{}: {} {}\n", a.index, a.kind, label, status, detail));
        if let Some(e) = &a.error {
            out.push_str(&format!("    error: {e}\n"));
        }
    }
    out.push_str(&format!("exit {}\n", report.exit_code));
    out
}

const MAP_BUILTINS: [(&str, &str); 8] = [
    ("identity", "{\"dim\": n}  x ↦ x"),
    ("square", "x ↦ x² on R"),
    ("cubic-difference", "(x₁, x₂) ↦ (x₁ − x₂)³"),
    ("linear", "{\"matrix\": [[..], ..]}  x ↦ Ax"),
    ("scaled-sin", "{\"scale\": s, \"dim\": n}  x ↦ s·sin(x) componentwise"),
    ("zero", "{\"in_dim\": n, \"out_dim\": m}  x ↦ 0"),
    ("sum", "{\"terms\": [f, ..]}  pointwise sum"),
    ("scaled", "{\"factor\": c, \"inner\": f}  x ↦ c·f(x)"),
];

const SET_KINDS: [(&str, &str); 4] = [
    ("box", "{\"lo\": [..], \"hi\": [..]}  bounds may be \"inf\"/\"-inf\""),
    ("polyhedron", "{\"a\": [[..], ..], \"b\": [..]}  {z : Az ≤ b}"),
    ("ball", "{\"center\": [..], \"radius\": r}"),
    ("singleton", "{\"p\": [..]}"),
];

const ANALYSES: [(&str, &str); 7] = [
    ("slope", "x, y, gamma, slope_kind (local|nonlocal), region"),
    (
        "modulus",
        "base_x, base_y, gamma, delta, eta, region, [direction, samples, seed, ratio_cap]",
    ),
    ("criterion", "slope_kind plus the modulus fields"),
    ("equiv1", "modulus fields with gamma = 1"),
    ("mf", "x, y, [check: {perturbation, c: [..], query}]"),
    ("perturb", "perturbation plus the modulus fields (gamma = 1)"),
    ("sensitivity", "d, [schedule, robinson_rho]; needs a program"),
];

pub fn list_builtins() -> String {
    let mut out = String::from("maps (\"f\": {\"builtin\": name, ..}):\n");
    for (n, d) in MAP_BUILTINS {
        out.push_str(&format!("  {n:<18} {d}\n"));
    }
    out.push_str("sets (\"set\": {\"kind\": name, ..}):\n");
    for (n, d) in SET_KINDS {
        out.push_str(&format!("  {n:<18} {d}\n"));
    }
    out.push_str("programs (\"program\": {\"builtin\": name}):\n");
    for (n, d) in BUILTIN_PROGRAMS {
        out.push_str(&format!("  {n:<18} {d}\n"));
    }
    out.push_str("analyses (\"kind\"):\n");
    for (n, d) in ANALYSES {
        out.push_str(&format!("  {n:<18} {d}\n"));
    }
    out
}

/// Loads, runs and writes outputs; returns the process exit code.
pub fn run_file(path: &Path, opts: &RunOptions, out: Option<&Path>, csv_path: Option<&Path>, quiet: bool) -> i32 {
    let fail = |msg: String| {
        eprintln!("error: {msg}");
        EXIT_INPUT
    };
    let (scenario, echo) = match load_scenario(path) {
        Ok(s) => s,
        Err(e) => return fail(e.0),
    };
    let base = path.parent().unwrap_or(Path::new("."));
    let out = out
        .map(Path::to_path_buf)
        .or_else(|| scenario.output.report.as_ref().map(|p| base.join(p)));
    let csv_path = csv_path
        .map(Path::to_path_buf)
        .or_else(|| scenario.output.csv.as_ref().map(|p| base.join(p)));
    let run = match run_scenario(&scenario, &echo, opts) {
        Ok(r) => r,
        Err(e) => return fail(format!("{}: {}", path.display(), e.0)),
    };
    let json = serde_json::to_string_pretty(&run.report).expect("report serializes");
    match &out {
        Some(p) => {
            if let Err(e) = std::fs::write(p, json + "\n") {
                return fail(format!("{}: {e}", p.display()));
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{json}");
        }
    }
    if let Some(p) = &csv_path {
        if let Err(e) = write_csv(p, &run.rows) {
            return fail(format!("{}: {e}", p.display()));
        }
    }
    if !quiet {
        eprint!("{}", summary(&run.report));
    }
    run.report.exit_code
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "version": 1,
        "name": "id",
        "map": {"f": {"builtin": "identity", "dim": 1}},
        "analyses": [
            {"kind": "modulus", "base_x": [0], "base_y": [0], "gamma": 1, "delta": 1,
             "region": {"lo": [-3], "hi": [3]}, "samples": 200}
        ]
    }"#;

    #[test]
    fn minimal_scenario_runs() {
        let (s, echo) = parse_scenario(MINIMAL, "mem").unwrap();
        assert_eq!(s.seed, 42);
        let out = run_scenario(&s, &echo, &RunOptions::default()).unwrap();
        assert_eq!(out.report.exit_code, EXIT_OK);
        assert_eq!(out.rows.len(), 200);
        assert_eq!(out.report.analyses[0].seed, 42);
        let tau = out.report.analyses[0].result["tau_estimate"].as_f64().unwrap();
        assert!((tau - 1.0).abs() < 1e-6);
    }

    #[test]
    fn overrides_apply() {
        let (s, echo) = parse_scenario(MINIMAL, "mem").unwrap();
        let opts = RunOptions {
            seed: Some(7),
            samples: Some(50),
        };
        let out = run_scenario(&s, &echo, &opts).unwrap();
        assert_eq!(out.report.seed, 7);
        assert_eq!(out.rows.len(), 50);
    }

    #[test]
    fn schema_errors_have_locations() {
        let bad = MINIMAL.replace("\"gamma\": 1", "\"gamma\": \"one\"");
        let e = parse_scenario(&bad, "mem").unwrap_err();
        assert!(e.0.starts_with("mem:"), "{e}");
        assert!(e.0.contains("analyses[0]"), "{e}");

        let e = parse_scenario(&MINIMAL.replace("\"version\": 1", "\"version\": 2"), "mem").unwrap_err();
        assert!(e.0.contains("version"), "{e}");

        let e = parse_scenario(&MINIMAL.replace("identity", "no-such-map"), "mem").unwrap_err();
        assert!(e.0.contains("map"), "{e}");

        let e = parse_scenario(&MINIMAL.replace("\"name\"", "\"nmae\""), "mem").unwrap_err();
        assert!(e.0.contains("nmae"), "{e}");

        assert!(parse_scenario("{", "mem").is_err());
    }

    #[test]
    fn sensitivity_needs_program() {
        let text = r#"{"version": 1, "map": {"f": {"builtin": "square"}},
            "analyses": [{"kind": "sensitivity", "d": [1]}]}"#;
        let e = parse_scenario(text, "mem").unwrap_err();
        assert!(e.0.contains("program"), "{e}");
    }

    #[test]
    fn off_graph_base_point_is_input_error() {
        let (s, echo) = parse_scenario(&MINIMAL.replace("\"base_y\": [0]", "\"base_y\": [1]"), "mem").unwrap();
        assert!(run_scenario(&s, &echo, &RunOptions::default()).is_err());
    }

    #[test]
    fn listing_names_builtins() {
        let l = list_builtins();
        for name in [
            "cubic-difference",
            "identity",
            "lp-toy-leq",
            "min-two-leq",
            "sensitivity",
        ] {
            assert!(l.contains(name), "{name}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let (s, echo) = parse_scenario(MINIMAL, "mem").unwrap();
        let out = run_scenario(&s, &echo, &RunOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_csv(&p, &out.rows).unwrap();
        let mut r = csv::Reader::from_path(&p).unwrap();
        let headers = r.headers().unwrap().clone();
        assert_eq!(headers.get(0), Some("analysis"));
        assert_eq!(headers.len(), 12);
        assert_eq!(r.records().count(), out.rows.len());
    }
}
