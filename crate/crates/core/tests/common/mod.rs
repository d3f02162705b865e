#![allow(dead_code)]

use dirreg::cli::{load_scenario, Analysis, Scenario};
use dirreg::maps::SetValuedMap;
use dirreg::regularity::RegularityQuery;
use dirreg::sensitivity::ParametricProgram;
use std::path::PathBuf;

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn bundled() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .expect("scenarios directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    v.sort();
    v
}

pub fn load(name: &str) -> (Scenario, serde_json::Value) {
    load_scenario(&scenario_dir().join(name)).unwrap_or_else(|e| panic!("{e}"))
}

pub fn map_of(s: &Scenario) -> SetValuedMap {
    s.map.as_ref().expect("scenario has a map").build().unwrap()
}

pub fn program_of(s: &Scenario) -> ParametricProgram {
    s.program.as_ref().expect("scenario has a program").build().unwrap()
}

/// Query of the `i`-th analysis, seeded as the runner seeds it.
pub fn query_of(s: &Scenario, i: usize) -> RegularityQuery {
    let map = map_of(s);
    let seed = s.seed + i as u64;
    match &s.analyses[i] {
        Analysis::Modulus { query, .. }
        | Analysis::Criterion { query, .. }
        | Analysis::Equiv1 { query, .. }
        | Analysis::Perturb { query, .. } => query.build(&map, seed, None).unwrap(),
        Analysis::Mf { check: Some(c), .. } => c.query.build(&map, seed, None).unwrap(),
        other => panic!("analysis `{}` has no query", other.kind()),
    }
}

/// Directions of the sensitivity analyses in a scenario.
pub fn directions_of(s: &Scenario) -> Vec<Vec<f64>> {
    s.analyses
        .iter()
        .filter_map(|a| match a {
            Analysis::Sensitivity { d, .. } => Some(d.clone()),
            _ => None,
        })
        .collect()
}
