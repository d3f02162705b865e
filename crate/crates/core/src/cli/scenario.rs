//! Scenario files: a map and/or a parametric program plus a list of analyses.

use crate::geometry::{ConvexSet, DirectionSpec, ProductPoint};
use crate::maps::{BoxDomain, SearchRegion, SetValuedMap, SmoothFn};
use crate::regularity::RegularityQuery;
use crate::sensitivity::{DerivativeSchedule, ParametricProgram};
use crate::serde_ext::{real, real_opt, reals};
use crate::slopes::SlopeKind;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCENARIO_VERSION: u32 = 1;

fn default_seed() -> u64 {
    42
}

fn infinite() -> f64 {
    f64::INFINITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<ProgramSpec>,
    pub analyses: Vec<Analysis>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Default report and CSV paths, relative to the scenario file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

/// `x ↦ f(x)` or, with a set, `x ↦ f(x) − K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub f: SmoothFn,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<ConvexSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<BoxDomain>,
}

impl MapSpec {
    pub fn build(&self) -> crate::Result<SetValuedMap> {
        match &self.set {
            None => SetValuedMap::single_smooth(self.f.clone(), self.domain.clone()),
            Some(k) => SetValuedMap::smooth_minus_convex(self.f.clone(), k.clone(), self.domain.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProgramSpec {
    Builtin { builtin: String },
    Custom(Box<ParametricProgram>),
}

impl ProgramSpec {
    pub fn build(&self) -> crate::Result<ParametricProgram> {
        match self {
            ProgramSpec::Builtin { builtin } => ParametricProgram::builtin(builtin),
            ProgramSpec::Custom(p) => {
                p.validate()?;
                Ok((**p).clone())
            }
        }
    }
}

/// Direction `(u, v)` with aperture `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionInput {
    #[serde(with = "reals")]
    pub u: Vec<f64>,
    #[serde(with = "reals")]
    pub v: Vec<f64>,
    pub epsilon: f64,
}

/// Fields shared by the sampling analyses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    #[serde(with = "reals")]
    pub base_x: Vec<f64>,
    #[serde(with = "reals")]
    pub base_y: Vec<f64>,
    pub gamma: f64,
    pub delta: f64,
    /// Gauge constant; `"inf"` (the default) disables the gauge filter.
    #[serde(with = "real", default = "infinite")]
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<DirectionInput>,
    pub region: SearchRegion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, with = "real_opt", skip_serializing_if = "Option::is_none")]
    pub ratio_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion_points: Option<usize>,
}

impl QuerySpec {
    /// Query on `map`; `seed` and `samples` apply unless the spec fixes them.
    pub fn build(&self, map: &SetValuedMap, seed: u64, samples: Option<usize>) -> crate::Result<RegularityQuery> {
        let mut q = RegularityQuery::new(
            map.clone(),
            self.base_x.clone(),
            self.base_y.clone(),
            self.gamma,
            self.delta,
            self.eta,
            self.region.clone(),
        )?;
        if let Some(d) = &self.direction {
            let dir = DirectionSpec::new(ProductPoint::from_vecs(d.u.clone(), d.v.clone()), d.epsilon)?;
            q = q.with_direction(dir)?;
        }
        q.seed = self.seed.unwrap_or(seed);
        if let Some(s) = samples.or(self.samples) {
            q.samples = s;
        }
        if let Some(c) = self.ratio_cap {
            q.ratio_cap = c;
        }
        if let Some(c) = self.criterion_points {
            q.criterion_points = c;
        }
        q.validate()?;
        Ok(q)
    }
}

/// Compared-slope checks for the coderivative analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfCheck {
    pub perturbation: SmoothFn,
    #[serde(with = "reals")]
    pub c: Vec<f64>,
    pub query: QuerySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Analysis {
    /// Slope of `u ↦ φ(u, y)^γ` at `x`.
    Slope {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(with = "reals")]
        x: Vec<f64>,
        #[serde(with = "reals")]
        y: Vec<f64>,
        gamma: f64,
        slope_kind: SlopeKind,
        region: SearchRegion,
    },
    /// Sampled modulus and verdict.
    Modulus {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(flatten)]
        query: QuerySpec,
    },
    /// Local or nonlocal slope criterion along directional sequences.
    Criterion {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        slope_kind: SlopeKind,
        #[serde(flatten)]
        query: QuerySpec,
    },
    /// Local criterion against the modulus at `γ = 1`.
    Equiv1 {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(flatten)]
        query: QuerySpec,
    },
    /// Coderivative slope at `(x, y)` and optional compared-slope checks.
    Mf {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(with = "reals")]
        x: Vec<f64>,
        #[serde(with = "reals")]
        y: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        check: Option<MfCheck>,
    },
    /// Modulus of `F` and of `F + g` against `1/(1/τ − λ)`.
    Perturb {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        perturbation: SmoothFn,
        #[serde(flatten)]
        query: QuerySpec,
    },
    /// Multiplier bounds against difference quotients of the value function.
    Sensitivity {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(with = "reals")]
        d: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schedule: Option<DerivativeSchedule>,
        /// Radius of the Robinson probes around `±d`.
        #[serde(default, with = "real_opt", skip_serializing_if = "Option::is_none")]
        robinson_rho: Option<f64>,
    },
}

impl Analysis {
    pub fn kind(&self) -> &'static str {
        match self {
            Analysis::Slope { .. } => "slope",
            Analysis::Modulus { .. } => "modulus",
            Analysis::Criterion { .. } => "criterion",
            Analysis::Equiv1 { .. } => "equiv1",
            Analysis::Mf { .. } => "mf",
            Analysis::Perturb { .. } => "perturb",
            Analysis::Sensitivity { .. } => "sensitivity",
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            Analysis::Slope { label, .. }
            | Analysis::Modulus { label, .. }
            | Analysis::Criterion { label, .. }
            | Analysis::Equiv1 { label, .. }
            | Analysis::Mf { label, .. }
            | Analysis::Perturb { label, .. }
            | Analysis::Sensitivity { label, .. } => label.as_deref(),
        }
    }

    fn needs_program(&self) -> bool {
        matches!(self, Analysis::Sensitivity { .. })
    }
}

/// A problem with a scenario file, with location when known.
#[derive(Debug, Clone, PartialEq)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

/// Parses scenario text; errors carry `line:column` and the field path.
pub fn parse_scenario(text: &str, origin: &str) -> Result<(Scenario, serde_json::Value), InputError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let inner = e.inner();
        let msg = inner.to_string();
        let msg = msg.split(" at line ").next().unwrap_or_default();
        let path = e.path().to_string();
        let at = if path == "?" {
            String::new()
        } else {
            format!(" at `{path}`:")
        };
        InputError(format!("{origin}:{}:{}:{at} {msg}", inner.line(), inner.column()))
    })?;
    de.end()
        .map_err(|e| InputError(format!("{origin}:{}:{}: {e}", e.line(), e.column())))?;
    let echo: serde_json::Value = serde_json::from_str(text).map_err(|e| InputError(format!("{origin}: {e}")))?;
    check_scenario(&scenario).map_err(|m| InputError(format!("{origin}: {m}")))?;
    Ok((scenario, echo))
}

pub fn load_scenario(path: &Path) -> Result<(Scenario, serde_json::Value), InputError> {
    let text = std::fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    parse_scenario(&text, &path.display().to_string())
}

fn check_scenario(s: &Scenario) -> Result<(), String> {
    if s.version != SCENARIO_VERSION {
        return Err(format!(
            "at `version`: unsupported scenario version {} (expected {SCENARIO_VERSION})",
            s.version
        ));
    }
    if s.analyses.is_empty() {
        return Err("at `analyses`: at least one analysis is required".into());
    }
    for (i, a) in s.analyses.iter().enumerate() {
        if a.needs_program() && s.program.is_none() {
            return Err(format!("at `analyses[{i}]`: `{}` needs a `program`", a.kind()));
        }
        if !a.needs_program() && s.map.is_none() {
            return Err(format!("at `analyses[{i}]`: `{}` needs a `map`", a.kind()));
        }
    }
    Ok(())
}
