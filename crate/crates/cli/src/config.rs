//! Run configuration: loading, validation and sweep expansion.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plap_core::mesh::Domain;
use plap_core::reaction::{Preset, Reaction, ReactionDoc};
use plap_core::solver::Schedule;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Either a named preset (`{"preset": "staircase_singular", "gamma": 0.5}`) or a
/// full reaction document (`{"pieces": [...]}`).
#[derive(Debug, Clone, PartialEq)]
pub enum ReactionSpec {
    Preset(Preset),
    Document(ReactionDoc),
}

impl ReactionSpec {
    pub fn build(&self, p: f64) -> plap_core::Result<Reaction> {
        match self {
            ReactionSpec::Preset(preset) => preset.build(p),
            ReactionSpec::Document(doc) => Reaction::from_doc(doc.clone()),
        }
    }

    fn gamma(&self) -> Option<f64> {
        match self {
            ReactionSpec::Preset(Preset::StaircaseSingular { gamma, .. }) => Some(*gamma),
            ReactionSpec::Preset(Preset::Power { exponent, .. }) if *exponent < 0.0 => Some(-exponent),
            ReactionSpec::Preset(_) => None,
            ReactionSpec::Document(doc) => doc.gamma,
        }
    }
}

impl Serialize for ReactionSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ReactionSpec::Preset(p) => p.serialize(s),
            ReactionSpec::Document(d) => d.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ReactionSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let value = Value::deserialize(d)?;
        if value.get("preset").is_some() {
            serde_json::from_value(value).map(ReactionSpec::Preset).map_err(D::Error::custom)
        } else {
            serde_json::from_value(value).map(ReactionSpec::Document).map_err(D::Error::custom)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative quotient change of the eigen solver.
    pub eigen: f64,
    /// Dual-norm residual of each energy minimization.
    pub solve: f64,
    /// Relative Cauchy increment that ends the continuation early.
    pub cauchy: f64,
    /// Pointwise tolerance of the inclusion check.
    pub inclusion: f64,
    /// Multiplier `C` of the mesh-size slack `C h` of the inclusion check.
    pub slack: f64,
    /// Minimum inclusion fraction for verification to pass.
    pub min_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eigen: plap_core::eigen::DEFAULT_TOL,
            solve: plap_core::solver::DEFAULT_TOL,
            cauchy: plap_core::solver::DEFAULT_CAUCHY_TOL,
            inclusion: 1e-2,
            slack: 1.0,
            min_fraction: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: Domain,
    pub resolution: usize,
    pub p: f64,
    pub reaction: ReactionSpec,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Parameter grid for `sweep`: `p`, `resolution`, `seed` or a preset
    /// parameter name, each mapped to the values to run.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sweep: BTreeMap<String, Vec<Value>>,
}

/// Grid coordinates of one sweep run.
pub type Labels = Vec<(String, Value)>;

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> CliError {
    CliError::Config { field: field.into(), reason: reason.into() }
}

fn positive(field: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("expected a positive number, got {x}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            invalid(if field == "." { "<root>".to_string() } else { field }, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.resolution < 2 {
            return Err(invalid("resolution", format!("expected resolution >= 2, got {}", self.resolution)));
        }
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(invalid("p", format!("expected p > 1, got {}", self.p)));
        }
        if let Domain::Interval { a, b } = self.domain {
            if !(a < b && a.is_finite() && b.is_finite()) {
                return Err(invalid("domain", format!("expected a < b, got [{a}, {b}]")));
            }
        }
        if let Some(g) = self.reaction.gamma() {
            if !(g > 0.0 && g < 1.0) {
                return Err(invalid("reaction.gamma", format!("expected gamma in (0, 1), got {g}")));
            }
        }
        self.schedule.epsilons().map_err(|e| invalid("schedule", e.to_string()))?;
        let t = &self.tolerances;
        for (name, x) in [
            ("tolerances.eigen", t.eigen),
            ("tolerances.solve", t.solve),
            ("tolerances.cauchy", t.cauchy),
            ("tolerances.inclusion", t.inclusion),
            ("tolerances.slack", t.slack),
            ("tolerances.min_fraction", t.min_fraction),
        ] {
            positive(name, x)?;
        }
        if t.eigen >= 1.0 {
            return Err(invalid("tolerances.eigen", format!("expected a value below 1, got {}", t.eigen)));
        }
        if t.min_fraction > 1.0 {
            return Err(invalid(
                "tolerances.min_fraction",
                format!("expected a fraction in (0, 1], got {}", t.min_fraction),
            ));
        }
        for (key, values) in &self.sweep {
            if values.is_empty() {
                return Err(invalid(format!("sweep.{key}"), "expected at least one value"));
            }
        }
        Ok(())
    }

    /// One validated configuration per point of the sweep grid, in
    /// lexicographic key order, with the grid coordinates as labels.
    pub fn expand(&self) -> Result<Vec<(Labels, RunConfig)>, CliError> {
        let mut base = self.clone();
        base.sweep.clear();
        let mut runs = vec![(Vec::new(), base)];
        for (key, values) in &self.sweep {
            let mut next = Vec::with_capacity(runs.len() * values.len());
            for (labels, cfg) in &runs {
                for value in values {
                    let mut doc = serde_json::to_value(cfg).expect("configs always serialize");
                    match key.as_str() {
                        "p" | "resolution" | "seed" => doc[key] = value.clone(),
                        _ if doc["reaction"].get("preset").is_some() => doc["reaction"][key] = value.clone(),
                        _ => {
                            return Err(invalid(
                                format!("sweep.{key}"),
                                "only p, resolution, seed and preset parameters can be swept",
                            ))
                        }
                    }
                    let run: RunConfig =
                        serde_json::from_value(doc).map_err(|e| invalid(format!("sweep.{key}"), e.to_string()))?;
                    run.validate().map_err(|e| match e {
                        CliError::Config { field, reason } => {
                            invalid(format!("sweep.{key}"), format!("{field}: {reason}"))
                        }
                        other => other,
                    })?;
                    let mut labels = labels.clone();
                    labels.push((key.clone(), value.clone()));
                    next.push((labels, run));
                }
            }
            runs = next;
        }
        Ok(runs)
    }
}
