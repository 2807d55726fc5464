//! Experiment configuration: JSON schema types, loading and validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::{AllocationPolicy, Scheme};
use crate::error::{Error, Result};
use crate::estimators::Estimator;
use crate::kernels::KernelSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BinningSpec {
    /// One bin per state of a finite chain.
    PerState,
    /// `count` equal bins on the circle.
    UniformTorus { count: usize },
    /// Explicit `state → bin` table for finite chains.
    CustomTable { table: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AllocationSpec {
    Uniform,
    ProportionalWithFloor,
    /// Either `n2` children, or `n2_fraction · N` rounded, for bin 1 when
    /// bins 1 and 2 are both occupied.
    PeriodicExample {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n2: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n2_fraction: Option<f64>,
    },
    Custom { priorities: Vec<f64> },
}

impl AllocationSpec {
    /// The policy used with `n` particles.
    pub fn resolve(&self, n: usize) -> Result<AllocationPolicy> {
        Ok(match self {
            AllocationSpec::Uniform => AllocationPolicy::Uniform,
            AllocationSpec::ProportionalWithFloor => AllocationPolicy::ProportionalWithFloor,
            AllocationSpec::Custom { priorities } => AllocationPolicy::Custom {
                priorities: priorities.clone(),
            },
            AllocationSpec::PeriodicExample { n2, n2_fraction } => {
                let n2 = match (n2, n2_fraction) {
                    (Some(k), None) => *k,
                    (None, Some(frac)) => ((frac * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1)),
                    _ => {
                        return Err(Error::config(
                            "allocation",
                            "periodic_example takes exactly one of `n2` and `n2_fraction`",
                        ))
                    }
                };
                AllocationPolicy::PeriodicExample { n2 }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `V(u) = values[u]`.
    Table { values: Vec<f64> },
    /// `V(u) = u + 1` on 0-based states.
    Linear,
    /// `V(x) = exp(−stiffness·(x − center)²)`.
    Gaussian { center: f64, stiffness: f64 },
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    PointMass { state: usize },
    Categorical { probabilities: Vec<f64> },
    /// The chain's stationary distribution.
    Stationary,
    /// `ν ∝ exp(β cos 2πx)`; `beta` defaults to the kernel's.
    TorusGibbs {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
    },
    TorusPoint { x: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableSpec {
    /// `f = 1{x = state}`.
    Indicator { state: usize },
    Table { values: Vec<f64> },
    /// `f = 1{lo ≤ x ≤ hi}` on the circle.
    Interval { lo: f64, hi: f64 },
    Constant { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonMode {
    /// One run to the largest horizon reports every smaller horizon on the way.
    #[default]
    Nested,
    /// Fresh replicates for every horizon.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OutputFormat {
    #[default]
    #[serde(rename = "csv")]
    Csv,
    #[serde(rename = "json")]
    Json,
    #[serde(rename = "gnuplot-dat", alias = "gnuplot_dat")]
    GnuplotDat,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
            OutputFormat::GnuplotDat => "dat",
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "gnuplot-dat" | "gnuplot_dat" => Ok(OutputFormat::GnuplotDat),
            _ => Err(Error::Argument(format!("unknown output format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub format: OutputFormat,
    /// File name inside the output directory; defaults to `<name>.<ext>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

fn default_estimators() -> Vec<Estimator> {
    vec![Estimator::Theta]
}

fn default_allocation() -> AllocationSpec {
    AllocationSpec::Uniform
}

/// One experiment: a scheme run on a model over a grid of `N` or `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kernel: KernelSpec,
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binning: Option<BinningSpec>,
    #[serde(default = "default_allocation")]
    pub allocation: AllocationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialSpec>,
    pub initial: InitialSpec,
    pub observable: ObservableSpec,
    /// Particle counts `N`; at most one of `particles` and `horizons` may
    /// list more than one value.
    pub particles: Vec<usize>,
    pub horizons: Vec<usize>,
    pub replicates: usize,
    /// Replicate count used with `--full`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_replicates: Option<usize>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    pub seed: u64,
    #[serde(default)]
    pub horizon_mode: HorizonMode,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Which grid the table rows run over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Particles,
    Horizon,
}

impl ExperimentConfig {
    /// Parses one config object, or an array of them, reporting the JSON
    /// path of the first offending field.
    pub fn parse_many(text: &str) -> Result<Vec<ExperimentConfig>> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum OneOrMany {
            Many(Vec<serde_json::Value>),
            One(serde_json::Value),
        }
        let raw: OneOrMany = serde_json::from_str(text)
            .map_err(|e| Error::config("$", e.to_string()))?;
        let (values, indexed) = match raw {
            OneOrMany::Many(v) => (v, true),
            OneOrMany::One(v) => (vec![v], false),
        };
        values
            .into_iter()
            .enumerate()
            .map(|(i, value)| {
                let prefix = if indexed { format!("[{i}].") } else { String::new() };
                let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
                    Error::config(format!("{prefix}{}", e.path()), e.inner().to_string())
                })?;
                cfg.validate().map_err(|e| match e {
                    Error::Config { path, message } => Error::config(format!("{prefix}{path}"), message),
                    other => other,
                })?;
                Ok(cfg)
            })
            .collect()
    }

    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut all = Self::parse_many(text)?;
        if all.len() != 1 {
            return Err(Error::config("$", format!("expected one config, found {}", all.len())));
        }
        Ok(all.remove(0))
    }

    pub fn load_many(path: &Path) -> Result<Vec<ExperimentConfig>> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_many(&text)
    }

    pub fn sweep_variable(&self) -> SweepVariable {
        if self.particles.len() > 1 {
            SweepVariable::Particles
        } else {
            SweepVariable::Horizon
        }
    }

    pub fn replicates_for(&self, full: bool) -> usize {
        if full {
            self.full_replicates.unwrap_or(self.replicates)
        } else {
            self.replicates
        }
    }

    /// Semantic checks beyond the JSON shape.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
        {
            return Err(Error::config("name", "use letters, digits, `_`, `-` or `.`"));
        }
        for (field, list) in [("particles", &self.particles), ("horizons", &self.horizons)] {
            if list.is_empty() {
                return Err(Error::config(field, "must list at least one value"));
            }
            if let Some(i) = list.iter().position(|&v| v == 0) {
                return Err(Error::config(format!("{field}[{i}]"), "must be at least 1"));
            }
            let mut sorted = list.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != list.len() {
                return Err(Error::config(field, "values must be distinct"));
            }
        }
        if self.particles.len() > 1 && self.horizons.len() > 1 {
            return Err(Error::config(
                "horizons",
                "only one of `particles` and `horizons` may list more than one value",
            ));
        }
        if self.replicates < 2 {
            return Err(Error::config("replicates", "need at least 2 replicates"));
        }
        if self.full_replicates.is_some_and(|m| m < 2) {
            return Err(Error::config("full_replicates", "need at least 2 replicates"));
        }
        if self.estimators.is_empty() {
            return Err(Error::config("estimators", "list at least one estimator"));
        }
        let is_torus = matches!(self.kernel, KernelSpec::TorusLangevin { .. });
        match self.scheme {
            Scheme::WeMultinomial | Scheme::WeResidual => match &self.binning {
                None => return Err(Error::config("binning", "weighted-ensemble schemes need a binning")),
                Some(BinningSpec::UniformTorus { count }) if !is_torus || *count == 0 => {
                    return Err(Error::config("binning", "uniform_torus needs the torus kernel and count ≥ 1"))
                }
                Some(BinningSpec::PerState | BinningSpec::CustomTable { .. }) if is_torus => {
                    return Err(Error::config("binning", "finite-state binning on a continuous kernel"))
                }
                Some(_) => {}
            },
            Scheme::SmcGb => {
                if self.potential.is_none() {
                    return Err(Error::config("potential", "smc_gb needs a potential"));
                }
            }
            Scheme::Optimal => {
                if is_torus {
                    return Err(Error::config("scheme", "optimal selection needs a finite kernel"));
                }
            }
            Scheme::Dmc => {}
        }
        if let AllocationSpec::PeriodicExample { n2, n2_fraction } = &self.allocation {
            match (n2, n2_fraction) {
                (Some(_), None) => {}
                (None, Some(f)) if *f > 0.0 && *f < 1.0 => {}
                _ => {
                    return Err(Error::config(
                        "allocation",
                        "periodic_example takes `n2`, or `n2_fraction` in (0, 1)",
                    ))
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "demo",
        "kernel": {"kind": "three_state", "delta": 0.25},
        "scheme": "we_multinomial",
        "binning": {"kind": "per_state"},
        "initial": {"kind": "point_mass", "state": 0},
        "observable": {"kind": "indicator", "state": 2},
        "particles": [6],
        "horizons": [10, 20],
        "replicates": 100,
        "seed": 7
    }"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.allocation, AllocationSpec::Uniform);
        assert_eq!(cfg.estimators, vec![Estimator::Theta]);
        assert_eq!(cfg.horizon_mode, HorizonMode::Nested);
        assert_eq!(cfg.output.format, OutputFormat::Csv);
        assert_eq!(cfg.sweep_variable(), SweepVariable::Horizon);
        let again = ExperimentConfig::parse(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn missing_seed_is_reported() {
        let text = MINIMAL.replace(",\n        \"seed\": 7", "");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        match err {
            Error::Config { message, .. } => assert!(message.contains("seed"), "{message}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_field_path_is_reported() {
        let text = MINIMAL.replace("\"delta\": 0.25", "\"delta\": \"x\"");
        match ExperimentConfig::parse(&text).unwrap_err() {
            // internally tagged enums are buffered, so the path stops at the tag owner
            Error::Config { path, .. } => assert!(path.starts_with("kernel"), "{path}"),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("\"particles\": [6]", "\"particles\": [6, 12]");
        match ExperimentConfig::parse(&text).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "horizons"),
            other => panic!("{other:?}"),
        }
        let text = format!("[{MINIMAL}, {}]", MINIMAL.replace("\"replicates\": 100", "\"replicates\": 1"));
        match ExperimentConfig::parse_many(&text).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "[1].replicates"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = MINIMAL.replace("\"seed\": 7", "\"seed\": 7, \"colour\": 1");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn scheme_needs_inputs() {
        let text = MINIMAL.replace("\"we_multinomial\"", "\"smc_gb\"");
        match ExperimentConfig::parse(&text).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "potential"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn periodic_allocation_resolution() {
        let spec = AllocationSpec::PeriodicExample { n2: None, n2_fraction: Some(0.5) };
        assert_eq!(spec.resolve(120).unwrap(), AllocationPolicy::PeriodicExample { n2: 60 });
        let spec = AllocationSpec::PeriodicExample { n2: Some(1), n2_fraction: None };
        assert_eq!(spec.resolve(24).unwrap(), AllocationPolicy::PeriodicExample { n2: 1 });
    }

    #[test]
    fn output_format_names() {
        assert_eq!(serde_json::to_string(&OutputFormat::GnuplotDat).unwrap(), "\"gnuplot-dat\"");
        let f: OutputFormat = serde_json::from_str("\"gnuplot_dat\"").unwrap();
        assert_eq!(f, OutputFormat::GnuplotDat);
        assert_eq!("json".parse::<OutputFormat>().unwrap(), OutputFormat::Json);
    }
}
