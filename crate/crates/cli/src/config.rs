//! Run configuration: a JSON document naming the command, the model and the
//! options for that command.

use std::fmt;
use std::path::{Path, PathBuf};

use conemarket::io::{ModelDto, Num, PathDto, StrategyDto, UtilityDto};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Validate,
    Solve,
    Brute,
    Decompose,
    Predict,
    Transfer,
    Invariance,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Validate,
        Command::Solve,
        Command::Brute,
        Command::Decompose,
        Command::Predict,
        Command::Transfer,
        Command::Invariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Solve => "solve",
            Command::Brute => "brute",
            Command::Decompose => "decompose",
            Command::Predict => "predict",
            Command::Transfer => "transfer",
            Command::Invariance => "invariance",
        }
    }

    pub fn parse(name: &str) -> Result<Self, CliError> {
        Self::ALL.into_iter().find(|c| c.name() == name).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown command {name:?}; valid commands: {}",
                valid_commands()
            ))
        })
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn valid_commands() -> String {
    Command::ALL.map(Command::name).join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative optimality gap of the Bellman solver.
    #[serde(default = "default_tol")]
    pub tol: Num,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Grid step of the brute-force oracle.
    #[serde(default = "default_grid")]
    pub grid: Num,
    /// Evaluation budget of the brute-force oracle.
    #[serde(default = "default_budget")]
    pub budget: u64,
    /// Largest value difference accepted by `invariance`.
    #[serde(default = "default_invariance_tol")]
    pub invariance_tol: Num,
}

fn default_tol() -> Num {
    Num(1e-9)
}
fn default_max_iter() -> usize {
    100_000
}
fn default_grid() -> Num {
    Num(0.01)
}
fn default_budget() -> u64 {
    conemarket::brute::DEFAULT_BUDGET
}
fn default_invariance_tol() -> Num {
    Num(1e-6)
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            grid: default_grid(),
            budget: default_budget(),
            invariance_tol: default_invariance_tol(),
        }
    }
}

/// How the second model of `transfer` and `invariance` is obtained from the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    /// Leaf `i` receives the labelled path of leaf `perm[i]`.
    Permute { perm: Vec<usize> },
    /// Exchange the subtrees below two sibling nodes.
    SiblingSwap { a: String, b: String },
    /// Rebuild the tree from its labelled leaf paths, visiting leaves in a
    /// seeded random order.
    Rebuild,
    /// Enlarge the filtration by an independent uniform label on `m` points.
    Randomize { m: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    /// The driving process `Y`.
    Driving,
    /// Trades of the configured strategy (or the solved one).
    Strategy,
    /// Arbitrary per-node values, keyed by node id.
    NodeValues {
        values: std::collections::BTreeMap<String, Vec<Num>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub command: Command,
    #[serde(default)]
    pub model: Option<ModelDto>,
    #[serde(default)]
    pub model_file: Option<PathBuf>,
    #[serde(default)]
    pub other_model: Option<ModelDto>,
    #[serde(default)]
    pub other_model_file: Option<PathBuf>,
    #[serde(default)]
    pub transform: Option<Transform>,
    #[serde(default)]
    pub x: Option<Vec<Num>>,
    #[serde(default)]
    pub utility: Option<UtilityDto>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub strategy: Option<StrategyDto>,
    #[serde(default)]
    pub path: Option<PathDto>,
    #[serde(default)]
    pub target: Option<TargetConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

/// Parses and validates a configuration. Errors name the offending field.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed JSON: {e}")))?;
    config_from_value(value)
}

pub fn config_from_value(value: serde_json::Value) -> Result<RunConfig, CliError> {
    if let Some(cmd) = value.get("command").and_then(|c| c.as_str()) {
        Command::parse(cmd).map_err(|e| CliError::Config(format!("command: {e}")))?;
    }
    let config: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            CliError::Config(e.into_inner().to_string())
        } else {
            CliError::Config(format!("{path}: {}", e.into_inner()))
        }
    })?;
    config.check()?;
    Ok(config)
}

fn field_error(field: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(field_error(field, format!("must be a positive number, got {v}")))
    }
}

impl RunConfig {
    /// Schema checks that do not need the model.
    pub fn check(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(field_error(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        positive("solver.tol", self.solver.tol.0)?;
        positive("solver.grid", self.solver.grid.0)?;
        positive("solver.invariance_tol", self.solver.invariance_tol.0)?;
        if self.solver.max_iter == 0 {
            return Err(field_error("solver.max_iter", "must be positive"));
        }
        if self.solver.budget == 0 {
            return Err(field_error("solver.budget", "must be positive"));
        }
        match (&self.model, &self.model_file) {
            (None, None) => return Err(field_error("model", "missing (give `model` or `model_file`)")),
            (Some(_), Some(_)) => return Err(field_error("model", "give only one of `model` and `model_file`")),
            _ => {}
        }
        if self.other_model.is_some() && self.other_model_file.is_some() {
            return Err(field_error(
                "other_model",
                "give only one of `other_model` and `other_model_file`",
            ));
        }
        let has_other = self.other_model.is_some() || self.other_model_file.is_some();
        if has_other && self.transform.is_some() {
            return Err(field_error("transform", "cannot be combined with a second model"));
        }
        if let Some(x) = &self.x {
            if let Some(bad) = x.iter().position(|v| !v.0.is_finite()) {
                return Err(field_error(&format!("x[{bad}]"), "must be finite"));
            }
        }
        if let Some(Transform::Randomize { m }) = &self.transform {
            if *m < 2 {
                return Err(field_error("transform.m", "must be at least 2"));
            }
        }
        let needs = |field: &str, present: bool| {
            if present {
                Ok(())
            } else {
                Err(field_error(
                    field,
                    format!("required by the `{}` command", self.command),
                ))
            }
        };
        match self.command {
            Command::Validate => {}
            Command::Solve | Command::Brute => {
                needs("x", self.x.is_some())?;
                needs("utility", self.utility.is_some())?;
            }
            Command::Decompose => needs("path", self.path.is_some())?,
            Command::Predict => {
                if matches!(self.target, Some(TargetConfig::Strategy)) {
                    needs("strategy", self.strategy.is_some())?;
                }
            }
            Command::Transfer => {
                needs("x", self.x.is_some())?;
                needs("other_model", has_other || self.transform.is_some())?;
                if self.strategy.is_none() {
                    needs("utility", self.utility.is_some())?;
                }
            }
            Command::Invariance => {
                needs("x", self.x.is_some())?;
                needs("utility", self.utility.is_some())?;
                needs("other_model", has_other || self.transform.is_some())?;
            }
        }
        Ok(())
    }

    /// Makes file references relative to `base` (the config file's directory)
    /// and checks that they exist.
    pub fn resolve_files(&mut self, base: &Path) -> Result<(), CliError> {
        for (field, file) in [
            ("model_file", &mut self.model_file),
            ("other_model_file", &mut self.other_model_file),
        ] {
            if let Some(p) = file {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
                if !p.is_file() {
                    return Err(field_error(field, format!("file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn format(&self) -> Format {
        self.output.as_ref().map(|o| o.format).unwrap_or_default()
    }

    pub fn output_path(&self) -> Option<&Path> {
        self.output.as_ref().and_then(|o| o.path.as_deref())
    }
}
