//! Run configuration: TOML grammar, validation diagnostics and canonical
//! serialization.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use exclusion_core::rates::parse_params;
use exclusion_core::scalar::{exact_from_f64, format_exact};
use exclusion_core::{
    make_custom, make_model, parse_exact, Configuration, CouplingKind, Exact, ModelId, RateSpec, TableEntry,
};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    CheckMonotone,
    CouplingTable,
    Exact,
    Simulate,
    GoldenSuite,
    Zoo,
}

impl Command {
    pub fn needs_model(self) -> bool {
        !matches!(self, Command::GoldenSuite | Command::Zoo)
    }
}

/// Exhaustive computation run by the `exact` command.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExactCheck {
    /// Stationary distribution of every sector.
    Stationary,
    /// Whether uniform sector measures are stationary.
    Uniform,
    /// Order-breaking moves of the increasing coupling.
    Order,
    /// Discrepancy-increasing moves of the attractive coupling.
    Discrepancy,
    /// Marginals of every coupled generator against the single generator.
    Marginals,
    /// Absorption of unordered pairs into the ordered set.
    Extinction,
    /// Jump channels whose openness depends on the configuration.
    Blocking,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Rational parameter given as a TOML number or string (`0.3`, `"3/10"`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Param(pub Exact);

impl Serialize for Param {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_exact(&self.0))
    }
}

impl<'de> Deserialize<'de> for Param {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Param;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a string such as \"3/10\"")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Param, E> {
                parse_exact(v).map(Param).map_err(E::custom)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Param, E> {
                Ok(Param(Exact::from_integer(v as i128)))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Param, E> {
                Ok(Param(Exact::from_integer(v as i128)))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Param, E> {
                exact_from_f64(v).map(Param).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: ModelId,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, Param>,
    /// Dependence radius of a custom table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<usize>,
    /// Custom table rows, `"offset, pattern, rate"`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entries: Vec<String>,
}

impl ModelConfig {
    pub fn build(&self) -> exclusion_core::Result<RateSpec> {
        if self.name == ModelId::CustomTable {
            let entries = self.entries.iter().map(|e| TableEntry::parse(e)).collect::<exclusion_core::Result<Vec<_>>>()?;
            return make_custom(self.radius.unwrap_or(0), &entries);
        }
        if self.radius.is_some() || !self.entries.is_empty() {
            return Err(exclusion_core::Error::InvalidArgument(
                "`radius` and `entries` only apply to custom_table".into(),
            ));
        }
        let params: Vec<(String, Exact)> = self.params.iter().map(|(k, v)| (k.clone(), v.0)).collect();
        make_model(self.name, &params)
    }

    /// From a model name and command-line parameters (`alpha=0.3` or positional).
    pub fn from_args(name: ModelId, items: &[String]) -> exclusion_core::Result<Self> {
        let params = parse_params(name, items)?.into_iter().map(|(k, v)| (k, Param(v))).collect();
        Ok(Self { name, params, radius: None, entries: Vec::new() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    #[serde(rename = "L")]
    pub len: usize,
    pub density: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Configuration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<Configuration>,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { len: 16, density: 0.5, xi: None, zeta: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecutionConfig {
    pub seed: u64,
    pub replicas: u64,
    pub t_end: f64,
    pub sample_dt: f64,
    pub coupled: bool,
    pub kind: CouplingKind,
    /// Rational arithmetic instead of `f64`.
    pub exact: bool,
    pub check: ExactCheck,
    /// Include per-site density columns in simulation output.
    pub profile: bool,
    /// Criteria to run (numbers or identifiers); empty runs all.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub only: Vec<String>,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            replicas: 1,
            t_end: 100.0,
            sample_dt: 1.0,
            coupled: false,
            kind: CouplingKind::Attractive,
            exact: false,
            check: ExactCheck::Stationary,
            profile: false,
            only: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub format: Format,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub execution: ExecutionConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            model: None,
            lattice: LatticeConfig::default(),
            execution: ExecutionConfig::default(),
            output: OutputConfig::default(),
        }
    }

    /// Canonical TOML text.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    pub fn spec(&self) -> exclusion_core::Result<RateSpec> {
        match &self.model {
            Some(m) => m.build(),
            None => Err(exclusion_core::Error::InvalidArgument(format!(
                "command {:?} needs a [model] section",
                self.command
            ))),
        }
    }
}

/// One problem found while reading a configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.field, self.message),
            None => write!(f, "`{}`: {}", self.field, self.message),
        }
    }
}

/// Line of the first `key = ...` assignment, 1-based.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
            || l.strip_prefix(&format!("\"{key}\"")).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

/// Parse and validate a configuration. Unknown keys, unknown models, bad
/// parameters and inconsistent lattice settings are all reported.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<Diagnostic>> {
    let config: RunConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
        let message = e.message().to_string();
        let field = message
            .split('`')
            .nth(1)
            .filter(|_| message.starts_with("unknown field"))
            .unwrap_or("")
            .to_string();
        // spans of unknown keys can cover the enclosing table; prefer the key's own line
        let line = Some(field.as_str()).filter(|f| !f.is_empty()).and_then(|f| line_of(text, f)).or(line);
        vec![Diagnostic { line, field, message }]
    })?;
    let diagnostics = validate(&config, text);
    if diagnostics.is_empty() {
        Ok(config)
    } else {
        Err(diagnostics)
    }
}

/// Semantic checks on a configuration built without source text.
pub fn validate_config(config: &RunConfig) -> Vec<Diagnostic> {
    validate(config, "")
}

fn validate(config: &RunConfig, text: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |field: &str, key: &str, message: String| {
        out.push(Diagnostic { line: line_of(text, key), field: field.to_string(), message });
    };
    match &config.model {
        Some(m) => {
            for (k, v) in &m.params {
                if v.0 < Exact::from_integer(0) {
                    push(&format!("model.params.{k}"), k, format!("must be nonnegative, got {}", format_exact(&v.0)));
                }
            }
            if !m.params.values().any(|v| v.0 < Exact::from_integer(0)) {
                if let Err(e) = m.build() {
                    push("model", "name", e.to_string());
                }
            }
        }
        None if config.command.needs_model() => push("model", "command", "this command needs a [model] section".into()),
        None => {}
    }
    let lat = &config.lattice;
    if !(0.0..=1.0).contains(&lat.density) {
        push("lattice.density", "density", format!("must lie in [0, 1], got {}", lat.density));
    }
    for (name, c) in [("xi", &lat.xi), ("zeta", &lat.zeta)] {
        if let Some(c) = c {
            if c.len() != lat.len {
                push(&format!("lattice.{name}"), name, format!("has {} sites but L = {}", c.len(), lat.len));
            }
        }
    }
    if lat.zeta.is_some() && lat.xi.is_none() {
        push("lattice.zeta", "zeta", "given without xi".into());
    }
    let ex = &config.execution;
    if !(ex.t_end.is_finite() && ex.t_end >= 0.0) {
        push("execution.t_end", "t_end", format!("must be finite and nonnegative, got {}", ex.t_end));
    }
    if !(ex.sample_dt.is_finite() && ex.sample_dt > 0.0) {
        push("execution.sample_dt", "sample_dt", format!("must be positive, got {}", ex.sample_dt));
    }
    if ex.seed > i64::MAX as u64 {
        push("execution.seed", "seed", format!("must be at most {}, got {}", i64::MAX, ex.seed));
    }
    if ex.replicas == 0 {
        push("execution.replicas", "replicas", "must be at least 1".into());
    }
    out
}
