//! TOML calibration config with `key=value` overrides.
//!
//! Every key is optional; missing keys take the defaults below.
//!
//! ```toml
//! seed = 0
//! iterations = 2000
//! warmup_steps = 0
//! target_radius = 0.3
//! sampling_radius = 0.6
//!
//! [weights]
//! rep = 1000.0
//! mlp = 1000.0
//! ray = 100.0
//! range = 1.0
//! azimuth = 1.0
//!
//! [learning_rates]
//! mlp = 0.005
//! rotation = 0.005
//! translation = 0.001
//!
//! [encoding]
//! enabled = true
//! depth = 6
//! include_input = false
//!
//! [plateau]
//! window = 50
//! tolerance = 1e-7
//!
//! [initial]
//! euler_deg = [0.0, 0.0, 0.0]
//! translation = [0.0, 0.0, 0.0]
//! ```

use std::fs;
use std::path::Path;

use radcal_core::config::{CalibConfig, ConfigError, LearningRates, LossWeights};
use radcal_core::geometry::{Extrinsics, Pose};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config: {0}")]
    Parse(String),
    #[error("override `{0}`: expected key=value")]
    Override(String),
    #[error("config: {0}")]
    Invalid(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsDoc {
    pub rep: f64,
    pub mlp: f64,
    pub ray: f64,
    pub range: f64,
    pub azimuth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesDoc {
    pub mlp: f64,
    pub rotation: f64,
    pub translation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodingDoc {
    pub enabled: bool,
    pub depth: usize,
    pub include_input: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlateauDoc {
    pub window: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct InitialDoc {
    pub euler_deg: [f64; 3],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigDoc {
    pub seed: u64,
    pub iterations: usize,
    pub warmup_steps: usize,
    pub target_radius: f64,
    pub sampling_radius: f64,
    pub weights: WeightsDoc,
    pub learning_rates: RatesDoc,
    pub encoding: EncodingDoc,
    pub plateau: PlateauDoc,
    pub initial: InitialDoc,
}

impl Default for ConfigDoc {
    fn default() -> Self {
        let c = CalibConfig::default();
        let w = c.weights;
        let lr = c.learning_rates;
        Self {
            seed: c.seed,
            iterations: c.iterations,
            warmup_steps: c.warmup_steps,
            target_radius: c.target_radius,
            sampling_radius: c.sampling_radius,
            weights: WeightsDoc { rep: w.rep, mlp: w.mlp, ray: w.ray, range: w.range, azimuth: w.azimuth },
            learning_rates: RatesDoc { mlp: lr.mlp, rotation: lr.rotation, translation: lr.translation },
            encoding: EncodingDoc { enabled: c.pe_enabled, depth: c.pe_depth, include_input: c.pe_include_input },
            plateau: PlateauDoc { window: c.plateau_window, tolerance: c.plateau_tolerance },
            initial: InitialDoc::default(),
        }
    }
}

impl Default for WeightsDoc {
    fn default() -> Self {
        ConfigDoc::default().weights
    }
}

impl Default for RatesDoc {
    fn default() -> Self {
        ConfigDoc::default().learning_rates
    }
}

impl Default for EncodingDoc {
    fn default() -> Self {
        ConfigDoc::default().encoding
    }
}

impl Default for PlateauDoc {
    fn default() -> Self {
        ConfigDoc::default().plateau
    }
}

/// A parsed config: the document as written (echoed into reports) and the
/// validated settings derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub doc: ConfigDoc,
    pub config: CalibConfig,
}

impl ResolvedConfig {
    /// `[θx, θy, θz (deg), tx, ty, tz (m)]` exactly as configured.
    pub fn initial_row(&self) -> [f64; 6] {
        let e = self.doc.initial.euler_deg;
        let t = self.doc.initial.translation;
        [e[0], e[1], e[2], t[0], t[1], t[2]]
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.doc).expect("config documents always serialize")
    }
}

fn initial_extrinsics(doc: &InitialDoc) -> Result<Extrinsics, ConfigFileError> {
    Pose::from_euler_translation(doc.euler_deg, doc.translation)
        .map_err(|_| ConfigFileError::Parse("initial extrinsics must be finite".into()))
}

impl TryFrom<ConfigDoc> for ResolvedConfig {
    type Error = ConfigFileError;

    fn try_from(doc: ConfigDoc) -> Result<Self, Self::Error> {
        let config = CalibConfig {
            weights: LossWeights {
                rep: doc.weights.rep,
                mlp: doc.weights.mlp,
                ray: doc.weights.ray,
                range: doc.weights.range,
                azimuth: doc.weights.azimuth,
            },
            learning_rates: LearningRates {
                mlp: doc.learning_rates.mlp,
                rotation: doc.learning_rates.rotation,
                translation: doc.learning_rates.translation,
            },
            pe_enabled: doc.encoding.enabled,
            pe_depth: doc.encoding.depth,
            pe_include_input: doc.encoding.include_input,
            target_radius: doc.target_radius,
            sampling_radius: doc.sampling_radius,
            iterations: doc.iterations,
            plateau_window: doc.plateau.window,
            plateau_tolerance: doc.plateau.tolerance,
            warmup_steps: doc.warmup_steps,
            seed: doc.seed,
            initial: initial_extrinsics(&doc.initial)?,
        };
        config.validate()?;
        Ok(Self { doc, config })
    }
}

/// Parses `text`, applies `key=value` overrides (dotted keys; values in TOML
/// syntax, bare words taken as strings) and validates the result.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ResolvedConfig, ConfigFileError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigFileError::Parse(e.message().to_string()))?;
    for o in overrides {
        let (key, value) = o.split_once('=').ok_or_else(|| ConfigFileError::Override(o.clone()))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigFileError::Override(o.clone()));
        }
        set_path(&mut table, key, parse_value(value.trim()))?;
    }
    let doc: ConfigDoc = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigFileError::Parse(e.message().to_string()))?;
    ResolvedConfig::try_from(doc)
}

pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ResolvedConfig, ConfigFileError> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|source| ConfigFileError::Io { path: p.display().to_string(), source })?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigFileError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| ConfigFileError::Parse(format!("`{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
