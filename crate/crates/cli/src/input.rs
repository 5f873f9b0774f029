//! Config files and table ingestion.

use std::path::{Path, PathBuf};

use dache::geometry::Shape;
use dache::orchestrator::SimulationConfig;
use dache::table::{database, Database, Schema, SchemaFile, Table, TableError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SAMPLE_CSV: &str = include_str!("../data/sample.csv");
pub const SAMPLE_SCHEMA: &str = include_str!("../data/sample.schema.json");

#[derive(Debug, Error)]
pub enum InputError {
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("{0}")]
    Invalid(String),
}

/// Settings for `dache lyapunov`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    pub arena: Shape,
    /// Extra random disks placed inside the arena.
    #[serde(default)]
    pub obstacles: usize,
    #[serde(default = "default_radius")]
    pub obstacle_radius: f64,
    #[serde(default = "one")]
    pub speed: f64,
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_radius() -> f64 {
    0.05
}

fn one() -> f64 {
    1.0
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self { arena: Shape::sinai(0.1), obstacles: 0, obstacle_radius: 0.05, speed: 1.0, horizon: 2e4, seed: 0 }
    }
}

fn read(path: &Path) -> Result<String, InputError> {
    std::fs::read_to_string(path).map_err(|e| InputError::File { path: path.display().to_string(), message: e.to_string() })
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, InputError> {
    serde_json::from_str(&read(path)?).map_err(|e| InputError::File { path: path.display().to_string(), message: e.to_string() })
}

pub fn load_simulation_config(path: Option<&Path>) -> Result<SimulationConfig, InputError> {
    path.map_or_else(|| Ok(SimulationConfig::default()), load_json)
}

pub fn load_lyapunov_config(path: Option<&Path>) -> Result<LyapunovConfig, InputError> {
    let cfg: LyapunovConfig = path.map_or_else(|| Ok(LyapunovConfig::default()), load_json)?;
    cfg.arena.validate().map_err(|e| InputError::Invalid(e.to_string()))?;
    if !(cfg.horizon.is_finite() && cfg.horizon > 0.0) || !(cfg.speed.is_finite() && cfg.speed > 0.0) {
        return Err(InputError::Invalid(format!("horizon and speed must be positive: {cfg:?}")));
    }
    Ok(cfg)
}

/// The bundled 100-row table `t`.
pub fn sample_table() -> Table {
    let schema: SchemaFile = serde_json::from_str(SAMPLE_SCHEMA).expect("bundled schema parses");
    Table::from_csv_str("t", Schema::new(schema.columns), SAMPLE_CSV).expect("bundled sample parses")
}

/// Tables from `(csv, schema)` pairs, or the bundled sample when none are
/// given. Files are checked up front so a missing one is named directly.
pub fn load_database(tables: &[PathBuf], schemas: &[PathBuf]) -> Result<(Database, Vec<String>), InputError> {
    if tables.len() != schemas.len() {
        return Err(InputError::Invalid(format!(
            "each --table needs a --schema ({} tables, {} schemas)",
            tables.len(),
            schemas.len()
        )));
    }
    if tables.is_empty() {
        let t = sample_table();
        return Ok((database([t]), vec!["t".into()]));
    }
    let mut loaded = Vec::new();
    for (csv, schema) in tables.iter().zip(schemas) {
        for p in [csv, schema] {
            if !p.is_file() {
                return Err(InputError::File { path: p.display().to_string(), message: "no such file".into() });
            }
        }
        loaded.push(Table::load(csv, schema)?);
    }
    let names = loaded.iter().map(|t| t.name.clone()).collect();
    Ok((database(loaded), names))
}
