//! Scenario files: TOML with one table per subsystem.
//!
//! ```toml
//! h = 0.001
//! horizon = 50.0
//! controller = "backstepping"
//!
//! [plant]
//! mass = 2.0
//! # ...
//!
//! [trajectory]
//! kind = "spiral"
//! radius = 1.0
//! angular_rate = 0.5
//! climb_rate = 0.1
//!
//! [disturbance]
//! onset = 25.0
//! wind_speed = 6.0
//! drag_coefficient = 0.3
//! direction = [1.0, 0.0, 0.0]
//! ```
//!
//! Every key is optional. Omitted `[disturbance]` and `[clamp]` tables
//! disable those features; omitted `[initial]` fields start at zero.

use std::path::Path;

use crate::error::{Result, SimError};
use crate::simulation::ScenarioConfig;

pub fn from_toml_str(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig =
        toml::from_str(text).map_err(|e| SimError::Config(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn to_toml_string(cfg: &ScenarioConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| SimError::Config(e.to_string()))
}

/// Reads a scenario, loading any external waypoint table relative to the
/// scenario's directory.
pub fn load(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    let mut cfg: ScenarioConfig =
        toml::from_str(&text).map_err(|e| SimError::Config(e.message().to_string()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    cfg.trajectory.resolve_files(base)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn save(cfg: &ScenarioConfig, path: &Path) -> Result<()> {
    std::fs::write(path, to_toml_string(cfg)?)
        .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))
}
