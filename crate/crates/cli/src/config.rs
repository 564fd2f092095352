//! Run settings, layered from a TOML file, `TWINSIM_*` environment variables
//! and flags. Later layers win.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::Failure;

pub const DEFAULT_BIND: &str = "127.0.0.1:8765";

/// Keys accepted in a `--config` file. Each mirrors a `run` flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scene: Option<String>,
    pub vehicles: Option<usize>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub sensor_rate: Option<f64>,
    pub duration: Option<f64>,
    pub record: Option<PathBuf>,
    pub bind: Option<String>,
    pub headless: Option<bool>,
    pub lockstep: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::config(format!("config {}: {e}", path.display())))
    }
}

/// Fully resolved settings for `twinsim run`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub scene: String,
    pub vehicles: usize,
    pub seed: u64,
    pub dt: Option<f64>,
    pub sensor_rate: Option<f64>,
    pub duration: Option<f64>,
    pub record: Option<PathBuf>,
    pub bind: String,
    pub headless: bool,
    pub lockstep: bool,
}

impl RunSettings {
    /// `cli` already carries flag-over-environment precedence from clap.
    pub fn resolve(cli: FileConfig, file: FileConfig) -> Result<Self, Failure> {
        let scene = cli
            .scene
            .or(file.scene)
            .ok_or_else(|| Failure::usage("no scene given (use --scene, TWINSIM_SCENE or `scene` in the config file)"))?;
        let s = RunSettings {
            scene,
            vehicles: cli.vehicles.or(file.vehicles).unwrap_or(1),
            seed: cli.seed.or(file.seed).unwrap_or(0),
            dt: cli.dt.or(file.dt),
            sensor_rate: cli.sensor_rate.or(file.sensor_rate),
            duration: cli.duration.or(file.duration),
            record: cli.record.or(file.record),
            bind: cli.bind.or(file.bind).unwrap_or_else(|| DEFAULT_BIND.to_string()),
            headless: cli.headless.or(file.headless).unwrap_or(false),
            lockstep: cli.lockstep.or(file.lockstep).unwrap_or(false),
        };
        if let Some(d) = s.duration {
            if !(d.is_finite() && d > 0.0) {
                return Err(Failure::config(format!("duration must be positive, got {d}")));
            }
        }
        if s.vehicles == 0 {
            return Err(Failure::config("at least one vehicle is required"));
        }
        if s.lockstep && s.duration.is_some() {
            return Err(Failure::config("--duration has no meaning with --lockstep; clients advance time"));
        }
        Ok(s)
    }
}
