//! `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Recognized keys:
//! `pois`, `trajs`, `model`, `port`, `speed_walking`, `speed_bicycling`,
//! `speed_driving`, `alpha`, `kappa`, `neighbourhood_radius_km`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{ModeSpeeds, TravelMode};
use crate::error::{Error, Result};
use crate::features::DEFAULT_NEIGHBOURHOOD_RADIUS_KM;
use crate::scoring::DEFAULT_ALPHA;
use crate::transition::DEFAULT_SMOOTHING;

/// Environment variable naming the config file.
pub const CONFIG_ENV: &str = "PATHREC_CONFIG";
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub pois: Option<PathBuf>,
    pub trajs: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub port: u16,
    pub mode_speeds: ModeSpeeds,
    pub alpha: f64,
    pub kappa: f64,
    pub neighbourhood_radius_km: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            pois: None,
            trajs: None,
            model: None,
            port: DEFAULT_PORT,
            mode_speeds: ModeSpeeds::default(),
            alpha: DEFAULT_ALPHA,
            kappa: DEFAULT_SMOOTHING,
            neighbourhood_radius_km: DEFAULT_NEIGHBOURHOOD_RADIUS_KM,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let number = || -> Result<f64> {
                value
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Config(format!("line {}: `{key}` needs a number, got `{value}`", n + 1)))
            };
            match key {
                "pois" => cfg.pois = Some(PathBuf::from(value)),
                "trajs" => cfg.trajs = Some(PathBuf::from(value)),
                "model" => cfg.model = Some(PathBuf::from(value)),
                "port" => {
                    cfg.port = value
                        .parse()
                        .map_err(|_| Error::Config(format!("line {}: invalid port `{value}`", n + 1)))?
                }
                "speed_walking" => cfg.mode_speeds.set(TravelMode::Walking, number()?),
                "speed_bicycling" => cfg.mode_speeds.set(TravelMode::Bicycling, number()?),
                "speed_driving" => cfg.mode_speeds.set(TravelMode::Driving, number()?),
                "alpha" => cfg.alpha = number()?,
                "kappa" => cfg.kappa = number()?,
                "neighbourhood_radius_km" => cfg.neighbourhood_radius_km = number()?,
                other => return Err(Error::Config(format!("line {}: unknown key `{other}`", n + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.mode_speeds.validate()?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.kappa < 0.0 {
            return Err(Error::Config(format!("kappa must be non-negative, got {}", self.kappa)));
        }
        if self.neighbourhood_radius_km < 0.0 {
            return Err(Error::Config("neighbourhood radius must be non-negative".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Loads the file named by `PATHREC_CONFIG` if set, else `fallback` if
    /// given, else defaults.
    pub fn resolve(fallback: Option<&Path>) -> Result<Self> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) => Self::load(PathBuf::from(p)),
            None => fallback.map_or_else(|| Ok(Self::default()), Self::load),
        }
    }
}
