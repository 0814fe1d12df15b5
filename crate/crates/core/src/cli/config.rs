use std::path::Path;

use serde::Deserialize;

use crate::aggregate::{ClusterParams, DEFAULT_TAU};
use crate::error::{Error, Result};
use crate::model::{KernelKind, LiftConfig};
use crate::query::ThresholdParams;
use crate::solver::LiftMode;

/// Settings file. Every key is optional; flags override it, and it overrides
/// the built-in defaults.
///
/// ```toml
/// threads = 4
/// mode = "rowsum"
/// tau = 0.6
/// [lift]
/// lambda = 1.2
/// transmittance_floor = 1e-4
/// [cluster]
/// min_points = 10
/// [threshold]
/// bins = 256
/// ```
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub threads: Option<usize>,
    pub kernel: Option<KernelKind>,
    pub mode: LiftMode,
    pub streaming: bool,
    pub tau: f64,
    pub lift: LiftConfig,
    pub cluster: ClusterParams,
    pub threshold: ThresholdParams,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            threads: None,
            kernel: None,
            mode: LiftMode::default(),
            streaming: false,
            tau: DEFAULT_TAU,
            lift: LiftConfig::default(),
            cluster: ClusterParams::default(),
            threshold: ThresholdParams::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, "config", e.to_string()))
    }

    /// Weight construction settings with an optional lambda override.
    pub fn lift_config(&self, lambda: Option<f64>) -> Result<LiftConfig> {
        let mut cfg = self.lift;
        if let Some(l) = lambda {
            cfg.lambda = l;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.lift.lambda, 1.2);
        let c = Config::from_toml("tau = 0.3\nmode = \"rowsum2\"\n[lift]\nlambda = 2.0\n[cluster]\nmin_points = 4\n").unwrap();
        assert_eq!(c.tau, 0.3);
        assert_eq!(c.mode, LiftMode::RowSumSquared);
        assert_eq!(c.lift.tile_size, 16);
        assert_eq!(c.cluster.min_points, 4);
        assert_eq!(c.lift_config(None).unwrap().lambda, 2.0);
        assert_eq!(c.lift_config(Some(1.5)).unwrap().lambda, 1.5);
        assert!(c.lift_config(Some(0.0)).is_err());
        assert!(Config::from_toml("bogus = 1").is_err());
    }
}
