//! The JSON run configuration. Every section has defaults, unknown keys are rejected and the
//! `schema` field must match [`SCHEMA_VERSION`].

use anyhow::{bail, Result};
use nht_core::pairing::Scenario;
use nht_core::suites::{COLLAR_WIDTHS, DECAY_CASES};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: u32,
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default)]
    pub kernel: KernelSuite,
    #[serde(default)]
    pub battery: BatteryConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub surgery: SurgeryConfig,
    #[serde(default)]
    pub schur: SchurConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schema: SCHEMA_VERSION,
            scenario: Scenario::default(),
            kernel: KernelSuite::default(),
            battery: BatteryConfig::default(),
            mc: McConfig::default(),
            surgery: SurgeryConfig::default(),
            schur: SchurConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSuite {
    /// Atom triples sampled for the size and smoothness ratios.
    pub samples: usize,
    /// Also run the operator-norm and maximal-function oracles.
    pub oracles: bool,
}

impl Default for KernelSuite {
    fn default() -> Self {
        Self {
            samples: 4096,
            oracles: true,
        }
    }
}

/// The seeded instance batteries behind `stopping` and `martingale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryConfig {
    pub enabled: bool,
    pub replicas: u64,
    pub sweeps: bool,
    pub sweep_replicas: u64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            replicas: 2,
            sweeps: true,
            sweep_replicas: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayCase {
    pub dim: usize,
    pub gamma: f64,
    pub r: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub trials: usize,
    pub cases: Vec<DecayCase>,
    pub collar_trials: usize,
    pub collar_widths: Vec<f64>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            trials: 256,
            cases: DECAY_CASES.iter().map(|&(dim, gamma, r)| DecayCase { dim, gamma, r }).collect(),
            collar_trials: 64,
            collar_widths: COLLAR_WIDTHS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurgeryConfig {
    pub seeds: Vec<u64>,
    pub trials: usize,
}

impl Default for SurgeryConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3, 4],
            trials: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchurConfig {
    pub enabled: bool,
    pub shallow: u32,
    pub deep: u32,
    pub trials: usize,
}

impl Default for SchurConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            shallow: 6,
            deep: 8,
            trials: 8,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text)?;
        if cfg.schema != SCHEMA_VERSION {
            bail!("schema {} is not supported (expected {SCHEMA_VERSION})", cfg.schema);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    /// Command-line overrides: the seed drives the scenario and the batteries, the trial count
    /// the scenario.
    pub fn apply(&mut self, seed: Option<u64>, trials: Option<usize>) {
        if let Some(s) = seed {
            self.scenario.seed = s;
        }
        if let Some(t) = trials {
            self.scenario.trials = t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = Config::parse(r#"{"schema": 1}"#).unwrap();
        assert_eq!(c, Config::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::parse(r#"{"schema": 1, "sed": 3}"#).is_err());
        assert!(Config::parse(r#"{"schema": 1, "scenario": {"trails": 3}}"#).is_err());
        assert!(Config::parse(r#"{"schema": 1, "mc": {"trials": 8, "extra": 0}}"#).is_err());
    }

    #[test]
    fn schema_is_required_and_checked() {
        assert!(Config::parse("{}").is_err());
        assert!(Config::parse(r#"{"schema": 2}"#).is_err());
    }

    #[test]
    fn default_round_trips() {
        let c = Config::default();
        let back = Config::parse(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_touch_the_scenario() {
        let mut c = Config::default();
        c.apply(Some(11), Some(3));
        assert_eq!((c.scenario.seed, c.scenario.trials), (11, 3));
    }
}
