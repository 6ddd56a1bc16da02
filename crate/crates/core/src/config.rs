//! Run configuration: TOML file with full defaulting, overridable from the
//! command line, hashed into every output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::MlpConfig;
use crate::error::{Error, Result};
use crate::featurize::{FeaturizeConfig, DEFAULT_ROW_NA_FRACTION, DEFAULT_Z_THRESHOLD};
use crate::signal::Direction;
use crate::synth::CohortConfig;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScopeSelection {
    Population,
    Individual,
    #[default]
    Both,
}

impl ScopeSelection {
    pub fn population(self) -> bool {
        matches!(self, ScopeSelection::Population | ScopeSelection::Both)
    }

    pub fn individual(self) -> bool {
        matches!(self, ScopeSelection::Individual | ScopeSelection::Both)
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "population" => Some(ScopeSelection::Population),
            "individual" => Some(ScopeSelection::Individual),
            "both" => Some(ScopeSelection::Both),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreeningConfig {
    pub enabled: bool,
    pub z_threshold: f64,
    pub row_na_fraction: f64,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        ScreeningConfig {
            enabled: true,
            z_threshold: DEFAULT_Z_THRESHOLD,
            row_na_fraction: DEFAULT_ROW_NA_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Session files or directories; empty means `<out>/cohort`.
    pub input: Vec<PathBuf>,
    pub scope: ScopeSelection,
    pub directions: Vec<Direction>,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub featurize: FeaturizeConfig,
    pub screening: ScreeningConfig,
    pub mlp: MlpConfig,
    pub synth: CohortConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            out: PathBuf::from("out"),
            input: Vec::new(),
            scope: ScopeSelection::Both,
            directions: Direction::ANALYSIS.to_vec(),
            jobs: 0,
            featurize: FeaturizeConfig::default(),
            screening: ScreeningConfig::default(),
            mlp: MlpConfig::default(),
            synth: CohortConfig::default(),
        }
    }
}

fn config_error(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        reason: reason.into(),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field"))
                .map(str::to_string)
                .or_else(|| {
                    e.span()
                        .map(|s| text[s].split('=').next().unwrap_or("").trim().to_string())
                })
                .unwrap_or_default();
            config_error(&key, msg)
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.directions.is_empty() {
            return Err(config_error("directions", "at least one direction required"));
        }
        if let Some(d) = self.directions.iter().find(|d| !Direction::ANALYSIS.contains(d)) {
            return Err(config_error("directions", format!("{d} is not an analysis direction")));
        }
        let f = &self.featurize;
        if !(f.window_s > 0.0) {
            return Err(config_error("featurize.window_s", "must be positive"));
        }
        if !(f.rate > 0.0) {
            return Err(config_error("featurize.rate", "must be positive"));
        }
        if f.max_peaks == 0 || f.max_peaks > crate::spectral::MAX_PEAKS {
            return Err(config_error("featurize.max_peaks", "must lie in 1..=5"));
        }
        let h = &f.hmc;
        if h.warmup >= h.steps {
            return Err(config_error("featurize.hmc.warmup", "must be below steps"));
        }
        if h.leapfrog_steps == 0 {
            return Err(config_error("featurize.hmc.leapfrog_steps", "must be positive"));
        }
        if !(h.target_accept > 0.0 && h.target_accept < 1.0) {
            return Err(config_error("featurize.hmc.target_accept", "must lie in (0, 1)"));
        }
        if !(self.screening.z_threshold > 0.0) {
            return Err(config_error("screening.z_threshold", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.screening.row_na_fraction) {
            return Err(config_error("screening.row_na_fraction", "must lie in [0, 1]"));
        }
        self.mlp.validate()?;
        self.synth.validate()?;
        Ok(())
    }

    /// Hex SHA-256 (first 16 digits) of the settings that affect results:
    /// everything except the output location, input paths and worker count.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.input.clear();
        c.jobs = 0;
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn threads(&self) -> usize {
        if self.jobs > 0 {
            self.jobs
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }

    pub fn input_paths(&self) -> Vec<PathBuf> {
        if self.input.is_empty() {
            vec![self.out.join("cohort")]
        } else {
            self.input.clone()
        }
    }
}
