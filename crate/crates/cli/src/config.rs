//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys cover the
//! scenario generator and the schedule parameters; unknown keys are errors.

use std::collections::BTreeMap;
use std::str::FromStr;

use pricerank_core::workload::ScenarioConfig;
use pricerank_core::{Money, ScheduleParams};

#[derive(Debug, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {0}: expected `key = value`")]
    Syntax(usize),
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: cannot parse {value:?}")]
    Value { key: String, value: String },
}

pub const SCENARIO_KEYS: [&str; 8] = [
    "K",
    "interarrival",
    "n_bids",
    "n_asks",
    "volatility_step",
    "value_mean0",
    "value_halfwidth",
    "seed",
];
pub const SCHEDULE_KEYS: [&str; 5] = ["p_star", "lambda", "window_size", "initial_price", "v_max"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax(i + 1))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax(i + 1));
            }
            if !SCENARIO_KEYS.contains(&key) && !SCHEDULE_KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey(key.to_string()));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ConfigError::Duplicate {
                    line: i + 1,
                    key: key.to_string(),
                });
            }
        }
        Ok(Config { entries })
    }

    /// Later settings win; used for command-line overrides.
    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<(), ConfigError> {
        if !SCENARIO_KEYS.contains(&key) && !SCHEDULE_KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError::Value {
                key: key.to_string(),
                value: v.clone(),
            }),
        }
    }

    pub fn scenario(&self) -> Result<ScenarioConfig, ConfigError> {
        let mut c = ScenarioConfig::default();
        if let Some(v) = self.get("K")? {
            c.patience = v;
        }
        if let Some(v) = self.get("interarrival")? {
            c.interarrival = v;
        }
        if let Some(v) = self.get("n_bids")? {
            c.n_bids = v;
        }
        if let Some(v) = self.get("n_asks")? {
            c.n_asks = v;
        }
        if let Some(v) = self.get("volatility_step")? {
            c.volatility_step = v;
        }
        if let Some(v) = self.get("value_mean0")? {
            c.value_mean0 = v;
        }
        if let Some(v) = self.get("value_halfwidth")? {
            c.value_halfwidth = v;
        }
        if let Some(v) = self.get("seed")? {
            c.seed = v;
        }
        Ok(c)
    }

    pub fn schedule_params(&self) -> Result<ScheduleParams, ConfigError> {
        let mut p = ScheduleParams::default();
        if let Some(v) = self.get::<Money>("p_star")? {
            p.p_star = v;
        }
        if let Some(v) = self.get("lambda")? {
            p.lambda = v;
        }
        if let Some(v) = self.get("window_size")? {
            p.window_size = v;
        }
        if let Some(v) = self.get::<Money>("initial_price")? {
            p.initial_price = v;
        }
        if let Some(v) = self.get::<Money>("v_max")? {
            p.v_max = v;
        }
        Ok(p)
    }
}
