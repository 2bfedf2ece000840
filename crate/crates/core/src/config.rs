//! Key=value configuration overrides for the CLI (`--config key=value`,
//! repeatable). Keys are free-form; each suite documents the keys it reads.

use crate::{LabError, Result};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn from_pairs<I: IntoIterator<Item = S>, S: AsRef<str>>(pairs: I) -> Result<Config> {
        let mut values = BTreeMap::new();
        for pair in pairs {
            let pair = pair.as_ref();
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| LabError::Config(format!("expected key=value, got `{pair}`")))?;
            if k.is_empty() {
                return Err(LabError::Config(format!("empty key in `{pair}`")));
            }
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Config { values })
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| LabError::Config(format!("{key}: expected a number, got `{v}`"))),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<u64>()
                .map_err(|_| LabError::Config(format!("{key}: expected an integer, got `{v}`"))),
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(|s| s.as_str())
    }
}
