//! Flat `key = value` configuration files.
//!
//! One pair per line, `#` starts a comment, blank lines are ignored. Lists
//! are comma-separated: `focus_offsets = -1, 0, 1`.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", n + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", n + 1)));
            }
        }
        Ok(KvConfig { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("cannot parse value '{v}' for key '{key}'"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(v) = self.entries.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|item| {
                item.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("cannot parse list item '{}' for key '{key}'", item.trim())))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_values_comments_and_lists() {
        let cfg = KvConfig::parse("# optics\nlayout = hex3\npitch=7.5  # px\n\nfocus_offsets = -1, 0 ,1\n").unwrap();
        assert_eq!(cfg.get_str("layout"), Some("hex3"));
        assert_eq!(cfg.get::<f64>("pitch").unwrap(), Some(7.5));
        assert_eq!(cfg.get_list::<f64>("focus_offsets").unwrap(), Some(vec![-1.0, 0.0, 1.0]));
        assert_eq!(cfg.get_or::<usize>("missing", 3).unwrap(), 3);
        assert!(cfg.get::<usize>("layout").is_err());
    }

    #[test]
    fn malformed_lines() {
        assert!(KvConfig::parse("just words").is_err());
        assert!(KvConfig::parse("= 3").is_err());
        assert!(KvConfig::parse("a = 1\na = 2").is_err());
    }
}
