//! `key = value` configuration files.
//!
//! One setting per line. Blank lines and lines starting with `#` are
//! skipped. Lists are comma separated.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    /// Parses `text`, rejecting keys outside `allowed` and repeated keys.
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            if !allowed.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key `{key}`", lineno + 1)));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: `{key}` given twice", lineno + 1)));
            }
        }
        Ok(Config { entries })
    }

    pub fn read(path: &Path, allowed: &[&str]) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, allowed)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    /// Comma separated list; absent key gives an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let Some(v) = self.raw(key) else {
            return Ok(Vec::new());
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|_| Error::Config(format!("`{key}`: cannot parse list item `{s}`")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_and_lists() {
        let c = Config::parse("# comment\n d = 4\n\netas = 5, 6,7\nname=x = y\n", &["d", "etas", "name"]).unwrap();
        assert_eq!(c.require::<usize>("d").unwrap(), 4);
        assert_eq!(c.list::<usize>("etas").unwrap(), vec![5, 6, 7]);
        assert_eq!(c.raw("name"), Some("x = y"));
        assert_eq!(c.get_or("missing", 2.5).unwrap(), 2.5);
        assert!(c.list::<usize>("missing").unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(Config::parse("seed = 1\nbogus = 2", &["seed"]), Err(Error::Config(_))));
        assert!(Config::parse("seed 1", &["seed"]).is_err());
        assert!(Config::parse("seed = 1\nseed = 2", &["seed"]).is_err());
        let c = Config::parse("seed = abc", &["seed"]).unwrap();
        assert!(c.require::<u64>("seed").is_err());
        assert!(c.require::<u64>("other").is_err());
    }
}
