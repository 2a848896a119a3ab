//! Flat `key=value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are dotted
//! paths such as `class.0.min`. Later duplicates override earlier ones.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(idx + 1, format!("expected key=value, got `{line}`"))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::parse(idx + 1, "empty key"));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Parse the value under `key`, if present.
    pub fn get_parsed<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::invalid(format!("{key}={v}: {e}"))),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Serialise back to `key=value` lines in key order.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let cfg = KvConfig::parse("# header\n\nclass.0.min = 20\nseed=3\n").unwrap();
        assert_eq!(cfg.get("class.0.min"), Some("20"));
        assert_eq!(cfg.get_parsed::<u64>("seed").unwrap(), Some(3));
        assert_eq!(cfg.get_parsed::<u64>("missing").unwrap(), None);
    }

    #[test]
    fn rejects_lines_without_equals() {
        let err = KvConfig::parse("a=1\nbogus\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn bad_value_is_reported() {
        let cfg = KvConfig::parse("seed=abc").unwrap();
        assert!(cfg.get_parsed::<u64>("seed").is_err());
    }

    #[test]
    fn text_round_trip() {
        let cfg = KvConfig::parse("b=2\na=1\n").unwrap();
        assert_eq!(KvConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
}
