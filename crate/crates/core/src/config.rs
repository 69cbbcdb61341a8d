//! Flat `key = value` configuration files.
//!
//! Format: one `key = value` pair per line, `#` starts a comment, blank
//! lines ignored. Keys may carry dotted section prefixes (`train.lr`).
//! Duplicate keys are rejected so a typo cannot silently shadow a value.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Parsed key-value config with typed accessors.
#[derive(Debug, Clone, Default)]
pub struct KeyValueConfig {
    entries: BTreeMap<String, String>,
}

impl KeyValueConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{}`",
                    lineno + 1,
                    key
                )));
            }
        }
        Ok(KeyValueConfig { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!(
                    "key `{key}`: cannot parse `{raw}` as {}",
                    std::any::type_name::<T>()
                ))
            }),
        }
    }

    /// Comma-separated list value; empty string means empty list.
    pub fn get_list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|raw| {
            raw.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect()
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Reject any key outside the allowed set. Guards against typos:
    /// a misspelled key is a hard error, not a silently ignored default.
    pub fn ensure_known_keys(&self, allowed: &[&str]) -> Result<()> {
        for key in self.entries.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
        }
        Ok(())
    }

    /// Canonical serialized form (sorted keys), used for config hashing.
    pub fn canonical_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_sections() {
        let cfg = KeyValueConfig::parse(
            "# experiment\ntrain.lr = 0.05\nseed = 7 # root seed\n\ntrain_speakers = a, b,c\n",
        )
        .unwrap();
        assert_eq!(cfg.get("train.lr"), Some("0.05"));
        assert_eq!(cfg.get_parsed::<u64>("seed").unwrap(), Some(7));
        assert_eq!(
            cfg.get_list("train_speakers").unwrap(),
            vec!["a", "b", "c"]
        );
    }

    #[test]
    fn duplicate_key_rejected() {
        let err = KeyValueConfig::parse("a = 1\na = 2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate key `a`"));
    }

    #[test]
    fn unknown_key_rejected() {
        let cfg = KeyValueConfig::parse("seed = 1\ntypo = 2\n").unwrap();
        let err = cfg.ensure_known_keys(&["seed"]).unwrap_err();
        assert!(err.to_string().contains("typo"));
    }

    #[test]
    fn malformed_line_rejected() {
        assert!(KeyValueConfig::parse("just words\n").is_err());
    }
}
