//! Plain-text `key = value` configuration files.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    /// Blank lines and `#` comments are ignored; later keys override earlier ones.
    pub fn parse(content: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("config", i + 1, "expected `key = value`"))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::parse("config", i + 1, "empty key"));
            }
            entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(KeyValues { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn merge(&mut self, other: &KeyValues) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn parse_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| Error::Config(format!("key `{key}`: cannot parse `{v}`: {e}"))),
        }
    }

    /// Entries under `prefix.`, with the prefix stripped.
    pub fn section(&self, prefix: &str) -> KeyValues {
        let head = format!("{prefix}.");
        KeyValues {
            entries: self
                .entries
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&head).map(|k| (k.to_string(), v.clone())))
                .collect(),
        }
    }

    /// Copy with every key prefixed by `prefix.`.
    pub fn prefixed(&self, prefix: &str) -> KeyValues {
        KeyValues {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (format!("{prefix}.{k}"), v.clone()))
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Sorted `key = value` lines.
    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_render_round_trip() {
        let kv = KeyValues::parse("# c\n count = 20 \nseed=3\n\n").unwrap();
        assert_eq!(kv.get("count"), Some("20"));
        assert_eq!(kv.parse_or("seed", 0u64).unwrap(), 3);
        assert_eq!(kv.parse_or("missing", 9u64).unwrap(), 9);
        assert_eq!(KeyValues::parse(&kv.render()).unwrap(), kv);
    }

    #[test]
    fn sections() {
        let kv = KeyValues::parse("a.x = 1\na.y = 2\nb.x = 3\n").unwrap();
        let a = kv.section("a");
        assert_eq!(a.render(), "x = 1\ny = 2\n");
        assert_eq!(a.prefixed("a").render(), "a.x = 1\na.y = 2\n");
    }

    #[test]
    fn bad_lines_are_rejected() {
        assert!(KeyValues::parse("novalue\n").is_err());
        let kv = KeyValues::parse("n = x").unwrap();
        assert!(kv.parse_or("n", 1usize).is_err());
    }
}
