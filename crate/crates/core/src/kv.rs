//! `key=value` text: one pair per line, `#` starts a comment, blank lines are
//! ignored. Used for run configs and for the header of serialized models.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Result, SimecError};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> KeyValues {
        KeyValues::default()
    }

    pub fn parse(text: &str) -> Result<KeyValues> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                SimecError::Config(format!("line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(SimecError::Config(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(SimecError::Config(format!("duplicate key {key:?}")));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| SimecError::Config(format!("cannot parse {key}={raw:?}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| SimecError::Config(format!("missing key {key:?}")))
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) if raw.trim().is_empty() => Ok(Some(Vec::new())),
            Some(raw) => raw
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|_| SimecError::Config(format!("cannot parse {key}={raw:?}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Sorted `key=value` lines, each terminated by `\n`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

pub fn join<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let kv = KeyValues::parse("# run\nembed_dim = 5\n\nhidden_sizes=64, 32 # widths\nlr=0.001\nempty=\n").unwrap();
        assert_eq!(kv.require::<usize>("embed_dim").unwrap(), 5);
        assert_eq!(kv.get_list::<usize>("hidden_sizes").unwrap(), Some(vec![64, 32]));
        assert_eq!(kv.get_list::<usize>("empty").unwrap(), Some(vec![]));
        assert_eq!(kv.get_or("missing", 3u8).unwrap(), 3);
        assert!(kv.require::<f64>("missing").is_err());
        assert!(kv.get::<usize>("lr").is_err());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KeyValues::parse("no equals sign").is_err());
        assert!(KeyValues::parse("a=1\na=2").is_err());
        assert!(KeyValues::parse("=3").is_err());
    }

    #[test]
    fn text_is_sorted_and_reparses() {
        let mut kv = KeyValues::new();
        kv.set("b", 0.1 + 0.2);
        kv.set("a", "x");
        let text = kv.to_text();
        assert_eq!(text, "a=x\nb=0.30000000000000004\n");
        assert_eq!(KeyValues::parse(&text).unwrap(), kv);
    }
}
