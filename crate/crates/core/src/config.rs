//! Flat `key = value` files with `#` comments, used for run configurations
//! and simulator settings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parsed `key = value` pairs in key order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> Self {
        KeyValues::default()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// `Ok(None)` when the key is absent; an error when it does not parse.
    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{key}` has an invalid value `{raw}`"))),
        }
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn load(path: &Path) -> Result<KeyValues> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_key_values(&text, &path.display().to_string())
    }
}

/// Blank lines and lines starting with `#` are skipped. Repeating a key is
/// an error.
pub fn parse_key_values(text: &str, name: &str) -> Result<KeyValues> {
    let mut kv = KeyValues::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(name, i + 1, "expected `key = value`"))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::parse(name, i + 1, "empty key"));
        }
        if kv.entries.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::parse(name, i + 1, format!("duplicate key `{k}`")));
        }
    }
    Ok(kv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_write() {
        let kv = parse_key_values("# run\nseed = 3\n\nhidden=128\n", "cfg").unwrap();
        assert_eq!(kv.get("hidden"), Some("128"));
        assert_eq!(kv.get_parsed::<u64>("seed").unwrap(), Some(3));
        assert_eq!(kv.get_parsed::<u64>("epochs").unwrap(), None);
        assert_eq!(parse_key_values(&kv.to_text(), "rt").unwrap(), kv);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(parse_key_values("seed = 1\nseed = 2\n", "cfg").is_err());
        assert!(parse_key_values("no equals sign\n", "cfg").is_err());
        let kv = parse_key_values("seed = abc\n", "cfg").unwrap();
        assert!(kv.get_parsed::<u64>("seed").is_err());
    }
}
