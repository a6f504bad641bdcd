//! `key = value` text files used for model parameters and run configuration.
//!
//! Blank lines and `#` comments are ignored. Numbers are written with Rust's
//! shortest round-trip formatting, which is locale independent.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::parse(context, format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::parse(context, format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::parse(context, format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::parse("key-value file", format!("missing key `{key}`")))?;
        let v: f64 = raw
            .parse()
            .map_err(|_| Error::parse("key-value file", format!("`{key}`: not a number: {raw}")))?;
        if !v.is_finite() {
            return Err(Error::parse("key-value file", format!("`{key}` is not finite")));
        }
        Ok(v)
    }
}

impl std::fmt::Display for KeyValues {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_spacing() {
        let kv = KeyValues::parse("# header\nmu = 1.5\n\nsigma2=2 # trailing\n", "t").unwrap();
        assert_eq!(kv.f64("mu").unwrap(), 1.5);
        assert_eq!(kv.f64("sigma2").unwrap(), 2.0);
        assert!(kv.f64("beta_up").is_err());
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(KeyValues::parse("a = 1\na = 2\n", "t").is_err());
        assert!(KeyValues::parse("just words\n", "t").is_err());
        let kv = KeyValues::parse("a = nan\n", "t").unwrap();
        assert!(kv.f64("a").is_err());
    }

    #[test]
    fn floats_round_trip_exactly() {
        let x = 0.1f64 + 0.2;
        let mut kv = KeyValues::new();
        kv.set("x", x);
        let back = KeyValues::parse(&kv.to_string(), "t").unwrap();
        assert_eq!(back.f64("x").unwrap().to_bits(), x.to_bits());
    }
}
