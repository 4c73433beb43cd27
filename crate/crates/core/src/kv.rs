//! Plain-text `key = value` configuration, one pair per line, `#` starts a
//! comment. Later assignments override earlier ones.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvMap {
    entries: Vec<(String, String)>,
    source: String,
}

impl KvMap {
    pub fn new(source: impl Into<String>) -> Self {
        Self {
            entries: Vec::new(),
            source: source.into(),
        }
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut map = Self::new(source);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                context: format!("{source}:{}", lineno + 1),
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    context: format!("{source}:{}", lineno + 1),
                    message: "empty key".into(),
                });
            }
            map.set(key, v.trim());
        }
        Ok(map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    /// Copies every entry of `other` over this map.
    pub fn merge(&mut self, other: &KvMap) {
        for (k, v) in &other.entries {
            self.set(k, v);
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| Error::Parse {
                context: format!("{}: key `{key}`", self.source),
                message: format!("cannot parse `{raw}`: {e}"),
            }),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get_parsed(key)
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.get_parsed(key)
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.get_parsed(key)
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        self.get_parsed(key)
    }

    /// Fails on the first key not in `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(Error::Parse {
                context: self.source.clone(),
                message: format!("unknown key `{k}`"),
            }),
            None => Ok(()),
        }
    }
}

impl fmt::Display for KvMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let kv = KvMap::parse("# header\na = 1\n\nb=two # trailing\na=3\n", "t").unwrap();
        assert_eq!(kv.get("a"), Some("3"));
        assert_eq!(kv.get("b"), Some("two"));
        assert_eq!(kv.get_usize("a").unwrap(), Some(3));
        assert!(kv.get_f64("b").is_err());
        assert_eq!(kv.get_f64("missing").unwrap(), None);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KvMap::parse("novalue", "t").is_err());
        assert!(KvMap::parse("= 3", "t").is_err());
    }

    #[test]
    fn display_round_trips() {
        let kv = KvMap::parse("x=1.5\ny=abc", "t").unwrap();
        let again = KvMap::parse(&kv.to_string(), "t").unwrap();
        assert_eq!(again.get("x"), Some("1.5"));
        assert_eq!(again.get("y"), Some("abc"));
        assert!(kv.reject_unknown(&["x"]).is_err());
        assert!(kv.reject_unknown(&["x", "y"]).is_ok());
    }
}
