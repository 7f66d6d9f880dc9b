//! Flat `key = value` configuration files. `#` starts a comment; blank lines
//! are ignored; keys are unique.

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct KeyValues {
    entries: IndexMap<String, (usize, String)>,
    used: HashSet<String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = IndexMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| Error::ConfigFile {
                line,
                msg: format!("expected `key = value`, got `{content}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(Error::ConfigFile {
                    line,
                    msg: "empty key or value".into(),
                });
            }
            if entries.insert(k.to_string(), (line, v.to_string())).is_some() {
                return Err(Error::ConfigFile {
                    line,
                    msg: format!("duplicate key `{k}`"),
                });
            }
        }
        Ok(KeyValues {
            entries,
            used: HashSet::new(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets (or overrides) a value, as a command-line flag would.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (0, value.to_string()));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Parses `key` if present and marks it consumed.
    pub fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let Some((line, v)) = self.entries.get(key) else {
            return Ok(None);
        };
        self.used.insert(key.to_string());
        v.parse().map(Some).map_err(|e| Error::ConfigFile {
            line: *line,
            msg: format!("`{key}`: cannot parse `{v}`: {e}"),
        })
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| Error::MissingKey(key.to_string()))
    }

    /// Fails on the first key nobody consumed.
    pub fn finish(&self) -> Result<()> {
        match self.entries.iter().find(|(k, _)| !self.used.contains(*k)) {
            Some((k, (line, _))) => Err(Error::ConfigFile {
                line: *line,
                msg: format!("unknown key `{k}`"),
            }),
            None => Ok(()),
        }
    }
}
