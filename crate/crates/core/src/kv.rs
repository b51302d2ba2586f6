//! Line-oriented `key = value` text format.
//!
//! Blank lines and lines starting with `#` are ignored. A line of the form
//! `[name]` opens a section; keys before the first section belong to the
//! unnamed section `""`. Keys are unique within a section.

use std::collections::BTreeSet;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    entries: Vec<Entry>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<KvDoc> {
        let mut entries: Vec<Entry> = Vec::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("unterminated section header `{trimmed}`"),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected `key = value`, found `{trimmed}`"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    line,
                    msg: "empty key".into(),
                });
            }
            if entries.iter().any(|e| e.section == section && e.key == key) {
                return Err(Error::Parse {
                    line,
                    msg: format!("duplicate key `{key}`"),
                });
            }
            entries.push(Entry {
                section: section.clone(),
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(KvDoc { entries })
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.section == section && e.key == key)
            .map(|e| e.value.as_str())
    }

    /// Inserts or replaces a key in the unnamed section.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self
            .entries
            .iter_mut()
            .find(|e| e.section.is_empty() && e.key == key)
        {
            Some(e) => e.value = value,
            None => self.entries.push(Entry {
                section: String::new(),
                key: key.to_string(),
                value,
                line: 0,
            }),
        }
    }

    pub fn sections(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.section.as_str()) {
                out.push(&e.section);
            }
        }
        out
    }

    /// A reader over one section that remembers which keys were consumed.
    pub fn reader<'a>(&'a self, section: &'a str) -> KvReader<'a> {
        KvReader {
            doc: self,
            section,
            used: BTreeSet::new(),
        }
    }
}

pub struct KvReader<'a> {
    doc: &'a KvDoc,
    section: &'a str,
    used: BTreeSet<String>,
}

impl<'a> KvReader<'a> {
    pub fn raw(&mut self, key: &str) -> Option<&'a str> {
        let v = self.doc.get(self.section, key);
        if v.is_some() {
            self.used.insert(key.to_string());
        }
        v
    }

    pub fn opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(s) => s.parse::<T>().map(Some).map_err(|_| Error::Invalid {
                what: "value",
                reason: format!("`{key}` cannot parse `{s}`"),
            }),
        }
    }

    pub fn req<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.opt(key)?
            .ok_or_else(|| Error::MissingKey(key.to_string()))
    }

    pub fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(s) => s
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<T>().map_err(|_| Error::Invalid {
                        what: "value",
                        reason: format!("`{key}` cannot parse list item `{t}`"),
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Fails on the first key of this section that was never read, unless it
    /// starts with one of `allowed_prefixes`.
    pub fn finish(self, allowed_prefixes: &[&str]) -> Result<()> {
        for e in self.doc.entries.iter().filter(|e| e.section == self.section) {
            if self.used.contains(&e.key) {
                continue;
            }
            if allowed_prefixes.iter().any(|p| e.key.starts_with(p)) {
                continue;
            }
            return Err(Error::UnknownKey(e.key.clone()));
        }
        Ok(())
    }
}
