//! The line-oriented `key=value` dialect shared by manifests, config files,
//! metadata sidecars and reports.
//!
//! Each non-blank line is one record: an optional leading bare word (the
//! record tag) followed by whitespace-separated `key=value` tokens. `#` starts
//! a comment. Values cannot contain whitespace.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Record {
    pub line: usize,
    pub tag: Option<String>,
    pub fields: BTreeMap<String, String>,
}

impl Record {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }

    /// Parses `key` if present.
    pub fn parse<T: FromStr>(&self, origin: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| Error::Parse {
                path: format!("{origin}:{}", self.line),
                msg: format!("bad value {v:?} for {key}: {e}"),
            }),
        }
    }

    pub fn require<T: FromStr>(&self, origin: &str, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parse(origin, key)?.ok_or_else(|| Error::Parse {
            path: format!("{origin}:{}", self.line),
            msg: format!("missing required key {key}"),
        })
    }

    /// Fails on any key outside `allowed`.
    pub fn check_keys(&self, origin: &str, allowed: &[&str]) -> Result<()> {
        match self.fields.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Parse {
                path: format!("{origin}:{}", self.line),
                msg: format!("unknown key {k:?}"),
            }),
            None => Ok(()),
        }
    }
}

pub fn parse_records(origin: &str, text: &str) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut rec = Record {
            line: i + 1,
            ..Default::default()
        };
        for (j, tok) in line.split_whitespace().enumerate() {
            match tok.split_once('=') {
                Some((k, v)) if !k.is_empty() => {
                    if rec.fields.insert(k.to_string(), v.to_string()).is_some() {
                        return Err(Error::Parse {
                            path: format!("{origin}:{}", i + 1),
                            msg: format!("duplicate key {k:?}"),
                        });
                    }
                }
                None if j == 0 => rec.tag = Some(tok.to_string()),
                _ => {
                    return Err(Error::Parse {
                        path: format!("{origin}:{}", i + 1),
                        msg: format!("expected key=value, got {tok:?}"),
                    })
                }
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Parses a file of one `key=value` per line into a single merged record.
pub fn parse_flat(origin: &str, text: &str) -> Result<Record> {
    let mut merged = Record::default();
    for rec in parse_records(origin, text)? {
        if let Some(tag) = rec.tag {
            return Err(Error::Parse {
                path: format!("{origin}:{}", rec.line),
                msg: format!("unexpected bare word {tag:?}"),
            });
        }
        for (k, v) in rec.fields {
            if merged.fields.insert(k.clone(), v).is_some() {
                return Err(Error::Parse {
                    path: format!("{origin}:{}", rec.line),
                    msg: format!("duplicate key {k:?}"),
                });
            }
        }
    }
    Ok(merged)
}

/// Writes `key=value` lines in the given order.
pub fn format_lines<'a>(pairs: impl IntoIterator<Item = (&'a str, String)>) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        let _ = writeln!(s, "{k}={v}");
    }
    s
}
