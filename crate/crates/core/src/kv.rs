//! Flat `key = value` text configs. `#` starts a comment; blank lines are
//! ignored; key order is preserved.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KvError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("missing config key `{0}`")]
    Missing(String),
}

pub fn parse(text: &str) -> Result<Vec<(String, String)>, KvError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or(KvError::Syntax { line: n + 1 })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(KvError::Syntax { line: n + 1 });
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub fn value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, KvError> {
    v.parse().map_err(|_| KvError::BadValue {
        key: key.to_string(),
        value: v.to_string(),
    })
}

pub fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, KvError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| value(key, s))
        .collect()
}
