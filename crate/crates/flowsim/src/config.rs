//! Flat `key = value` scenario files.
//!
//! Blank lines and lines starting with `#` or `;` are ignored. A key may repeat;
//! repeated keys form lists in file order. `--set key=value` overrides replace
//! every occurrence of the key.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, Result};

/// Where a value came from, for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Override,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override => f.write_str("--set"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: Vec<Entry>,
}

fn split_pair(text: &str) -> Option<(String, String)> {
    let (k, v) = text.split_once('=')?;
    let k = k.trim();
    if k.is_empty() {
        return None;
    }
    Some((k.to_string(), v.trim().to_string()))
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let Some((key, value)) = split_pair(line) else {
                return Err(CliError::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    i + 1
                )));
            };
            entries.push(Entry {
                key,
                value,
                origin: Origin::Line(i + 1),
            });
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Applies `key=value`, replacing all existing values of `key`.
    pub fn apply_override(&mut self, text: &str) -> Result<(String, String)> {
        let Some((key, value)) = split_pair(text) else {
            return Err(CliError::Usage(format!("--set expects key=value, got `{text}`")));
        };
        self.set(&key, &value);
        Ok((key, value))
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.retain(|e| e.key != key);
        self.entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            origin: Origin::Override,
        });
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.key == key)
    }

    /// The single value of `key`; repeated keys are an error.
    pub fn one<'a>(&'a self, key: &'a str) -> Result<Option<&'a Entry>> {
        let mut it = self.all(key);
        let first = it.next();
        if let Some(dup) = it.next() {
            return Err(CliError::Config(format!(
                "{}: key `{key}` given more than once",
                dup.origin
            )));
        }
        Ok(first)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.one(key)?.map(|e| parse_value(e, &e.value)).transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        self.all(key).map(|e| parse_value(e, &e.value)).collect()
    }

    /// Colon-separated tuples such as `atom = 0.5:2.0`.
    pub fn tuples(&self, key: &str, arity: usize) -> Result<Vec<Vec<f64>>> {
        self.all(key)
            .map(|e| {
                let parts: Vec<&str> = e.value.split(':').map(str::trim).collect();
                if parts.len() != arity {
                    return Err(CliError::Config(format!(
                        "{}: `{}` expects {arity} colon-separated numbers, got `{}`",
                        e.origin, e.key, e.value
                    )));
                }
                parts.iter().map(|p| parse_value(e, p)).collect()
            })
            .collect()
    }
}

fn parse_value<T: FromStr>(entry: &Entry, text: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    text.parse().map_err(|err| {
        CliError::Config(format!(
            "{}: bad value `{text}` for `{}`: {err}",
            entry.origin, entry.key
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_lists_and_spacing() {
        let c = RawConfig::parse("# c\n; c\n\nkind = fv\natom = 0.5:2\natom=0.25 : 1\n  dt=1e-3  \n").unwrap();
        assert_eq!(c.get::<String>("kind").unwrap().as_deref(), Some("fv"));
        assert_eq!(c.tuples("atom", 2).unwrap(), vec![vec![0.5, 2.0], vec![0.25, 1.0]]);
        assert_eq!(c.require::<f64>("dt").unwrap(), 1e-3);
    }

    #[test]
    fn errors_carry_line_and_key() {
        let e = RawConfig::parse("kind = fv\nnonsense\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        let c = RawConfig::parse("a = 1\ndt = x\n").unwrap();
        let e = c.require::<f64>("dt").unwrap_err();
        assert!(e.to_string().contains("line 2") && e.to_string().contains("dt"), "{e}");
        let e = c.require::<f64>("horizon").unwrap_err();
        assert!(e.to_string().contains("horizon"));
        let c = RawConfig::parse("dt = 1\ndt = 2\n").unwrap();
        assert!(c.get::<f64>("dt").is_err());
    }

    #[test]
    fn override_replaces_every_occurrence() {
        let mut c = RawConfig::parse("label = 0.2\nlabel = 0.4\n").unwrap();
        c.apply_override("label=0.9").unwrap();
        assert_eq!(c.list::<f64>("label").unwrap(), vec![0.9]);
        assert!(c.apply_override("nokey").is_err());
    }
}
