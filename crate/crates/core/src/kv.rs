//! Flat `key = value` files with `#` comments, shared by run configs and
//! scenario specs. Consumers pull typed values by key; whatever is left over
//! is an unknown key and an error.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    File { name: String, line: usize },
    Env(String),
    Default,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { name, line } => write!(f, "{name}:{line}"),
            Origin::Env(var) => write!(f, "environment variable {var}"),
            Origin::Default => f.write_str("config validation"),
        }
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
#[error("{origin}: key '{key}': {message}")]
pub struct KvError {
    pub origin: Origin,
    pub key: String,
    pub message: String,
}

pub(crate) struct KvSource<'a> {
    name: String,
    entries: BTreeMap<String, (String, usize)>,
    env_prefix: Option<&'a str>,
    env: &'a dyn Fn(&str) -> Option<String>,
}

fn no_env(_: &str) -> Option<String> {
    None
}

impl<'a> KvSource<'a> {
    pub fn parse(text: &str, name: &str) -> Result<Self, KvError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let origin = Origin::File {
                name: name.to_string(),
                line: line_no,
            };
            let Some((k, v)) = line.split_once('=') else {
                return Err(KvError {
                    origin,
                    key: line.to_string(),
                    message: "expected 'key = value'".into(),
                });
            };
            let key = k.trim().to_ascii_lowercase();
            let value = v.split_once(" #").map_or(v, |(before, _)| before).trim().to_string();
            if key.is_empty() {
                return Err(KvError {
                    origin,
                    key,
                    message: "empty key".into(),
                });
            }
            if let Some((_, first)) = entries.get(&key) {
                return Err(KvError {
                    origin,
                    message: format!("duplicate key (first set on line {first})"),
                    key,
                });
            }
            entries.insert(key, (value, line_no));
        }
        Ok(Self {
            name: name.to_string(),
            entries,
            env_prefix: None,
            env: &no_env,
        })
    }

    /// Environment variables `<PREFIX><KEY>` (key upper-cased, `.` as `_`)
    /// override file values.
    pub fn with_env(mut self, prefix: &'a str, env: &'a dyn Fn(&str) -> Option<String>) -> Self {
        self.env_prefix = Some(prefix);
        self.env = env;
        self
    }

    fn env_var_name(&self, key: &str) -> Option<String> {
        self.env_prefix
            .map(|p| format!("{p}{}", key.to_ascii_uppercase().replace('.', "_")))
    }

    /// Raw value for `key`, with its origin.
    pub fn take_raw(&mut self, key: &str) -> Option<(String, Origin)> {
        let file = self.entries.remove(key);
        if let Some(var) = self.env_var_name(key) {
            if let Some(v) = (self.env)(&var) {
                return Some((v.trim().to_string(), Origin::Env(var)));
            }
        }
        file.map(|(v, line)| {
            (v, Origin::File {
                name: self.name.clone(),
                line,
            })
        })
    }

    pub fn take_with<T>(&mut self, key: &str, parse: impl FnOnce(&str) -> Result<T, String>) -> Result<Option<T>, KvError> {
        match self.take_raw(key) {
            None => Ok(None),
            Some((raw, origin)) => parse(&raw).map(Some).map_err(|message| KvError {
                origin,
                key: key.to_string(),
                message,
            }),
        }
    }

    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, KvError> {
        self.take_with(key, |raw| {
            raw.parse::<T>()
                .map_err(|_| format!("cannot parse '{raw}' as {}", std::any::type_name::<T>()))
        })
    }

    pub fn take_into<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<(), KvError> {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn take_bool(&mut self, key: &str, slot: &mut bool) -> Result<(), KvError> {
        if let Some(v) = self.take_with(key, parse_bool)? {
            *slot = v;
        }
        Ok(())
    }

    /// Errors on the first key nobody asked for.
    pub fn finish(self) -> Result<(), KvError> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (_, line))) => Err(KvError {
                origin: Origin::File {
                    name: self.name,
                    line,
                },
                key,
                message: "unknown key".into(),
            }),
        }
    }
}

pub(crate) fn parse_bool(raw: &str) -> Result<bool, String> {
    match raw.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got '{raw}'")),
    }
}
