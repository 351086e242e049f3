//! Config loading for the `teamlearn` binary.
//!
//! A config file is a TOML document shaped like [`Scenario`], plus an
//! optional top-level `preset = "table1" | "desk"` that picks the defaults
//! every omitted key falls back to. Command-line `--set key=value` pairs are
//! applied on top of the file. A run's `manifest.toml` is also accepted and
//! reproduces that run.

use std::path::Path;

use teamlearn::experiment::Scenario;
use teamlearn::SimError;
use toml::{Table, Value};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Syntax(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

const PRESET_KEY: &str = "preset";
const DECAY_KEY: &str = "train.epsilon_decay_slots";
/// Optional keys absent from a default-serialized scenario.
const OPTIONAL_KEYS: &[&str] = &["train.target_sync"];

pub fn preset(name: &str) -> Result<Scenario, ConfigError> {
    match name {
        "table1" => Ok(Scenario::table1()),
        "desk" => Ok(Scenario::desk()),
        other => Err(ConfigError::Invalid {
            key: PRESET_KEY.into(),
            message: format!("unknown preset `{other}`, expected table1 or desk"),
        }),
    }
}

/// Loads `path` (or nothing) and applies `overrides` in order.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<Scenario, ConfigError> {
    let doc = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
            path: p.display().to_string(),
            source,
        })?,
        None => String::new(),
    };
    parse_config_str(&doc, overrides)
}

pub fn parse_config_str(doc: &str, overrides: &[String]) -> Result<Scenario, ConfigError> {
    let mut user: Table = doc
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    if user.get("kind").and_then(Value::as_str) == Some("run") {
        // A run manifest: replay its scenario exactly.
        user = match user.remove("scenario") {
            Some(Value::Table(t)) => t,
            _ => return Err(ConfigError::UnknownKey("scenario".into())),
        };
    }
    for o in overrides {
        let (key, value) = parse_override(o)?;
        set_path(&mut user, &key, value)?;
    }

    let preset_name = match user.remove(PRESET_KEY) {
        None => "table1".to_string(),
        Some(Value::String(s)) => s,
        Some(_) => {
            return Err(ConfigError::Invalid {
                key: PRESET_KEY.into(),
                message: "must be a string".into(),
            })
        }
    };
    let base = preset(&preset_name)?;
    let mut merged = to_table(&base)?;
    let decay_given = lookup(&user, DECAY_KEY).is_some();
    merge(&mut merged, user, "")?;

    let mut scenario: Scenario = Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    if !decay_given {
        scenario.train.epsilon_decay_slots = scenario.n_slots / 2;
    }
    scenario.validate()?;
    Ok(scenario)
}

fn to_table(s: &Scenario) -> Result<Table, ConfigError> {
    match Value::try_from(s) {
        Ok(Value::Table(t)) => Ok(t),
        Ok(_) => unreachable!("a struct serializes to a table"),
        Err(e) => Err(ConfigError::Syntax(e.to_string())),
    }
}

/// `key=value` where the value is TOML (`6e6`, `"adam"`, `[64, 32]`); bare
/// words that are not valid TOML are taken as strings.
pub fn parse_override(s: &str) -> Result<(String, Value), ConfigError> {
    let (key, raw) = s.split_once('=').ok_or_else(|| ConfigError::Invalid {
        key: s.to_string(),
        message: "override must look like key=value".into(),
    })?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key, value))
}

fn set_path(root: &mut Table, key: &str, value: Value) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut t = root;
    for p in parts {
        let entry = t
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        t = entry.as_table_mut().ok_or_else(|| ConfigError::Invalid {
            key: key.to_string(),
            message: format!("`{p}` is not a table"),
        })?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

fn lookup<'a>(root: &'a Table, key: &str) -> Option<&'a Value> {
    let mut parts = key.split('.');
    let mut v = root.get(parts.next()?)?;
    for p in parts {
        v = v.as_table()?.get(p)?;
    }
    Some(v)
}

/// Overlays `user` onto `base`, rejecting keys the base does not have.
fn merge(base: &mut Table, user: Table, prefix: &str) -> Result<(), ConfigError> {
    for (k, v) in user {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(u)) => merge(b, u, &path)?,
            (Some(Value::Table(_)), _) => {
                return Err(ConfigError::Invalid {
                    key: path,
                    message: "expected a table".into(),
                })
            }
            (Some(slot), v) => *slot = coerce(slot, v, &path)?,
            (None, v) if OPTIONAL_KEYS.contains(&path.as_str()) => {
                base.insert(k, v);
            }
            (None, _) => return Err(ConfigError::UnknownKey(path)),
        }
    }
    Ok(())
}

/// Accepts integers where floats are expected, so `mean_rate = 6000000`
/// works; any other type mismatch is reported with its key.
fn coerce(default: &Value, v: Value, path: &str) -> Result<Value, ConfigError> {
    match (default, v) {
        (Value::Float(_), Value::Integer(i)) => Ok(Value::Float(i as f64)),
        (d, v) if std::mem::discriminant(d) == std::mem::discriminant(&v) => Ok(v),
        (d, v) => Err(ConfigError::Invalid {
            key: path.to_string(),
            message: format!("expected {}, found {}", d.type_str(), v.type_str()),
        }),
    }
}
