//! Resolution of command settings: flag, then environment, then config
//! file, then built-in default.
//!
//! A config file is a JSON object. Top-level keys apply to every command and
//! an object under a command's name (`"eval": {...}`) applies to that command
//! only. Keys use the long flag names. A run manifest is also accepted as a
//! config file; its resolved settings are replayed for the same command.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub const COMMANDS: [&str; 5] = ["gen-corpus", "train-internal", "train-outer", "eval", "report"];

#[derive(Debug, Default)]
pub struct Settings {
    common: Map<String, Value>,
    section: Map<String, Value>,
    resolved: Map<String, Value>,
}

impl Settings {
    pub fn load(path: Option<&Path>, command: &str) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::failure(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::failure(format!("config {}: {e}", path.display())))?;
        Self::from_value(value, command)
            .map_err(|e| CliError::failure(format!("config {}: {e}", path.display())))
    }

    pub fn from_value(value: Value, command: &str) -> Result<Self, String> {
        let Value::Object(mut top) = value else {
            return Err("expected a JSON object".into());
        };
        if top.contains_key("manifest_version") {
            let recorded = top.get("command").and_then(Value::as_str).unwrap_or_default();
            if recorded != command {
                return Err(format!("manifest was written by `{recorded}`, not `{command}`"));
            }
            return match top.remove("config") {
                Some(Value::Object(section)) => Ok(Settings {
                    section,
                    ..Settings::default()
                }),
                _ => Err("manifest has no config object".into()),
            };
        }
        let section = match top.remove(command) {
            Some(Value::Object(m)) => m,
            Some(_) => return Err(format!("section `{command}` must be an object")),
            None => Map::new(),
        };
        for name in COMMANDS {
            top.remove(name);
        }
        Ok(Settings {
            common: top,
            section,
            resolved: Map::new(),
        })
    }

    fn from_file<T: DeserializeOwned>(&self, key: &str) -> CliResult<Option<T>> {
        match self.section.get(key).or_else(|| self.common.get(key)) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::usage(format!("config key `{key}`: {e}"))),
        }
    }

    /// The value for `key`, or `None` when neither flag nor file sets it.
    pub fn opt<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>) -> CliResult<Option<T>> {
        let value = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), serde_json::to_value(v)?);
        }
        Ok(value)
    }

    pub fn get<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>, default: T) -> CliResult<T> {
        let value = self.opt(key, flag)?.unwrap_or(default);
        self.resolved.insert(key.to_string(), serde_json::to_value(&value)?);
        Ok(value)
    }

    pub fn require<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>) -> CliResult<T> {
        self.opt(key, flag)?
            .ok_or_else(|| CliError::usage(format!("--{key} is required (flag or config file)")))
    }

    /// Settings as resolved so far, for the run manifest.
    pub fn resolved(&self) -> &Map<String, Value> {
        &self.resolved
    }
}

/// Output paths are taken relative to the output directory.
pub fn output_path(out_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        out_dir.join(path)
    }
}

/// Expands `10,20,...,100` style lists; `...` continues the step of the two
/// preceding values up to the next one.
pub fn parse_sizes(spec: &str) -> CliResult<Vec<usize>> {
    let bad = |m: String| CliError::usage(format!("--sizes `{spec}`: {m}"));
    let tokens: Vec<&str> = spec.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    let mut out: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i] == "..." {
            if out.len() < 2 || i + 1 >= tokens.len() {
                return Err(bad("`...` needs two values before it and one after".into()));
            }
            let (a, b) = (out[out.len() - 2], out[out.len() - 1]);
            let end: usize = tokens[i + 1].parse().map_err(|_| bad(format!("`{}` is not a size", tokens[i + 1])))?;
            if b <= a || end < b || (end - b) % (b - a) != 0 {
                return Err(bad(format!("{a},{b},...,{end} is not an increasing progression")));
            }
            let mut v = b + (b - a);
            while v <= end {
                out.push(v);
                v += b - a;
            }
            i += 2;
            continue;
        }
        let v: usize = tokens[i].parse().map_err(|_| bad(format!("`{}` is not a size", tokens[i])))?;
        if v == 0 {
            return Err(bad("sizes must be positive".into()));
        }
        out.push(v);
        i += 1;
    }
    if out.is_empty() {
        return Err(bad("no sizes given".into()));
    }
    Ok(out)
}
