use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

/// Values from `--config`, consulted only for flags left unset.
pub struct Layered {
    file: Map<String, Value>,
    origin: Option<PathBuf>,
}

impl Layered {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Layered { file: Map::new(), origin: None });
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let Value::Object(file) = value else {
            bail!("config {} must hold a JSON object", path.display());
        };
        Ok(Layered { file, origin: Some(path.to_path_buf()) })
    }

    pub fn raw(&self) -> &Map<String, Value> {
        &self.file
    }

    /// The flag when given, else the config entry `key`, else `None`.
    pub fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone()).map(Some).with_context(|| {
                let from = self.origin.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
                format!("config key {key:?} in {from}")
            }),
        }
    }

    pub fn require<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<T> {
        match self.pick(flag, key)? {
            Some(v) => Ok(v),
            None => bail!("missing required setting --{} (flag or config key {key:?})", key.replace('_', "-")),
        }
    }

    /// An input file that must exist.
    pub fn input(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf> {
        let path: PathBuf = self.require(flag, key)?;
        if !path.is_file() {
            bail!("{key}: no such file {}", path.display());
        }
        Ok(path)
    }

    pub fn optional_input(&self, flag: Option<PathBuf>, key: &str) -> Result<Option<PathBuf>> {
        let path: Option<PathBuf> = self.pick(flag, key)?;
        if let Some(p) = &path {
            if !p.is_file() {
                bail!("{key}: no such file {}", p.display());
            }
        }
        Ok(path)
    }
}

/// `key=value` pairs into a JSON object; values parse as JSON when they can.
pub fn parse_params(items: &[String], base: Option<&Value>) -> Result<Map<String, Value>> {
    let mut out = match base {
        Some(Value::Object(m)) => m.clone(),
        Some(Value::Null) | None => Map::new(),
        Some(_) => bail!("benchmark params must be a JSON object"),
    };
    for item in items {
        let Some((k, v)) = item.split_once('=') else {
            bail!("--param expects key=value, got {item:?}");
        };
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        out.insert(k.trim().to_string(), value);
    }
    Ok(out)
}
