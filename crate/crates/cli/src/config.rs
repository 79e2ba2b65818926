//! Layered configuration: built-in preset, then a JSON file, then flags.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use sdforest::{Error, Result};

pub fn read_config_file(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read config file {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("config file {} is not valid JSON: {e}", path.display())))?;
    if !value.is_object() {
        return Err(Error::Config("config file must contain a JSON object".into()));
    }
    Ok(value)
}

fn merge(base: &mut Value, over: &Value, path: &str) -> Result<()> {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (key, v) in o {
                if !b.contains_key(key) {
                    let mut known: Vec<&str> = b.keys().map(String::as_str).collect();
                    known.sort_unstable();
                    return Err(Error::Config(format!(
                        "unknown config key '{path}{key}'; expected one of: {}",
                        known.join(", ")
                    )));
                }
                merge(&mut b[key], v, &format!("{path}{key}."))?;
            }
            Ok(())
        }
        (b, o) => {
            *b = o.clone();
            Ok(())
        }
    }
}

/// Overlays the keys of `file` on `preset`. Unknown keys are rejected.
pub fn layered<T: Serialize + DeserializeOwned>(preset: T, file: Option<&Value>) -> Result<T> {
    let Some(overrides) = file else { return Ok(preset) };
    let mut base = serde_json::to_value(&preset)?;
    merge(&mut base, overrides, "")?;
    serde_json::from_value(base).map_err(|e| Error::Config(format!("config file: {e}")))
}
