//! Settings resolution: built-in defaults, then an optional config file,
//! then command-line flags.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Reads a config file. JSON objects are taken as-is (a run manifest works
/// too: its `config` section is used); anything else is `key = value` lines
/// with `#` comments.
pub fn read_config_file(path: &Path) -> Result<Map<String, Value>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    if text.trim_start().starts_with('{') {
        let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let Value::Object(mut obj) = v else { unreachable!() };
        if obj.contains_key("command") {
            if let Some(Value::Object(cfg)) = obj.remove("config") {
                return Ok(normalize_keys(cfg));
            }
        }
        return Ok(normalize_keys(obj));
    }
    let mut out = Map::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected key = value", path.display(), n + 1);
        };
        let v = v.trim();
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        out.insert(normalize_key(k.trim()), value);
    }
    Ok(out)
}

fn normalize_key(k: &str) -> String {
    k.replace('-', "_")
}

fn normalize_keys(m: Map<String, Value>) -> Map<String, Value> {
    m.into_iter().map(|(k, v)| (normalize_key(&k), v)).collect()
}

fn overlay(base: &mut Map<String, Value>, layer: Map<String, Value>, source: &str) -> Result<()> {
    for (k, v) in layer {
        if !base.contains_key(&k) {
            bail!("unknown setting `{k}` in {source}");
        }
        base.insert(k, v);
    }
    Ok(())
}

/// Merges defaults < config file < flags. `flags` must serialize only the
/// flags that were given.
pub fn resolve<T, F>(config: Option<&Path>, flags: &F) -> Result<T>
where
    T: Default + Serialize + DeserializeOwned,
    F: Serialize,
{
    let Value::Object(mut base) = serde_json::to_value(T::default())? else {
        bail!("settings must be a struct");
    };
    if let Some(path) = config {
        overlay(&mut base, read_config_file(path)?, &path.display().to_string())?;
    }
    let Value::Object(given) = serde_json::to_value(flags)? else {
        bail!("flags must be a struct");
    };
    overlay(&mut base, given, "flags")?;
    serde_json::from_value(Value::Object(base)).context("invalid settings")
}
