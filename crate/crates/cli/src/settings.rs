//! Config resolution: defaults (or the literal preset), then the config
//! file, then `--set key=value` pairs, then dedicated flags.

use std::path::Path;

use dynreg::config::Config;
use dynreg::{Error, Result};
use toml::{Table, Value};

pub const CONFIG_ENV: &str = "DYNREG_CONFIG";

fn parse_value(key: &str, raw: &str) -> Result<Value> {
    let raw = raw.trim();
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => Ok(t.remove("v").expect("key present")),
        Err(_) if !raw.is_empty() => Ok(Value::String(raw.to_string())),
        Err(_) => Err(Error::Parse {
            location: format!("--set {key}"),
            message: "empty value".into(),
        }),
    }
}

/// `key=value` pairs; values are TOML literals, bare words become strings.
pub fn parse_sets(sets: &[String]) -> Result<Vec<(String, Value)>> {
    sets.iter()
        .map(|s| {
            let (k, v) = s.split_once('=').ok_or_else(|| Error::Parse {
                location: format!("--set {s}"),
                message: "expected key=value".into(),
            })?;
            let key = k.trim().to_string();
            let value = parse_value(&key, v)?;
            Ok((key, value))
        })
        .collect()
}

pub fn resolve(file: Option<&Path>, literal: bool, overrides: &[(String, Value)]) -> Result<Config> {
    let mut base = if literal { Config::literal() } else { Config::default() };
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("config file {}: {e}", path.display())))?;
        base = base.overlay(&text)?;
    }
    let mut table: Table = base.to_toml().parse().expect("config serializes to a table");
    for (k, v) in overrides {
        table.insert(k.clone(), v.clone());
    }
    Config::from_toml(&table.to_string()).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            location: "command-line overrides".into(),
            message,
        },
        other => other,
    })
}
