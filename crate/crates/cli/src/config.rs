//! Layered configuration: config file, then environment, then flags.
//!
//! Flags and environment variables are both handled by clap, which already
//! prefers a flag over its variable. Everything clap resolved is serialized
//! with unset values dropped and laid over the file's values, and the result
//! is deserialized into the command's config struct, whose serde defaults
//! fill whatever is still missing.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Reads a TOML or JSON config file into a JSON object.
pub fn read_config_file(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let value: Value = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))?,
        _ => {
            let table: toml::Table = toml::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            serde_json::to_value(table)?
        }
    };
    match value {
        Value::Object(map) => Ok(map),
        _ => bail!("config file {} must hold a table", path.display()),
    }
}

/// Keys for `section`: top-level scalar entries, then the `[section]`
/// table over them.
fn file_layer(file: &Map<String, Value>, section: &str) -> Map<String, Value> {
    let mut out: Map<String, Value> = file
        .iter()
        .filter(|(_, v)| !v.is_object())
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    if let Some(Value::Object(table)) = file.get(section) {
        merge(&mut out, table.clone());
    }
    out
}

fn merge(base: &mut Map<String, Value>, over: Map<String, Value>) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Object(b)), Value::Object(o)) => merge(b, o),
            (_, Value::Null) => {}
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Resolves the config for one subcommand.
pub fn resolve<A: Serialize, C: DeserializeOwned>(
    file: Option<&Map<String, Value>>,
    section: &str,
    args: &A,
) -> Result<C> {
    let mut layered = file.map(|f| file_layer(f, section)).unwrap_or_default();
    match serde_json::to_value(args)? {
        Value::Object(over) => merge(&mut layered, over),
        _ => unreachable!("argument structs serialize to objects"),
    }
    serde_json::from_value(Value::Object(layered))
        .with_context(|| format!("resolving {section} configuration"))
}
