//! Config file loading plus dotted-path overrides.

use std::path::Path;

use pme_core::RunConfig;
use serde::Deserialize;

use crate::CliError;

/// Applies one `a.b.c=value` override onto a parsed TOML tree. The value is
/// parsed as TOML (so numbers, booleans and arrays work); anything that does
/// not parse is taken as a string.
pub fn apply_override(root: &mut toml::Value, spec: &str) -> Result<(), CliError> {
    let (path, raw_value) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {spec:?} is not KEY=VALUE")))?;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(CliError::Usage(format!("override key {path:?} has an empty segment")));
    }

    let value = parse_toml_value(raw_value);
    let mut cursor = root;
    for segment in &segments[..segments.len() - 1] {
        let table = cursor
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("override path {path:?} crosses a non-table")))?;
        cursor = table
            .entry(segment.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = cursor
        .as_table_mut()
        .ok_or_else(|| CliError::Usage(format!("override path {path:?} crosses a non-table")))?;
    table.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}

fn parse_toml_value(raw: &str) -> toml::Value {
    // A bare word that is not a valid TOML value expression is a string.
    raw.parse::<toml::Value>()
        .unwrap_or_else(|_| toml::Value::String(raw.to_string()))
}

/// Loads the config file and applies overrides in order.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Usage(format!("config {} is not valid TOML: {e}", path.display())))?;
    let mut value = toml::Value::Table(table);
    for spec in overrides {
        apply_override(&mut value, spec)?;
    }
    RunConfig::deserialize(value)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}
