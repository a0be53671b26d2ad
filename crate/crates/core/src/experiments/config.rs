//! Scenario overrides from an INI file.
//!
//! ```ini
//! ; comments start with ';' or '#'
//! [brownian_avg]
//! trials = 20000
//! seed = 7
//! r_grid = 0.5, 1.0
//! T = 2
//! ```
//!
//! Each section names a registered scenario and each key is either one of
//! `trials`, `seed`, `dt`, `level`, `r_grid` or a parameter of that scenario.
//! Values are decimal literals (an exponent such as `1e-3` is allowed);
//! `r_grid` is a comma-separated list of them. Keys outside a section,
//! unknown sections and unknown keys are errors.

use std::collections::BTreeMap;
use std::path::Path;

use ini::Ini;

use super::{lookup, ScenarioSpec};
use crate::error::{Error, Result};

/// Parsed overrides, keyed by scenario name, in file order within a section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub sections: BTreeMap<String, Vec<(String, String)>>,
}

pub fn parse_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ConfigFile> {
    let ini = Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = ConfigFile::default();
    for (section, props) in ini.iter() {
        let entries: Vec<(String, String)> = props.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        match section {
            None if entries.is_empty() => {}
            None => {
                return Err(Error::Config(format!(
                    "key `{}` appears before any [scenario] section",
                    entries[0].0
                )))
            }
            Some(name) => {
                lookup(name)?;
                out.sections.entry(name.to_string()).or_default().extend(entries);
            }
        }
    }
    Ok(out)
}

fn decimal(key: &str, raw: &str) -> Result<f64> {
    let s = raw.trim();
    let ok = !s.is_empty()
        && s.bytes().any(|b| b.is_ascii_digit())
        && s.bytes().all(|b| b.is_ascii_digit() || b"+-.eE".contains(&b));
    match s.parse::<f64>() {
        Ok(v) if ok && v.is_finite() => Ok(v),
        _ => Err(Error::Config(format!("`{key}`: `{raw}` is not a decimal literal"))),
    }
}

/// Applies the section named after `spec.name`, if any.
pub fn apply_config(config: &ConfigFile, spec: &mut ScenarioSpec) -> Result<()> {
    let Some(entries) = config.sections.get(&spec.name) else {
        return Ok(());
    };
    for (key, raw) in entries {
        match key.as_str() {
            "seed" => {
                spec.seed = raw
                    .trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Config(format!("`seed`: `{raw}` is not an unsigned 64-bit integer")))?;
            }
            "r_grid" => {
                spec.r_grid = if raw.trim().is_empty() {
                    Vec::new()
                } else {
                    raw.split(',').map(|v| decimal(key, v)).collect::<Result<_>>()?
                };
            }
            _ => spec.set(key, decimal(key, raw)?)?,
        }
    }
    Ok(())
}
