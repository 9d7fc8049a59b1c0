//! Plain-text `key = value` configuration, flag overrides, and run
//! manifests.
//!
//! Every verb resolves its settings in the order: built-in default, then
//! config-file value, then command-line flag. The fully resolved map is
//! written next to the outputs as a manifest; rerunning a verb from its
//! manifest pins every key (flags are ignored), which is what makes reruns
//! byte-identical.

use crate::{CliError, CliResult};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

/// Parses a `key = value` file: one pair per line, `#` comments, blank
/// lines ignored.
pub fn parse_kv_str(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!(
                "line {}: expected `key = value`, got {raw:?}",
                lineno + 1
            ))
        })?;
        let key = key.trim().to_owned();
        if key.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", lineno + 1)));
        }
        if map.insert(key.clone(), value.trim().to_owned()).is_some() {
            return Err(CliError::Config(format!("duplicate key {key:?}")));
        }
    }
    Ok(map)
}

pub fn parse_kv_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    parse_kv_str(&std::fs::read_to_string(path)?)
}

/// Resolves typed settings against a config map, recording every final
/// value. `locked` (manifest mode) makes the map authoritative and ignores
/// flag overrides.
pub struct Resolver {
    map: BTreeMap<String, String>,
    locked: bool,
    used: BTreeSet<String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(map: BTreeMap<String, String>) -> Self {
        Self {
            map,
            locked: false,
            used: BTreeSet::new(),
            resolved: BTreeMap::new(),
        }
    }

    pub fn from_manifest(m: &Manifest) -> Self {
        let mut r = Self::new(m.resolved.clone());
        r.locked = true;
        r
    }

    /// Final value for `key`: flag if given (unless locked), else the map
    /// entry, else `default`.
    pub fn get<T>(&mut self, key: &str, default: T, flag: Option<T>) -> CliResult<T>
    where
        T: FromStr + Display,
    {
        self.used.insert(key.to_owned());
        let value = match (flag, self.locked) {
            (Some(v), false) => v,
            _ => match self.map.get(key) {
                Some(s) => s.parse().map_err(|_| {
                    CliError::Config(format!("cannot parse {key} = {s:?}"))
                })?,
                None => default,
            },
        };
        self.resolved.insert(key.to_owned(), value.to_string());
        Ok(value)
    }

    /// Returns the resolved map; errors on config keys no verb consumed
    /// (almost always a typo).
    pub fn finish(self) -> CliResult<BTreeMap<String, String>> {
        let unknown: Vec<&String> =
            self.map.keys().filter(|k| !self.used.contains(*k)).collect();
        if !unknown.is_empty() {
            return Err(CliError::Config(format!(
                "unknown config keys: {unknown:?}"
            )));
        }
        Ok(self.resolved)
    }
}

pub const MANIFEST_FORMAT: &str = "SPEEDRS-MANIFEST";
pub const MANIFEST_VERSION: u32 = 1;

/// Everything needed to replay a verb exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub verb: String,
    pub resolved: BTreeMap<String, String>,
}

pub fn write_manifest(
    path: &Path,
    verb: &str,
    resolved: &BTreeMap<String, String>,
) -> CliResult<()> {
    let m = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        verb: verb.into(),
        resolved: resolved.clone(),
    };
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> CliResult<Manifest> {
    let m: Manifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if m.format != MANIFEST_FORMAT {
        return Err(CliError::Config(format!(
            "{} is not a run manifest",
            path.display()
        )));
    }
    if m.version != MANIFEST_VERSION {
        return Err(CliError::Config(format!(
            "unsupported manifest version {}",
            m.version
        )));
    }
    Ok(m)
}

/// Manifest file name for a primary output: `<out>.manifest.json`.
pub fn manifest_path(out: &Path) -> std::path::PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}
