//! Flag / config-file resolution and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::CliError;

/// Effective settings of one run. Flags win over the config file, which
/// wins over built-in defaults; every resolved value is recorded.
pub struct Settings {
    file: BTreeMap<String, String>,
    effective: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(config: Option<&Path>) -> Result<Self, CliError> {
        let mut file = BTreeMap::new();
        if let Some(path) = config {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::new("ConfigMissing", format!("{}: {e}", path.display())))?;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    CliError::usage(format!("{} line {}: expected key=value", path.display(), i + 1))
                })?;
                file.insert(k.trim().replace('-', "_"), v.trim().to_string());
            }
        }
        Ok(Settings {
            file,
            effective: BTreeMap::new(),
        })
    }

    fn from_file<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::usage(format!("config key {key}: cannot parse {v:?}"))),
        }
    }

    /// Flag, then config file, then `default`.
    pub fn value<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError> {
        let v = match flag {
            Some(v) => v,
            None => self.from_file(key)?.unwrap_or(default),
        };
        self.effective.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// Like [`Settings::value`] but without a default.
    pub fn required<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError> {
        let v = match flag {
            Some(v) => v,
            None => self
                .from_file(key)?
                .ok_or_else(|| CliError::usage(format!("missing --{} (or `{key}=` in the config file)", key.replace('_', "-"))))?,
        };
        self.effective.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn optional<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        if let Some(v) = &v {
            self.effective.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        let s: String = self.required(key, flag.map(|p| p.display().to_string()))?;
        Ok(PathBuf::from(s))
    }

    pub fn optional_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>, CliError> {
        Ok(self
            .optional::<String>(key, flag.map(|p| p.display().to_string()))?
            .map(PathBuf::from))
    }

    pub fn forget(&mut self, key: &str) {
        self.effective.remove(key);
    }

    /// Records a derived value without resolving it.
    pub fn note(&mut self, key: &str, value: impl Display) {
        self.effective.insert(key.to_string(), value.to_string());
    }

    /// `tool`, `version` and `command` followed by the sorted effective values.
    pub fn manifest(&self, command: &str) -> String {
        let mut out = format!(
            "tool={}\nversion={}\ncommand={command}\n",
            env!("CARGO_BIN_NAME"),
            env!("CARGO_PKG_VERSION")
        );
        for (k, v) in &self.effective {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}
