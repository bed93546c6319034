//! `key = value` config files and flag/file/default resolution.
//!
//! Command-line flags override file entries, which override built-in
//! defaults. The effective configuration is echoed to standard error
//! before a command runs.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::Failure;

/// Every key any subcommand understands; unknown keys are usage errors so
/// typos do not silently vanish.
const KNOWN_KEYS: &[&str] = &[
    "boundary",
    "c-grid",
    "candidates",
    "corpus",
    "dataset",
    "dim",
    "epochs",
    "force",
    "k",
    "lr",
    "mode",
    "model",
    "neg-exponent",
    "negatives",
    "nmax",
    "ntarget",
    "output",
    "query",
    "repeats",
    "save",
    "save-text",
    "seed",
    "strip-spaces",
    "text",
    "train-frac",
    "vocab-size",
    "workers",
];

/// Parsed config file contents.
#[derive(Debug, Default)]
pub struct KvFile {
    values: HashMap<String, String>,
}

impl KvFile {
    pub fn load(path: Option<&Path>) -> Result<KvFile, Failure> {
        let Some(path) = path else {
            return Ok(KvFile::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Failure::Usage(format!(
                    "{}:{}: expected `key = value`",
                    path.display(),
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Failure::Usage(format!(
                    "{}:{}: unknown config key `{key}`",
                    path.display(),
                    lineno + 1
                )));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(KvFile { values })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }
}

/// Resolves one option and records the effective value for the echo.
pub struct Resolver<'a> {
    file: &'a KvFile,
    echo: Vec<(String, String)>,
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a KvFile) -> Resolver<'a> {
        Resolver {
            file,
            echo: Vec::new(),
        }
    }

    fn record<V: Display>(&mut self, key: &str, value: V) {
        self.echo.push((key.to_string(), value.to_string()));
    }

    fn parse_file<T: FromStr>(&self, key: &str) -> Result<Option<T>, Failure>
    where
        T::Err: Display,
    {
        match self.file.raw(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                Failure::Usage(format!("config key `{key}`: bad value `{raw}`: {e}"))
            }),
        }
    }

    /// Flag > file > default.
    pub fn get<T: FromStr + Display>(
        &mut self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, Failure>
    where
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => v,
            None => self.parse_file(key)?.unwrap_or(default),
        };
        self.record(key, &value);
        Ok(value)
    }

    /// Flag > file; error when neither is present.
    pub fn require<T: FromStr + Display>(
        &mut self,
        flag: Option<T>,
        key: &str,
    ) -> Result<T, Failure>
    where
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => self.parse_file(key)?,
        };
        let value =
            value.ok_or_else(|| Failure::Usage(format!("missing required option --{key}")))?;
        self.record(key, &value);
        Ok(value)
    }

    pub fn require_path(&mut self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf, Failure> {
        let value = match flag {
            Some(v) => Some(v),
            None => self.file.raw(key).map(PathBuf::from),
        };
        let value =
            value.ok_or_else(|| Failure::Usage(format!("missing required option --{key}")))?;
        self.record(key, value.display());
        Ok(value)
    }

    pub fn optional_path(&mut self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        let value = match flag {
            Some(v) => Some(v),
            None => self.file.raw(key).map(PathBuf::from),
        };
        if let Some(v) = &value {
            self.record(key, v.display());
        }
        value
    }

    /// A presence flag: true on the command line wins, otherwise the file
    /// value, otherwise false.
    pub fn get_switch(&mut self, flag: bool, key: &str) -> Result<bool, Failure> {
        let value = if flag {
            true
        } else {
            self.parse_file::<bool>(key)?.unwrap_or(false)
        };
        self.record(key, value);
        Ok(value)
    }

    /// Prints the `key = value` lines this resolver accumulated.
    pub fn echo(&self, command: &str) {
        for (key, value) in &self.echo {
            eprintln!("[{command}] {key} = {value}");
        }
    }
}
