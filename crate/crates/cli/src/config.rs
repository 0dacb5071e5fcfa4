//! `key = value` configuration files. Keys are the long flag names without
//! the leading dashes; underscores and dashes are interchangeable.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Default)]
pub struct FileConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Usage(format!("config line {}: expected key = value", i + 1)));
            };
            let key = normalize(k.trim());
            if entries.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(CliError::Usage(format!("config line {}: duplicate key {key:?}", i + 1)));
            }
        }
        Ok(Self { entries })
    }

    /// Flag value if given, otherwise the parsed file value. The key is
    /// consumed either way so leftovers can be reported.
    pub fn resolve<T: FromStr>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let entry = self.entries.remove(key);
        if flag.is_some() {
            return Ok(flag);
        }
        entry
            .map(|(line, v)| {
                v.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("config line {line}: bad value for {key}: {e}")))
            })
            .transpose()
    }

    /// Fails on keys that the current command did not ask for.
    pub fn finish(self) -> Result<(), CliError> {
        match self.entries.into_iter().next() {
            Some((k, (line, _))) => Err(CliError::Usage(format!("config line {line}: unknown key {k:?}"))),
            None => Ok(()),
        }
    }
}

fn normalize(key: &str) -> String {
    key.replace('_', "-").to_ascii_lowercase()
}
