//! Sectioned key = value run configuration.
//!
//! Format: `#` comments, a global preamble (only `seed`), then `[section]`
//! headers with `key = value` lines. Keys may repeat where a list of
//! entries is expected (wells). Unknown sections and unknown keys in any
//! section a command reads are rejected.

use crate::err::{CliError, CliResult};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const KNOWN_SECTIONS: [&str; 3] = ["train", "flow", "invert"];

#[derive(Debug, Clone, Default)]
pub struct SectionData {
    pub entries: Vec<(String, String)>,
}

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub global: SectionData,
    pub sections: Vec<(String, SectionData)>,
    /// Master seed from the preamble, used when a section gives none.
    pub master_seed: Option<u64>,
}

pub fn load(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text).map_err(|m| CliError::Config(format!("{}: {m}", path.display())))
}

pub fn parse(text: &str) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::default();
    let mut current: Option<usize> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| format!("line {}: unterminated section header", lineno + 1))?
                .trim()
                .to_string();
            if !KNOWN_SECTIONS.contains(&name.as_str()) {
                return Err(format!("line {}: unknown section [{name}]", lineno + 1));
            }
            if cfg.sections.iter().any(|(n, _)| *n == name) {
                return Err(format!("line {}: duplicate section [{name}]", lineno + 1));
            }
            cfg.sections.push((name, SectionData::default()));
            current = Some(cfg.sections.len() - 1);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
        let entry = (key.trim().to_string(), value.trim().to_string());
        match current {
            Some(i) => cfg.sections[i].1.entries.push(entry),
            None => cfg.global.entries.push(entry),
        }
    }
    // the preamble accepts only the master seed
    for (k, v) in &cfg.global.entries {
        if k == "seed" {
            if cfg.master_seed.is_some() {
                return Err("duplicate global seed".into());
            }
            cfg.master_seed =
                Some(v.parse().map_err(|_| format!("bad global seed {v:?}"))?);
        } else {
            return Err(format!("unknown key {k:?} outside any section"));
        }
    }
    Ok(cfg)
}

impl RunConfig {
    /// Borrow one section for consumption; a missing section is a config
    /// error naming the expectation.
    pub fn section(&self, name: &str) -> CliResult<Section> {
        let data = self
            .sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d.clone())
            .ok_or_else(|| CliError::Config(format!("missing [{name}] section")))?;
        Ok(Section::new(name, data))
    }

}

/// Tracked view over one section: every key must be consumed or `finish`
/// reports it as unknown.
pub struct Section {
    name: String,
    entries: Vec<(String, String)>,
    used: Vec<bool>,
}

impl Section {
    fn new(name: &str, data: SectionData) -> Self {
        let used = vec![false; data.entries.len()];
        Section {
            name: name.to_string(),
            entries: data.entries,
            used,
        }
    }

    fn take_raw(&mut self, key: &str) -> CliResult<Option<String>> {
        let mut found = None;
        for (i, (k, v)) in self.entries.iter().enumerate() {
            if k == key {
                if found.is_some() {
                    return Err(CliError::Config(format!(
                        "[{}] key {key:?} given more than once",
                        self.name
                    )));
                }
                self.used[i] = true;
                found = Some(v.clone());
            }
        }
        Ok(found)
    }

    /// Every value bound to a repeatable key, in file order.
    pub fn take_all(&mut self, key: &str) -> Vec<String> {
        let mut out = Vec::new();
        for (i, (k, v)) in self.entries.iter().enumerate() {
            if k == key {
                self.used[i] = true;
                out.push(v.clone());
            }
        }
        out
    }

    pub fn opt<T: FromStr>(&mut self, key: &str) -> CliResult<Option<T>> {
        match self.take_raw(key)? {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                CliError::Config(format!("[{}] bad value for {key}: {v:?}", self.name))
            }),
        }
    }

    pub fn req<T: FromStr>(&mut self, key: &str) -> CliResult<T> {
        self.opt(key)?.ok_or_else(|| {
            CliError::Config(format!("[{}] missing required key {key}", self.name))
        })
    }

    pub fn or<T: FromStr>(&mut self, key: &str, default: T) -> CliResult<T> {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    pub fn path_opt(&mut self, key: &str) -> CliResult<Option<PathBuf>> {
        Ok(self.take_raw(key)?.map(PathBuf::from))
    }

    pub fn path_req(&mut self, key: &str) -> CliResult<PathBuf> {
        self.path_opt(key)?.ok_or_else(|| {
            CliError::Config(format!("[{}] missing required key {key}", self.name))
        })
    }

    /// Whitespace-separated list value.
    pub fn list<T: FromStr>(&mut self, key: &str) -> CliResult<Option<Vec<T>>> {
        match self.take_raw(key)? {
            None => Ok(None),
            Some(v) => v
                .split_whitespace()
                .map(|tok| tok.parse::<T>())
                .collect::<Result<Vec<T>, _>>()
                .map(Some)
                .map_err(|_| {
                    CliError::Config(format!("[{}] bad list value for {key}: {v:?}", self.name))
                }),
        }
    }

    /// Seed from this section or the global preamble.
    pub fn seed(&mut self, cfg_master: Option<u64>) -> CliResult<u64> {
        match self.opt::<u64>("seed")? {
            Some(s) => Ok(s),
            None => cfg_master.ok_or_else(|| {
                CliError::Config(format!(
                    "[{}] needs a seed (or set a global seed above the sections)",
                    self.name
                ))
            }),
        }
    }

    pub fn finish(self) -> CliResult<()> {
        let unknown: BTreeSet<&str> = self
            .entries
            .iter()
            .zip(&self.used)
            .filter(|(_, &u)| !u)
            .map(|((k, _), _)| k.as_str())
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "[{}] unknown keys: {}",
                self.name,
                unknown.into_iter().collect::<Vec<_>>().join(", ")
            )))
        }
    }
}
