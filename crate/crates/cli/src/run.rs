// Copyright 2026 Blockade Contributors
// SPDX-License-Identifier: Apache-2.0

//! Run directories and manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const TOOL: &str = "blockade";
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Command-line switches that change results. Recorded in the manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(default)]
    pub si: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub created: String,
    pub flags: Flags,
    /// The config as run: defaults filled in, seed resolved.
    pub config: RunConfig,
}

impl Manifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
        if m.tool != TOOL {
            return Err(CliError::Config(format!("manifest was written by {:?}", m.tool)));
        }
        Ok(m)
    }
}

/// An output directory that already holds its manifest.
pub struct RunDir {
    pub path: PathBuf,
    pub format: Format,
}

impl RunDir {
    /// Creates `<out>/<timestamp>_seed<seed>` and writes the manifest into it.
    pub fn create(out: &Path, manifest: &Manifest) -> CliResult<Self> {
        fs::create_dir_all(out).map_err(|e| CliError::io(format!("creating {}", out.display()), e))?;
        let stamp = chrono::DateTime::parse_from_rfc3339(&manifest.created)
            .map(|t| t.format("%Y%m%dT%H%M%S%.3fZ").to_string())
            .unwrap_or_else(|_| "run".into());
        let base = format!("{stamp}_seed{}", manifest.seed);
        let mut path = out.join(&base);
        let mut n = 1;
        loop {
            match fs::create_dir(&path) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    path = out.join(format!("{base}-{n}"));
                    n += 1;
                }
                Err(e) => return Err(CliError::io(format!("creating {}", path.display()), e)),
            }
        }
        let dir = Self {
            path,
            format: manifest.flags.format,
        };
        dir.write_json("manifest.json", manifest)?;
        Ok(dir)
    }

    pub fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        let p = self.path.join(name);
        fs::write(&p, contents).map_err(|e| CliError::io(format!("writing {}", p.display()), e))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, &s)
    }

    /// Writes `stem.csv` or `stem.json` according to `--format`.
    pub fn write_table<T: Serialize>(&self, stem: &str, csv: impl FnOnce() -> String, value: &T) -> CliResult<()> {
        match self.format {
            Format::Csv => self.write(&format!("{stem}.csv"), &csv()),
            Format::Json => self.write_json(&format!("{stem}.json"), value),
        }
    }
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
