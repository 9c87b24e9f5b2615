//! Run manifests, output locking and replay.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::{load_config, ScenarioConfig};
use super::csvio::{first_difference, read_csv, write_csv, CellDifference, Provenance};
use super::presets::{run_preset, Preset};
use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
const LOCK_FILE: &str = ".paultrap.lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool_version: String,
    pub preset: String,
    /// Absolute path of the configuration file.
    pub config_path: PathBuf,
    pub config_digest: String,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub output_directory: PathBuf,
    /// File names inside `output_directory`.
    pub outputs: Vec<String>,
}

impl RunRecord {
    pub fn file_name(preset: &str) -> String {
        format!("{preset}.record.json")
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Exclusive claim on an output directory, released on drop.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub struct RunOptions {
    pub config_path: PathBuf,
    pub output_directory: PathBuf,
    pub seed: u64,
}

/// Runs a preset, writes its CSV files and the record next to them.
pub fn run_scenario(
    config: &ScenarioConfig,
    preset: Preset,
    options: &RunOptions,
) -> Result<RunRecord> {
    let dir = &options.output_directory;
    let _lock = OutputLock::acquire(dir)?;
    let started = now();
    let digest = config.digest();
    let tables = run_preset(config, preset, options.seed)?;
    let provenance = Provenance {
        tool_version: TOOL_VERSION.into(),
        preset: preset.name().into(),
        config_digest: digest.clone(),
        seed: options.seed,
    };
    for t in &tables {
        write_csv(dir, t, &provenance)?;
    }
    let record = RunRecord {
        tool_version: TOOL_VERSION.into(),
        preset: preset.name().into(),
        config_path: fs::canonicalize(&options.config_path).unwrap_or(options.config_path.clone()),
        config_digest: digest,
        seed: options.seed,
        started_unix_s: started,
        finished_unix_s: now(),
        output_directory: fs::canonicalize(dir).unwrap_or(dir.clone()),
        outputs: tables.iter().map(|t| t.name.clone()).collect(),
    };
    fs::write(
        dir.join(RunRecord::file_name(preset.name())),
        serde_json::to_string_pretty(&record)?,
    )?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FileVerdict {
    Pass,
    Fail(CellDifference),
    /// Listed in the record but not produced, or the reverse.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub files: Vec<(String, FileVerdict)>,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.files.iter().all(|f| f.1 == FileVerdict::Pass)
    }
}

/// Recomputes a recorded run and compares every output cell by cell. The
/// configuration digest is checked before any simulation starts.
pub fn replay(record: &RunRecord) -> Result<ReplayReport> {
    let config = load_config(&record.config_path)?;
    let current = config.digest();
    if current != record.config_digest {
        return Err(Error::DigestMismatch {
            recorded: record.config_digest.clone(),
            current,
        });
    }
    let preset: Preset = record.preset.parse()?;
    let tables = run_preset(&config, preset, record.seed)?;
    let mut files = Vec::new();
    for name in &record.outputs {
        let verdict = match (
            tables.iter().find(|t| &t.name == name),
            read_csv(&record.output_directory.join(name)),
        ) {
            (Some(fresh), Ok(stored)) => match first_difference(&stored, fresh) {
                None => FileVerdict::Pass,
                Some(d) => FileVerdict::Fail(d),
            },
            _ => FileVerdict::Missing,
        };
        files.push((name.clone(), verdict));
    }
    for t in &tables {
        if !record.outputs.contains(&t.name) {
            files.push((t.name.clone(), FileVerdict::Missing));
        }
    }
    Ok(ReplayReport { files })
}
