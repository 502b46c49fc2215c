use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{CliError, Result};
use crate::manifest::ExperimentManifest;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
struct Envelope<'a, T> {
    manifest_hash: &'a str,
    tool_version: &'static str,
    kind: &'a str,
    data: &'a T,
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    manifest_hash: &'a str,
    tool_version: &'static str,
    metadata: Timing,
}

#[derive(Serialize)]
struct Timing {
    started_unix_ms: u128,
    finished_unix_ms: u128,
    jobs: usize,
}

fn unix_ms(t: SystemTime) -> u128 {
    t.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

/// One output directory of a pipeline stage. Every file written through it
/// carries the manifest hash; wall-clock data goes to `run.json` only.
pub struct Stage {
    dir: PathBuf,
    hash: String,
    started: SystemTime,
}

impl Stage {
    /// Creates `dir`, refusing to touch a non-empty directory unless
    /// `force` is set, in which case its contents are replaced.
    pub fn create(dir: PathBuf, manifest: &ExperimentManifest, force: bool) -> Result<Self> {
        if dir.exists() {
            let occupied = fs::read_dir(&dir)
                .map_err(|e| CliError::io(&dir, e))?
                .next()
                .is_some();
            if occupied {
                if !force {
                    return Err(CliError::Usage(format!(
                        "{} already exists and is not empty; pass --force to overwrite",
                        dir.display()
                    )));
                }
                fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            }
        }
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let stage = Self {
            dir,
            hash: manifest.hash(),
            started: SystemTime::now(),
        };
        stage.write_json("manifest.json", "manifest", manifest)?;
        Ok(stage)
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    pub fn write_bytes(&self, file: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(file);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
    }

    pub fn write_json<T: Serialize>(&self, file: &str, kind: &str, data: &T) -> Result<()> {
        let envelope = Envelope {
            manifest_hash: &self.hash,
            tool_version: TOOL_VERSION,
            kind,
            data,
        };
        let mut text = serde_json::to_string_pretty(&envelope).expect("report serializes");
        text.push('\n');
        self.write_bytes(file, text.as_bytes())
    }

    /// CSV preceded by a `# manifest_hash=...` comment line.
    pub fn write_csv<F>(&self, file: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> interlab_core::Result<()>,
    {
        let mut buf = format!("# manifest_hash={}\n", self.hash).into_bytes();
        body(&mut buf)?;
        self.write_bytes(file, &buf)
    }

    pub fn finish(self, jobs: usize) -> Result<()> {
        let meta = RunMetadata {
            manifest_hash: &self.hash,
            tool_version: TOOL_VERSION,
            metadata: Timing {
                started_unix_ms: unix_ms(self.started),
                finished_unix_ms: unix_ms(SystemTime::now()),
                jobs,
            },
        };
        let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        self.write_bytes("run.json", text.as_bytes())
    }
}

/// Reads the `data` member of a JSON file written by [`Stage::write_json`].
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_value(value["data"].take())
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
