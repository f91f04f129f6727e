//! Run manifests: every command ends by writing `manifest.json` into its
//! output directory — the effective configuration, the seeds used, crate
//! versions, a hash-addressed list of every artifact written, wall-clock
//! time, and a pass/fail summary. Artifacts are written atomically
//! (temp file + rename), so a crash never leaves a half-written file.

use crate::error::Result;
use dae_core::io::{sha256_hex, write_atomic_str};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    /// "pass" when the command completed and its checks (if any) held;
    /// "fail" otherwise.
    pub status: String,
    /// One human-readable line per replication, row, or check.
    pub lines: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a serde_json::Value,
    seeds: &'a [u64],
    versions: BTreeMap<&'a str, &'a str>,
    artifacts: &'a [ArtifactEntry],
    /// Elapsed run time. Informational: it differs between reruns, unlike
    /// every hashed artifact.
    wall_clock_seconds: f64,
    summary: Summary,
}

/// Collects artifacts for one command invocation and writes the closing
/// manifest. Create it first, write artifacts through it, then call
/// [`RunContext::finish`] exactly once.
pub struct RunContext {
    command: &'static str,
    out_dir: PathBuf,
    config_echo: serde_json::Value,
    seeds: Vec<u64>,
    artifacts: Vec<ArtifactEntry>,
    started: Instant,
}

impl RunContext {
    pub fn create(
        command: &'static str,
        out_dir: PathBuf,
        config: &impl Serialize,
        seeds: Vec<u64>,
    ) -> Result<Self> {
        std::fs::create_dir_all(&out_dir)?;
        Ok(RunContext {
            command,
            out_dir,
            config_echo: serde_json::to_value(config)?,
            seeds,
            artifacts: Vec::new(),
            started: Instant::now(),
        })
    }

    /// Writes one artifact atomically under the output directory and
    /// records its size and SHA-256.
    pub fn write_artifact(&mut self, rel_path: &str, content: &str) -> Result<()> {
        let path = self.out_dir.join(rel_path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_atomic_str(&path, content)?;
        self.artifacts.push(ArtifactEntry {
            path: rel_path.to_string(),
            bytes: content.len() as u64,
            sha256: sha256_hex(content.as_bytes()),
        });
        Ok(())
    }

    /// Writes `manifest.json` and consumes the context. Pass the outcome of
    /// the command; artifacts already written are listed either way.
    pub fn finish(self, status: &str, lines: Vec<String>, error: Option<String>) -> Result<()> {
        let manifest = Manifest {
            command: self.command,
            config: &self.config_echo,
            seeds: &self.seeds,
            versions: BTreeMap::from([
                ("dae-cli", env!("CARGO_PKG_VERSION")),
                ("dae-core", dae_core::VERSION),
            ]),
            artifacts: &self.artifacts,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            summary: Summary {
                status: status.to_string(),
                lines,
                error,
            },
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        write_atomic_str(&self.out_dir.join("manifest.json"), &text)?;
        Ok(())
    }
}
