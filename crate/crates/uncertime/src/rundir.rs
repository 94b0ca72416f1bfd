//! Per-invocation run directories and their manifests.
//!
//! Every command writes its artifacts into one directory named by a UTC
//! timestamp plus a hash of the effective configuration (or an explicit
//! `--run-dir` name). A `manifest.json` records the command, config hash,
//! seed and a checksum per artifact; every artifact the run wrote is
//! referenced by exactly one entry.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// FNV-1a 64-bit, used for config hashes and artifact checksums.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Path relative to the run directory.
    pub path: String,
    pub bytes: u64,
    pub fnv64: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub created_unix: u64,
    pub artifacts: Vec<ArtifactEntry>,
}

/// An open run directory accumulating artifact records.
pub struct RunDir {
    pub path: PathBuf,
    manifest: RunManifest,
}

impl RunDir {
    /// Create `<out_dir>/<name>` where `name` defaults to
    /// `<utc-stamp>-<confighash8>-<command>`.
    pub fn create(
        out_dir: &Path,
        command: &str,
        canonical_config: &str,
        seed: u64,
        explicit_name: Option<&str>,
    ) -> Result<RunDir, CliError> {
        let config_hash = format!("{:016x}", fnv64(canonical_config.as_bytes()));
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let name = match explicit_name {
            Some(n) => n.to_string(),
            None => format!("{now}-{}-{command}", &config_hash[..8]),
        };
        let path = out_dir.join(name);
        std::fs::create_dir_all(&path).map_err(CliError::io(&path))?;
        Ok(RunDir {
            path,
            manifest: RunManifest {
                command: command.to_string(),
                config_hash,
                seed,
                created_unix: now,
                artifacts: Vec::new(),
            },
        })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Checksum an artifact this run just wrote and add it to the manifest.
    pub fn record(&mut self, name: &str) -> Result<(), CliError> {
        let path = self.file(name);
        let bytes = std::fs::read(&path).map_err(CliError::io(&path))?;
        self.manifest.artifacts.push(ArtifactEntry {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            fnv64: format!("{:016x}", fnv64(&bytes)),
        });
        Ok(())
    }

    /// Write `manifest.json` and return the run directory path.
    pub fn finish(self) -> Result<PathBuf, CliError> {
        let path = self.file("manifest.json");
        let json = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(&path, json).map_err(CliError::io(&path))?;
        Ok(self.path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_matches_reference_vectors() {
        // Standard FNV-1a test vectors.
        assert_eq!(fnv64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn manifest_references_every_artifact_once() {
        let tmp = std::env::temp_dir().join(format!("uncertime-run-{}", std::process::id()));
        let mut run = RunDir::create(&tmp, "test", "cfg", 1, Some("fixed-name")).unwrap();
        std::fs::write(run.file("a.csv"), "x").unwrap();
        std::fs::write(run.file("b.csv"), "y").unwrap();
        run.record("a.csv").unwrap();
        run.record("b.csv").unwrap();
        let dir = run.finish().unwrap();
        let manifest: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap())
                .unwrap();
        let mut files: Vec<String> = std::fs::read_dir(&dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n != "manifest.json")
            .collect();
        files.sort();
        let mut listed: Vec<String> = manifest.artifacts.iter().map(|a| a.path.clone()).collect();
        listed.sort();
        assert_eq!(files, listed);
        std::fs::remove_dir_all(tmp).ok();
    }
}
