//! On-disk certificate store, one JSON file per problem.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use switchmargin_core::lyapunov::LyapunovCertificate;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub hash: String,
    pub level: usize,
    pub delta: f64,
    pub certificate: LyapunovCertificate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CertificateCache {
    pub entries: Vec<CacheEntry>,
}

impl CertificateCache {
    /// An absent file is an empty cache.
    pub fn load(path: &Path) -> CliResult<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(CliError::io(path, e)),
        }
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("cache serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    /// Replaces an entry with the same (hash, level, δ) key.
    pub fn insert(&mut self, hash: &str, certificate: LyapunovCertificate) {
        let delta = certificate.delta_certified;
        let level = certificate.level;
        self.entries
            .retain(|e| !(e.hash == hash && e.level == level && e.delta.to_bits() == delta.to_bits()));
        self.entries.push(CacheEntry {
            hash: hash.to_string(),
            level,
            delta,
            certificate,
        });
    }

    /// Largest certified δ for this problem, restricted to `level` when given.
    /// Ties go to the lower level.
    pub fn best(&self, hash: &str, level: Option<usize>) -> Option<&LyapunovCertificate> {
        self.entries
            .iter()
            .filter(|e| e.hash == hash && level.is_none_or(|l| e.level == l))
            .max_by(|a, b| a.delta.total_cmp(&b.delta).then(b.level.cmp(&a.level)))
            .map(|e| &e.certificate)
    }
}

/// Where a command reads and writes certificates.
pub fn cache_path(explicit: Option<&Path>, default: PathBuf) -> PathBuf {
    explicit.map(Path::to_path_buf).unwrap_or(default)
}

pub fn require(cache: &CertificateCache, path: &Path, hash: &str, level: Option<usize>) -> CliResult<LyapunovCertificate> {
    cache.best(hash, level).cloned().ok_or_else(|| CliError::MissingCertificate {
        cache: path.to_path_buf(),
        detail: level.map(|l| format!(" at level {l} (order {})", 2 * l)).unwrap_or_default(),
    })
}
