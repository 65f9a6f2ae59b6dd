//! Content manifest of an output directory.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ManifestEntry {
    pub fn of(file: &str, bytes: &[u8]) -> Self {
        Self { file: file.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 }
    }
}

pub fn manifest_json(entries: &[ManifestEntry]) -> String {
    let mut s = serde_json::to_string_pretty(entries).expect("manifest serialises");
    s.push('\n');
    s
}

/// Files whose size or hash no longer match the manifest in `dir`.
pub fn verify(dir: &Path) -> Result<Vec<String>, String> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut bad = Vec::new();
    for e in entries {
        match std::fs::read(dir.join(&e.file)) {
            Ok(bytes) if bytes.len() as u64 == e.bytes && sha256_hex(&bytes) == e.sha256 => {}
            Ok(_) => bad.push(format!("{}: content changed", e.file)),
            Err(err) => bad.push(format!("{}: {err}", e.file)),
        }
    }
    Ok(bad)
}
