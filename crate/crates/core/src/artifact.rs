//! Artifact metadata headers and content hashing.
//!
//! Every JSONL artifact the pipeline writes (corpora, cluster assignments,
//! summaries, run logs, transcripts) may start with a single header line of
//! the form `{"_meta": {...}}`. The header records what produced the file and
//! the hashes of its inputs so a chain of artifacts can be verified later.
//! Readers tolerate a missing header; payload lines never contain `_meta`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Split;

/// Version stamp written into every artifact header produced by this crate.
pub const SCHEMA_VERSION: &str = "1";

/// Header line content for a JSONL artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    /// Artifact kind, e.g. `"corpus"`, `"clusters"`, `"summaries"`, `"run_log"`.
    pub artifact: String,
    /// Schema version of the payload lines.
    pub schema_version: String,
    /// Hash of the effective configuration that produced the artifact.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    /// Echo of the effective configuration, for reproducibility.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    /// Input name -> sha256 of the input file this artifact was derived from.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, String>,
    /// Document id -> split assignment (corpus artifacts only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<BTreeMap<String, Split>>,
}

impl ArtifactMeta {
    pub fn new(artifact: &str) -> Self {
        ArtifactMeta {
            artifact: artifact.to_string(),
            schema_version: SCHEMA_VERSION.to_string(),
            config_hash: None,
            config: None,
            inputs: BTreeMap::new(),
            splits: None,
        }
    }

    /// Attach the effective config: both an echo and its hash.
    pub fn with_config<T: Serialize>(mut self, config: &T) -> Self {
        self.config = serde_json::to_value(config).ok();
        self.config_hash = Some(config_hash(config));
        self
    }

    /// Record `name -> sha256(file at path)` in the input chain.
    pub fn with_input_file(mut self, name: &str, path: &Path) -> std::io::Result<Self> {
        let digest = sha256_file(path)?;
        self.inputs.insert(name.to_string(), digest);
        Ok(self)
    }

    /// Serialize as the `{"_meta": ...}` header line (no trailing newline).
    pub fn to_header_line(&self) -> String {
        let mut wrapper = serde_json::Map::new();
        wrapper.insert("_meta".to_string(), serde_json::to_value(self).expect("meta serializes"));
        serde_json::Value::Object(wrapper).to_string()
    }

    /// Parse a line as a header, returning `None` when it is a payload line.
    pub fn from_header_line(line: &str) -> Option<ArtifactMeta> {
        let value: serde_json::Value = serde_json::from_str(line).ok()?;
        let meta = value.get("_meta")?;
        serde_json::from_value(meta.clone()).ok()
    }
}

/// Hex-encoded sha256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Hex-encoded sha256 of a file's contents.
pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(sha256_hex(&bytes))
}

/// Hash of a serializable config. Struct field order is fixed by the type,
/// and map-typed fields use ordered maps throughout this crate, so equal
/// configs hash equally across runs and platforms.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    sha256_hex(json.as_bytes())
}

/// Stable 64-bit content key: first eight bytes of sha256 over a seed and a
/// payload. Used where an ordering or sampling decision must depend on data
/// content rather than on input order.
pub fn content_key(seed: u64, payload: &[u8]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(payload);
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

/// Content key mapped to the open unit interval (never exactly 0 or 1).
pub fn content_unit(seed: u64, payload: &[u8]) -> f64 {
    let key = content_key(seed, payload);
    (key as f64 + 0.5) / (u64::MAX as f64 + 1.0)
}

/// Byte encoding of an `f64` slice for hashing, little-endian IEEE bits.
pub fn f64_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    out
}

/// Render a hash for display: first 12 hex chars.
pub fn short_hash(digest: &str) -> String {
    let mut out = String::new();
    let _ = write!(out, "{}", &digest[..digest.len().min(12)]);
    out
}
