//! Artifact file plumbing: every file a subcommand writes starts with a
//! `_meta` record naming the artifact kind, the producing configuration
//! (echoed and hashed), and the hashes of its input files. Downstream
//! commands verify those hashes, so a stale or swapped intermediate is
//! caught instead of silently scored.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use erex_core::artifact::SCHEMA_VERSION;
use erex_core::corpus::{Corpus, Document, Split};

/// Classified CLI failure; each class maps to one documented exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration (exit 2).
    Usage(String),
    /// Input files missing required structure or failing checks (exit 3).
    Data(String),
    /// Filesystem problems (exit 4).
    Io(String),
    /// A pipeline stage failed while computing (exit 5).
    Run(String),
    /// `validate` found violations; the report was still written (exit 6).
    Findings(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Io(_) => 4,
            CliError::Run(_) => 5,
            CliError::Findings(_) => 6,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m)
            | CliError::Data(m)
            | CliError::Io(m)
            | CliError::Run(m)
            | CliError::Findings(m) => f.write_str(m),
        }
    }
}

pub fn usage<E: fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn data<E: fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

pub fn io_err<E: fmt::Display>(e: E) -> CliError {
    CliError::Io(e.to_string())
}

pub fn run_err<E: fmt::Display>(e: E) -> CliError {
    CliError::Run(e.to_string())
}

/// First record of every artifact file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Meta {
    /// Artifact kind: `corpus`, `clusters`, `summaries`, `train-log`,
    /// `report`, or `transcript`.
    pub kind: String,
    pub schema_version: String,
    /// Hash of the `config` echo below.
    pub config_sha256: String,
    /// The full configuration that produced the artifact.
    pub config: serde_json::Value,
    /// SHA-256 of each input artifact file, keyed by role.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, String>,
}

impl Meta {
    pub fn new<C: Serialize>(kind: &str, config: &C) -> Result<Self, CliError> {
        let config = serde_json::to_value(config).map_err(run_err)?;
        let config_sha256 = sha256_hex(config.to_string().as_bytes());
        Ok(Meta {
            kind: kind.to_string(),
            schema_version: SCHEMA_VERSION.to_string(),
            config_sha256,
            config,
            inputs: BTreeMap::new(),
        })
    }

    pub fn with_input(mut self, role: &str, path: &Path) -> Result<Self, CliError> {
        self.inputs.insert(role.to_string(), file_sha256(path)?);
        Ok(self)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    _meta: Meta,
}

/// Write a JSONL artifact: the meta record first, then one record per item.
pub fn write_jsonl<T: Serialize>(
    path: &Path,
    meta: &Meta,
    items: impl IntoIterator<Item = T>,
) -> Result<(), CliError> {
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    let head = serde_json::to_string(&MetaLine { _meta: meta.clone() }).map_err(run_err)?;
    writeln!(out, "{head}").map_err(io_err)?;
    for item in items {
        let line = serde_json::to_string(&item).map_err(run_err)?;
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Read a JSONL artifact. The meta record is optional so hand-written
/// files still load.
pub fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
) -> Result<(Option<Meta>, Vec<T>), CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut meta = None;
    let mut items = Vec::new();
    for (number, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        if number == 0 {
            if let Ok(head) = serde_json::from_str::<MetaLine>(&line) {
                meta = Some(head._meta);
                continue;
            }
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            CliError::Data(format!("{} line {}: {e}", path.display(), number + 1))
        })?;
        items.push(item);
    }
    Ok((meta, items))
}

/// One corpus document with its split assignment.
#[derive(Debug, Serialize, Deserialize)]
pub struct DocRecord {
    pub split: Split,
    pub doc: Document,
}

pub fn write_corpus(path: &Path, corpus: &Corpus, meta: &Meta) -> Result<(), CliError> {
    let records = corpus
        .documents
        .iter()
        .zip(&corpus.splits)
        .map(|(doc, &split)| DocRecord { split, doc: doc.clone() });
    write_jsonl(path, meta, records)
}

pub fn read_corpus(path: &Path) -> Result<(Option<Meta>, Corpus), CliError> {
    let (meta, records): (_, Vec<DocRecord>) = read_jsonl(path)?;
    if records.is_empty() {
        return Err(CliError::Data(format!("{}: no documents", path.display())));
    }
    let mut documents = Vec::with_capacity(records.len());
    let mut splits = Vec::with_capacity(records.len());
    for record in records {
        documents.push(record.doc);
        splits.push(record.split);
    }
    Ok((meta, Corpus { documents, splits }))
}

/// Write a single-object JSON artifact with the meta embedded.
pub fn write_report<T: Serialize>(
    path: &Path,
    meta: &Meta,
    body_key: &str,
    body: &T,
) -> Result<(), CliError> {
    let mut object = serde_json::Map::new();
    object.insert("_meta".to_string(), serde_json::to_value(meta).map_err(run_err)?);
    object.insert(body_key.to_string(), serde_json::to_value(body).map_err(run_err)?);
    let mut text =
        serde_json::to_string_pretty(&serde_json::Value::Object(object)).map_err(run_err)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Check that `meta` recorded `path` (under `role`) with its current hash.
/// A missing recording passes with a note; a mismatch is an error.
pub fn verify_input(
    meta: &Meta,
    role: &str,
    path: &Path,
) -> Result<&'static str, CliError> {
    match meta.inputs.get(role) {
        None => Ok("not recorded"),
        Some(recorded) => {
            let actual = file_sha256(path)?;
            if *recorded == actual {
                Ok("ok")
            } else {
                Err(CliError::Data(format!(
                    "{role} hash mismatch: {} was produced from a different file \
                     (recorded {}, actual {})",
                    path.display(),
                    &recorded[..12.min(recorded.len())],
                    &actual[..12],
                )))
            }
        }
    }
}
