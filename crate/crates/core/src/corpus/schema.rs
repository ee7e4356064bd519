//! Corpus JSONL serialization.
//!
//! One document per line:
//!
//! ```json
//! {"id": "d0",
//!  "sentences": [["Rebels", "seized", "the", "town"], ["They", "withdrew"]],
//!  "events": [{"id": "e1", "mentions": [{"sent": 0, "span": [1, 2]}]}],
//!  "relations": [{"head": "e1", "tail": "e2", "type": "CAUSE"}]}
//! ```
//!
//! An optional `{"_meta": ...}` header line may precede the documents and
//! carries split assignments plus provenance (see [`crate::artifact`]).
//! Saving then loading reproduces the corpus exactly, and re-saving produces
//! byte-identical output.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifact::{ArtifactMeta, SCHEMA_VERSION};
use super::{Corpus, CorpusError, Document, Event, Mention, RelationInstance, Sentence, Split};

/// Options for [`load_corpus`].
#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Reject unknown keys anywhere in a document line.
    pub strict: bool,
    /// Reject structurally invalid documents instead of returning them.
    pub validate: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { strict: true, validate: true }
    }
}

#[derive(Serialize, Deserialize)]
struct WireDoc {
    id: String,
    sentences: Vec<Vec<String>>,
    events: Vec<WireEvent>,
    relations: Vec<WireRelation>,
}

#[derive(Serialize, Deserialize)]
struct WireEvent {
    id: String,
    mentions: Vec<WireMention>,
}

#[derive(Serialize, Deserialize)]
struct WireMention {
    sent: usize,
    span: [usize; 2],
}

#[derive(Serialize, Deserialize)]
struct WireRelation {
    head: String,
    tail: String,
    #[serde(rename = "type")]
    rtype: String,
}

impl From<&Document> for WireDoc {
    fn from(doc: &Document) -> Self {
        WireDoc {
            id: doc.id.clone(),
            sentences: doc.sentences.iter().map(|s| s.tokens.clone()).collect(),
            events: doc
                .events
                .iter()
                .map(|e| WireEvent {
                    id: e.id.clone(),
                    mentions: e
                        .mentions
                        .iter()
                        .map(|m| WireMention { sent: m.sentence, span: [m.start, m.end] })
                        .collect(),
                })
                .collect(),
            relations: doc
                .relations
                .iter()
                .map(|r| WireRelation {
                    head: r.head.clone(),
                    tail: r.tail.clone(),
                    rtype: r.rtype.clone(),
                })
                .collect(),
        }
    }
}

impl From<WireDoc> for Document {
    fn from(wire: WireDoc) -> Self {
        Document {
            id: wire.id,
            sentences: wire
                .sentences
                .into_iter()
                .enumerate()
                .map(|(index, tokens)| Sentence { index, tokens })
                .collect(),
            events: wire
                .events
                .into_iter()
                .map(|e| Event {
                    id: e.id,
                    mentions: e
                        .mentions
                        .into_iter()
                        .map(|m| Mention { sentence: m.sent, start: m.span[0], end: m.span[1] })
                        .collect(),
                })
                .collect(),
            relations: wire
                .relations
                .into_iter()
                .map(|r| RelationInstance { head: r.head, tail: r.tail, rtype: r.rtype })
                .collect(),
        }
    }
}

/// Walk a parsed document line and report the first unknown key with its path.
fn check_keys(value: &serde_json::Value, line: usize) -> Result<(), CorpusError> {
    let unknown = |path: String| CorpusError::UnknownKey { line, path };
    let obj = match value.as_object() {
        Some(o) => o,
        None => return Ok(()), // type errors surface during deserialization
    };
    for key in obj.keys() {
        if !matches!(key.as_str(), "id" | "sentences" | "events" | "relations") {
            return Err(unknown(key.clone()));
        }
    }
    if let Some(events) = obj.get("events").and_then(|v| v.as_array()) {
        for (i, event) in events.iter().enumerate() {
            let Some(eobj) = event.as_object() else { continue };
            for key in eobj.keys() {
                if !matches!(key.as_str(), "id" | "mentions") {
                    return Err(unknown(format!("events[{i}].{key}")));
                }
            }
            if let Some(mentions) = eobj.get("mentions").and_then(|v| v.as_array()) {
                for (j, mention) in mentions.iter().enumerate() {
                    let Some(mobj) = mention.as_object() else { continue };
                    for key in mobj.keys() {
                        if !matches!(key.as_str(), "sent" | "span") {
                            return Err(unknown(format!("events[{i}].mentions[{j}].{key}")));
                        }
                    }
                }
            }
        }
    }
    if let Some(relations) = obj.get("relations").and_then(|v| v.as_array()) {
        for (i, rel) in relations.iter().enumerate() {
            let Some(robj) = rel.as_object() else { continue };
            for key in robj.keys() {
                if !matches!(key.as_str(), "head" | "tail" | "type") {
                    return Err(unknown(format!("relations[{i}].{key}")));
                }
            }
        }
    }
    Ok(())
}

/// Load a corpus from JSONL. Split assignments come from the header when
/// present; documents without one default to `train`.
pub fn load_corpus(path: &Path, options: &LoadOptions) -> Result<Corpus, CorpusError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut documents = Vec::new();
    let mut header: Option<ArtifactMeta> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if idx == 0 {
            if let Some(meta) = ArtifactMeta::from_header_line(&line) {
                if meta.schema_version != SCHEMA_VERSION {
                    return Err(CorpusError::SchemaVersion {
                        found: meta.schema_version,
                        expected: SCHEMA_VERSION.to_string(),
                    });
                }
                header = Some(meta);
                continue;
            }
        }
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Parse { line: lineno, message: e.to_string() })?;
        if options.strict {
            check_keys(&value, lineno)?;
        }
        let wire: WireDoc = serde_json::from_value(value)
            .map_err(|e| CorpusError::Parse { line: lineno, message: e.to_string() })?;
        documents.push(Document::from(wire));
    }
    let splits = resolve_splits(&documents, header.as_ref())?;
    let corpus = Corpus { documents, splits };
    if options.validate {
        let violations = corpus.validate();
        if !violations.is_empty() {
            return Err(CorpusError::Validation(violations));
        }
    }
    Ok(corpus)
}

fn resolve_splits(
    documents: &[Document],
    header: Option<&ArtifactMeta>,
) -> Result<Vec<Split>, CorpusError> {
    let Some(map) = header.and_then(|m| m.splits.as_ref()) else {
        return Ok(vec![Split::Train; documents.len()]);
    };
    for id in map.keys() {
        if !documents.iter().any(|d| &d.id == id) {
            return Err(CorpusError::SplitForUnknownDoc { id: id.clone() });
        }
    }
    Ok(documents
        .iter()
        .map(|d| map.get(&d.id).copied().unwrap_or(Split::Train))
        .collect())
}

/// Save a corpus as JSONL with a header carrying the split assignments.
/// `extra_meta` lets callers attach config echo and input hashes.
pub fn save_corpus(
    corpus: &Corpus,
    path: &Path,
    extra_meta: Option<ArtifactMeta>,
) -> Result<(), CorpusError> {
    let mut meta = extra_meta.unwrap_or_else(|| ArtifactMeta::new("corpus"));
    meta.artifact = "corpus".to_string();
    meta.schema_version = SCHEMA_VERSION.to_string();
    let split_map: BTreeMap<String, Split> = corpus
        .documents
        .iter()
        .zip(&corpus.splits)
        .map(|(d, s)| (d.id.clone(), *s))
        .collect();
    meta.splits = Some(split_map);
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "{}", meta.to_header_line())?;
    for doc in &corpus.documents {
        let wire = WireDoc::from(doc);
        writeln!(file, "{}", serde_json::to_string(&wire).expect("document serializes"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::two_sentence_doc;

    fn sample_corpus() -> Corpus {
        let mut d1 = two_sentence_doc();
        d1.id = "d1".into();
        Corpus { documents: vec![two_sentence_doc(), d1], splits: vec![Split::Train, Split::Test] }
    }

    #[test]
    fn save_load_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let corpus = sample_corpus();
        save_corpus(&corpus, &path, None).unwrap();
        let loaded = load_corpus(&path, &LoadOptions::default()).unwrap();
        assert_eq!(loaded, corpus);
        // Re-saving the loaded corpus yields byte-identical output.
        let path2 = dir.path().join("again.jsonl");
        save_corpus(&loaded, &path2, None).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn document_lines_use_wire_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        save_corpus(&sample_corpus(), &path, None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let doc_line = text.lines().nth(1).unwrap();
        let value: serde_json::Value = serde_json::from_str(doc_line).unwrap();
        assert_eq!(value["id"], "d0");
        assert_eq!(value["sentences"][0][3], "d");
        assert_eq!(value["events"][0]["mentions"][0]["sent"], 0);
        assert_eq!(value["events"][0]["mentions"][0]["span"], serde_json::json!([3, 4]));
        assert_eq!(value["relations"][0]["type"], "CAUSE");
    }

    #[test]
    fn loads_headerless_files_as_train() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.jsonl");
        let wire = serde_json::to_string(&WireDoc::from(&two_sentence_doc())).unwrap();
        std::fs::write(&path, format!("{wire}\n")).unwrap();
        let corpus = load_corpus(&path, &LoadOptions::default()).unwrap();
        assert_eq!(corpus.splits, vec![Split::Train]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = serde_json::to_string(&WireDoc::from(&two_sentence_doc())).unwrap();
        std::fs::write(&path, format!("{good}\n{{not json\n")).unwrap();
        let err = load_corpus(&path, &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 2, .. }), "got {err:?}");
    }

    #[test]
    fn strict_mode_rejects_unknown_keys_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("extra.jsonl");
        let mut value = serde_json::to_value(WireDoc::from(&two_sentence_doc())).unwrap();
        value["events"][0]["mentions"][0]["color"] = serde_json::json!("red");
        std::fs::write(&path, format!("{value}\n")).unwrap();
        let err = load_corpus(&path, &LoadOptions::default()).unwrap_err();
        match err {
            CorpusError::UnknownKey { line, path } => {
                assert_eq!(line, 1);
                assert_eq!(path, "events[0].mentions[0].color");
            }
            other => panic!("expected UnknownKey, got {other:?}"),
        }
        // Lenient mode ignores the stray key.
        let lenient = LoadOptions { strict: false, ..LoadOptions::default() };
        assert!(load_corpus(&path, &lenient).is_ok());
    }

    #[test]
    fn dangling_relation_reference_names_the_event() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dangling.jsonl");
        let mut doc = two_sentence_doc();
        doc.relations[0].head = "e9".into();
        let wire = serde_json::to_string(&WireDoc::from(&doc)).unwrap();
        std::fs::write(&path, format!("{wire}\n")).unwrap();
        let err = load_corpus(&path, &LoadOptions::default()).unwrap_err();
        match err {
            CorpusError::Validation(violations) => {
                assert!(violations.iter().any(|v| v.message.contains("e9")));
            }
            other => panic!("expected Validation, got {other:?}"),
        }
    }

    #[test]
    fn span_out_of_bounds_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("span.jsonl");
        let mut doc = two_sentence_doc();
        doc.events[0].mentions[0].end = 50;
        let wire = serde_json::to_string(&WireDoc::from(&doc)).unwrap();
        std::fs::write(&path, format!("{wire}\n")).unwrap();
        assert!(matches!(
            load_corpus(&path, &LoadOptions::default()),
            Err(CorpusError::Validation(_))
        ));
    }

    #[test]
    fn schema_version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("future.jsonl");
        let mut meta = ArtifactMeta::new("corpus");
        meta.schema_version = "99".into();
        std::fs::write(&path, format!("{}\n", meta.to_header_line())).unwrap();
        assert!(matches!(
            load_corpus(&path, &LoadOptions::default()),
            Err(CorpusError::SchemaVersion { .. })
        ));
    }

    #[test]
    fn split_for_unknown_document_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ghost.jsonl");
        let mut meta = ArtifactMeta::new("corpus");
        let mut splits = BTreeMap::new();
        splits.insert("ghost".to_string(), Split::Dev);
        meta.splits = Some(splits);
        let wire = serde_json::to_string(&WireDoc::from(&two_sentence_doc())).unwrap();
        std::fs::write(&path, format!("{}\n{wire}\n", meta.to_header_line())).unwrap();
        assert!(matches!(
            load_corpus(&path, &LoadOptions::default()),
            Err(CorpusError::SplitForUnknownDoc { .. })
        ));
    }
}
