//! Prediction records and their JSONL persistence format.
//!
//! One record per line:
//! `{frame_id, provider_id, raw_text, label, diagnostics, latency_ms, from_cache, ...}`.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::diagnostic::Diagnostic;
use crate::providers::ProviderError;
use crate::schema::EvalLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub frame_id: String,
    pub provider_id: String,
    pub raw_text: Option<String>,
    pub label: EvalLabel,
    pub diagnostics: Vec<Diagnostic>,
    /// Set when no usable label could be read; `label` is then all-zero.
    #[serde(default)]
    pub fatal: bool,
    pub latency_ms: u64,
    #[serde(default)]
    pub attempt_count: u32,
    pub from_cache: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ProviderError>,
}

/// All of one provider's (or one ensemble's) records, keyed by frame in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub provider_id: String,
    pub records: IndexMap<String, PredictionRecord>,
}

#[derive(Debug, Error)]
pub enum PredictionIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}:{line}: duplicate record for frame \"{frame_id}\"")]
    DuplicateFrame {
        path: PathBuf,
        line: usize,
        frame_id: String,
    },
    #[error("{path}:{line}: record for provider \"{found}\" in a file of \"{expected}\"")]
    MixedProviders {
        path: PathBuf,
        line: usize,
        expected: String,
        found: String,
    },
    #[error("{0}: no records")]
    Empty(PathBuf),
}

impl PredictionSet {
    pub fn new(provider_id: impl Into<String>) -> Self {
        Self {
            provider_id: provider_id.into(),
            records: IndexMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, frame_id: &str) -> Option<&PredictionRecord> {
        self.records.get(frame_id)
    }

    /// Inserts a record; returns the previous one for the frame, if any.
    pub fn insert(&mut self, record: PredictionRecord) -> Option<PredictionRecord> {
        self.records.insert(record.frame_id.clone(), record)
    }

    pub fn fatal_count(&self) -> usize {
        self.records.values().filter(|r| r.fatal).count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in self.records.values() {
            out.push_str(&serde_json::to_string(record).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), PredictionIoError> {
        let io = |source| PredictionIoError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let mut file = fs::File::create(path).map_err(io)?;
        file.write_all(self.to_jsonl().as_bytes()).map_err(io)
    }

    pub fn read_jsonl(path: &Path) -> Result<Self, PredictionIoError> {
        let file = fs::File::open(path).map_err(|source| PredictionIoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut set: Option<PredictionSet> = None;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|source| PredictionIoError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: PredictionRecord =
                serde_json::from_str(&line).map_err(|source| PredictionIoError::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    source,
                })?;
            let set = set.get_or_insert_with(|| PredictionSet::new(record.provider_id.clone()));
            if record.provider_id != set.provider_id {
                return Err(PredictionIoError::MixedProviders {
                    path: path.to_path_buf(),
                    line: line_no,
                    expected: set.provider_id.clone(),
                    found: record.provider_id,
                });
            }
            let frame_id = record.frame_id.clone();
            if set.insert(record).is_some() {
                return Err(PredictionIoError::DuplicateFrame {
                    path: path.to_path_buf(),
                    line: line_no,
                    frame_id,
                });
            }
        }
        set.ok_or_else(|| PredictionIoError::Empty(path.to_path_buf()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::attribute_registry;

    fn record(frame: &str, provider: &str) -> PredictionRecord {
        PredictionRecord {
            frame_id: frame.into(),
            provider_id: provider.into(),
            raw_text: Some("{}".into()),
            label: EvalLabel::zeros(&attribute_registry()),
            diagnostics: vec![],
            fatal: false,
            latency_ms: 3,
            attempt_count: 1,
            from_cache: false,
            error: None,
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let mut set = PredictionSet::new("gpt");
        set.insert(record("f2", "gpt"));
        set.insert(record("f1", "gpt"));
        set.write_jsonl(&path).unwrap();
        let back = PredictionSet::read_jsonl(&path).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.records.keys().collect::<Vec<_>>(), vec!["f2", "f1"]);
    }

    #[test]
    fn jsonl_rejects_duplicates_and_mixed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let line = |f, p| serde_json::to_string(&record(f, p)).unwrap();
        fs::write(&path, format!("{}\n{}\n", line("a", "x"), line("a", "x"))).unwrap();
        assert!(matches!(
            PredictionSet::read_jsonl(&path),
            Err(PredictionIoError::DuplicateFrame { line: 2, .. })
        ));
        fs::write(&path, format!("{}\n{}\n", line("a", "x"), line("b", "y"))).unwrap();
        assert!(matches!(
            PredictionSet::read_jsonl(&path),
            Err(PredictionIoError::MixedProviders { .. })
        ));
    }
}
