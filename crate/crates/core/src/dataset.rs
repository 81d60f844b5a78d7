//! Frame manifests: ingestion, exclusion filtering and image encoding.
//!
//! A manifest is JSONL, one frame per line:
//!
//! ```text
//! {"frame_id": "clip01_0003", "image_path": "frames/clip01_0003.jpg",
//!  "truth": {"Ambient": 1, ...}, "excluded": false}
//! ```
//!
//! `image_path` is resolved against the manifest's directory. The first line may
//! instead be a header object `{"source_note": "..."}` describing how the frames
//! were produced (sampling rate, source videos).

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::diagnostic::Diagnostic;
use crate::prompt::{ImagePayload, MediaType};
use crate::schema::{binarize_label, validate_label, AttributeSchema, EvalLabel, SceneLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    NoSignificantAnnotation,
    StationaryVehicle,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameEntry {
    pub frame_id: String,
    pub image_path: PathBuf,
    pub truth: SceneLabel,
    pub excluded: bool,
    pub exclusion_reason: Option<ExclusionReason>,
}

impl FrameEntry {
    /// Ground truth in scoring space.
    pub fn eval_truth(&self, schema: &AttributeSchema) -> Result<EvalLabel, crate::schema::LabelError> {
        binarize_label(&self.truth, schema)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<FrameEntry>,
    pub source_note: Option<String>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: invalid truth for frame \"{frame_id}\": {}", join(.diagnostics))]
    InvalidTruth {
        line: usize,
        frame_id: String,
        diagnostics: Vec<Diagnostic>,
    },
    #[error("line {line}: duplicate frame_id \"{frame_id}\" (first seen on line {first_line})")]
    DuplicateFrame {
        line: usize,
        first_line: usize,
        frame_id: String,
    },
    #[error("line {line}: frame \"{frame_id}\" has an exclusion_reason but is not excluded")]
    ReasonWithoutExclusion { line: usize, frame_id: String },
    #[error("line {line}: source_note header is only allowed on the first line")]
    MisplacedHeader { line: usize },
    #[error("manifest has no frames")]
    Empty,
}

fn join(diags: &[Diagnostic]) -> String {
    diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no frames left to evaluate after exclusion filtering ({excluded} excluded)")]
pub struct EmptyDataset {
    pub excluded: usize,
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot read image {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: unsupported image format (expected JPEG or PNG)")]
    UnsupportedFormat(PathBuf),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    frame_id: String,
    image_path: PathBuf,
    #[serde(default)]
    truth: SceneLabel,
    #[serde(default)]
    excluded: bool,
    #[serde(default)]
    exclusion_reason: Option<ExclusionReason>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    source_note: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Line {
    Entry(RawEntry),
    Header(Header),
}

/// Parses manifest text; relative image paths are joined onto `base_dir`.
pub fn parse_manifest(text: &str, base_dir: &Path, schema: &AttributeSchema) -> Result<DatasetManifest, ManifestError> {
    let mut entries = Vec::new();
    let mut source_note = None;
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut first_content_line = true;

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(line).map_err(|source| {
            // Re-parse as an entry for a more precise error message.
            let source = serde_json::from_str::<RawEntry>(line).err().unwrap_or(source);
            ManifestError::Parse { line: line_no, source }
        })?;
        let is_first = std::mem::replace(&mut first_content_line, false);
        let raw = match parsed {
            Line::Header(h) if is_first => {
                source_note = Some(h.source_note);
                continue;
            }
            Line::Header(_) => return Err(ManifestError::MisplacedHeader { line: line_no }),
            Line::Entry(raw) => raw,
        };
        if let Some(&first_line) = seen.get(&raw.frame_id) {
            return Err(ManifestError::DuplicateFrame {
                line: line_no,
                first_line,
                frame_id: raw.frame_id,
            });
        }
        seen.insert(raw.frame_id.clone(), line_no);
        if !raw.excluded {
            if raw.exclusion_reason.is_some() {
                return Err(ManifestError::ReasonWithoutExclusion {
                    line: line_no,
                    frame_id: raw.frame_id,
                });
            }
            let diagnostics = validate_label(&raw.truth, schema);
            if !diagnostics.is_empty() {
                return Err(ManifestError::InvalidTruth {
                    line: line_no,
                    frame_id: raw.frame_id,
                    diagnostics,
                });
            }
        }
        let image_path = if raw.image_path.is_absolute() {
            raw.image_path
        } else {
            base_dir.join(raw.image_path)
        };
        entries.push(FrameEntry {
            frame_id: raw.frame_id,
            image_path,
            truth: raw.truth,
            excluded: raw.excluded,
            exclusion_reason: if raw.excluded {
                Some(raw.exclusion_reason.unwrap_or(ExclusionReason::Other))
            } else {
                None
            },
        });
    }
    if entries.is_empty() {
        return Err(ManifestError::Empty);
    }
    Ok(DatasetManifest { entries, source_note })
}

pub fn load_manifest(path: &Path, schema: &AttributeSchema) -> Result<DatasetManifest, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(&text, base, schema)
}

/// Frames dropped by [`filter_frames`], per reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionCounts {
    pub retained: usize,
    pub by_reason: BTreeMap<ExclusionReason, usize>,
}

impl ExclusionCounts {
    pub fn excluded(&self) -> usize {
        self.by_reason.values().sum()
    }
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, frame_id: &str) -> Option<&FrameEntry> {
        self.entries.iter().find(|e| e.frame_id == frame_id)
    }

    pub fn exclusion_counts(&self) -> ExclusionCounts {
        let mut counts = ExclusionCounts::default();
        for e in &self.entries {
            if e.excluded {
                let reason = e.exclusion_reason.unwrap_or(ExclusionReason::Other);
                *counts.by_reason.entry(reason).or_default() += 1;
            } else {
                counts.retained += 1;
            }
        }
        counts
    }
}

/// Keeps only non-excluded frames, preserving order.
pub fn filter_frames(manifest: &DatasetManifest) -> Result<(DatasetManifest, ExclusionCounts), EmptyDataset> {
    let counts = manifest.exclusion_counts();
    if counts.retained == 0 {
        return Err(EmptyDataset {
            excluded: counts.excluded(),
        });
    }
    let filtered = DatasetManifest {
        entries: manifest.entries.iter().filter(|e| !e.excluded).cloned().collect(),
        source_note: manifest.source_note.clone(),
    };
    Ok((filtered, counts))
}

/// Reads an image and base64-encodes it; the media type comes from its magic bytes.
pub fn encode_image(path: &Path) -> Result<ImagePayload, ImageError> {
    let bytes = fs::read(path).map_err(|source| ImageError::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let media_type = MediaType::sniff(&bytes).ok_or_else(|| ImageError::UnsupportedFormat(path.to_path_buf()))?;
    Ok(ImagePayload::new(media_type, &bytes))
}

/// Class supports over the retained frames, per attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    /// Manifest entries, excluded ones included.
    pub frames: usize,
    pub exclusions: ExclusionCounts,
    pub source_note: Option<String>,
    pub attributes: IndexMap<String, AttributeSupport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttributeSupport {
    /// Raw annotated value → frame count, over the full domain.
    pub raw: BTreeMap<u8, usize>,
    /// Scoring-space value → frame count.
    pub scored: BTreeMap<u8, usize>,
}

pub fn dataset_stats(manifest: &DatasetManifest, schema: &AttributeSchema) -> DatasetStats {
    let exclusions = manifest.exclusion_counts();
    let mut attributes: IndexMap<String, AttributeSupport> = schema
        .attributes()
        .iter()
        .map(|spec| {
            (
                spec.key.to_string(),
                AttributeSupport {
                    raw: spec.domain().into_iter().map(|v| (v, 0)).collect(),
                    scored: spec.eval_domain().into_iter().map(|v| (v, 0)).collect(),
                },
            )
        })
        .collect();
    for entry in manifest.entries.iter().filter(|e| !e.excluded) {
        for spec in schema.attributes() {
            let Some(v) = entry.truth.get(spec.key) else { continue };
            let Ok(scored) = spec.binarize(v) else { continue };
            let support = &mut attributes[spec.key];
            *support.raw.entry(v as u8).or_default() += 1;
            *support.scored.entry(scored).or_default() += 1;
        }
    }
    DatasetStats {
        frames: manifest.len(),
        exclusions,
        source_note: manifest.source_note.clone(),
        attributes,
    }
}
