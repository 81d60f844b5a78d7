//! The 21 traffic-scene attributes, label containers and the stage binarization rule.
//!
//! Keys are the exact strings of the prompt's JSON output template, listed in
//! question order. Every domain is the closed range `0..=max`, where 0 means
//! "not detected".

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

use crate::diagnostic::Diagnostic;

/// How an attribute is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    /// Mutually exclusive named conditions, scored multi-class.
    Categorical,
    /// Temporal phases (approaching / entering / passing), scored as detected or not.
    Staged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttributeSpec {
    pub key: &'static str,
    pub kind: AttributeKind,
    /// Names of the values `1..=max`; index 0 of the domain is "not detected".
    #[serde(skip)]
    value_names: &'static [&'static str],
    pub description: &'static str,
}

impl AttributeSpec {
    pub fn max_value(&self) -> u8 {
        self.value_names.len() as u8
    }

    /// The legal raw values, always `0..=max_value`.
    pub fn domain(&self) -> Vec<u8> {
        (0..=self.max_value()).collect()
    }

    pub fn contains(&self, v: i64) -> bool {
        (0..=i64::from(self.max_value())).contains(&v)
    }

    /// Human label for a raw value.
    pub fn value_name(&self, v: u8) -> Option<&'static str> {
        match v {
            0 => Some("Not detected"),
            v => self.value_names.get(usize::from(v) - 1).copied(),
        }
    }

    /// Domain after binarization: `{0, 1}` for staged attributes, the raw domain otherwise.
    pub fn eval_domain(&self) -> Vec<u8> {
        match self.kind {
            AttributeKind::Staged => vec![0, 1],
            AttributeKind::Categorical => self.domain(),
        }
    }

    /// Collapses a staged value to detected (1) / not detected (0); categorical values pass through.
    pub fn binarize(&self, v: i64) -> Result<u8, DomainError> {
        if !self.contains(v) {
            return Err(DomainError {
                key: self.key.to_string(),
                value: v,
                max: self.max_value(),
            });
        }
        Ok(match self.kind {
            AttributeKind::Staged => u8::from(v != 0),
            AttributeKind::Categorical => v as u8,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("value {value} for \"{key}\" is outside its domain 0..={max}")]
pub struct DomainError {
    pub key: String,
    pub value: i64,
    pub max: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("label is missing attribute \"{0}\"")]
    MissingKey(String),
    #[error("label has unknown attribute \"{0}\"")]
    UnknownKey(String),
}

/// Machine-readable view of one attribute, used for the schema export.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct AttributeExport {
    pub key: String,
    pub kind: AttributeKind,
    pub domain: Vec<u8>,
    pub value_names: Vec<String>,
    pub description: String,
}

const STAGES_3: &[&str] = &["Approaching", "Entering", "Passing"];
const STAGES_2: &[&str] = &["Approaching", "Passing"];

const fn categorical(
    key: &'static str,
    value_names: &'static [&'static str],
    description: &'static str,
) -> AttributeSpec {
    AttributeSpec {
        key,
        kind: AttributeKind::Categorical,
        value_names,
        description,
    }
}

const fn staged(
    key: &'static str,
    value_names: &'static [&'static str],
    description: &'static str,
) -> AttributeSpec {
    AttributeSpec {
        key,
        kind: AttributeKind::Staged,
        value_names,
        description,
    }
}

static ATTRIBUTES: [AttributeSpec; 21] = [
    categorical(
        "Ambient",
        &["Day", "Dawn/Dusk", "Night"],
        "Time of day or lighting conditions in the image.",
    ),
    categorical(
        "Attributes",
        &["Straight road", "Roundabout", "Hilly road"],
        "Type of road attribute observed in the image.",
    ),
    staged(
        "Construction_zone",
        STAGES_3,
        "Area designated for roadwork, where special signs and barriers might be present.",
    ),
    staged(
        "Cross_walk",
        STAGES_3,
        "Designated pedestrian crossing area requiring vehicles to yield to pedestrians.",
    ),
    staged(
        "Driveway",
        STAGES_3,
        "Entry or exit path to private property connecting to the main road.",
    ),
    staged(
        "Intersection (3 way)",
        STAGES_3,
        "Point where three roads converge.",
    ),
    staged(
        "Intersection (4 way)",
        STAGES_3,
        "Point where four roads converge.",
    ),
    staged(
        "Intersection (5 way & more)",
        STAGES_3,
        "Point where five or more roads converge.",
    ),
    staged(
        "Overhead_bridge/under_overpass",
        STAGES_3,
        "Structure that lets one road pass over or under another.",
    ),
    staged(
        "Tunnel",
        STAGES_3,
        "Covered section of road, often through a hill or mountain.",
    ),
    staged(
        "Rail_crossing",
        STAGES_3,
        "Point where a railway track intersects with the road.",
    ),
    categorical(
        "Surface",
        &["Dry", "Wet", "Icy", "Snow"],
        "Condition of the road surface.",
    ),
    categorical(
        "Types",
        &["Local", "Highway", "Ramp", "Urban", "Rural"],
        "Road type based on surroundings and purpose.",
    ),
    categorical(
        "Weather",
        &["Sunny", "Cloudy", "Rain", "Snow", "Fog", "Hail"],
        "Observed weather conditions.",
    ),
    staged(
        "NoSignalIntersection",
        STAGES_2,
        "Intersection without traffic lights.",
    ),
    staged(
        "StopIntersection",
        STAGES_2,
        "Intersection with stop signs.",
    ),
    staged(
        "Merge_GoreOnLeft",
        STAGES_2,
        "Triangular merge/diverge area on the left.",
    ),
    staged(
        "Merge_GoreOnRight",
        STAGES_2,
        "Triangular merge/diverge area on the right.",
    ),
    staged(
        "Branch_GoreOnLeft",
        STAGES_2,
        "Split in the road where traffic divides to the left.",
    ),
    staged(
        "Branch_GoreOnRight",
        STAGES_2,
        "Split in the road where traffic divides to the right.",
    ),
    staged(
        "ZebraCrossing",
        STAGES_2,
        "Pedestrian crossing marked by white stripes.",
    ),
];

/// The ordered attribute registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttributeSchema {
    attributes: &'static [AttributeSpec],
}

/// Returns the canonical schema in question order.
pub fn attribute_registry() -> AttributeSchema {
    AttributeSchema {
        attributes: &ATTRIBUTES,
    }
}

impl Default for AttributeSchema {
    fn default() -> Self {
        attribute_registry()
    }
}

impl AttributeSchema {
    pub fn attributes(&self) -> &'static [AttributeSpec] {
        self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.attributes.iter().map(|a| a.key)
    }

    pub fn index_of(&self, key: &str) -> Option<usize> {
        static INDEX: OnceLock<IndexMap<&'static str, usize>> = OnceLock::new();
        if std::ptr::eq(self.attributes, &ATTRIBUTES[..]) {
            let index = INDEX.get_or_init(|| {
                ATTRIBUTES
                    .iter()
                    .enumerate()
                    .map(|(i, a)| (a.key, i))
                    .collect()
            });
            return index.get(key).copied();
        }
        self.attributes.iter().position(|a| a.key == key)
    }

    pub fn spec(&self, key: &str) -> Option<&'static AttributeSpec> {
        self.index_of(key).map(|i| &self.attributes[i])
    }

    pub fn export(&self) -> Vec<AttributeExport> {
        self.attributes
            .iter()
            .map(|a| AttributeExport {
                key: a.key.to_string(),
                kind: a.kind,
                domain: a.domain(),
                value_names: (0..=a.max_value())
                    .filter_map(|v| a.value_name(v).map(str::to_string))
                    .collect(),
                description: a.description.to_string(),
            })
            .collect()
    }

    /// Pretty-printed JSON of [`AttributeSchema::export`], newline-terminated.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.export()).expect("schema serializes");
        s.push('\n');
        s
    }
}

/// A frame's raw attribute assignment, as written by a model or an annotator.
///
/// May be incomplete or out of domain; see [`validate_label`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SceneLabel {
    pub values: IndexMap<String, i64>,
}

impl SceneLabel {
    pub fn new() -> Self {
        Self::default()
    }

    /// A complete label with every attribute set to 0.
    pub fn zeros(schema: &AttributeSchema) -> Self {
        Self {
            values: schema.keys().map(|k| (k.to_string(), 0)).collect(),
        }
    }

    pub fn get(&self, key: &str) -> Option<i64> {
        self.values.get(key).copied()
    }

    pub fn set(&mut self, key: impl Into<String>, value: i64) -> &mut Self {
        self.values.insert(key.into(), value);
        self
    }

    pub fn with(mut self, key: impl Into<String>, value: i64) -> Self {
        self.set(key, value);
        self
    }
}

impl<K: Into<String>> FromIterator<(K, i64)> for SceneLabel {
    fn from_iter<T: IntoIterator<Item = (K, i64)>>(iter: T) -> Self {
        Self {
            values: iter.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

/// A complete label in scoring space: staged attributes hold 0/1, categorical
/// attributes their raw value. Always holds all 21 keys in registry order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "IndexMap<String, u8>", into = "IndexMap<String, u8>")]
pub struct EvalLabel {
    values: Vec<u8>,
}

impl EvalLabel {
    pub fn zeros(schema: &AttributeSchema) -> Self {
        Self {
            values: vec![0; schema.len()],
        }
    }

    /// Builds a label from values in registry order, checking each against its scoring domain.
    pub fn from_values(schema: &AttributeSchema, values: Vec<u8>) -> Result<Self, LabelError> {
        if values.len() != schema.len() {
            let missing = schema.attributes()[values.len().min(schema.len() - 1)].key;
            return Err(LabelError::MissingKey(missing.to_string()));
        }
        for (spec, &v) in schema.attributes().iter().zip(&values) {
            let max = match spec.kind {
                AttributeKind::Staged => 1,
                AttributeKind::Categorical => spec.max_value(),
            };
            if v > max {
                return Err(DomainError {
                    key: spec.key.to_string(),
                    value: i64::from(v),
                    max,
                }
                .into());
            }
        }
        Ok(Self { values })
    }

    /// Values in registry order.
    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, key: &str) -> Option<u8> {
        attribute_registry()
            .index_of(key)
            .map(|i| self.values[i])
    }

    pub fn at(&self, index: usize) -> u8 {
        self.values[index]
    }

    /// Returns a relaxed copy as a [`SceneLabel`].
    pub fn to_scene_label(&self) -> SceneLabel {
        attribute_registry()
            .keys()
            .zip(&self.values)
            .map(|(k, &v)| (k, i64::from(v)))
            .collect()
    }
}

impl TryFrom<IndexMap<String, u8>> for EvalLabel {
    type Error = LabelError;

    fn try_from(map: IndexMap<String, u8>) -> Result<Self, Self::Error> {
        let schema = attribute_registry();
        if let Some(unknown) = map.keys().find(|k| schema.index_of(k).is_none()) {
            return Err(LabelError::UnknownKey(unknown.clone()));
        }
        let values = schema
            .keys()
            .map(|k| {
                map.get(k)
                    .copied()
                    .ok_or_else(|| LabelError::MissingKey(k.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_values(&schema, values)
    }
}

impl From<EvalLabel> for IndexMap<String, u8> {
    fn from(label: EvalLabel) -> Self {
        attribute_registry()
            .keys()
            .map(str::to_string)
            .zip(label.values)
            .collect()
    }
}

/// Maps a raw value into scoring space.
pub fn binarize_value(spec: &AttributeSpec, v: i64) -> Result<u8, DomainError> {
    spec.binarize(v)
}

/// Binarizes every attribute of a complete, valid label.
pub fn binarize_label(label: &SceneLabel, schema: &AttributeSchema) -> Result<EvalLabel, LabelError> {
    if let Some(unknown) = label.values.keys().find(|k| schema.index_of(k).is_none()) {
        return Err(LabelError::UnknownKey(unknown.clone()));
    }
    let values = schema
        .attributes()
        .iter()
        .map(|spec| {
            let v = label
                .get(spec.key)
                .ok_or_else(|| LabelError::MissingKey(spec.key.to_string()))?;
            Ok(spec.binarize(v)?)
        })
        .collect::<Result<Vec<_>, LabelError>>()?;
    Ok(EvalLabel { values })
}

/// Lists every schema violation in `label`: missing keys (registry order),
/// out-of-domain values, then unknown keys (label order).
pub fn validate_label(label: &SceneLabel, schema: &AttributeSchema) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for spec in schema.attributes() {
        match label.get(spec.key) {
            None => out.push(Diagnostic::missing_key(spec.key)),
            Some(v) if !spec.contains(v) => out.push(Diagnostic::out_of_domain(spec.key, v, spec.max_value())),
            Some(_) => {}
        }
    }
    for key in label.values.keys() {
        if schema.index_of(key).is_none() {
            out.push(Diagnostic::unknown_key(key));
        }
    }
    out
}
