//! Turns untrusted model text into a scoring label.
//!
//! Extraction finds the first balanced `{...}` that parses as a JSON object,
//! ignoring prose and code fences around it. Coercion then maps that object
//! onto the schema under a [`CoercionPolicy`], recording every deviation.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::diagnostic::{Diagnostic, DiagnosticKind};
use crate::predictions::PredictionRecord;
use crate::providers::ModelResponse;
use crate::schema::{binarize_label, AttributeSchema, EvalLabel, SceneLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoercionMode {
    /// Any missing, unknown or out-of-domain attribute is an error.
    Strict,
    /// Deviations are replaced by 0 ("not detected") and reported.
    #[default]
    CoerceZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoercionPolicy {
    pub mode: CoercionMode,
    pub accept_string_integers: bool,
}

impl Default for CoercionPolicy {
    fn default() -> Self {
        Self {
            mode: CoercionMode::CoerceZero,
            accept_string_integers: true,
        }
    }
}

impl CoercionPolicy {
    pub fn strict() -> Self {
        Self {
            mode: CoercionMode::Strict,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no JSON object found in model output")]
pub struct NoJsonFound;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoerceError {
    #[error("strict mode: {0}")]
    Strict(Diagnostic),
    #[error("value for \"{key}\" is not an integer: {value}")]
    Unparseable { key: String, value: String },
}

impl CoerceError {
    pub fn into_diagnostic(self) -> Diagnostic {
        match self {
            CoerceError::Strict(d) => d,
            CoerceError::Unparseable { key, value } => Diagnostic::new(
                DiagnosticKind::UnparseableValue,
                format!("value {value} is not an integer"),
            )
            .with_key(key),
        }
    }
}

/// The object pulled out of a response.
#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub object: Map<String, Value>,
    /// Set when further objects followed the one used.
    pub multiple: Option<Diagnostic>,
}

/// Finds the end (exclusive) of the balanced brace group opening at `start`.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    debug_assert_eq!(bytes[start], b'{');
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Drops commas that directly precede a closing brace or bracket, outside strings.
fn strip_trailing_commas(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let chars: Vec<char> = s.chars().collect();
    let mut in_string = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            out.push(c);
            continue;
        }
        if c == '"' {
            in_string = true;
        } else if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

fn parse_object(candidate: &str) -> Option<Map<String, Value>> {
    match serde_json::from_str::<Value>(candidate) {
        Ok(Value::Object(map)) => Some(map),
        Ok(_) => None,
        Err(_) => match serde_json::from_str::<Value>(&strip_trailing_commas(candidate)) {
            Ok(Value::Object(map)) => Some(map),
            _ => None,
        },
    }
}

/// Scans for the next parseable object starting at or after `from`.
fn next_object(text: &str, from: usize) -> Option<(Map<String, Value>, usize)> {
    let bytes = text.as_bytes();
    let mut pos = from;
    while let Some(offset) = text[pos..].find('{') {
        let start = pos + offset;
        if let Some(end) = balanced_end(bytes, start) {
            if let Some(map) = parse_object(&text[start..end]) {
                return Some((map, end));
            }
        }
        pos = start + 1;
    }
    None
}

pub fn extract_json(text: &str) -> Result<Extracted, NoJsonFound> {
    let (object, end) = next_object(text, 0).ok_or(NoJsonFound)?;
    let multiple = next_object(text, end).map(|_| {
        Diagnostic::new(
            DiagnosticKind::MultipleObjects,
            "more than one JSON object in output; using the first",
        )
    });
    Ok(Extracted { object, multiple })
}

enum Reading {
    Exact(i64),
    Coerced(i64, &'static str),
}

fn read_integer(value: &Value, accept_strings: bool) -> Option<Reading> {
    fn integral(f: f64) -> Option<i64> {
        (f.is_finite() && f.fract() == 0.0 && f.abs() < 1e15).then_some(f as i64)
    }
    match value {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Some(Reading::Exact(i))
            } else {
                n.as_f64()
                    .and_then(integral)
                    .map(|i| Reading::Coerced(i, "integral float"))
            }
        }
        Value::String(s) if accept_strings => {
            let s = s.trim();
            s.parse::<i64>()
                .ok()
                .or_else(|| s.parse::<f64>().ok().and_then(integral))
                .map(|i| Reading::Coerced(i, "numeric string"))
        }
        _ => None,
    }
}

/// Maps an extracted object onto the schema.
///
/// The returned label always passes `validate_label` with no violations.
pub fn coerce_label(
    raw: &Map<String, Value>,
    schema: &AttributeSchema,
    policy: CoercionPolicy,
) -> Result<(SceneLabel, Vec<Diagnostic>), CoerceError> {
    let strict = policy.mode == CoercionMode::Strict;
    let mut label = SceneLabel::new();
    let mut diags = Vec::new();

    for spec in schema.attributes() {
        let Some(value) = raw.get(spec.key) else {
            let d = Diagnostic::missing_key(spec.key);
            if strict {
                return Err(CoerceError::Strict(d));
            }
            diags.push(d);
            label.set(spec.key, 0);
            continue;
        };
        let v = match read_integer(value, policy.accept_string_integers) {
            Some(Reading::Exact(v)) => v,
            Some(Reading::Coerced(v, how)) => {
                diags.push(
                    Diagnostic::new(DiagnosticKind::TypeCoerced, format!("{how} {value} read as {v}"))
                        .with_key(spec.key),
                );
                v
            }
            None => {
                return Err(CoerceError::Unparseable {
                    key: spec.key.to_string(),
                    value: value.to_string(),
                })
            }
        };
        if spec.contains(v) {
            label.set(spec.key, v);
        } else {
            let d = Diagnostic::out_of_domain(spec.key, v, spec.max_value());
            if strict {
                return Err(CoerceError::Strict(d));
            }
            diags.push(d);
            label.set(spec.key, 0);
        }
    }

    for key in raw.keys() {
        if schema.index_of(key).is_none() {
            let d = Diagnostic::unknown_key(key);
            if strict {
                return Err(CoerceError::Strict(d));
            }
            diags.push(d);
        }
    }
    Ok((label, diags))
}

/// Result of running the full parse chain on a piece of text.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLabel {
    pub label: EvalLabel,
    pub diagnostics: Vec<Diagnostic>,
    /// No usable label could be produced; `label` is all-zero.
    pub fatal: bool,
}

/// extract → coerce → binarize. Never fails; problems become diagnostics.
pub fn parse_text(text: &str, schema: &AttributeSchema, policy: CoercionPolicy) -> ParsedLabel {
    let fatal = |d: Diagnostic, mut diags: Vec<Diagnostic>| {
        diags.push(d);
        ParsedLabel {
            label: EvalLabel::zeros(schema),
            diagnostics: diags,
            fatal: true,
        }
    };
    let extracted = match extract_json(text) {
        Ok(e) => e,
        Err(_) => {
            return fatal(
                Diagnostic::new(DiagnosticKind::NoJsonFound, "no parseable JSON object in output"),
                Vec::new(),
            )
        }
    };
    let mut diags: Vec<Diagnostic> = extracted.multiple.into_iter().collect();
    match coerce_label(&extracted.object, schema, policy) {
        Ok((label, more)) => {
            diags.extend(more);
            let label = binarize_label(&label, schema).expect("coerced labels are in domain");
            ParsedLabel {
                label,
                diagnostics: diags,
                fatal: false,
            }
        }
        Err(e) => fatal(e.into_diagnostic(), diags),
    }
}

/// Parses a provider response into a prediction record.
///
/// Transport failures and unusable text yield an all-zero label with `fatal` set.
pub fn parse_response(resp: &ModelResponse, schema: &AttributeSchema, policy: CoercionPolicy) -> PredictionRecord {
    let parsed = match (&resp.raw_text, &resp.error) {
        (Some(text), _) => parse_text(text, schema, policy),
        (None, err) => ParsedLabel {
            label: EvalLabel::zeros(schema),
            diagnostics: vec![Diagnostic::new(
                DiagnosticKind::ProviderError,
                err.as_ref()
                    .map(|e| e.to_string())
                    .unwrap_or_else(|| "response carried no text".to_string()),
            )],
            fatal: true,
        },
    };
    PredictionRecord {
        frame_id: resp.frame_id.clone(),
        provider_id: resp.provider_id.clone(),
        raw_text: resp.raw_text.clone(),
        label: parsed.label,
        diagnostics: parsed.diagnostics,
        fatal: parsed.fatal,
        latency_ms: resp.latency_ms,
        attempt_count: resp.attempt_count,
        from_cache: resp.from_cache,
        error: resp.error.clone(),
    }
}
