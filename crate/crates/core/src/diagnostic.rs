use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    /// No balanced JSON object could be parsed out of the response.
    NoJsonFound,
    MissingKey,
    UnknownKey,
    OutOfDomain,
    /// A value was accepted after a type conversion (numeric string, integral float).
    TypeCoerced,
    /// More than one JSON object was present; the first was used.
    MultipleObjects,
    /// A value could not be read as an integer at all.
    UnparseableValue,
    /// The provider returned no text (transport or endpoint failure).
    ProviderError,
}

impl DiagnosticKind {
    /// Fatal diagnostics mean the record carries no usable label.
    pub fn is_fatal(self) -> bool {
        matches!(
            self,
            Self::NoJsonFound | Self::UnparseableValue | Self::ProviderError
        )
    }
}

/// One deviation found while validating or parsing a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<i64>,
    pub detail: String,
}

impl Diagnostic {
    pub fn new(kind: DiagnosticKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            key: None,
            value: None,
            detail: detail.into(),
        }
    }

    pub fn with_key(mut self, key: impl Into<String>) -> Self {
        self.key = Some(key.into());
        self
    }

    pub fn missing_key(key: &str) -> Self {
        Self::new(DiagnosticKind::MissingKey, format!("\"{key}\" not present")).with_key(key)
    }

    pub fn unknown_key(key: &str) -> Self {
        Self::new(DiagnosticKind::UnknownKey, format!("\"{key}\" is not a schema attribute")).with_key(key)
    }

    pub fn out_of_domain(key: &str, value: i64, max: u8) -> Self {
        Self {
            kind: DiagnosticKind::OutOfDomain,
            key: Some(key.to_string()),
            value: Some(value),
            detail: format!("{value} is outside 0..={max}"),
        }
    }

    pub fn is_fatal(&self) -> bool {
        self.kind.is_fatal()
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(key) => write!(f, "{:?}({key}): {}", self.kind, self.detail),
            None => write!(f, "{:?}: {}", self.kind, self.detail),
        }
    }
}
