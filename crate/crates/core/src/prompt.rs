//! The fixed zero-shot scene prompt and provider-agnostic request packaging.

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

const PROMPT_ASSET: &str = include_str!("../assets/prompt.txt");

/// SHA-256 of `assets/prompt.txt`. Changing the asset requires updating this.
pub const PROMPT_SHA256: &str = "f5345843006e6bd175a3f478fd68542af23fea5f91a6ecb4cea199220bc3d94c";

pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 1024;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt asset digest mismatch: expected {expected}, got {actual}")]
    CorruptAsset { expected: String, actual: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum RequestError {
    #[error("image payload is empty")]
    EmptyImage,
    #[error("unsupported media type \"{0}\" (expected image/jpeg or image/png)")]
    UnsupportedMediaType(String),
    #[error("temperature must be a finite value >= 0, got {0}")]
    InvalidTemperature(f64),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct PromptText {
    text: String,
}

impl PromptText {
    /// Accepts `text` only if it hashes to [`PROMPT_SHA256`].
    pub fn from_asset(text: &str) -> Result<Self, PromptError> {
        let actual = sha256_hex(text.as_bytes());
        if actual != PROMPT_SHA256 {
            return Err(PromptError::CorruptAsset {
                expected: PROMPT_SHA256.to_string(),
                actual,
            });
        }
        Ok(Self {
            text: text.to_string(),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn sha256(&self) -> String {
        sha256_hex(self.text.as_bytes())
    }
}

impl fmt::Display for PromptText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Returns the embedded prompt after checking its digest.
pub fn build_prompt() -> Result<PromptText, PromptError> {
    PromptText::from_asset(PROMPT_ASSET)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MediaType {
    #[serde(rename = "image/jpeg")]
    Jpeg,
    #[serde(rename = "image/png")]
    Png,
}

impl MediaType {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Jpeg => "image/jpeg",
            Self::Png => "image/png",
        }
    }

    /// Detects JPEG or PNG from the leading bytes.
    pub fn sniff(bytes: &[u8]) -> Option<Self> {
        const PNG: &[u8] = b"\x89PNG\r\n\x1a\n";
        if bytes.starts_with(PNG) {
            Some(Self::Png)
        } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
            Some(Self::Jpeg)
        } else {
            None
        }
    }
}

impl FromStr for MediaType {
    type Err = RequestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "image/jpeg" | "image/jpg" | "jpeg" | "jpg" => Ok(Self::Jpeg),
            "image/png" | "png" => Ok(Self::Png),
            other => Err(RequestError::UnsupportedMediaType(other.to_string())),
        }
    }
}

impl fmt::Display for MediaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An encoded frame ready to attach to a request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImagePayload {
    pub media_type: MediaType,
    #[serde(skip)]
    pub data_base64: String,
    pub sha256: String,
    pub byte_len: usize,
}

impl ImagePayload {
    pub fn new(media_type: MediaType, bytes: &[u8]) -> Self {
        Self {
            media_type,
            data_base64: base64::engine::general_purpose::STANDARD.encode(bytes),
            sha256: sha256_hex(bytes),
            byte_len: bytes.len(),
        }
    }

    /// Parses a declared media type string, e.g. from an API caller.
    pub fn with_declared_type(media_type: &str, bytes: &[u8]) -> Result<Self, RequestError> {
        Ok(Self::new(media_type.parse()?, bytes))
    }

    pub fn is_empty(&self) -> bool {
        self.byte_len == 0
    }

    pub fn data_url(&self) -> String {
        format!("data:{};base64,{}", self.media_type, self.data_base64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }
}

/// One prompt plus one image. No exemplars are ever attached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRequest {
    pub prompt: PromptText,
    pub image: ImagePayload,
    pub decode_params: DecodeParams,
    /// Frame the image came from; only the mock adapter reads it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame_id: Option<String>,
}

impl ModelRequest {
    pub fn for_frame(mut self, frame_id: impl Into<String>) -> Self {
        self.frame_id = Some(frame_id.into());
        self
    }
}

#[derive(Debug, Error)]
pub enum BuildRequestError {
    #[error(transparent)]
    Input(#[from] RequestError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

pub fn build_request(image: ImagePayload, params: DecodeParams) -> Result<ModelRequest, BuildRequestError> {
    if image.is_empty() {
        return Err(RequestError::EmptyImage.into());
    }
    if !params.temperature.is_finite() || params.temperature < 0.0 {
        return Err(RequestError::InvalidTemperature(params.temperature).into());
    }
    Ok(ModelRequest {
        prompt: build_prompt()?,
        image,
        decode_params: params,
        frame_id: None,
    })
}
