//! Uniform client over hosted vision-model endpoints plus a deterministic mock.
//!
//! Providers are described in a TOML file:
//!
//! ```toml
//! [[provider]]
//! id = "gpt"
//! adapter = "openai_chat_vision"
//! base_url = "https://api.openai.com/v1"
//! model = "gpt-4o"
//! auth_env_var = "OPENAI_API_KEY"
//! max_in_flight = 4
//! retry = { max_attempts = 3, base_backoff_ms = 500 }
//! ```
//!
//! API keys are only ever read from the environment variable named by
//! `auth_env_var`.

mod batch;
mod cache;
mod mock;
mod openai;
mod rest;

pub use batch::{run_batch, BatchError, BatchOutput, ProviderStats};
pub use cache::{CacheEntry, ResponseCache};
pub use mock::MockFixtures;
pub use rest::RestSettings;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};
use thiserror::Error;

use crate::prompt::{DecodeParams, ModelRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adapter {
    /// `POST {base_url}/chat/completions` with an image_url content part.
    #[serde(rename = "openai_chat_vision")]
    OpenAiChatVision,
    /// `POST {base_url}` with a configurable JSON body template.
    GenericRestJson,
    /// Replays fixture responses keyed by frame id; never touches the network.
    Mock,
}

impl Adapter {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::OpenAiChatVision => "openai_chat_vision",
            Self::GenericRestJson => "generic_rest_json",
            Self::Mock => "mock",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    #[serde(default = "RetryPolicy::default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "RetryPolicy::default_backoff")]
    pub base_backoff_ms: u64,
}

impl RetryPolicy {
    fn default_attempts() -> u32 {
        3
    }

    fn default_backoff() -> u64 {
        500
    }

    /// Exponential backoff with jitter: `base * 2^(attempt-1)` scaled by a factor in [0.5, 1.0].
    pub fn backoff(&self, attempt: u32) -> Duration {
        let exp = self.base_backoff_ms.saturating_mul(1u64 << (attempt.saturating_sub(1)).min(16));
        let jitter: f64 = rand::rng().random_range(0.5..=1.0);
        Duration::from_millis((exp as f64 * jitter) as u64)
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: Self::default_attempts(),
            base_backoff_ms: Self::default_backoff(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSettings {
    /// JSONL file of `{"frame_id": ..., "raw_text": ...}` or `{"frame_id": ..., "label": {...}}`.
    pub fixtures: PathBuf,
    /// Returned for frames missing from the fixture file; otherwise such frames error.
    #[serde(default)]
    pub default_response: Option<String>,
    /// Reported latency for every mock reply.
    #[serde(default)]
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub id: String,
    pub adapter: Adapter,
    #[serde(default)]
    pub base_url: Option<String>,
    pub model: String,
    #[serde(default)]
    pub auth_env_var: Option<String>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub decode: DecodeParams,
    #[serde(default)]
    pub rest: Option<RestSettings>,
    #[serde(default)]
    pub mock: Option<MockSettings>,
}

fn default_in_flight() -> usize {
    4
}

fn default_timeout() -> u64 {
    120_000
}

impl ProviderConfig {
    /// A mock provider replaying `fixtures`.
    pub fn mock(id: impl Into<String>, fixtures: impl Into<PathBuf>) -> Self {
        let id = id.into();
        Self {
            model: format!("mock-{id}"),
            id,
            adapter: Adapter::Mock,
            base_url: None,
            auth_env_var: None,
            max_in_flight: default_in_flight(),
            retry: RetryPolicy::default(),
            timeout_ms: default_timeout(),
            decode: DecodeParams::default(),
            rest: None,
            mock: Some(MockSettings {
                fixtures: fixtures.into(),
                default_response: None,
                latency_ms: 0,
            }),
        }
    }

    /// Checks the config can be used, without touching the network.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| ConfigError::Invalid {
            id: self.id.clone(),
            message: msg.to_string(),
        };
        if self.id.is_empty()
            || !self
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        {
            return Err(bad("id must be non-empty and use only [A-Za-z0-9._-]"));
        }
        if self.max_in_flight == 0 {
            return Err(bad("max_in_flight must be at least 1"));
        }
        if self.retry.max_attempts == 0 {
            return Err(bad("retry.max_attempts must be at least 1"));
        }
        if !self.decode.temperature.is_finite() || self.decode.temperature < 0.0 {
            return Err(bad("decode.temperature must be >= 0"));
        }
        match self.adapter {
            Adapter::Mock => {
                if self.mock.is_none() {
                    return Err(bad("mock adapter needs a [provider.mock] table"));
                }
            }
            Adapter::OpenAiChatVision | Adapter::GenericRestJson => {
                let url = self.base_url.as_deref().ok_or_else(|| bad("base_url is required"))?;
                reqwest::Url::parse(url).map_err(|e| bad(&format!("base_url: {e}")))?;
                if self.adapter == Adapter::GenericRestJson && self.rest.is_none() {
                    return Err(bad("generic_rest_json adapter needs a [provider.rest] table"));
                }
            }
        }
        Ok(())
    }

    /// Reads the API key; `None` for the mock adapter or when no variable is configured.
    pub fn resolve_auth(&self) -> Result<Option<String>, ProviderError> {
        if self.adapter == Adapter::Mock {
            return Ok(None);
        }
        let Some(var) = &self.auth_env_var else {
            return Ok(None);
        };
        match std::env::var(var) {
            Ok(key) if !key.is_empty() => Ok(Some(key)),
            _ => Err(ProviderError::new(
                ProviderErrorKind::AuthMissing,
                format!("environment variable {var} is not set"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProviderFile {
    #[serde(default)]
    provider: Vec<ProviderConfig>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("provider \"{id}\": {message}")]
    Invalid { id: String, message: String },
    #[error("duplicate provider id \"{0}\"")]
    DuplicateId(String),
    #[error("no providers configured")]
    NoProviders,
    #[error("provider \"{id}\": {source}")]
    Auth {
        id: String,
        #[source]
        source: ProviderError,
    },
    #[error("provider \"{id}\": mock fixtures: {message}")]
    Fixtures { id: String, message: String },
}

/// Parses a provider file. Relative mock fixture paths resolve against `base_dir`.
pub fn parse_provider_configs(text: &str, base_dir: &Path, origin: &Path) -> Result<Vec<ProviderConfig>, ConfigError> {
    let file: ProviderFile = toml::from_str(text).map_err(|source| ConfigError::Parse {
        path: origin.to_path_buf(),
        source: Box::new(source),
    })?;
    let mut configs = file.provider;
    for cfg in &mut configs {
        if let Some(mock) = &mut cfg.mock {
            if mock.fixtures.is_relative() {
                mock.fixtures = base_dir.join(&mock.fixtures);
            }
        }
    }
    check_configs(&configs)?;
    Ok(configs)
}

pub fn load_provider_configs(path: &Path) -> Result<Vec<ProviderConfig>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_provider_configs(&text, base, path)
}

/// Validates every config and the uniqueness of ids.
pub fn check_configs(configs: &[ProviderConfig]) -> Result<(), ConfigError> {
    if configs.is_empty() {
        return Err(ConfigError::NoProviders);
    }
    let mut ids = HashSet::new();
    for cfg in configs {
        cfg.validate()?;
        if !ids.insert(cfg.id.as_str()) {
            return Err(ConfigError::DuplicateId(cfg.id.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderErrorKind {
    AuthMissing,
    Timeout,
    RateLimited,
    ServerError,
    HttpStatus,
    Transport,
    MalformedEndpointReply,
    MockFixtureMissing,
    InputError,
}

impl ProviderErrorKind {
    pub fn is_retryable(self) -> bool {
        matches!(
            self,
            Self::Timeout | Self::RateLimited | Self::ServerError | Self::Transport
        )
    }
}

/// Terminal failure of a provider call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
pub struct ProviderError {
    pub kind: ProviderErrorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    pub message: String,
}

impl ProviderError {
    pub fn new(kind: ProviderErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            status: None,
            message: message.into(),
        }
    }

    fn from_status(status: u16, body: &str) -> Self {
        let kind = match status {
            429 => ProviderErrorKind::RateLimited,
            408 => ProviderErrorKind::Timeout,
            500..=599 => ProviderErrorKind::ServerError,
            _ => ProviderErrorKind::HttpStatus,
        };
        let snippet: String = body.chars().take(200).collect();
        Self {
            kind,
            status: Some(status),
            message: format!("HTTP {status}: {snippet}"),
        }
    }

    fn from_reqwest(err: reqwest::Error) -> Self {
        let kind = if err.is_timeout() {
            ProviderErrorKind::Timeout
        } else {
            ProviderErrorKind::Transport
        };
        Self::new(kind, err.to_string())
    }
}

impl fmt::Display for ProviderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

/// Outcome of one provider call. Exactly one of `raw_text` / `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub provider_id: String,
    pub frame_id: String,
    pub raw_text: Option<String>,
    pub latency_ms: u64,
    pub attempt_count: u32,
    pub from_cache: bool,
    pub error: Option<ProviderError>,
}

#[derive(Serialize)]
struct CacheKeyFields<'a> {
    adapter: &'static str,
    model: &'a str,
    prompt_sha256: String,
    image_sha256: &'a str,
    temperature_bits: String,
    max_output_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    mock_provider: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mock_frame: Option<&'a str>,
}

/// Digest identifying a request's response in the cache.
///
/// Covers adapter, model, prompt hash, image hash and decode parameters. Mock
/// providers additionally include their id and the frame id, since they answer
/// by frame rather than by image content.
pub fn cache_key(req: &ModelRequest, cfg: &ProviderConfig) -> String {
    let is_mock = cfg.adapter == Adapter::Mock;
    let fields = CacheKeyFields {
        adapter: cfg.adapter.as_str(),
        model: &cfg.model,
        prompt_sha256: req.prompt.sha256(),
        image_sha256: &req.image.sha256,
        temperature_bits: format!("{:016x}", req.decode_params.temperature.to_bits()),
        max_output_tokens: req.decode_params.max_output_tokens,
        mock_provider: is_mock.then_some(cfg.id.as_str()),
        mock_frame: if is_mock { req.frame_id.as_deref() } else { None },
    };
    let canonical = serde_json::to_vec(&fields).expect("cache key fields serialize");
    hex::encode(Sha256::digest(canonical))
}

/// A configured provider ready to answer requests.
pub struct Provider {
    cfg: ProviderConfig,
    http: reqwest::Client,
    fixtures: Option<MockFixtures>,
    requests_sent: AtomicU64,
}

impl fmt::Debug for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Provider")
            .field("id", &self.cfg.id)
            .field("adapter", &self.cfg.adapter)
            .finish_non_exhaustive()
    }
}

impl Provider {
    pub fn new(cfg: ProviderConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let fixtures = match (&cfg.adapter, &cfg.mock) {
            (Adapter::Mock, Some(mock)) => Some(MockFixtures::load(mock).map_err(|message| ConfigError::Fixtures {
                id: cfg.id.clone(),
                message,
            })?),
            _ => None,
        };
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| ConfigError::Invalid {
                id: cfg.id.clone(),
                message: format!("http client: {e}"),
            })?;
        Ok(Self {
            cfg,
            http,
            fixtures,
            requests_sent: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    /// Requests issued so far (HTTP attempts, or mock replays).
    pub fn requests_sent(&self) -> u64 {
        self.requests_sent.load(Ordering::Relaxed)
    }

    /// Sends `req`, retrying transient failures per the retry policy.
    pub async fn query(&self, req: &ModelRequest) -> ModelResponse {
        let frame_id = req.frame_id.clone().unwrap_or_default();
        let respond = |raw_text, error, attempt_count, latency_ms| ModelResponse {
            provider_id: self.cfg.id.clone(),
            frame_id: frame_id.clone(),
            raw_text,
            latency_ms,
            attempt_count,
            from_cache: false,
            error,
        };
        let auth = match self.cfg.resolve_auth() {
            Ok(auth) => auth,
            Err(e) => return respond(None, Some(e), 0, 0),
        };
        let started = Instant::now();
        let max_attempts = self.cfg.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.requests_sent.fetch_add(1, Ordering::Relaxed);
            let outcome = self.send_once(req, auth.as_deref()).await;
            match outcome {
                Ok(text) => {
                    let latency = match &self.cfg.mock {
                        Some(mock) if self.cfg.adapter == Adapter::Mock => mock.latency_ms,
                        _ => started.elapsed().as_millis() as u64,
                    };
                    return respond(Some(text), None, attempt, latency);
                }
                Err(e) if e.kind.is_retryable() && attempt < max_attempts => {
                    tokio::time::sleep(self.cfg.retry.backoff(attempt)).await;
                }
                Err(e) => return respond(None, Some(e), attempt, started.elapsed().as_millis() as u64),
            }
        }
    }

    async fn send_once(&self, req: &ModelRequest, auth: Option<&str>) -> Result<String, ProviderError> {
        match self.cfg.adapter {
            Adapter::Mock => {
                let fixtures = self.fixtures.as_ref().expect("mock fixtures loaded in Provider::new");
                fixtures.reply(req.frame_id.as_deref().unwrap_or_default())
            }
            Adapter::OpenAiChatVision => {
                let base = self.cfg.base_url.as_deref().expect("validated");
                let url = format!("{}/chat/completions", base.trim_end_matches('/'));
                let body = openai::request_body(&self.cfg.model, req);
                let mut builder = self.http.post(url).header(reqwest::header::CONTENT_TYPE, "application/json");
                if let Some(key) = auth {
                    builder = builder.bearer_auth(key);
                }
                let text = self.send(builder.body(body)).await?;
                openai::extract_text(&text)
            }
            Adapter::GenericRestJson => {
                let rest = self.cfg.rest.as_ref().expect("validated");
                let base = self.cfg.base_url.as_deref().expect("validated");
                let body = rest.render(&self.cfg.model, req)?;
                let mut url = reqwest::Url::parse(base).map_err(|e| ProviderError::new(ProviderErrorKind::InputError, e.to_string()))?;
                let mut auth_header = None;
                if let Some(key) = auth {
                    match &rest.auth_query_param {
                        Some(param) => {
                            url.query_pairs_mut().append_pair(param, key);
                        }
                        None => auth_header = Some((rest.auth_header.as_str(), format!("{}{key}", rest.auth_prefix))),
                    }
                }
                let mut builder = self.http.post(url).header(reqwest::header::CONTENT_TYPE, "application/json");
                if let Some((name, value)) = auth_header {
                    builder = builder.header(name, value);
                }
                let text = self.send(builder.body(body)).await?;
                rest.extract_text(&text)
            }
        }
    }

    async fn send(&self, builder: reqwest::RequestBuilder) -> Result<String, ProviderError> {
        let resp = builder.send().await.map_err(ProviderError::from_reqwest)?;
        let status = resp.status();
        let body = resp.text().await.map_err(ProviderError::from_reqwest)?;
        if !status.is_success() {
            return Err(ProviderError::from_status(status.as_u16(), &body));
        }
        Ok(body)
    }
}

/// One-off query; prefer [`Provider`] when issuing many requests.
pub async fn query(req: &ModelRequest, cfg: &ProviderConfig) -> Result<ModelResponse, ConfigError> {
    Ok(Provider::new(cfg.clone())?.query(req).await)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{build_request, ImagePayload, MediaType};

    fn request(bytes: &[u8], temperature: f64) -> ModelRequest {
        build_request(
            ImagePayload::new(MediaType::Jpeg, bytes),
            DecodeParams {
                temperature,
                max_output_tokens: 1024,
            },
        )
        .unwrap()
    }

    fn openai_cfg(model: &str) -> ProviderConfig {
        ProviderConfig {
            id: "gpt".into(),
            adapter: Adapter::OpenAiChatVision,
            base_url: Some("http://localhost:1/v1".into()),
            model: model.into(),
            auth_env_var: Some("SCENEVOTE_TEST_NEVER_SET_KEY".into()),
            max_in_flight: 2,
            retry: RetryPolicy::default(),
            timeout_ms: 1000,
            decode: DecodeParams::default(),
            rest: None,
            mock: None,
        }
    }

    #[test]
    fn cache_key_fields() {
        let img = [0xFF, 0xD8, 0xFF, 1, 2];
        let cfg = openai_cfg("gpt-4o");
        let a = cache_key(&request(&img, 0.0), &cfg);
        assert_eq!(a, cache_key(&request(&img, 0.0), &cfg));
        assert_eq!(a.len(), 64);
        assert_ne!(a, cache_key(&request(&img, 0.2), &cfg));
        assert_ne!(a, cache_key(&request(&img, 0.0), &openai_cfg("pixtral-12b")));
        assert_ne!(a, cache_key(&request(&[0xFF, 0xD8, 0xFF, 9], 0.0), &cfg));
        // frame id only matters for mocks
        assert_eq!(a, cache_key(&request(&img, 0.0).for_frame("x"), &cfg));
        let mock = ProviderConfig::mock("m", "f.jsonl");
        assert_ne!(
            cache_key(&request(&img, 0.0).for_frame("x"), &mock),
            cache_key(&request(&img, 0.0).for_frame("y"), &mock)
        );
    }

    #[test]
    fn backoff_grows_and_jitters() {
        let policy = RetryPolicy {
            max_attempts: 3,
            base_backoff_ms: 500,
        };
        for _ in 0..20 {
            let first = policy.backoff(1).as_millis();
            let third = policy.backoff(3).as_millis();
            assert!((250..=500).contains(&first), "{first}");
            assert!((1000..=2000).contains(&third), "{third}");
        }
    }

    #[tokio::test]
    async fn missing_auth_fails_before_network() {
        let provider = Provider::new(openai_cfg("gpt-4o")).unwrap();
        let resp = provider.query(&request(&[0xFF, 0xD8, 0xFF], 0.0).for_frame("f")).await;
        assert_eq!(resp.error.unwrap().kind, ProviderErrorKind::AuthMissing);
        assert!(resp.raw_text.is_none());
        assert_eq!(provider.requests_sent(), 0);
        assert_eq!(resp.attempt_count, 0);
    }

    #[test]
    fn config_file_parsing() {
        let text = r#"
            [[provider]]
            id = "gpt"
            adapter = "openai_chat_vision"
            base_url = "https://api.openai.com/v1"
            model = "gpt-4o"
            auth_env_var = "OPENAI_API_KEY"

            [[provider]]
            id = "mock"
            adapter = "mock"
            model = "replay"
            max_in_flight = 8
            retry = { max_attempts = 5, base_backoff_ms = 10 }
            decode = { temperature = 0.2, max_output_tokens = 256 }
            mock = { fixtures = "fx/mock.jsonl" }
        "#;
        let cfgs = parse_provider_configs(text, Path::new("/cfg"), Path::new("p.toml")).unwrap();
        assert_eq!(cfgs.len(), 2);
        assert_eq!(cfgs[0].retry, RetryPolicy::default());
        assert_eq!(cfgs[0].max_in_flight, 4);
        assert_eq!(cfgs[1].retry.max_attempts, 5);
        assert_eq!(cfgs[1].decode.max_output_tokens, 256);
        assert_eq!(cfgs[1].mock.as_ref().unwrap().fixtures, PathBuf::from("/cfg/fx/mock.jsonl"));

        let dup = format!("{text}\n[[provider]]\nid = \"gpt\"\nadapter = \"mock\"\nmodel = \"x\"\nmock = {{ fixtures = \"a\" }}\n");
        assert!(matches!(
            parse_provider_configs(&dup, Path::new("."), Path::new("p.toml")),
            Err(ConfigError::DuplicateId(_))
        ));
        let zero = text.replace("max_in_flight = 8", "max_in_flight = 0");
        assert!(matches!(
            parse_provider_configs(&zero, Path::new("."), Path::new("p.toml")),
            Err(ConfigError::Invalid { .. })
        ));
        let secret = text.replace("auth_env_var = \"OPENAI_API_KEY\"", "api_key = \"sk-123\"");
        assert!(matches!(
            parse_provider_configs(&secret, Path::new("."), Path::new("p.toml")),
            Err(ConfigError::Parse { .. })
        ));
    }
}
