//! Runs every retained frame through every provider.

use futures::stream::{self, StreamExt};
use serde::Serialize;
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

use super::{cache_key, CacheEntry, ConfigError, ModelResponse, Provider, ProviderConfig, ProviderError, ProviderErrorKind, ResponseCache};
use crate::dataset::{encode_image, filter_frames, DatasetManifest, EmptyDataset, ExclusionCounts};
use crate::parsing::{parse_response, CoercionPolicy};
use crate::predictions::PredictionSet;
use crate::prompt::{build_prompt, ImagePayload, ModelRequest, PromptError};
use crate::schema::AttributeSchema;

#[derive(Debug, Error)]
pub enum BatchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    EmptyDataset(#[from] EmptyDataset),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("cache directory {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ProviderStats {
    pub provider_id: String,
    pub records: usize,
    pub cache_hits: usize,
    /// HTTP attempts (or mock replays) issued during this run.
    pub network_requests: u64,
    pub errors: usize,
    pub fatal_parses: usize,
    /// Cache writes that failed; the records themselves are unaffected.
    pub cache_write_failures: usize,
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub sets: Vec<PredictionSet>,
    pub stats: Vec<ProviderStats>,
    pub exclusions: ExclusionCounts,
}

impl BatchOutput {
    pub fn network_requests(&self) -> u64 {
        self.stats.iter().map(|s| s.network_requests).sum()
    }

    pub fn record_count(&self) -> usize {
        self.sets.iter().map(PredictionSet::len).sum()
    }
}

struct FrameJob {
    frame_id: String,
    image: Result<ImagePayload, String>,
}

/// Queries every retained frame with every provider.
///
/// Cache hits skip the network. Misses run with at most `max_in_flight`
/// concurrent requests per provider. Every frame yields a record; per-frame
/// failures are recorded on the record, and only configuration problems abort.
pub async fn run_batch(
    manifest: &DatasetManifest,
    cfgs: &[ProviderConfig],
    cache_dir: &Path,
    schema: &AttributeSchema,
    policy: CoercionPolicy,
) -> Result<BatchOutput, BatchError> {
    super::check_configs(cfgs)?;
    for cfg in cfgs {
        cfg.resolve_auth().map_err(|source| ConfigError::Auth {
            id: cfg.id.clone(),
            source,
        })?;
    }
    let (frames, exclusions) = filter_frames(manifest)?;
    let prompt = build_prompt()?;
    let cache = ResponseCache::open(cache_dir).map_err(|source| BatchError::Cache {
        path: cache_dir.display().to_string(),
        source,
    })?;
    let providers = cfgs
        .iter()
        .cloned()
        .map(Provider::new)
        .collect::<Result<Vec<_>, _>>()?;

    let jobs: Vec<FrameJob> = frames
        .entries
        .iter()
        .map(|e| FrameJob {
            frame_id: e.frame_id.clone(),
            image: encode_image(&e.image_path).map_err(|err| err.to_string()),
        })
        .collect();

    let per_provider = providers.iter().map(|provider| {
        let cache = &cache;
        let jobs = &jobs;
        let prompt = &prompt;
        async move {
            let cfg = provider.config();
            let responses: Vec<(ModelResponse, bool)> = stream::iter(jobs.iter())
                .map(|job| async move {
                    let image = match &job.image {
                        Ok(image) => image.clone(),
                        Err(msg) => {
                            let resp = error_response(cfg, &job.frame_id, ProviderError::new(ProviderErrorKind::InputError, msg.clone()));
                            return (resp, true);
                        }
                    };
                    let req = ModelRequest {
                        prompt: prompt.clone(),
                        image,
                        decode_params: cfg.decode,
                        frame_id: Some(job.frame_id.clone()),
                    };
                    fetch(provider, cache, &req).await
                })
                .buffer_unordered(cfg.max_in_flight)
                .collect()
                .await;

            let mut by_frame: HashMap<String, ModelResponse> = HashMap::with_capacity(responses.len());
            let mut stats = ProviderStats {
                provider_id: cfg.id.clone(),
                network_requests: provider.requests_sent(),
                ..ProviderStats::default()
            };
            for (resp, cache_ok) in responses {
                stats.cache_hits += usize::from(resp.from_cache);
                stats.errors += usize::from(resp.error.is_some());
                stats.cache_write_failures += usize::from(!cache_ok);
                by_frame.insert(resp.frame_id.clone(), resp);
            }
            let mut set = PredictionSet::new(cfg.id.clone());
            for job in jobs {
                let resp = by_frame.remove(&job.frame_id).expect("one response per frame");
                set.insert(parse_response(&resp, schema, policy));
            }
            stats.records = set.len();
            stats.fatal_parses = set.fatal_count();
            (set, stats)
        }
    });
    let results = futures::future::join_all(per_provider).await;
    let (sets, stats) = results.into_iter().unzip();
    Ok(BatchOutput { sets, stats, exclusions })
}

fn error_response(cfg: &ProviderConfig, frame_id: &str, error: ProviderError) -> ModelResponse {
    ModelResponse {
        provider_id: cfg.id.clone(),
        frame_id: frame_id.to_string(),
        raw_text: None,
        latency_ms: 0,
        attempt_count: 0,
        from_cache: false,
        error: Some(error),
    }
}

/// Cache lookup, then query on a miss. The flag is false when a cache write failed.
async fn fetch(provider: &Provider, cache: &ResponseCache, req: &ModelRequest) -> (ModelResponse, bool) {
    let cfg = provider.config();
    let key = cache_key(req, cfg);
    let frame_id = req.frame_id.clone().unwrap_or_default();
    if let Some(hit) = cache.get(&key) {
        let resp = ModelResponse {
            provider_id: cfg.id.clone(),
            frame_id,
            raw_text: Some(hit.raw_text),
            latency_ms: hit.latency_ms,
            attempt_count: 0,
            from_cache: true,
            error: None,
        };
        return (resp, true);
    }
    let resp = provider.query(req).await;
    let mut cache_ok = true;
    if let Some(text) = &resp.raw_text {
        let entry = CacheEntry {
            cache_key: key,
            provider_id: cfg.id.clone(),
            model: cfg.model.clone(),
            frame_id,
            raw_text: text.clone(),
            latency_ms: resp.latency_ms,
            attempt_count: resp.attempt_count,
        };
        cache_ok = cache.put(&entry).is_ok();
    }
    (resp, cache_ok)
}

