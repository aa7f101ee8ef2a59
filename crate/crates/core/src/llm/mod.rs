//! Completion gateway: prompt rendering, pluggable providers and a response cache.
//!
//! A [`Gateway`] wraps one [`CompletionProvider`]. Every request is looked up
//! in the on-disk cache first (keyed by provider kind, model and full prompt
//! text); only misses reach the provider. Batches run on a bounded worker pool
//! and come back in request order.

pub mod cache;
pub mod offline;
pub mod prompt;
pub mod remote;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{cache_key, AuditLog, ResponseCache};
pub use offline::{
    offline_edge_score, offline_keywords, offline_soft_label, offline_summarize, OfflineProvider,
};
pub use prompt::{descriptions, render_prompt, PromptKind, RenderedPrompt};
pub use remote::RemoteProvider;

use crate::pool::map_bounded;

/// Failure reported by a provider, before the gateway attaches the prompt hash.
#[derive(Debug, Clone, Error)]
pub enum ProviderError {
    #[error("transport error after {attempts} attempt(s): {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
}

impl ProviderError {
    fn with_attempts(self, n: u32) -> Self {
        match self {
            ProviderError::Transport { detail, .. } => ProviderError::Transport { attempts: n, detail },
            ProviderError::Timeout { .. } => ProviderError::Timeout { attempts: n },
            other => other,
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("prompt {prompt_hash}: {source}")]
    Provider {
        prompt_hash: String,
        #[source]
        source: ProviderError,
    },
    #[error("{kind} prompt takes {} text(s); got {texts} text(s) and {labels} label(s)", kind.arity())]
    Arity {
        kind: PromptKind,
        texts: usize,
        labels: usize,
    },
    #[error("invalid provider configuration: {0}")]
    Config(String),
    #[error("cache I/O: {0}")]
    Io(#[from] std::io::Error),
}

impl GatewayError {
    /// True for errors that come from talking to a model endpoint.
    pub fn is_transport(&self) -> bool {
        matches!(self, GatewayError::Provider { .. })
    }
}

/// Everything a provider may need to answer one prompt. Remote providers send
/// `prompt.full_text`; the offline provider works on the structured fields.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub kind: PromptKind,
    pub prompt: RenderedPrompt,
    pub texts: Vec<String>,
    pub labels: Vec<String>,
    pub class_names: Vec<String>,
}

impl CompletionRequest {
    pub fn new(
        kind: PromptKind,
        dataset_desc: &str,
        texts: &[&str],
        labels: &[&str],
        class_names: &[String],
    ) -> Result<Self, GatewayError> {
        let prompt = render_prompt(kind, dataset_desc, texts, labels)?;
        Ok(Self {
            kind,
            prompt,
            texts: texts.iter().map(|s| s.to_string()).collect(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            class_names: class_names.to_vec(),
        })
    }
}

pub trait CompletionProvider: Send + Sync {
    /// Provider kind, part of the cache key ("offline", "remote", ...).
    fn kind(&self) -> &str;
    fn model(&self) -> &str;
    /// Remote providers get their fresh calls written to the audit log.
    fn is_remote(&self) -> bool {
        false
    }
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Remote,
    #[default]
    Offline,
}

/// Completion provider settings. Remote runs require temperature 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout_secs: f64,
    pub backoff_ms: u64,
    pub cache_dir: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,
    pub workers: usize,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Offline,
            endpoint: "http://localhost:8000".into(),
            model: "meta-llama/Meta-Llama-3-8B-Instruct".into(),
            temperature: 0.0,
            max_retries: 2,
            timeout_secs: 120.0,
            backoff_ms: 500,
            cache_dir: None,
            audit_log: None,
            workers: 4,
            api_key_env: "OPENAI_API_KEY".into(),
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.kind == ProviderKind::Remote && self.temperature != 0.0 {
            return Err(GatewayError::Config(format!(
                "remote completions must use temperature 0, got {}",
                self.temperature
            )));
        }
        if self.kind == ProviderKind::Remote && self.model.trim().is_empty() {
            return Err(GatewayError::Config("remote completions need a model name".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(GatewayError::Config("timeout must be positive".into()));
        }
        Ok(())
    }
}

/// Counts of completions served since the gateway was built.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallStats {
    pub fresh: usize,
    pub cached: usize,
}

pub struct Gateway {
    provider: Arc<dyn CompletionProvider>,
    cache: Option<ResponseCache>,
    audit: Option<AuditLog>,
    workers: usize,
    fresh: AtomicUsize,
    cached: AtomicUsize,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("provider", &self.provider.kind())
            .field("model", &self.provider.model())
            .field("cache", &self.cache.as_ref().map(ResponseCache::dir))
            .field("workers", &self.workers)
            .finish()
    }
}

impl Gateway {
    pub fn new(provider: Arc<dyn CompletionProvider>) -> Self {
        Self {
            provider,
            cache: None,
            audit: None,
            workers: 4,
            fresh: AtomicUsize::new(0),
            cached: AtomicUsize::new(0),
        }
    }

    pub fn offline() -> Self {
        Self::new(Arc::new(OfflineProvider))
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_audit_log(mut self, audit: AuditLog) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    /// Builds the provider, cache and audit log described by `cfg`. The API key
    /// is read from the environment variable named in the config.
    pub fn from_config(cfg: &ProviderConfig) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let provider: Arc<dyn CompletionProvider> = match cfg.kind {
            ProviderKind::Offline => Arc::new(OfflineProvider),
            ProviderKind::Remote => Arc::new(RemoteProvider::new(
                &cfg.endpoint,
                &cfg.model,
                cfg.temperature,
                cfg.max_retries,
                Duration::from_secs_f64(cfg.timeout_secs),
                Duration::from_millis(cfg.backoff_ms),
                std::env::var(&cfg.api_key_env).ok(),
            )),
        };
        let mut gw = Self::new(provider).with_workers(cfg.workers);
        if let Some(dir) = &cfg.cache_dir {
            gw = gw.with_cache(ResponseCache::open(dir)?);
        }
        let audit_path = cfg
            .audit_log
            .clone()
            .or_else(|| cfg.cache_dir.as_ref().map(|d| d.join("audit.log")));
        if cfg.kind == ProviderKind::Remote {
            if let Some(path) = audit_path {
                gw = gw.with_audit_log(AuditLog::open(path)?);
            }
        }
        Ok(gw)
    }

    pub fn provider(&self) -> &dyn CompletionProvider {
        self.provider.as_ref()
    }

    pub fn key_for(&self, request: &CompletionRequest) -> String {
        cache_key(self.provider.kind(), self.provider.model(), &request.prompt.full_text)
    }

    /// Cached completion if present, otherwise a fresh provider call.
    pub fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let key = self.key_for(request);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key)? {
                self.cached.fetch_add(1, Ordering::Relaxed);
                return Ok(hit);
            }
        }
        self.call_provider(request, key)
    }

    /// Skips the cache lookup (the result still replaces the cache entry).
    pub fn complete_fresh(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let key = self.key_for(request);
        self.call_provider(request, key)
    }

    fn call_provider(&self, request: &CompletionRequest, key: String) -> Result<String, GatewayError> {
        let text = self
            .provider
            .complete(request)
            .map_err(|source| GatewayError::Provider {
                prompt_hash: key.clone(),
                source,
            })?;
        self.fresh.fetch_add(1, Ordering::Relaxed);
        if let Some(cache) = &self.cache {
            cache.put(&key, &text)?;
        }
        if self.provider.is_remote() {
            if let Some(audit) = &self.audit {
                audit.record(&key, request.prompt.full_text.len(), text.len())?;
            }
        }
        Ok(text)
    }

    /// Completes every request on the bounded pool. Results are in request
    /// order; on failure the error carries the lowest failing index.
    pub fn complete_batch(
        &self,
        requests: &[CompletionRequest],
    ) -> Result<Vec<String>, (usize, GatewayError)> {
        map_bounded(requests, self.workers, |i, req| self.complete(req).map_err(|e| (i, e)))
    }

    pub fn stats(&self) -> CallStats {
        CallStats {
            fresh: self.fresh.load(Ordering::Relaxed),
            cached: self.cached.load(Ordering::Relaxed),
        }
    }
}
