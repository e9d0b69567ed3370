//! Pluggable model backends.
//!
//! Generation goes through [`BackendClient`], which owns the response cache,
//! request coalescing, retries, rate limiting and the in-flight bound.
//! Embedding, span prediction, tagging and question-type classification are
//! plain traits; the crate ships deterministic local implementations of each
//! and thin HTTP clients for remote models.

mod cache;
mod client;
mod http;
mod local;
mod mock;
mod registry;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::QuestionType;
use crate::corpus::ContextWindow;

pub use cache::{canonical_json, cache_key, CacheEntry, ResponseCache};
pub use client::{BackendClient, CallOutcome, CallSource, ClientConfig};
pub use http::{HttpClassifier, HttpCompletionBackend, HttpEmbeddingBackend, HttpSpanPredictor, HttpTagger};
pub use local::{
    CueWordClassifier, HashingEmbedder, HeuristicTagger, ScriptedClassifier, ScriptedSpanPredictor,
    TableEmbedder, TailTokensPredictor, WholeSentencePredictor,
};
pub use mock::{prompt_fingerprint, Fallback, ScriptedMock};
pub use registry::{BackendSpec, Registry, RegistryError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend {backend} unavailable after {attempts} attempts: {last}")]
    Unavailable {
        backend: String,
        attempts: u32,
        last: String,
    },
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend timed out: {0}")]
    Timeout(String),
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("prompt of {tokens} tokens exceeds the backend context limit of {limit}")]
    ContextOverflow { tokens: usize, limit: usize },
    #[error("no scripted response for prompt fingerprint {0}")]
    ScriptedMiss(String),
    #[error("backend produced no usable output: {0}")]
    Degenerate(String),
    #[error("backend failure: {0}")]
    Failed(String),
}

impl BackendError {
    /// Transient failures and timeouts are retried; everything else is final.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transient(_) | BackendError::Timeout(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Generation,
    Embedding,
    Span,
    Classifier,
    Tagger,
}

/// Identity of a configured backend. The id is derived from every other field,
/// so changing the endpoint or any parameter yields a new id (and a new cache
/// namespace).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub backend_id: String,
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

impl BackendDescriptor {
    pub fn new(
        name: &str,
        kind: BackendKind,
        endpoint: Option<String>,
        params: BTreeMap<String, Value>,
    ) -> Self {
        let identity = serde_json::json!({
            "name": name,
            "kind": kind,
            "endpoint": endpoint,
            "params": params,
        });
        let digest = Sha256::digest(canonical_json(&identity).as_bytes());
        BackendDescriptor {
            backend_id: format!("{name}@{}", hex::encode(&digest[..6])),
            kind,
            endpoint,
            params,
        }
    }

    pub fn local(name: &str, kind: BackendKind) -> Self {
        Self::new(name, kind, None, BTreeMap::new())
    }
}

/// Wire request for text generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop: Vec<String>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub num_beams: u32,
}

fn one() -> u32 {
    1
}

fn is_one(n: &u32) -> bool {
    *n == 1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub finish_reason: String,
}

pub trait GenerationBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// Maximum prompt length in canonical tokens, when the backend has one.
    fn context_limit(&self) -> Option<usize> {
        None
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError>;
}

/// Produces one vector per input token; vectors may depend on the whole
/// sequence (contextual embeddings).
pub trait EmbeddingBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// Expected F1 of unrelated text pairs, used for rescaling.
    fn baseline(&self) -> f64;

    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, BackendError>;
}

/// Raw predictor output in token offsets; may fall outside the sentence and is
/// clamped by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSpan {
    pub start: i64,
    pub end: i64,
}

pub trait SpanPredictorBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    fn predict(
        &self,
        anchor_tokens: &[String],
        context: &ContextWindow,
    ) -> Result<RawSpan, BackendError>;
}

/// Penn Treebank style part-of-speech tagger.
pub trait TaggerBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    fn tag(&self, tokens: &[String]) -> Result<Vec<String>, BackendError>;
}

pub trait ClassifierBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    fn classify(&self, question: &str) -> Result<QuestionType, BackendError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_id_tracks_params() {
        let a = BackendDescriptor::new("m", BackendKind::Generation, None, BTreeMap::new());
        let b = BackendDescriptor::new("m", BackendKind::Generation, None, BTreeMap::new());
        assert_eq!(a.backend_id, b.backend_id);

        let mut params = BTreeMap::new();
        params.insert("model".to_string(), Value::from("x"));
        let c = BackendDescriptor::new("m", BackendKind::Generation, None, params);
        assert_ne!(a.backend_id, c.backend_id);

        let d = BackendDescriptor::new(
            "m",
            BackendKind::Generation,
            Some("http://localhost:1".into()),
            BTreeMap::new(),
        );
        assert_ne!(a.backend_id, d.backend_id);
    }

    #[test]
    fn descriptor_id_is_stable_across_processes() {
        // Frozen: a change here invalidates every on-disk cache.
        let a = BackendDescriptor::local("mock", BackendKind::Generation);
        let identity = serde_json::json!({
            "endpoint": null, "kind": "generation", "name": "mock", "params": {}
        });
        let expected = hex::encode(&Sha256::digest(canonical_json(&identity).as_bytes())[..6]);
        assert_eq!(a.backend_id, format!("mock@{expected}"));
    }

    #[test]
    fn greedy_requests_omit_beam_field() {
        let r = GenerationRequest {
            prompt: "p".into(),
            max_tokens: 8,
            temperature: 0.0,
            stop: vec![],
            num_beams: 1,
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"prompt":"p","max_tokens":8,"temperature":0.0,"stop":[]}"#
        );
    }
}
