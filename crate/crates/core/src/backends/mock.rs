use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{
    canonical_json, BackendDescriptor, BackendError, BackendKind, GenerationBackend,
    GenerationRequest, GenerationResponse,
};
use crate::tokenize::tokenize;

/// Hex SHA-256 of the prompt text; the lookup key for scripted responses.
pub fn prompt_fingerprint(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// What a [`ScriptedMock`] does with a prompt that is not in its script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    Error,
    Fixed(String),
    /// `echo <first 16 hex chars of the prompt fingerprint>`.
    Echo,
}

/// Deterministic generation backend driven by a prompt-fingerprint script.
#[derive(Debug)]
pub struct ScriptedMock {
    name: String,
    descriptor: BackendDescriptor,
    script: BTreeMap<String, String>,
    fallback: Fallback,
    context_limit: Option<usize>,
    calls: AtomicUsize,
}

impl ScriptedMock {
    pub fn new(name: &str, fallback: Fallback) -> Self {
        let mut mock = ScriptedMock {
            name: name.to_string(),
            descriptor: BackendDescriptor::local(name, BackendKind::Generation),
            script: BTreeMap::new(),
            fallback,
            context_limit: None,
            calls: AtomicUsize::new(0),
        };
        mock.refresh_descriptor();
        mock
    }

    pub fn echo(name: &str) -> Self {
        Self::new(name, Fallback::Echo)
    }

    /// Script keyed by prompt fingerprints.
    pub fn from_script(name: &str, script: BTreeMap<String, String>, fallback: Fallback) -> Self {
        let mut mock = Self::new(name, fallback);
        mock.script = script;
        mock.refresh_descriptor();
        mock
    }

    pub fn with_response(mut self, prompt: &str, response: &str) -> Self {
        self.script
            .insert(prompt_fingerprint(prompt), response.to_string());
        self.refresh_descriptor();
        self
    }

    /// Rejects prompts longer than `tokens` canonical tokens.
    pub fn with_context_limit(mut self, tokens: usize) -> Self {
        self.context_limit = Some(tokens);
        self.refresh_descriptor();
        self
    }

    /// Number of `generate` invocations so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn respond(&self, prompt: &str) -> Result<String, BackendError> {
        let fp = prompt_fingerprint(prompt);
        if let Some(r) = self.script.get(&fp) {
            return Ok(r.clone());
        }
        match &self.fallback {
            Fallback::Error => Err(BackendError::ScriptedMiss(fp)),
            Fallback::Fixed(s) => Ok(s.clone()),
            Fallback::Echo => Ok(format!("echo {}", &fp[..16])),
        }
    }

    fn refresh_descriptor(&mut self) {
        let script_hash = hex::encode(Sha256::digest(
            canonical_json(&serde_json::to_value(&self.script).expect("map serializes")).as_bytes(),
        ));
        let mut params = BTreeMap::new();
        params.insert("script_sha256".into(), Value::from(script_hash));
        params.insert(
            "fallback".into(),
            serde_json::to_value(&self.fallback).expect("fallback serializes"),
        );
        if let Some(limit) = self.context_limit {
            params.insert("context_limit".into(), Value::from(limit));
        }
        self.descriptor = BackendDescriptor::new(&self.name, BackendKind::Generation, None, params);
    }
}

impl GenerationBackend for ScriptedMock {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn context_limit(&self) -> Option<usize> {
        self.context_limit
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(limit) = self.context_limit {
            let tokens = tokenize(&request.prompt).len();
            if tokens > limit {
                return Err(BackendError::ContextOverflow { tokens, limit });
            }
        }
        Ok(GenerationResponse {
            text: self.respond(&request.prompt)?,
            finish_reason: "stop".into(),
        })
    }
}
