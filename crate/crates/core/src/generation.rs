//! Shared plumbing for question and elaboration generation: decode
//! parameters, the provenance record, and the truncate-and-call loop.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::{BackendClient, BackendError, CallSource, GenerationRequest};
use crate::prompt::AssembledPrompt;
use crate::tokenize::tokenize;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop: Vec<String>,
    /// 1 is greedy decoding.
    pub num_beams: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            temperature: 0.0,
            max_tokens: 128,
            stop: Vec::new(),
            num_beams: 1,
        }
    }
}

impl DecodeParams {
    pub fn validate(&self) -> Result<(), GenError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GenError::Config(format!(
                "temperature must be a finite value ≥ 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GenError::Config("max_tokens must be positive".into()));
        }
        if self.num_beams == 0 {
            return Err(GenError::Config("num_beams must be positive".into()));
        }
        Ok(())
    }

    pub fn request(&self, prompt: &str) -> GenerationRequest {
        GenerationRequest {
            prompt: prompt.to_string(),
            max_tokens: self.max_tokens,
            temperature: self.temperature,
            stop: self.stop.clone(),
            num_beams: self.num_beams,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Question,
    Elaboration,
}

/// One generated question or elaboration with everything needed to reproduce
/// it. Holds no timestamps, so identical runs produce identical records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub kind: RecordKind,
    /// QG config name or elaboration condition; filled in by the caller.
    #[serde(default)]
    pub system: String,
    #[serde(default)]
    pub instance_id: String,
    /// Annotation the input was built from, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_annotator: Option<String>,
    pub prompt: String,
    pub prompt_sha256: String,
    pub layout_version: String,
    pub backend_id: String,
    pub decode: DecodeParams,
    pub raw_text: String,
    pub text: String,
    pub finish_reason: String,
    /// Earliest context sentences removed to fit the backend's limit.
    pub context_sentences_dropped: usize,
    pub cache_key: String,
}

/// Record plus where the response came from (not part of the record).
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub record: GenerationRecord,
    pub source: CallSource,
}

pub(crate) fn run(
    mut prompt: AssembledPrompt,
    client: &BackendClient,
    decode: &DecodeParams,
    kind: RecordKind,
    post: fn(&str) -> Option<String>,
) -> Result<Generated, GenError> {
    decode.validate()?;
    let mut dropped = 0;
    if let Some(limit) = client.context_limit() {
        while tokenize(&prompt.rendered).len() > limit && prompt.drop_earliest_context() {
            dropped += 1;
        }
    }
    let outcome = loop {
        match client.call(&decode.request(&prompt.rendered)) {
            Ok(o) => break o,
            Err(BackendError::ContextOverflow { .. }) if prompt.drop_earliest_context() => {
                dropped += 1;
            }
            Err(e) => return Err(e.into()),
        }
    };
    let raw = outcome.response.text;
    let text = post(&raw).ok_or_else(|| {
        BackendError::Degenerate(format!("empty {kind:?} output for prompt {}", &outcome.cache_key[..12]))
    })?;
    Ok(Generated {
        record: GenerationRecord {
            kind,
            system: String::new(),
            instance_id: String::new(),
            source_annotator: None,
            prompt_sha256: hex::encode(Sha256::digest(prompt.rendered.as_bytes())),
            prompt: prompt.rendered,
            layout_version: prompt.layout.version,
            backend_id: client.backend_id().to_string(),
            decode: decode.clone(),
            raw_text: raw,
            text,
            finish_reason: outcome.response.finish_reason,
            context_sentences_dropped: dropped,
            cache_key: outcome.cache_key,
        },
        source: outcome.source,
    })
}

pub(crate) fn trimmed(raw: &str) -> Option<String> {
    let t = raw.trim();
    (!t.is_empty()).then(|| t.to_string())
}

pub(crate) fn first_line(raw: &str) -> Option<String> {
    raw.lines().map(str::trim).find(|l| !l.is_empty()).map(String::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn post_processing() {
        assert_eq!(first_line("\n  x \ny").as_deref(), Some("x"));
        assert_eq!(first_line(" \n\t\n"), None);
        assert_eq!(trimmed("  Why? \n").as_deref(), Some("Why?"));
        assert_eq!(trimmed("   "), None);
    }

    #[test]
    fn decode_defaults() {
        let d = DecodeParams::default();
        assert_eq!((d.temperature, d.max_tokens, d.num_beams), (0.0, 128, 1));
        assert!(DecodeParams { max_tokens: 0, ..d }.validate().is_err());
    }
}
