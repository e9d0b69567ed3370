//! Backend registry: a JSON file mapping backend names to an implementation,
//! optional endpoint, credential variable and parameters.
//!
//! ```json
//! {
//!   "backends": {
//!     "qg-mock":  {"kind": "generation", "implementation": "scripted-mock",
//!                  "params": {"fallback": "echo", "script_file": "qg_script.json"}},
//!     "davinci":  {"kind": "generation", "implementation": "http-completions",
//!                  "endpoint": "https://api.example.com/v1/completions",
//!                  "credentials_env": "GEN_API_KEY", "params": {"model": "m"}},
//!     "embedder": {"kind": "embedding", "implementation": "hashing",
//!                  "params": {"dim": 256, "baseline": 0.0}}
//!   }
//! }
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{
    BackendKind, ClassifierBackend, CueWordClassifier, EmbeddingBackend, Fallback,
    GenerationBackend, HashingEmbedder, HeuristicTagger, HttpClassifier, HttpCompletionBackend,
    HttpEmbeddingBackend, HttpSpanPredictor, HttpTagger, ScriptedMock, SpanPredictorBackend,
    TaggerBackend, TailTokensPredictor, WholeSentencePredictor,
};
use crate::backends::prompt_fingerprint;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("no backend named `{0}` in the registry")]
    Unknown(String),
    #[error("backend `{name}` is a {found:?} backend, not {expected:?}")]
    WrongKind {
        name: String,
        expected: BackendKind,
        found: BackendKind,
    },
    #[error("backend `{name}`: unknown implementation `{implementation}` for {kind:?}")]
    UnknownImplementation {
        name: String,
        kind: BackendKind,
        implementation: String,
    },
    #[error("backend `{name}`: {message}")]
    Invalid { name: String, message: String },
    #[error("registry file: {0}")]
    Io(#[from] std::io::Error),
    #[error("registry file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub kind: BackendKind,
    pub implementation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credentials_env: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub backends: BTreeMap<String, BackendSpec>,
    /// Relative file params resolve against this directory.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Registry {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        let mut reg: Registry = serde_json::from_str(&fs::read_to_string(path)?)?;
        reg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(reg)
    }

    pub fn insert(&mut self, name: &str, spec: BackendSpec) {
        self.backends.insert(name.to_string(), spec);
    }

    pub fn spec(&self, name: &str, kind: BackendKind) -> Result<&BackendSpec, RegistryError> {
        let spec = self
            .backends
            .get(name)
            .ok_or_else(|| RegistryError::Unknown(name.to_string()))?;
        if spec.kind != kind {
            return Err(RegistryError::WrongKind {
                name: name.to_string(),
                expected: kind,
                found: spec.kind,
            });
        }
        Ok(spec)
    }

    pub fn generation(&self, name: &str) -> Result<Arc<dyn GenerationBackend>, RegistryError> {
        let spec = self.spec(name, BackendKind::Generation)?;
        match spec.implementation.as_str() {
            "scripted-mock" => {
                let fallback: Fallback = match spec.params.get("fallback") {
                    Some(v) => serde_json::from_value(v.clone()).map_err(|e| invalid(name, e))?,
                    None => Fallback::Error,
                };
                let mut script = BTreeMap::new();
                if let Some(file) = spec.params.get("script_file").and_then(Value::as_str) {
                    let raw = fs::read_to_string(self.resolve(file))?;
                    script = serde_json::from_str(&raw).map_err(|e| invalid(name, e))?;
                }
                if let Some(inline) = spec.params.get("script") {
                    let by_prompt: BTreeMap<String, String> =
                        serde_json::from_value(inline.clone()).map_err(|e| invalid(name, e))?;
                    for (prompt, resp) in by_prompt {
                        script.insert(prompt_fingerprint(&prompt), resp);
                    }
                }
                let mut mock = ScriptedMock::from_script(name, script, fallback);
                if let Some(limit) = spec.params.get("context_limit").and_then(Value::as_u64) {
                    mock = mock.with_context_limit(limit as usize);
                }
                Ok(Arc::new(mock))
            }
            "http-completions" => Ok(Arc::new(HttpCompletionBackend::new(
                name,
                self.endpoint(name, spec)?,
                spec.credentials_env.clone(),
                spec.params.clone(),
            ))),
            _ => Err(self.unknown_impl(name, spec)),
        }
    }

    pub fn embedding(&self, name: &str) -> Result<Arc<dyn EmbeddingBackend>, RegistryError> {
        let spec = self.spec(name, BackendKind::Embedding)?;
        match spec.implementation.as_str() {
            "hashing" => {
                let dim = spec.params.get("dim").and_then(Value::as_u64).unwrap_or(256) as usize;
                let baseline = spec.params.get("baseline").and_then(Value::as_f64).unwrap_or(0.0);
                Ok(Arc::new(HashingEmbedder::new(dim, baseline)))
            }
            "http-embedding" => Ok(Arc::new(
                HttpEmbeddingBackend::new(
                    name,
                    self.endpoint(name, spec)?,
                    spec.credentials_env.clone(),
                    spec.params.clone(),
                )
                .map_err(|e| invalid(name, e))?,
            )),
            _ => Err(self.unknown_impl(name, spec)),
        }
    }

    pub fn span(&self, name: &str) -> Result<Arc<dyn SpanPredictorBackend>, RegistryError> {
        let spec = self.spec(name, BackendKind::Span)?;
        match spec.implementation.as_str() {
            "whole-sentence" => Ok(Arc::new(WholeSentencePredictor::default())),
            "tail-tokens" => {
                let n = spec.params.get("n").and_then(Value::as_u64).unwrap_or(3) as usize;
                Ok(Arc::new(TailTokensPredictor::new(n)))
            }
            "http-span" => Ok(Arc::new(HttpSpanPredictor::new(
                name,
                self.endpoint(name, spec)?,
                spec.credentials_env.clone(),
                spec.params.clone(),
            ))),
            _ => Err(self.unknown_impl(name, spec)),
        }
    }

    pub fn tagger(&self, name: &str) -> Result<Arc<dyn TaggerBackend>, RegistryError> {
        let spec = self.spec(name, BackendKind::Tagger)?;
        match spec.implementation.as_str() {
            "heuristic" => {
                let mut lexicon = HashMap::new();
                if let Some(file) = spec.params.get("lexicon_file").and_then(Value::as_str) {
                    for (n, line) in fs::read_to_string(self.resolve(file))?.lines().enumerate() {
                        if line.trim().is_empty() || line.starts_with('#') {
                            continue;
                        }
                        let (word, tag) = line.split_once('\t').ok_or_else(|| RegistryError::Invalid {
                            name: name.to_string(),
                            message: format!("lexicon line {}: expected word<TAB>tag", n + 1),
                        })?;
                        lexicon.insert(word.to_lowercase(), tag.trim().to_string());
                    }
                }
                Ok(Arc::new(HeuristicTagger::with_lexicon(lexicon)))
            }
            "http-tagger" => Ok(Arc::new(HttpTagger::new(
                name,
                self.endpoint(name, spec)?,
                spec.credentials_env.clone(),
                spec.params.clone(),
            ))),
            _ => Err(self.unknown_impl(name, spec)),
        }
    }

    pub fn classifier(&self, name: &str) -> Result<Arc<dyn ClassifierBackend>, RegistryError> {
        let spec = self.spec(name, BackendKind::Classifier)?;
        match spec.implementation.as_str() {
            "cue-words" => Ok(Arc::new(CueWordClassifier::default())),
            "http-classifier" => Ok(Arc::new(HttpClassifier::new(
                name,
                self.endpoint(name, spec)?,
                spec.credentials_env.clone(),
                spec.params.clone(),
            ))),
            _ => Err(self.unknown_impl(name, spec)),
        }
    }

    fn resolve(&self, file: &str) -> PathBuf {
        let p = Path::new(file);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn endpoint<'a>(&self, name: &str, spec: &'a BackendSpec) -> Result<&'a str, RegistryError> {
        spec.endpoint.as_deref().ok_or_else(|| RegistryError::Invalid {
            name: name.to_string(),
            message: "an endpoint is required".into(),
        })
    }

    fn unknown_impl(&self, name: &str, spec: &BackendSpec) -> RegistryError {
        RegistryError::UnknownImplementation {
            name: name.to_string(),
            kind: spec.kind,
            implementation: spec.implementation.clone(),
        }
    }
}

fn invalid(name: &str, e: impl std::fmt::Display) -> RegistryError {
    RegistryError::Invalid {
        name: name.to_string(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REGISTRY: &str = r#"{
      "backends": {
        "gen": {"kind": "generation", "implementation": "scripted-mock",
                "params": {"fallback": {"fixed": "?"}, "script": {"p": "q"}}},
        "emb": {"kind": "embedding", "implementation": "hashing", "params": {"dim": 8}},
        "span": {"kind": "span", "implementation": "tail-tokens", "params": {"n": 2}},
        "tag": {"kind": "tagger", "implementation": "heuristic"},
        "cls": {"kind": "classifier", "implementation": "cue-words"},
        "remote": {"kind": "generation", "implementation": "http-completions"}
      }
    }"#;

    fn registry() -> Registry {
        serde_json::from_str(REGISTRY).unwrap()
    }

    #[test]
    fn builds_every_local_kind() {
        let r = registry();
        let g = r.generation("gen").unwrap();
        let req = crate::backends::GenerationRequest {
            prompt: "p".into(),
            max_tokens: 4,
            temperature: 0.0,
            stop: vec![],
            num_beams: 1,
        };
        assert_eq!(g.generate(&req).unwrap().text, "q");
        assert!(r.embedding("emb").is_ok());
        assert!(r.span("span").is_ok());
        assert!(r.tagger("tag").is_ok());
        assert!(r.classifier("cls").is_ok());
    }

    #[test]
    fn kind_and_name_errors() {
        let r = registry();
        assert!(matches!(r.embedding("gen"), Err(RegistryError::WrongKind { .. })));
        assert!(matches!(r.generation("nope"), Err(RegistryError::Unknown(_))));
        assert!(matches!(r.generation("remote"), Err(RegistryError::Invalid { .. })));
    }
}
