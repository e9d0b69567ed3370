//! JSON-over-HTTP clients for remote models.
//!
//! Generation speaks the common completions shape
//! (`{model, prompt, max_tokens, temperature, stop}` →
//! `{choices: [{text, finish_reason}]}`). The other kinds use small
//! purpose-built bodies documented on each type.

use std::collections::BTreeMap;
use std::time::Duration;

use serde_json::{json, Value};

use super::{
    BackendDescriptor, BackendError, BackendKind, ClassifierBackend, EmbeddingBackend,
    GenerationBackend, GenerationRequest, GenerationResponse, RawSpan, SpanPredictorBackend,
    TaggerBackend,
};
use crate::analysis::QuestionType;
use crate::corpus::ContextWindow;

#[derive(Debug, Clone)]
struct JsonEndpoint {
    agent: ureq::Agent,
    url: String,
    credentials_env: Option<String>,
}

impl JsonEndpoint {
    fn new(url: &str, credentials_env: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        JsonEndpoint {
            agent,
            url: url.to_string(),
            credentials_env,
        }
    }

    fn post(&self, body: &Value) -> Result<Value, BackendError> {
        let mut req = self.agent.post(&self.url);
        if let Some(var) = &self.credentials_env {
            let token = std::env::var(var)
                .map_err(|_| BackendError::Failed(format!("credential variable {var} is not set")))?;
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        match req.send_json(body) {
            Ok(mut resp) => resp
                .body_mut()
                .read_json::<Value>()
                .map_err(|e| BackendError::Protocol(e.to_string())),
            Err(ureq::Error::Timeout(t)) => Err(BackendError::Timeout(t.to_string())),
            Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                Err(BackendError::Transient(format!("http status {code}")))
            }
            Err(ureq::Error::StatusCode(code)) => {
                Err(BackendError::Failed(format!("http status {code}")))
            }
            Err(e @ (ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound)) => {
                Err(BackendError::Transient(e.to_string()))
            }
            Err(e) => Err(BackendError::Failed(e.to_string())),
        }
    }
}

fn descriptor(
    name: &str,
    kind: BackendKind,
    url: &str,
    params: &BTreeMap<String, Value>,
) -> BackendDescriptor {
    BackendDescriptor::new(name, kind, Some(url.to_string()), params.clone())
}

fn timeout_of(params: &BTreeMap<String, Value>) -> Duration {
    Duration::from_secs(params.get("timeout_secs").and_then(Value::as_u64).unwrap_or(60))
}

#[derive(Debug, Clone)]
pub struct HttpCompletionBackend {
    descriptor: BackendDescriptor,
    endpoint: JsonEndpoint,
    model: Option<String>,
    context_limit: Option<usize>,
}

impl HttpCompletionBackend {
    /// Recognized params: `model`, `timeout_secs`, `context_limit`.
    pub fn new(
        name: &str,
        url: &str,
        credentials_env: Option<String>,
        params: BTreeMap<String, Value>,
    ) -> Self {
        HttpCompletionBackend {
            endpoint: JsonEndpoint::new(url, credentials_env, timeout_of(&params)),
            model: params.get("model").and_then(Value::as_str).map(String::from),
            context_limit: params
                .get("context_limit")
                .and_then(Value::as_u64)
                .map(|v| v as usize),
            descriptor: descriptor(name, BackendKind::Generation, url, &params),
        }
    }
}

impl GenerationBackend for HttpCompletionBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn context_limit(&self) -> Option<usize> {
        self.context_limit
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let mut body = json!({
            "prompt": request.prompt,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        });
        if let Some(model) = &self.model {
            body["model"] = Value::from(model.clone());
        }
        if !request.stop.is_empty() {
            body["stop"] = json!(request.stop);
        }
        if request.num_beams > 1 {
            body["best_of"] = Value::from(request.num_beams);
        }
        let resp = self.endpoint.post(&body)?;
        let choice = resp
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| BackendError::Protocol("response has no choices[0]".into()))?;
        let text = choice
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::Protocol("choices[0].text missing".into()))?;
        Ok(GenerationResponse {
            text: text.to_string(),
            finish_reason: choice
                .get("finish_reason")
                .and_then(Value::as_str)
                .unwrap_or("unknown")
                .to_string(),
        })
    }
}

/// `{tokens: [..]}` → `{vectors: [[..], ..]}`. Param `baseline` is required.
#[derive(Debug, Clone)]
pub struct HttpEmbeddingBackend {
    descriptor: BackendDescriptor,
    endpoint: JsonEndpoint,
    baseline: f64,
}

impl HttpEmbeddingBackend {
    pub fn new(
        name: &str,
        url: &str,
        credentials_env: Option<String>,
        params: BTreeMap<String, Value>,
    ) -> Result<Self, BackendError> {
        let baseline = params
            .get("baseline")
            .and_then(Value::as_f64)
            .ok_or_else(|| BackendError::Failed("embedding backend needs a `baseline` param".into()))?;
        Ok(HttpEmbeddingBackend {
            endpoint: JsonEndpoint::new(url, credentials_env, timeout_of(&params)),
            descriptor: descriptor(name, BackendKind::Embedding, url, &params),
            baseline,
        })
    }
}

impl EmbeddingBackend for HttpEmbeddingBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn baseline(&self) -> f64 {
        self.baseline
    }

    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        let resp = self.endpoint.post(&json!({ "tokens": tokens }))?;
        let vectors: Vec<Vec<f64>> = serde_json::from_value(
            resp.get("vectors")
                .cloned()
                .ok_or_else(|| BackendError::Protocol("`vectors` missing".into()))?,
        )
        .map_err(|e| BackendError::Protocol(e.to_string()))?;
        if vectors.len() != tokens.len() {
            return Err(BackendError::Protocol(format!(
                "{} vectors for {} tokens",
                vectors.len(),
                tokens.len()
            )));
        }
        Ok(vectors)
    }
}

/// `{context, anchor_tokens}` → `{start_token, end_token}`, mirroring a
/// SQuAD-style extractive reader with the context as the question and the
/// anchor sentence as the passage.
#[derive(Debug, Clone)]
pub struct HttpSpanPredictor {
    descriptor: BackendDescriptor,
    endpoint: JsonEndpoint,
}

impl HttpSpanPredictor {
    pub fn new(
        name: &str,
        url: &str,
        credentials_env: Option<String>,
        params: BTreeMap<String, Value>,
    ) -> Self {
        HttpSpanPredictor {
            endpoint: JsonEndpoint::new(url, credentials_env, timeout_of(&params)),
            descriptor: descriptor(name, BackendKind::Span, url, &params),
        }
    }
}

impl SpanPredictorBackend for HttpSpanPredictor {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn predict(&self, anchor: &[String], context: &ContextWindow) -> Result<RawSpan, BackendError> {
        let resp = self.endpoint.post(&json!({
            "context": context.pre_texts().join(" "),
            "anchor_tokens": anchor,
        }))?;
        let field = |name: &str| {
            resp.get(name)
                .and_then(Value::as_i64)
                .ok_or_else(|| BackendError::Protocol(format!("`{name}` missing")))
        };
        Ok(RawSpan {
            start: field("start_token")?,
            end: field("end_token")?,
        })
    }
}

/// `{tokens}` → `{tags}`.
#[derive(Debug, Clone)]
pub struct HttpTagger {
    descriptor: BackendDescriptor,
    endpoint: JsonEndpoint,
}

impl HttpTagger {
    pub fn new(
        name: &str,
        url: &str,
        credentials_env: Option<String>,
        params: BTreeMap<String, Value>,
    ) -> Self {
        HttpTagger {
            endpoint: JsonEndpoint::new(url, credentials_env, timeout_of(&params)),
            descriptor: descriptor(name, BackendKind::Tagger, url, &params),
        }
    }
}

impl TaggerBackend for HttpTagger {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn tag(&self, tokens: &[String]) -> Result<Vec<String>, BackendError> {
        let resp = self.endpoint.post(&json!({ "tokens": tokens }))?;
        let tags: Vec<String> = serde_json::from_value(
            resp.get("tags")
                .cloned()
                .ok_or_else(|| BackendError::Protocol("`tags` missing".into()))?,
        )
        .map_err(|e| BackendError::Protocol(e.to_string()))?;
        if tags.len() != tokens.len() {
            return Err(BackendError::Protocol(format!(
                "{} tags for {} tokens",
                tags.len(),
                tokens.len()
            )));
        }
        Ok(tags)
    }
}

/// `{question}` → `{label}` with a label from [`QuestionType`].
#[derive(Debug, Clone)]
pub struct HttpClassifier {
    descriptor: BackendDescriptor,
    endpoint: JsonEndpoint,
}

impl HttpClassifier {
    pub fn new(
        name: &str,
        url: &str,
        credentials_env: Option<String>,
        params: BTreeMap<String, Value>,
    ) -> Self {
        HttpClassifier {
            endpoint: JsonEndpoint::new(url, credentials_env, timeout_of(&params)),
            descriptor: descriptor(name, BackendKind::Classifier, url, &params),
        }
    }
}

impl ClassifierBackend for HttpClassifier {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn classify(&self, question: &str) -> Result<QuestionType, BackendError> {
        let resp = self.endpoint.post(&json!({ "question": question }))?;
        let label = resp
            .get("label")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::Protocol("`label` missing".into()))?;
        label
            .parse()
            .map_err(|e: String| BackendError::Protocol(e))
    }
}
