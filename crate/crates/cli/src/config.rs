//! The JSON run configuration. Every relative path in it resolves against the
//! workspace root.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use qudelab::analysis::{FrequencyConfig, OverlapPolicy};
use qudelab::backends::{BackendSpec, ClientConfig, Registry};
use qudelab::corpus::{Split, WindowSpec};
use qudelab::generation::DecodeParams;
use qudelab::metrics::Smoothing;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Which registry entry plays which part. Unset analysis roles fall back to
/// the built-in heuristic tagger and cue-word classifier; an unset embedder
/// leaves similarity reports empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Roles {
    pub question_generator: Option<String>,
    /// Per-QG-config generator, overriding `question_generator`.
    pub question_generators: BTreeMap<String, String>,
    pub elaboration_generator: Option<String>,
    pub span_predictor: Option<String>,
    pub embedder: Option<String>,
    pub tagger: Option<String>,
    pub classifier: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientSettings {
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub max_in_flight: usize,
    pub requests_per_minute: Option<f64>,
    pub cache_dir: Option<PathBuf>,
}

impl Default for ClientSettings {
    fn default() -> Self {
        let c = ClientConfig::default();
        ClientSettings {
            max_retries: c.max_retries,
            backoff_base_ms: c.backoff_base_ms,
            backoff_max_ms: c.backoff_max_ms,
            max_in_flight: c.max_in_flight,
            requests_per_minute: c.requests_per_minute,
            cache_dir: Some(PathBuf::from("cache")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub overlap: OverlapPolicy,
    pub frequency: FrequencyConfig,
    /// `word<TAB>Zipf` lexicon for the frequency test.
    pub lexicon: Option<PathBuf>,
    /// `instance_id<TAB>relation` labels for the relation distribution.
    pub relation_labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Share of question content words found in the elaboration at which the
    /// service rejects an annotation.
    pub guardrail_overlap: f64,
    /// Default annotators per instance in the service.
    pub redundancy: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            guardrail_overlap: 0.5,
            redundancy: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub addr: String,
    pub store: PathBuf,
    /// Overridden by the `QUDELAB_ADMIN_TOKEN` environment variable.
    pub admin_token: String,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        ServiceSettings {
            addr: "127.0.0.1:8080".into(),
            store: PathBuf::from("service.sqlite"),
            admin_token: "change-me".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub dataset: PathBuf,
    pub format_version: String,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub window: WindowSpec,
    /// Restrict generation to one split.
    pub split: Option<Split>,
    /// Run batch loops on the thread pool.
    pub parallel: bool,
    pub backends: BTreeMap<String, BackendSpec>,
    pub roles: Roles,
    pub decode: DecodeParams,
    pub client: ClientSettings,
    pub smoothing: Smoothing,
    pub analysis: AnalysisConfig,
    /// Optional replacements for the bundled prompt layouts.
    pub qg_layouts: Option<PathBuf>,
    pub elab_layouts: Option<PathBuf>,
    pub thresholds: Thresholds,
    pub service: ServiceSettings,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            dataset: PathBuf::from("data/dataset.jsonl"),
            format_version: qudelab::corpus::FORMAT_VERSION.to_string(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            window: WindowSpec::default(),
            split: None,
            parallel: true,
            backends: BTreeMap::new(),
            roles: Roles::default(),
            decode: DecodeParams::default(),
            client: ClientSettings::default(),
            smoothing: Smoothing::default(),
            analysis: AnalysisConfig::default(),
            qg_layouts: None,
            elab_layouts: None,
            thresholds: Thresholds::default(),
            service: ServiceSettings::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn registry(&self, root: &Path) -> Registry {
        Registry {
            backends: self.backends.clone(),
            base_dir: root.to_path_buf(),
        }
    }

    pub fn client_config(&self, root: &Path) -> ClientConfig {
        ClientConfig {
            max_retries: self.client.max_retries,
            backoff_base_ms: self.client.backoff_base_ms,
            backoff_max_ms: self.client.backoff_max_ms,
            max_in_flight: self.client.max_in_flight,
            requests_per_minute: self.client.requests_per_minute,
            cache_dir: self.client.cache_dir.as_ref().map(|d| root.join(d)),
        }
    }

    /// The part of the configuration recorded in run manifests. The service
    /// section (with its token) is left out.
    pub fn snapshot(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("object").remove("service");
        v
    }
}
