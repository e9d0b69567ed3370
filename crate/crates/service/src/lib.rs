//! HTTP API for collecting QUD annotations and human judgments of generated
//! questions and elaborations.
//!
//! State lives in a single SQLite file ([`store::Store`]) bound to one dataset.
//! Every read endpoint is a function of that state, the dataset and the
//! configured seed; reports are produced by the same library calls the CLI uses.

pub mod api;
pub mod error;
pub mod reports;
pub mod store;

use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::Router;
use qudelab::backends::{ClassifierBackend, CueWordClassifier, HeuristicTagger, TaggerBackend};
use qudelab::corpus::Dataset;
use qudelab::report::ConfigFingerprint;
use serde::{Deserialize, Serialize};

pub use error::{ApiError, ErrorBody};
pub use store::{Store, StoreError};

/// The OpenAPI description served at `/openapi.yaml`.
pub const OPENAPI_YAML: &str = include_str!("../openapi.yaml");

/// Every route as (method, path template).
pub const ROUTES: &[(&str, &str)] = &[
    ("GET", "/health"),
    ("GET", "/openapi.yaml"),
    ("POST", "/tasks/next"),
    ("POST", "/annotations"),
    ("GET", "/instances/{instance_id}"),
    ("GET", "/items"),
    ("POST", "/judgments"),
    ("POST", "/rankings"),
    ("GET", "/reports/{name}"),
    ("POST", "/admin/annotators"),
    ("POST", "/admin/qualifications"),
    ("POST", "/admin/qualifications/{annotator_id}/decision"),
    ("GET", "/admin/tasks"),
    ("POST", "/admin/tasks/{task_id}/approve"),
    ("POST", "/admin/redundancy"),
    ("POST", "/admin/items"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    /// Annotators per instance unless overridden per instance.
    pub redundancy: usize,
    /// Questions whose content-token overlap with the elaboration reaches
    /// this share are rejected.
    pub guardrail_threshold: f64,
    /// Seeds the per-judge order in which system outputs are shown.
    pub seed: u64,
    pub admin_token: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            redundancy: 2,
            guardrail_threshold: 0.5,
            seed: 0,
            admin_token: "admin".to_string(),
        }
    }
}

pub struct AppState {
    pub dataset: Arc<Dataset>,
    pub config: ServiceConfig,
    pub tagger: Arc<dyn TaggerBackend>,
    pub classifier: Arc<dyn ClassifierBackend>,
    store: Mutex<Store>,
}

impl AppState {
    /// State with the built-in heuristic tagger and cue-word classifier.
    pub fn new(dataset: Arc<Dataset>, store: Store, config: ServiceConfig) -> Self {
        AppState {
            dataset,
            config,
            tagger: Arc::new(HeuristicTagger::default()),
            classifier: Arc::new(CueWordClassifier::default()),
            store: Mutex::new(store),
        }
    }

    pub fn with_tagger(mut self, tagger: Arc<dyn TaggerBackend>) -> Self {
        self.tagger = tagger;
        self
    }

    pub fn with_classifier(mut self, classifier: Arc<dyn ClassifierBackend>) -> Self {
        self.classifier = classifier;
        self
    }

    pub fn store(&self) -> Result<MutexGuard<'_, Store>, ApiError> {
        self.store
            .lock()
            .map_err(|_| ApiError::internal("store lock poisoned"))
    }

    /// Fingerprint attached to every report, before per-report backends.
    pub fn fingerprint(&self) -> ConfigFingerprint {
        ConfigFingerprint::new()
            .dataset(&self.dataset.fingerprint())
            .seed(self.config.seed)
            .setting("annotations", "approved")
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    api::routes().with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
