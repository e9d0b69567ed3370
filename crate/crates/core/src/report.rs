//! JSON report envelope shared by the CLI and the service.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::backends::canonical_json;
use crate::tokenize;

/// Everything a reported number depends on besides the data itself.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigFingerprint {
    pub tokenizer: String,
    /// Role (e.g. `embedder`, `tagger`) → backend id.
    #[serde(default)]
    pub backends: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_sha256: Option<String>,
    /// Knobs such as smoothing, overlap policy or OOV handling.
    #[serde(default)]
    pub settings: BTreeMap<String, Value>,
}

impl ConfigFingerprint {
    pub fn new() -> Self {
        ConfigFingerprint {
            tokenizer: format!("{}#{}", tokenize::TOKENIZER_VERSION, tokenize::fingerprint()),
            ..Default::default()
        }
    }

    pub fn backend(mut self, role: &str, backend_id: &str) -> Self {
        self.backends.insert(role.to_string(), backend_id.to_string());
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn dataset(mut self, sha256: &str) -> Self {
        self.dataset_sha256 = Some(sha256.to_string());
        self
    }

    pub fn setting(mut self, key: &str, value: impl Serialize) -> Self {
        self.settings.insert(
            key.to_string(),
            serde_json::to_value(value).expect("setting serializes"),
        );
        self
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let v = serde_json::to_value(self).expect("fingerprint serializes");
        hex::encode(Sha256::digest(canonical_json(&v).as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum ReportStatus {
    Ok,
    /// Not enough data to compute the report.
    Empty { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub report: String,
    #[serde(flatten)]
    pub status: ReportStatus,
    #[serde(default)]
    pub values: Value,
    pub fingerprint: ConfigFingerprint,
}

impl MetricReport {
    pub fn new(report: &str, values: &impl Serialize, fingerprint: ConfigFingerprint) -> Self {
        MetricReport {
            report: report.to_string(),
            status: ReportStatus::Ok,
            values: serde_json::to_value(values).expect("report values serialize"),
            fingerprint,
        }
    }

    pub fn empty(report: &str, reason: impl Into<String>, fingerprint: ConfigFingerprint) -> Self {
        MetricReport {
            report: report.to_string(),
            status: ReportStatus::Empty {
                reason: reason.into(),
            },
            values: Value::Null,
            fingerprint,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self.status, ReportStatus::Empty { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_tracks_settings() {
        let a = ConfigFingerprint::new().seed(1);
        let b = ConfigFingerprint::new().seed(1).setting("smoothing", "none");
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), ConfigFingerprint::new().seed(1).digest());
    }

    #[test]
    fn empty_marker_serializes() {
        let r = MetricReport::empty("agreement", "no data", ConfigFingerprint::new());
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["status"], "empty");
        assert_eq!(v["reason"], "no data");
    }
}
