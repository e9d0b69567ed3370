use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, EmbeddingBackend};
use crate::tokenize::tokenize;

/// A similarity score in raw form and rescaled against a baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub raw: f64,
    pub rescaled: f64,
}

impl ScorePair {
    pub fn from_raw(raw: f64, baseline: f64) -> Self {
        ScorePair {
            raw,
            rescaled: rescale(raw, baseline),
        }
    }

    /// Component-wise mean; `None` for an empty slice.
    pub fn mean(scores: &[ScorePair]) -> Option<ScorePair> {
        if scores.is_empty() {
            return None;
        }
        let n = scores.len() as f64;
        Some(ScorePair {
            raw: scores.iter().map(|s| s.raw).sum::<f64>() / n,
            rescaled: scores.iter().map(|s| s.rescaled).sum::<f64>() / n,
        })
    }
}

pub fn rescale(raw: f64, baseline: f64) -> f64 {
    (raw - baseline) / (1.0 - baseline)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    if a == b && a.iter().any(|x| *x != 0.0) {
        return 1.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyMatch {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn mean_best(from: &[Vec<f64>], to: &[Vec<f64>]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|u| to.iter().map(|v| cosine(u, v)).fold(f64::NEG_INFINITY, f64::max))
        .sum();
    total / from.len() as f64
}

/// Greedy token matching: each candidate token takes its best cosine against
/// the reference (precision) and vice versa (recall).
pub fn greedy_match(candidate: &[Vec<f64>], reference: &[Vec<f64>]) -> GreedyMatch {
    if candidate.is_empty() || reference.is_empty() {
        return GreedyMatch {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        };
    }
    let precision = mean_best(candidate, reference);
    let recall = mean_best(reference, candidate);
    let f1 = if precision + recall > 0.0 {
        (2.0 * precision * recall / (precision + recall)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    GreedyMatch {
        precision,
        recall,
        f1,
    }
}

pub fn embedding_similarity(
    candidate: &str,
    reference: &str,
    embedder: &dyn EmbeddingBackend,
    baseline: f64,
) -> Result<ScorePair, BackendError> {
    let c = embedder.embed(&tokenize(candidate))?;
    let r = embedder.embed(&tokenize(reference))?;
    Ok(ScorePair::from_raw(greedy_match(&c, &r).f1, baseline))
}

/// Best F1 over several references.
pub fn embedding_similarity_multi<S: AsRef<str>>(
    candidate: &str,
    references: &[S],
    embedder: &dyn EmbeddingBackend,
    baseline: f64,
) -> Result<ScorePair, BackendError> {
    let c = embedder.embed(&tokenize(candidate))?;
    let mut best = 0.0f64;
    for r in references {
        let rv = embedder.embed(&tokenize(r.as_ref()))?;
        best = best.max(greedy_match(&c, &rv).f1);
    }
    Ok(ScorePair::from_raw(best, baseline))
}
