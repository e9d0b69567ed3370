use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::backends::{BackendError, EmbeddingBackend};
use crate::corpus::{Dataset, QudAnnotation};
use crate::metrics::{embedding_similarity, ScorePair};
use crate::par::{self, ExecMode};

pub trait SimilarityMetric: Send + Sync {
    /// Recorded in report fingerprints.
    fn id(&self) -> String;

    fn score(&self, candidate: &str, reference: &str) -> Result<ScorePair, BackendError>;
}

/// 1 for identical strings, 0 otherwise; baseline 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentitySimilarity;

impl SimilarityMetric for IdentitySimilarity {
    fn id(&self) -> String {
        "identity".into()
    }

    fn score(&self, candidate: &str, reference: &str) -> Result<ScorePair, BackendError> {
        let raw = if candidate == reference { 1.0 } else { 0.0 };
        Ok(ScorePair::from_raw(raw, 0.0))
    }
}

/// Greedy-matching F1 over token embeddings, rescaled with the embedder's baseline.
#[derive(Clone)]
pub struct EmbeddingSimilarity {
    embedder: Arc<dyn EmbeddingBackend>,
}

impl EmbeddingSimilarity {
    pub fn new(embedder: Arc<dyn EmbeddingBackend>) -> Self {
        EmbeddingSimilarity { embedder }
    }
}

impl SimilarityMetric for EmbeddingSimilarity {
    fn id(&self) -> String {
        self.embedder.descriptor().backend_id.clone()
    }

    fn score(&self, candidate: &str, reference: &str) -> Result<ScorePair, BackendError> {
        embedding_similarity(candidate, reference, self.embedder.as_ref(), self.embedder.baseline())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuestionPair<'a> {
    pub a: &'a QudAnnotation,
    pub b: &'a QudAnnotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub same_elab_mean: ScorePair,
    /// `None` when no article has questions on two different instances.
    pub random_pair_mean: Option<ScorePair>,
    pub n_same_pairs: usize,
    pub n_random_pairs: usize,
    /// Size of the pool the random pairs were drawn from.
    pub random_pool_size: usize,
    pub metric_id: String,
    pub seed: u64,
}

/// All unordered pairs of questions on the same instance, in dataset order.
pub fn same_instance_pairs(dataset: &Dataset) -> Vec<QuestionPair<'_>> {
    let mut pairs = Vec::new();
    for group in dataset.annotations_by_instance().values() {
        let qs: Vec<&QudAnnotation> = group.iter().copied().filter(|a| a.has_question()).collect();
        for i in 0..qs.len() {
            for j in i + 1..qs.len() {
                pairs.push(QuestionPair { a: qs[i], b: qs[j] });
            }
        }
    }
    pairs
}

/// Pairs of questions from the same article but different instances. Draws
/// `n` pairs without replacement from the pooled candidates, or with
/// replacement when the pool is smaller than `n`. Returns the pairs and the
/// pool size.
pub fn random_article_pairs(dataset: &Dataset, n: usize, seed: u64) -> (Vec<QuestionPair<'_>>, usize) {
    let mut pool = Vec::new();
    for bundle in dataset.bundles() {
        let qs: Vec<&QudAnnotation> = bundle.annotations.iter().copied().filter(|a| a.has_question()).collect();
        for i in 0..qs.len() {
            for j in i + 1..qs.len() {
                if qs[i].instance_id != qs[j].instance_id {
                    pool.push(QuestionPair { a: qs[i], b: qs[j] });
                }
            }
        }
    }
    let size = pool.len();
    if size == 0 || n == 0 {
        return (Vec::new(), size);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = if n <= size {
        let mut idx = sample(&mut rng, size, n).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| pool[i]).collect()
    } else {
        (0..n).map(|_| pool[rng.gen_range(0..size)]).collect()
    };
    (picked, size)
}

fn score_pairs(
    pairs: &[QuestionPair<'_>],
    metric: &dyn SimilarityMetric,
    mode: ExecMode,
) -> Result<Vec<ScorePair>, AnalysisError> {
    par::try_map(mode, pairs, |p| {
        metric
            .score(&p.a.question, &p.b.question)
            .map_err(|source| AnalysisError::Backend {
                instance_id: Some(p.a.instance_id.clone()),
                source,
            })
    })
}

/// Mean similarity of questions sharing an elaboration, against a seeded
/// baseline of same-article questions on different elaborations.
pub fn pairwise_question_similarity(
    dataset: &Dataset,
    metric: &dyn SimilarityMetric,
    seed: u64,
    mode: ExecMode,
) -> Result<SimilarityReport, AnalysisError> {
    let same = same_instance_pairs(dataset);
    if same.is_empty() {
        return Err(AnalysisError::EmptyInput(
            "no instance has two or more questions".into(),
        ));
    }
    let (random, pool) = random_article_pairs(dataset, same.len(), seed);
    let same_scores = score_pairs(&same, metric, mode)?;
    let random_scores = score_pairs(&random, metric, mode)?;
    Ok(SimilarityReport {
        same_elab_mean: ScorePair::mean(&same_scores).expect("nonempty"),
        random_pair_mean: ScorePair::mean(&random_scores),
        n_same_pairs: same.len(),
        n_random_pairs: random.len(),
        random_pool_size: pool,
        metric_id: metric.id(),
        seed,
    })
}
