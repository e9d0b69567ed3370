use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::backends::TaggerBackend;
use crate::corpus::{Dataset, QudAnnotation, TargetSpan};
use crate::par::{self, ExecMode};

/// When two annotators' targets count as overlapping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapPolicy {
    /// Same sentence and at least one shared token.
    #[default]
    AnyToken,
    /// Same sentence and identical token range.
    ExactSpan,
}

impl OverlapPolicy {
    fn test(self, a: &TargetSpan, b: &TargetSpan) -> bool {
        match self {
            OverlapPolicy::AnyToken => a.overlaps(b),
            OverlapPolicy::ExactSpan => a.same_extent(b),
        }
    }
}

/// Share of same-instance annotation pairs whose targets overlap. Pairs where
/// either side has no target are skipped.
pub fn target_overlap_rate(dataset: &Dataset, policy: OverlapPolicy) -> Result<f64, AnalysisError> {
    let mut pairs = 0usize;
    let mut hits = 0usize;
    for group in dataset.annotations_by_instance().values() {
        let targets: Vec<&TargetSpan> = group.iter().filter_map(|a| a.target.as_ref()).collect();
        for i in 0..targets.len() {
            for j in i + 1..targets.len() {
                pairs += 1;
                if policy.test(targets[i], targets[j]) {
                    hits += 1;
                }
            }
        }
    }
    if pairs == 0 {
        return Err(AnalysisError::EmptyInput(
            "no instance has two or more targets".into(),
        ));
    }
    Ok(hits as f64 / pairs as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub n_targets: usize,
    pub mean_len_tokens: f64,
    /// Population standard deviation.
    pub std_len_tokens: f64,
    pub pos_histogram: BTreeMap<String, usize>,
    pub pct_with_verb: f64,
    pub pct_with_proper_noun: f64,
    pub total_target_tokens: usize,
}

fn is_verb(tag: &str) -> bool {
    tag.starts_with("VB")
}

fn is_proper_noun(tag: &str) -> bool {
    tag == "NNP" || tag == "NNPS"
}

/// Length, part-of-speech and content statistics over every annotated target.
/// Each target's sentence is tagged whole and the target's slice is read off.
pub fn target_statistics(
    dataset: &Dataset,
    tagger: &dyn TaggerBackend,
    mode: ExecMode,
) -> Result<TargetStats, AnalysisError> {
    let annotated: Vec<&QudAnnotation> = dataset
        .annotations()
        .iter()
        .filter(|a| a.target.is_some())
        .collect();
    if annotated.is_empty() {
        return Err(AnalysisError::EmptyInput("no annotated targets".into()));
    }
    let tagged: Vec<Vec<String>> = par::try_map(mode, &annotated, |a| {
        let t = a.target.as_ref().expect("filtered");
        let inst = dataset
            .instance(&a.instance_id)
            .ok_or_else(|| AnalysisError::Integrity(format!("unknown instance {}", a.instance_id)))?;
        let doc = dataset.document_of(inst);
        let sentence = doc
            .sentence(t.sentence_index)
            .map_err(|e| AnalysisError::Integrity(e.to_string()))?;
        let tokens = sentence.tokens();
        let tags = tagger.tag(&tokens).map_err(|source| AnalysisError::Backend {
            instance_id: Some(a.instance_id.clone()),
            source,
        })?;
        if tags.len() != tokens.len() {
            return Err(AnalysisError::Backend {
                instance_id: Some(a.instance_id.clone()),
                source: crate::backends::BackendError::Protocol(format!(
                    "{} tags for {} tokens",
                    tags.len(),
                    tokens.len()
                )),
            });
        }
        Ok(tags[t.start_token..t.end_token].to_vec())
    })?;

    let n = tagged.len() as f64;
    let lens: Vec<f64> = tagged.iter().map(|t| t.len() as f64).collect();
    let mean = lens.iter().sum::<f64>() / n;
    let var = lens.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
    let mut histogram = BTreeMap::new();
    for tag in tagged.iter().flatten() {
        *histogram.entry(tag.clone()).or_insert(0) += 1;
    }
    let with_verb = tagged.iter().filter(|t| t.iter().any(|g| is_verb(g))).count();
    let with_nnp = tagged.iter().filter(|t| t.iter().any(|g| is_proper_noun(g))).count();
    Ok(TargetStats {
        n_targets: tagged.len(),
        mean_len_tokens: mean,
        std_len_tokens: var.sqrt(),
        total_target_tokens: tagged.iter().map(Vec::len).sum(),
        pos_histogram: histogram,
        pct_with_verb: with_verb as f64 / n,
        pct_with_proper_noun: with_nnp as f64 / n,
    })
}
