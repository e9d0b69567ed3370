use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, QuestionType};
use crate::backends::ClassifierBackend;
use crate::par::{self, ExecMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionTypeDistribution {
    pub counts: BTreeMap<QuestionType, usize>,
    pub proportions: BTreeMap<QuestionType, f64>,
    pub total: usize,
}

/// Tally of already assigned labels. Only labels that occur appear as keys.
pub fn distribution_from_labels(labels: &[QuestionType]) -> QuestionTypeDistribution {
    let mut counts = BTreeMap::new();
    for l in labels {
        *counts.entry(*l).or_insert(0) += 1;
    }
    let total = labels.len();
    let proportions = counts
        .iter()
        .map(|(k, c)| (*k, *c as f64 / total as f64))
        .collect();
    QuestionTypeDistribution {
        counts,
        proportions,
        total,
    }
}

pub fn question_type_distribution(
    questions: &[String],
    classifier: &dyn ClassifierBackend,
    mode: ExecMode,
) -> Result<QuestionTypeDistribution, AnalysisError> {
    if questions.is_empty() {
        return Err(AnalysisError::EmptyInput("no questions to classify".into()));
    }
    let labels = par::try_map(mode, questions, |q| {
        classifier
            .classify(q)
            .map_err(|source| AnalysisError::Backend {
                instance_id: None,
                source,
            })
    })?;
    Ok(distribution_from_labels(&labels))
}
