//! Corpus statistics over annotated elaborations: question similarity, anchor
//! agreement, target overlap and shape, word frequency, question types and
//! discourse relations.

mod agreement;
mod frequency;
mod qtypes;
mod relations;
mod similarity;
mod targets;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::BackendError;

pub use agreement::{agreement_from_ratings, anchor_agreement, category_counts, AgreementReport};
pub use frequency::{
    frequency_test, t_test, FrequencyConfig, FrequencyLexicon, FrequencyTestReport, OovPolicy,
    TTest, TTestVariant,
};
pub use qtypes::{distribution_from_labels, question_type_distribution, QuestionTypeDistribution};
pub use relations::{pdtb3_reference, relation_distribution, PDTB3_LEVEL2};
pub use similarity::{
    pairwise_question_similarity, random_article_pairs, same_instance_pairs, EmbeddingSimilarity,
    IdentitySimilarity, QuestionPair, SimilarityMetric, SimilarityReport,
};
pub use targets::{target_overlap_rate, target_statistics, OverlapPolicy, TargetStats};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("not enough data: {0}")]
    EmptyInput(String),
    #[error("backend error{}: {source}", instance_id.as_deref().map(|i| format!(" on {i}")).unwrap_or_default())]
    Backend {
        instance_id: Option<String>,
        #[source]
        source: BackendError,
    },
    #[error("statistics error: {0}")]
    Statistics(String),
    #[error("unknown label `{label}`; expected one of: {}", allowed.join(", "))]
    UnknownLabel { label: String, allowed: Vec<String> },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Question-type taxonomy used for implicit questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuestionType {
    Verification,
    Disjunctive,
    Concept,
    Extent,
    Example,
    Comparison,
    Cause,
    Consequence,
    Procedural,
    Judgmental,
    Other,
}

impl QuestionType {
    pub const ALL: [QuestionType; 11] = [
        QuestionType::Verification,
        QuestionType::Disjunctive,
        QuestionType::Concept,
        QuestionType::Extent,
        QuestionType::Example,
        QuestionType::Comparison,
        QuestionType::Cause,
        QuestionType::Consequence,
        QuestionType::Procedural,
        QuestionType::Judgmental,
        QuestionType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::Verification => "Verification",
            QuestionType::Disjunctive => "Disjunctive",
            QuestionType::Concept => "Concept",
            QuestionType::Extent => "Extent",
            QuestionType::Example => "Example",
            QuestionType::Comparison => "Comparison",
            QuestionType::Cause => "Cause",
            QuestionType::Consequence => "Consequence",
            QuestionType::Procedural => "Procedural",
            QuestionType::Judgmental => "Judgmental",
            QuestionType::Other => "Other",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuestionType {
    type Err = String;

    /// Case-insensitive.
    fn from_str(s: &str) -> Result<Self, String> {
        QuestionType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                let names: Vec<&str> = QuestionType::ALL.iter().map(|t| t.as_str()).collect();
                format!("unknown question type `{s}`; expected one of {}", names.join(", "))
            })
    }
}
