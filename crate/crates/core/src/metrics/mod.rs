//! Automatic generation metrics and human-evaluation tallies.

mod bleu;
mod human;
mod similarity;

use thiserror::Error;

pub use bleu::{bleu4, bleu_from_stats, bleu_stats, bleu_summary, BleuStats, BleuSummary, Smoothing, MAX_ORDER};
pub use human::{
    read_judgments_csv, read_rankings_csv, tally_question_judgments, tally_rankings, ElabRanking,
    HumanQuestionJudgment, JudgmentTally, RankCounts, RankCriterion, RankingTally, SystemJudgments,
    YesNo,
};
pub use similarity::{
    cosine, embedding_similarity, embedding_similarity_multi, greedy_match, rescale, GreedyMatch,
    ScorePair,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("csv row {row}: {message}")]
    Csv { row: usize, message: String },
}
