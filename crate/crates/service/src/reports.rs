//! Report computation over approved store contents.

use qudelab::analysis;
use qudelab::corpus::Dataset;
use qudelab::metrics::{tally_question_judgments, tally_rankings};
use qudelab::par::ExecMode;
use qudelab::pipeline::settle_report;
use qudelab::report::MetricReport;

use crate::error::ApiError;
use crate::AppState;

pub const REPORT_NAMES: [&str; 5] = ["agreement", "targets", "qtypes", "rankings", "judgments"];

fn approved_dataset(state: &AppState) -> Result<Dataset, ApiError> {
    let approved = state.store()?.approved_annotations().map_err(ApiError::from)?;
    state
        .dataset
        .with_annotations(approved)
        .map_err(|e| ApiError::internal(format!("approved annotations no longer validate: {e}")))
}

fn analysis_failure(e: analysis::AnalysisError) -> ApiError {
    ApiError::internal(e.to_string())
}

/// `name` is one of [`REPORT_NAMES`].
pub fn compute(state: &AppState, name: &str) -> Result<MetricReport, ApiError> {
    let fp = state.fingerprint();
    match name {
        "agreement" => {
            let ds = approved_dataset(state)?;
            settle_report("anchor_agreement", analysis::anchor_agreement(&ds), fp).map_err(analysis_failure)
        }
        "targets" => {
            let ds = approved_dataset(state)?;
            settle_report(
                "target_statistics",
                analysis::target_statistics(&ds, state.tagger.as_ref(), ExecMode::best()),
                fp.backend("tagger", &state.tagger.descriptor().backend_id),
            )
            .map_err(analysis_failure)
        }
        "qtypes" => {
            let ds = approved_dataset(state)?;
            let questions: Vec<String> = ds
                .annotations()
                .iter()
                .filter(|a| a.has_question())
                .map(|a| a.question.clone())
                .collect();
            settle_report(
                "question_types",
                analysis::question_type_distribution(&questions, state.classifier.as_ref(), ExecMode::best()),
                fp.backend("classifier", &state.classifier.descriptor().backend_id),
            )
            .map_err(analysis_failure)
        }
        "rankings" => {
            let rankings = state.store()?.rankings()?;
            if rankings.is_empty() {
                return Ok(MetricReport::empty("ranking_tally", "no rankings submitted", fp));
            }
            let tally = tally_rankings(&rankings).map_err(|e| ApiError::internal(e.to_string()))?;
            Ok(MetricReport::new("ranking_tally", &tally, fp))
        }
        "judgments" => {
            let judgments = state.store()?.judgments()?;
            if judgments.is_empty() {
                return Ok(MetricReport::empty("judgment_tally", "no judgments submitted", fp));
            }
            Ok(MetricReport::new("judgment_tally", &tally_question_judgments(&judgments), fp))
        }
        other => Err(ApiError::not_found(format!(
            "unknown report `{other}` (expected one of {})",
            REPORT_NAMES.join(", ")
        ))),
    }
}
