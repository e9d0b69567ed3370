//! Question generation inputs for the five QG configurations, target-span
//! prediction, and span-prediction scoring.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backends::{BackendClient, RawSpan, SpanPredictorBackend};
use crate::corpus::{ContextWindow, Document, ElaborationInstance, QudAnnotation, Sentence, TargetSpan};
use crate::generation::{self, DecodeParams, GenError, Generated, GenerationRecord, RecordKind};
use crate::prompt::{AssembledPrompt, PromptLayout, Segment, SegmentRole};
use crate::tokenize::detokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QgConfigName {
    #[serde(rename = "DCQA-base")]
    DcqaBase,
    #[serde(rename = "DCQA-ft")]
    DcqaFt,
    #[serde(rename = "INQ-GoldT-base")]
    InqGoldTBase,
    #[serde(rename = "INQ-GoldT-ft")]
    InqGoldTFt,
    #[serde(rename = "INQ-PredT")]
    InqPredT,
}

impl QgConfigName {
    pub const ALL: [QgConfigName; 5] = [
        QgConfigName::DcqaBase,
        QgConfigName::DcqaFt,
        QgConfigName::InqGoldTBase,
        QgConfigName::InqGoldTFt,
        QgConfigName::InqPredT,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QgConfigName::DcqaBase => "DCQA-base",
            QgConfigName::DcqaFt => "DCQA-ft",
            QgConfigName::InqGoldTBase => "INQ-GoldT-base",
            QgConfigName::InqGoldTFt => "INQ-GoldT-ft",
            QgConfigName::InqPredT => "INQ-PredT",
        }
    }
}

impl fmt::Display for QgConfigName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QgConfigName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        QgConfigName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = QgConfigName::ALL.iter().map(|n| n.as_str()).collect();
                format!("unknown QG config `{s}`; expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetSource {
    None,
    Gold,
    Predicted,
}

/// Fine-tuning settings. Recorded for provenance; training is not run here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecipe {
    pub learning_rate: f64,
    pub epochs: u32,
    pub batch_size: u32,
    pub base_checkpoint_label: String,
}

impl TrainingRecipe {
    fn new(learning_rate: f64, epochs: u32, batch_size: u32, base: &str) -> Self {
        TrainingRecipe {
            learning_rate,
            epochs,
            batch_size,
            base_checkpoint_label: base.to_string(),
        }
    }
}

/// Recipe of the extractive target-span predictor.
pub fn target_predictor_recipe() -> TrainingRecipe {
    TrainingRecipe::new(5e-5, 3, 16, "distilbert-base-uncased")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QgConfig {
    pub name: QgConfigName,
    pub sees_elaboration: bool,
    pub target_source: TargetSource,
    pub training_recipe: TrainingRecipe,
}

impl QgConfig {
    pub fn preset(name: QgConfigName) -> Self {
        use QgConfigName::*;
        let (sees, source, recipe) = match name {
            DcqaBase => (true, TargetSource::None, TrainingRecipe::new(5e-5, 5, 8, "gpt2-medium")),
            DcqaFt => (true, TargetSource::None, TrainingRecipe::new(2e-5, 5, 2, "DCQA-base")),
            InqGoldTBase => (false, TargetSource::Gold, TrainingRecipe::new(5e-5, 7, 8, "gpt2-medium")),
            InqGoldTFt => (false, TargetSource::Gold, TrainingRecipe::new(2e-5, 5, 2, "INQ-GoldT-base")),
            InqPredT => (false, TargetSource::Predicted, TrainingRecipe::new(2e-5, 5, 2, "INQ-GoldT-base")),
        };
        QgConfig {
            name,
            sees_elaboration: sees,
            target_source: source,
            training_recipe: recipe,
        }
    }

    pub fn all() -> Vec<QgConfig> {
        QgConfigName::ALL.into_iter().map(Self::preset).collect()
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let expected = Self::preset(self.name);
        if self.sees_elaboration != expected.sees_elaboration || self.target_source != expected.target_source {
            return Err(GenError::Config(format!(
                "{}: sees_elaboration must be {} and target_source {:?}",
                self.name, expected.sees_elaboration, expected.target_source
            )));
        }
        let r = &self.training_recipe;
        if !(r.learning_rate > 0.0) || r.epochs == 0 || r.batch_size == 0 {
            return Err(GenError::Config(format!(
                "{}: training recipe values must be positive",
                self.name
            )));
        }
        Ok(())
    }
}

/// Delimiter layouts for answer-aware and expectation-driven inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QgLayouts {
    pub dcqa: PromptLayout,
    pub inq: PromptLayout,
}

const DEFAULT_QG_LAYOUTS: &str = include_str!("../assets/qg_layouts.json");

impl Default for QgLayouts {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_QG_LAYOUTS).expect("bundled QG layouts are valid")
    }
}

impl QgLayouts {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, GenError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| GenError::Config(format!("{}: {e}", path.as_ref().display())))?;
        serde_json::from_str(&text).map_err(|e| GenError::Config(format!("QG layouts: {e}")))
    }
}

/// Builds the generator input for one instance.
///
/// DCQA configs see every sentence before the elaboration (the anchor
/// delimited in place), then the elaboration. INQ configs see the sentences
/// before the anchor, then the anchor with its target delimited. A supplied
/// target is ignored by DCQA configs.
pub fn assemble_qg_input(
    instance: &ElaborationInstance,
    config: &QgConfig,
    anchor_index: usize,
    target: Option<&TargetSpan>,
    doc: &Document,
    layouts: &QgLayouts,
) -> Result<AssembledPrompt, GenError> {
    assemble(instance, config, anchor_index, target, doc, layouts, "")
}

/// Same layout with the question filled in after the cue, as used for
/// fine-tuning examples.
pub fn assemble_qg_training_example(
    instance: &ElaborationInstance,
    config: &QgConfig,
    annotation: &QudAnnotation,
    doc: &Document,
    layouts: &QgLayouts,
) -> Result<AssembledPrompt, GenError> {
    assemble(
        instance,
        config,
        annotation.anchor_index,
        annotation.target.as_ref(),
        doc,
        layouts,
        &annotation.question,
    )
}

fn assemble(
    instance: &ElaborationInstance,
    config: &QgConfig,
    anchor_index: usize,
    target: Option<&TargetSpan>,
    doc: &Document,
    layouts: &QgLayouts,
    question: &str,
) -> Result<AssembledPrompt, GenError> {
    config.validate()?;
    if instance.doc_id != doc.doc_id {
        return Err(GenError::Integrity(format!(
            "instance {} belongs to document {}, not {}",
            instance.instance_id, instance.doc_id, doc.doc_id
        )));
    }
    let elab = instance.elab_index;
    if anchor_index >= elab {
        return Err(GenError::Integrity(format!(
            "instance {}: anchor {anchor_index} is not in the context before the elaboration at {elab}",
            instance.instance_id
        )));
    }
    let text_of = |i: usize| -> Result<&str, GenError> {
        doc.sentence(i)
            .map(|s| s.text.as_str())
            .map_err(|e| GenError::Integrity(e.to_string()))
    };

    let mut segments = Vec::new();
    if config.sees_elaboration {
        for i in 0..elab {
            let role = if i == anchor_index { SegmentRole::Anchor } else { SegmentRole::Context };
            segments.push(Segment::new(role, text_of(i)?));
        }
        segments.push(Segment::new(SegmentRole::Elaboration, text_of(elab)?));
        segments.push(Segment::new(SegmentRole::QuestionCue, question));
        return Ok(AssembledPrompt::new(segments, layouts.dcqa.clone()));
    }

    let target = target.ok_or_else(|| {
        GenError::Config(format!(
            "{} needs a {:?} target for instance {}",
            config.name, config.target_source, instance.instance_id
        ))
    })?;
    if target.sentence_index != anchor_index {
        return Err(GenError::Integrity(format!(
            "instance {}: target is in sentence {}, anchor is {anchor_index}",
            instance.instance_id, target.sentence_index
        )));
    }
    let anchor = doc
        .sentence(anchor_index)
        .map_err(|e| GenError::Integrity(e.to_string()))?;
    let tokens = anchor.tokens();
    let checked = TargetSpan::new(doc, anchor_index, target.start_token, target.end_token)
        .map_err(|e| GenError::Integrity(e.to_string()))?;
    for i in 0..anchor_index {
        segments.push(Segment::new(SegmentRole::Context, text_of(i)?));
    }
    segments.push(Segment::new(SegmentRole::Anchor, detokenize(&tokens[..checked.start_token])));
    segments.push(Segment::new(SegmentRole::TargetOpen, ""));
    segments.push(Segment::new(SegmentRole::Anchor, checked.surface_text.clone()));
    segments.push(Segment::new(SegmentRole::TargetClose, ""));
    segments.push(Segment::new(SegmentRole::Anchor, detokenize(&tokens[checked.end_token..])));
    segments.push(Segment::new(SegmentRole::QuestionCue, question));
    Ok(AssembledPrompt::new(segments, layouts.inq.clone()))
}

/// Generates a question; output is whitespace-trimmed and must be nonempty.
pub fn generate_question(
    prompt: AssembledPrompt,
    client: &BackendClient,
    decode: &DecodeParams,
) -> Result<GenerationRecord, GenError> {
    generate_question_traced(prompt, client, decode).map(|g| g.record)
}

/// As [`generate_question`], also reporting whether the cache answered.
pub fn generate_question_traced(
    prompt: AssembledPrompt,
    client: &BackendClient,
    decode: &DecodeParams,
) -> Result<Generated, GenError> {
    generation::run(prompt, client, decode, RecordKind::Question, generation::trimmed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedTarget {
    pub span: TargetSpan,
    pub raw: RawSpan,
    /// The predictor's offsets fell outside the sentence and were clamped.
    pub clamped: bool,
}

/// Predicts the target inside the anchor sentence, clamping out-of-range
/// offsets to the sentence.
pub fn predict_target(
    anchor: &Sentence,
    context: &ContextWindow,
    predictor: &dyn SpanPredictorBackend,
) -> Result<PredictedTarget, GenError> {
    let tokens = anchor.tokens();
    if tokens.is_empty() {
        return Err(GenError::Integrity(format!("anchor sentence {} has no tokens", anchor.index)));
    }
    let raw = predictor.predict(&tokens, context)?;
    let len = tokens.len() as i64;
    let start = raw.start.clamp(0, len - 1);
    let end = raw.end.clamp(start + 1, len);
    let clamped = start != raw.start || end != raw.end;
    if clamped {
        log::warn!(
            "span predictor returned [{}, {}) for a {len}-token sentence; clamped to [{start}, {end})",
            raw.start,
            raw.end
        );
    }
    let span = TargetSpan::from_tokens(&tokens, anchor.index, start as usize, end as usize)
        .map_err(GenError::Integrity)?;
    Ok(PredictedTarget { span, raw, clamped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanMetrics {
    pub exact_match: f64,
    /// Micro-averaged share of predicted tokens inside the gold span.
    pub token_precision: f64,
    pub n: usize,
}

pub fn span_prediction_metrics(
    predicted: &[TargetSpan],
    gold: &[TargetSpan],
) -> Result<SpanMetrics, GenError> {
    if predicted.len() != gold.len() {
        return Err(GenError::Alignment(format!(
            "{} predicted spans for {} gold spans",
            predicted.len(),
            gold.len()
        )));
    }
    if predicted.is_empty() {
        return Err(GenError::Alignment("no spans to score".into()));
    }
    let mut exact = 0usize;
    let mut hit = 0usize;
    let mut total = 0usize;
    for (p, g) in predicted.iter().zip(gold) {
        if p.same_extent(g) {
            exact += 1;
        }
        total += p.len();
        if p.sentence_index == g.sentence_index {
            let lo = p.start_token.max(g.start_token);
            let hi = p.end_token.min(g.end_token);
            hit += hi.saturating_sub(lo);
        }
    }
    Ok(SpanMetrics {
        exact_match: exact as f64 / predicted.len() as f64,
        token_precision: if total == 0 { 0.0 } else { hit as f64 / total as f64 },
        n: predicted.len(),
    })
}
