//! Elaboration prompts under three conditions: context only, a generic
//! instruction, or a question under discussion.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backends::BackendClient;
use crate::corpus::ContextWindow;
use crate::generation::{self, DecodeParams, GenError, Generated, GenerationRecord, RecordKind};
use crate::prompt::{AssembledPrompt, PromptLayout, Segment, SegmentRole};

pub const GENERIC_INSTRUCTION: &str = "Please explain the last sentence in simple terms:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElabKind {
    ContextOnly,
    Generic,
    Qud,
}

impl ElabKind {
    pub const ALL: [ElabKind; 3] = [ElabKind::ContextOnly, ElabKind::Generic, ElabKind::Qud];

    pub fn as_str(self) -> &'static str {
        match self {
            ElabKind::ContextOnly => "context_only",
            ElabKind::Generic => "generic",
            ElabKind::Qud => "qud",
        }
    }
}

impl fmt::Display for ElabKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ElabKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ElabKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown condition `{s}`; expected one of context_only, generic, qud"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElabPromptCondition {
    pub kind: ElabKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
}

impl ElabPromptCondition {
    pub fn context_only() -> Self {
        ElabPromptCondition {
            kind: ElabKind::ContextOnly,
            question: None,
        }
    }

    pub fn generic() -> Self {
        ElabPromptCondition {
            kind: ElabKind::Generic,
            question: None,
        }
    }

    pub fn qud(question: impl Into<String>) -> Self {
        ElabPromptCondition {
            kind: ElabKind::Qud,
            question: Some(question.into()),
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let has_q = self.question.as_deref().is_some_and(|q| !q.trim().is_empty());
        match (self.kind, has_q) {
            (ElabKind::Qud, false) => Err(GenError::Config("the qud condition needs a question".into())),
            (k, true) if k != ElabKind::Qud => Err(GenError::Config(format!(
                "the {k} condition takes no question"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElabLayouts {
    pub context_only: PromptLayout,
    pub generic: PromptLayout,
    pub qud: PromptLayout,
}

const DEFAULT_ELAB_LAYOUTS: &str = include_str!("../assets/elab_layouts.json");

impl Default for ElabLayouts {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_ELAB_LAYOUTS).expect("bundled elaboration layouts are valid")
    }
}

impl ElabLayouts {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, GenError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| GenError::Config(format!("{}: {e}", path.as_ref().display())))?;
        serde_json::from_str(&text).map_err(|e| GenError::Config(format!("elaboration layouts: {e}")))
    }

    pub fn get(&self, kind: ElabKind) -> &PromptLayout {
        match kind {
            ElabKind::ContextOnly => &self.context_only,
            ElabKind::Generic => &self.generic,
            ElabKind::Qud => &self.qud,
        }
    }
}

/// Builds the prompt from the sentences before the elaboration only; the
/// elaboration and the following sentences never reach the generator.
pub fn build_elab_prompt(
    context: &ContextWindow,
    condition: &ElabPromptCondition,
    layouts: &ElabLayouts,
) -> Result<AssembledPrompt, GenError> {
    condition.validate()?;
    if context.pre.is_empty() {
        return Err(GenError::Config(format!(
            "elaboration at sentence {} has no preceding context",
            context.elab_index()
        )));
    }
    let mut segments: Vec<Segment> = context
        .pre
        .iter()
        .map(|s| Segment::new(SegmentRole::Context, s.text.clone()))
        .collect();
    match condition.kind {
        ElabKind::ContextOnly => {}
        ElabKind::Generic => segments.push(Segment::new(SegmentRole::QuestionCue, GENERIC_INSTRUCTION)),
        ElabKind::Qud => segments.push(Segment::new(
            SegmentRole::QuestionCue,
            condition.question.clone().unwrap_or_default(),
        )),
    }
    Ok(AssembledPrompt::new(segments, layouts.get(condition.kind).clone()))
}

/// Generates an elaboration and keeps the first nonempty line of the output.
pub fn generate_elaboration(
    prompt: AssembledPrompt,
    client: &BackendClient,
    decode: &DecodeParams,
) -> Result<GenerationRecord, GenError> {
    generate_elaboration_traced(prompt, client, decode).map(|g| g.record)
}

pub fn generate_elaboration_traced(
    prompt: AssembledPrompt,
    client: &BackendClient,
    decode: &DecodeParams,
) -> Result<Generated, GenError> {
    generation::run(prompt, client, decode, RecordKind::Elaboration, generation::first_line)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{extract_window, Document};

    fn window() -> ContextWindow {
        let d = Document::from_texts("d", &["A.", "B.", "E.", "P."], &[2]).unwrap();
        extract_window(&d, 2).unwrap()
    }

    #[test]
    fn generic_layout() {
        let p = build_elab_prompt(&window(), &ElabPromptCondition::generic(), &ElabLayouts::default()).unwrap();
        assert_eq!(p.rendered, "A. B.\nPlease explain the last sentence in simple terms:");
    }

    #[test]
    fn qud_layout() {
        let p = build_elab_prompt(
            &window(),
            &ElabPromptCondition::qud("What do call centers do?"),
            &ElabLayouts::default(),
        )
        .unwrap();
        assert_eq!(p.rendered, "Context: A. B.\nQuestion: What do call centers do?\nAnswer:");
        assert_eq!(p.rendered.matches("Question:").count(), 1);
    }

    #[test]
    fn context_only_layout() {
        let p = build_elab_prompt(&window(), &ElabPromptCondition::context_only(), &ElabLayouts::default()).unwrap();
        assert_eq!(p.rendered, "A. B.");
    }

    #[test]
    fn condition_validation() {
        let bad = ElabPromptCondition {
            kind: ElabKind::Qud,
            question: None,
        };
        assert!(matches!(build_elab_prompt(&window(), &bad, &ElabLayouts::default()), Err(GenError::Config(_))));
        let extra = ElabPromptCondition {
            kind: ElabKind::Generic,
            question: Some("q".into()),
        };
        assert!(extra.validate().is_err());
    }
}
