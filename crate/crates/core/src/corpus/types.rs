use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::tokenize::{detokenize, tokenize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub text: String,
    pub is_elaboration: bool,
}

impl Sentence {
    pub fn tokens(&self) -> Vec<String> {
        tokenize(&self.text)
    }
}

/// A simplified article: ordered sentences, some of them marked as inserted
/// elaborations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Sentence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_level: Option<String>,
}

impl Document {
    /// Validates sentence indexing and text before constructing.
    pub fn new(
        doc_id: impl Into<String>,
        sentences: Vec<Sentence>,
        source_level: Option<String>,
    ) -> Result<Self, CorpusError> {
        let doc = Document {
            doc_id: doc_id.into(),
            sentences,
            source_level,
        };
        doc.validate()?;
        Ok(doc)
    }

    /// Builds a document from plain sentence texts, marking `elaborations`.
    pub fn from_texts<S: AsRef<str>>(
        doc_id: impl Into<String>,
        texts: &[S],
        elaborations: &[usize],
    ) -> Result<Self, CorpusError> {
        let sentences = texts
            .iter()
            .enumerate()
            .map(|(index, t)| Sentence {
                index,
                text: t.as_ref().to_string(),
                is_elaboration: elaborations.contains(&index),
            })
            .collect();
        Document::new(doc_id, sentences, None)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.doc_id.trim().is_empty() {
            return Err(CorpusError::Integrity("document with empty doc_id".into()));
        }
        for (pos, s) in self.sentences.iter().enumerate() {
            if s.index != pos {
                return Err(CorpusError::Integrity(format!(
                    "document {}: sentence at position {pos} has index {}",
                    self.doc_id, s.index
                )));
            }
            if s.text.trim().is_empty() {
                return Err(CorpusError::Integrity(format!(
                    "document {}: sentence {pos} is empty",
                    self.doc_id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sentence(&self, index: usize) -> Result<&Sentence, CorpusError> {
        self.sentences.get(index).ok_or(CorpusError::Range {
            index: index as i64,
            len: self.sentences.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!(
                "unknown split `{other}` (expected train, validation or test)"
            )),
        }
    }
}

/// Sentences shown around an elaboration: up to five before, up to three after.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub pre: Vec<Sentence>,
    pub elaboration: Sentence,
    pub post: Vec<Sentence>,
}

impl ContextWindow {
    pub fn elab_index(&self) -> usize {
        self.elaboration.index
    }

    /// Text of the preceding sentences only.
    pub fn pre_texts(&self) -> Vec<&str> {
        self.pre.iter().map(|s| s.text.as_str()).collect()
    }

    pub fn contains_index(&self, index: usize) -> bool {
        index == self.elaboration.index
            || self.pre.iter().any(|s| s.index == index)
            || self.post.iter().any(|s| s.index == index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElaborationInstance {
    pub instance_id: String,
    pub doc_id: String,
    pub elab_index: usize,
    pub context: ContextWindow,
    pub split: Split,
}

/// A highlighted span inside one sentence, in canonical-tokenizer offsets.
/// `end_token` is exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TargetSpan {
    pub sentence_index: usize,
    pub start_token: usize,
    pub end_token: usize,
    pub surface_text: String,
}

impl TargetSpan {
    /// Checks bounds against the referenced sentence and fills `surface_text`.
    pub fn new(
        doc: &Document,
        sentence_index: usize,
        start_token: usize,
        end_token: usize,
    ) -> Result<Self, CorpusError> {
        let sentence = doc.sentence(sentence_index)?;
        let tokens = sentence.tokens();
        Self::from_tokens(&tokens, sentence_index, start_token, end_token).map_err(|msg| {
            CorpusError::Integrity(format!(
                "document {}: target in sentence {sentence_index}: {msg}",
                doc.doc_id
            ))
        })
    }

    pub(crate) fn from_tokens(
        tokens: &[String],
        sentence_index: usize,
        start_token: usize,
        end_token: usize,
    ) -> Result<Self, String> {
        if start_token >= end_token {
            return Err(format!(
                "start_token {start_token} must be below end_token {end_token}"
            ));
        }
        if end_token > tokens.len() {
            return Err(format!(
                "end_token {end_token} exceeds sentence length {}",
                tokens.len()
            ));
        }
        Ok(TargetSpan {
            sentence_index,
            start_token,
            end_token,
            surface_text: detokenize(&tokens[start_token..end_token]),
        })
    }

    pub fn len(&self) -> usize {
        self.end_token - self.start_token
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same sentence and at least one shared token position.
    pub fn overlaps(&self, other: &TargetSpan) -> bool {
        self.sentence_index == other.sentence_index
            && self.start_token < other.end_token
            && other.start_token < self.end_token
    }

    pub fn same_extent(&self, other: &TargetSpan) -> bool {
        self.sentence_index == other.sentence_index
            && self.start_token == other.start_token
            && self.end_token == other.end_token
    }
}

/// One annotator's reading of an elaboration: the implicit question it
/// answers, where that question arises, and what it elaborates on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QudAnnotation {
    pub instance_id: String,
    pub annotator_id: String,
    pub question: String,
    /// Absent only for organizational sentences.
    pub target: Option<TargetSpan>,
    pub anchor_index: usize,
    pub is_organizational: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<DateTime<Utc>>,
}

impl QudAnnotation {
    /// Checks the annotation against the document it refers to.
    pub fn validate(&self, doc: &Document) -> Result<(), CorpusError> {
        if !self.is_organizational && self.question.trim().is_empty() {
            return Err(CorpusError::Integrity(format!(
                "annotation by {} on {}: empty question on a non-organizational annotation",
                self.annotator_id, self.instance_id
            )));
        }
        if self.anchor_index >= doc.len() {
            return Err(CorpusError::Integrity(format!(
                "annotation by {} on {}: anchor_index {} outside document {} ({} sentences)",
                self.annotator_id,
                self.instance_id,
                self.anchor_index,
                doc.doc_id,
                doc.len()
            )));
        }
        match &self.target {
            Some(t) => {
                let fresh = TargetSpan::new(doc, t.sentence_index, t.start_token, t.end_token)?;
                if fresh.surface_text != t.surface_text {
                    return Err(CorpusError::Integrity(format!(
                        "annotation by {} on {}: surface text `{}` does not match tokens `{}`",
                        self.annotator_id, self.instance_id, t.surface_text, fresh.surface_text
                    )));
                }
            }
            None if !self.is_organizational => {
                return Err(CorpusError::Integrity(format!(
                    "annotation by {} on {}: target required unless organizational",
                    self.annotator_id, self.instance_id
                )));
            }
            None => {}
        }
        Ok(())
    }

    pub fn has_question(&self) -> bool {
        !self.is_organizational && !self.question.trim().is_empty()
    }
}

/// Signed distance from the anchor sentence to the elaboration: positive when
/// the anchor precedes it, `-1` for the line right after.
pub fn anchor_distance(
    annotation: &QudAnnotation,
    instance: &ElaborationInstance,
) -> Result<i64, CorpusError> {
    if annotation.instance_id != instance.instance_id {
        return Err(CorpusError::Integrity(format!(
            "annotation for {} paired with instance {}",
            annotation.instance_id, instance.instance_id
        )));
    }
    Ok(instance.elab_index as i64 - annotation.anchor_index as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::extract_window;

    fn doc() -> Document {
        Document::from_texts(
            "d1",
            &["S0.", "S1.", "S2.", "S3.", "S4.", "S5 elaborates.", "S6.", "S7."],
            &[5],
        )
        .unwrap()
    }

    fn instance(d: &Document) -> ElaborationInstance {
        ElaborationInstance {
            instance_id: "i1".into(),
            doc_id: d.doc_id.clone(),
            elab_index: 5,
            context: extract_window(d, 5).unwrap(),
            split: Split::Test,
        }
    }

    fn annotation(anchor: usize) -> QudAnnotation {
        QudAnnotation {
            instance_id: "i1".into(),
            annotator_id: "a".into(),
            question: "What is S4?".into(),
            target: None,
            anchor_index: anchor,
            is_organizational: false,
            timestamp: None,
        }
    }

    #[test]
    fn anchor_distance_sign_convention() {
        let d = doc();
        let inst = instance(&d);
        assert_eq!(anchor_distance(&annotation(4), &inst).unwrap(), 1);
        assert_eq!(anchor_distance(&annotation(5), &inst).unwrap(), 0);
        assert_eq!(anchor_distance(&annotation(6), &inst).unwrap(), -1);
    }

    #[test]
    fn anchor_distance_rejects_mismatched_instance() {
        let d = doc();
        let inst = instance(&d);
        let mut a = annotation(4);
        a.instance_id = "other".into();
        assert!(matches!(
            anchor_distance(&a, &inst),
            Err(CorpusError::Integrity(_))
        ));
    }

    #[test]
    fn target_span_bounds() {
        let d = Document::from_texts("d", &["the cat sat ."], &[]).unwrap();
        let t = TargetSpan::new(&d, 0, 0, 2).unwrap();
        assert_eq!(t.surface_text, "the cat");
        assert!(TargetSpan::new(&d, 0, 2, 2).is_err());
        assert!(TargetSpan::new(&d, 0, 3, 5).is_err());
        assert!(TargetSpan::new(&d, 1, 0, 1).is_err());
    }

    #[test]
    fn span_overlap_requires_same_sentence() {
        let a = TargetSpan::from_tokens(&["x".into(), "y".into()], 0, 0, 2).unwrap();
        let mut b = a.clone();
        assert!(a.overlaps(&b));
        b.sentence_index = 1;
        assert!(!a.overlaps(&b));
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(Document::from_texts("d", &["ok.", "  "], &[]).is_err());
        let bad = vec![Sentence {
            index: 1,
            text: "x".into(),
            is_elaboration: false,
        }];
        assert!(Document::new("d", bad, None).is_err());
    }

    #[test]
    fn organizational_annotation_needs_no_question() {
        let d = doc();
        let mut a = annotation(4);
        a.question.clear();
        a.is_organizational = true;
        assert!(a.validate(&d).is_ok());
        a.is_organizational = false;
        assert!(a.validate(&d).is_err());
    }
}
