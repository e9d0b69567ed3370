//! Segment-based prompt assembly.
//!
//! A prompt is an ordered list of `(role, text)` segments plus a delimiter
//! pair per role. Rendering groups consecutive segments of the same role into
//! a run, joins the run's texts with single spaces, wraps it as
//! `open + text + close`, and joins the runs with the prompt's joiner. Runs
//! with no text are dropped, except marker roles (target delimiters and the
//! question cue), which render their delimiters alone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentRole {
    Context,
    Anchor,
    Elaboration,
    TargetOpen,
    TargetClose,
    QuestionCue,
}

impl SegmentRole {
    fn is_marker(self) -> bool {
        matches!(
            self,
            SegmentRole::TargetOpen | SegmentRole::TargetClose | SegmentRole::QuestionCue
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delimiter {
    #[serde(default)]
    pub open: String,
    #[serde(default)]
    pub close: String,
}

impl Delimiter {
    pub fn new(open: &str, close: &str) -> Self {
        Delimiter {
            open: open.to_string(),
            close: close.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub role: SegmentRole,
    pub text: String,
}

impl Segment {
    pub fn new(role: SegmentRole, text: impl Into<String>) -> Self {
        Segment {
            role,
            text: text.into(),
        }
    }
}

/// Delimiters and joiner for one prompt family, plus its layout version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptLayout {
    pub version: String,
    pub joiner: String,
    pub delimiters: BTreeMap<SegmentRole, Delimiter>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub segments: Vec<Segment>,
    pub layout: PromptLayout,
    pub rendered: String,
}

impl AssembledPrompt {
    pub fn new(segments: Vec<Segment>, layout: PromptLayout) -> Self {
        let rendered = render(&segments, &layout);
        AssembledPrompt {
            segments,
            layout,
            rendered,
        }
    }

    pub fn delimiter_map(&self) -> &BTreeMap<SegmentRole, Delimiter> {
        &self.layout.delimiters
    }

    pub fn render(&self) -> String {
        render(&self.segments, &self.layout)
    }

    pub fn context_sentences(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| s.role == SegmentRole::Context)
            .count()
    }

    /// Removes the earliest context segment and re-renders. Returns false,
    /// leaving the prompt unchanged, when that would leave no source text
    /// (context, anchor or elaboration) at all.
    pub fn drop_earliest_context(&mut self) -> bool {
        let source = self
            .segments
            .iter()
            .filter(|s| {
                matches!(s.role, SegmentRole::Context | SegmentRole::Anchor | SegmentRole::Elaboration)
            })
            .count();
        if source < 2 {
            return false;
        }
        match self
            .segments
            .iter()
            .position(|s| s.role == SegmentRole::Context)
        {
            Some(i) => {
                self.segments.remove(i);
                self.rendered = self.render();
                true
            }
            None => false,
        }
    }
}

fn render(segments: &[Segment], layout: &PromptLayout) -> String {
    let empty = Delimiter::default();
    let mut pieces: Vec<String> = Vec::new();
    let mut i = 0;
    while i < segments.len() {
        let role = segments[i].role;
        let mut j = i;
        let mut texts: Vec<&str> = Vec::new();
        while j < segments.len() && segments[j].role == role {
            let t = segments[j].text.trim();
            if !t.is_empty() {
                texts.push(t);
            }
            j += 1;
        }
        if !texts.is_empty() || role.is_marker() {
            let d = layout.delimiters.get(&role).unwrap_or(&empty);
            pieces.push(format!("{}{}{}", d.open, texts.join(" "), d.close));
        }
        i = j;
    }
    pieces.join(&layout.joiner)
}
