use serde::{Deserialize, Serialize};

use super::{ContextWindow, CorpusError, Document};

/// How many sentences are shown on each side of an elaboration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub before: usize,
    pub after: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            before: 5,
            after: 3,
        }
    }
}

/// Window with the default five preceding and three following sentences.
pub fn extract_window(doc: &Document, elab_index: usize) -> Result<ContextWindow, CorpusError> {
    extract_window_with(doc, elab_index, WindowSpec::default())
}

/// Takes up to `spec.before` sentences immediately before `elab_index` and up
/// to `spec.after` immediately after, truncating at document edges.
pub fn extract_window_with(
    doc: &Document,
    elab_index: usize,
    spec: WindowSpec,
) -> Result<ContextWindow, CorpusError> {
    let elaboration = doc.sentence(elab_index)?.clone();
    let start = elab_index.saturating_sub(spec.before);
    let end = (elab_index + 1 + spec.after).min(doc.len());
    Ok(ContextWindow {
        pre: doc.sentences[start..elab_index].to_vec(),
        elaboration,
        post: doc.sentences[elab_index + 1..end].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(n: usize) -> Document {
        let texts: Vec<String> = (0..n).map(|i| format!("Sentence {i}.")).collect();
        Document::from_texts("d", &texts, &[]).unwrap()
    }

    fn indices(s: &[super::super::Sentence]) -> Vec<usize> {
        s.iter().map(|s| s.index).collect()
    }

    #[test]
    fn interior_window() {
        let w = extract_window(&doc(10), 5).unwrap();
        assert_eq!(indices(&w.pre), vec![0, 1, 2, 3, 4]);
        assert_eq!(indices(&w.post), vec![6, 7, 8]);
        assert_eq!(w.elaboration.index, 5);
    }

    #[test]
    fn leading_edge() {
        let w = extract_window(&doc(10), 0).unwrap();
        assert!(w.pre.is_empty());
        assert_eq!(indices(&w.post), vec![1, 2, 3]);
    }

    #[test]
    fn trailing_edge() {
        let w = extract_window(&doc(10), 9).unwrap();
        assert_eq!(indices(&w.pre), vec![4, 5, 6, 7, 8]);
        assert!(w.post.is_empty());
    }

    #[test]
    fn short_document() {
        let w = extract_window(&doc(3), 2).unwrap();
        assert_eq!(indices(&w.pre), vec![0, 1]);
        assert!(w.post.is_empty());
    }

    #[test]
    fn out_of_range() {
        assert!(matches!(
            extract_window(&doc(3), 3),
            Err(CorpusError::Range { index: 3, len: 3 })
        ));
    }

    #[test]
    fn custom_spec() {
        let w = extract_window_with(&doc(10), 5, WindowSpec { before: 1, after: 0 }).unwrap();
        assert_eq!(indices(&w.pre), vec![4]);
        assert!(w.post.is_empty());
    }
}
