//! In-process backends: deterministic, dependency-free stand-ins for the
//! neural models. None of them reproduce a published model; they exist so the
//! whole pipeline runs offline and so tests have scriptable oracles.

use std::collections::{BTreeMap, HashMap};

use serde_json::Value;

use super::{
    BackendDescriptor, BackendError, BackendKind, ClassifierBackend, EmbeddingBackend, RawSpan,
    SpanPredictorBackend, TaggerBackend,
};
use crate::analysis::QuestionType;
use crate::corpus::ContextWindow;
use crate::tokenize::is_word;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Bag of hashed character trigrams per token, L2-normalized. Tokens sharing
/// spelling share direction, which is enough for smoke-testing similarity.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    descriptor: BackendDescriptor,
    dim: usize,
    baseline: f64,
}

impl HashingEmbedder {
    pub fn new(dim: usize, baseline: f64) -> Self {
        let mut params = BTreeMap::new();
        params.insert("dim".into(), Value::from(dim));
        params.insert("baseline".into(), Value::from(baseline));
        HashingEmbedder {
            descriptor: BackendDescriptor::new("hashing-embedder", BackendKind::Embedding, None, params),
            dim: dim.max(1),
            baseline,
        }
    }

    fn vector(&self, token: &str) -> Vec<f64> {
        let padded: Vec<char> = format!("#{}#", token.to_lowercase()).chars().collect();
        let mut v = vec![0.0; self.dim];
        for gram in padded.windows(3.min(padded.len())) {
            let s: String = gram.iter().collect();
            let h = fnv1a(s.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Every trigram cancelled out; fall back to one bucket for the whole token.
            v[(fnv1a(token.to_lowercase().as_bytes()) % self.dim as u64) as usize] = 1.0;
            return v;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }
}

impl EmbeddingBackend for HashingEmbedder {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn baseline(&self) -> f64 {
        self.baseline
    }

    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        Ok(tokens.iter().map(|t| self.vector(t)).collect())
    }
}

/// Fixed token → vector table. Unknown tokens are an error.
#[derive(Debug, Clone)]
pub struct TableEmbedder {
    descriptor: BackendDescriptor,
    table: HashMap<String, Vec<f64>>,
    baseline: f64,
}

impl TableEmbedder {
    pub fn new(table: HashMap<String, Vec<f64>>, baseline: f64) -> Self {
        let mut params = BTreeMap::new();
        let sorted: BTreeMap<_, _> = table.iter().collect();
        params.insert(
            "table".into(),
            serde_json::to_value(sorted).expect("table serializes"),
        );
        params.insert("baseline".into(), Value::from(baseline));
        TableEmbedder {
            descriptor: BackendDescriptor::new("table-embedder", BackendKind::Embedding, None, params),
            table,
            baseline,
        }
    }
}

impl EmbeddingBackend for TableEmbedder {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn baseline(&self) -> f64 {
        self.baseline
    }

    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        tokens
            .iter()
            .map(|t| {
                self.table
                    .get(t)
                    .cloned()
                    .ok_or_else(|| BackendError::Failed(format!("no embedding for token `{t}`")))
            })
            .collect()
    }
}

/// Predicts the entire anchor sentence.
#[derive(Debug, Clone)]
pub struct WholeSentencePredictor {
    descriptor: BackendDescriptor,
}

impl Default for WholeSentencePredictor {
    fn default() -> Self {
        WholeSentencePredictor {
            descriptor: BackendDescriptor::local("whole-sentence", BackendKind::Span),
        }
    }
}

impl SpanPredictorBackend for WholeSentencePredictor {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn predict(&self, anchor: &[String], _: &ContextWindow) -> Result<RawSpan, BackendError> {
        Ok(RawSpan {
            start: 0,
            end: anchor.len() as i64,
        })
    }
}

/// Predicts the last `n` word tokens of the anchor, ignoring trailing
/// punctuation. Targets most often sit at the end of the anchor sentence.
#[derive(Debug, Clone)]
pub struct TailTokensPredictor {
    descriptor: BackendDescriptor,
    n: usize,
}

impl TailTokensPredictor {
    pub fn new(n: usize) -> Self {
        let mut params = BTreeMap::new();
        params.insert("n".into(), Value::from(n));
        TailTokensPredictor {
            descriptor: BackendDescriptor::new("tail-tokens", BackendKind::Span, None, params),
            n: n.max(1),
        }
    }
}

impl SpanPredictorBackend for TailTokensPredictor {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn predict(&self, anchor: &[String], _: &ContextWindow) -> Result<RawSpan, BackendError> {
        let end = anchor
            .iter()
            .rposition(|t| is_word(t))
            .map(|i| i + 1)
            .unwrap_or(anchor.len());
        Ok(RawSpan {
            start: end.saturating_sub(self.n) as i64,
            end: end as i64,
        })
    }
}

/// Returns scripted spans keyed by the anchor's joined tokens.
#[derive(Debug, Clone)]
pub struct ScriptedSpanPredictor {
    descriptor: BackendDescriptor,
    script: HashMap<String, RawSpan>,
}

impl ScriptedSpanPredictor {
    pub fn new(script: HashMap<String, RawSpan>) -> Self {
        ScriptedSpanPredictor {
            descriptor: BackendDescriptor::local("scripted-span", BackendKind::Span),
            script,
        }
    }

    pub fn key(anchor_tokens: &[String]) -> String {
        anchor_tokens.join(" ")
    }
}

impl SpanPredictorBackend for ScriptedSpanPredictor {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn predict(&self, anchor: &[String], _: &ContextWindow) -> Result<RawSpan, BackendError> {
        let key = Self::key(anchor);
        self.script
            .get(&key)
            .copied()
            .ok_or(BackendError::ScriptedMiss(key))
    }
}

const CLOSED_CLASS: &[(&str, &[&str])] = &[
    ("DT", &["the", "a", "an", "this", "that", "these", "those", "every", "each", "some", "any", "no", "all", "both"]),
    ("IN", &["of", "in", "on", "at", "by", "for", "with", "from", "about", "into", "over", "under", "after", "before", "during", "between", "through", "since", "until", "against", "among", "without", "within", "upon", "because", "although", "while", "if", "than", "like", "as", "near", "west", "east", "north", "south"]),
    ("CC", &["and", "or", "but", "nor", "yet"]),
    ("PRP", &["i", "you", "he", "she", "it", "we", "they", "me", "him", "us", "them"]),
    ("PRP$", &["my", "your", "his", "her", "its", "our", "their"]),
    ("MD", &["can", "could", "will", "would", "shall", "should", "may", "might", "must"]),
    ("TO", &["to"]),
    ("VBZ", &["is", "has", "does", "says", "means"]),
    ("VBP", &["are", "have", "do", "am"]),
    ("VBD", &["was", "were", "had", "did", "said", "made", "went", "got", "took", "grew", "began", "came", "knew", "found", "told", "became", "paid", "won"]),
    ("VB", &["be", "make", "get", "take", "go", "know", "find", "tell", "become", "pay", "win", "write", "think"]),
    ("VBN", &["been", "known", "written", "taken", "given"]),
    ("VBG", &["being"]),
    ("WP", &["who", "what", "whom"]),
    ("WRB", &["why", "how", "when", "where"]),
    ("WDT", &["which", "whatever"]),
    ("RB", &["not", "very", "also", "just", "too", "so", "never", "always", "often", "there", "now", "then", "here", "up", "out"]),
    ("JJ", &["many", "much", "more", "most", "few", "other", "such", "new", "old", "good", "bad", "big", "small", "real", "traditional", "rough"]),
    ("CD", &["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "hundred", "thousand", "million", "billion"]),
];

/// Rule-based Penn Treebank tagger: a closed-class lexicon, optional user
/// lexicon, then capitalization and suffix rules. Good enough for tests and
/// smoke runs; plug a real tagger in for published statistics.
#[derive(Debug, Clone)]
pub struct HeuristicTagger {
    descriptor: BackendDescriptor,
    lexicon: HashMap<String, String>,
}

impl Default for HeuristicTagger {
    fn default() -> Self {
        Self::with_lexicon(HashMap::new())
    }
}

impl HeuristicTagger {
    /// `extra` maps lowercased words to tags and overrides the built-in rules.
    pub fn with_lexicon(extra: HashMap<String, String>) -> Self {
        let mut lexicon = HashMap::new();
        for (tag, words) in CLOSED_CLASS {
            for w in *words {
                lexicon.insert((*w).to_string(), (*tag).to_string());
            }
        }
        let mut params = BTreeMap::new();
        if !extra.is_empty() {
            let sorted: BTreeMap<_, _> = extra.iter().collect();
            params.insert("lexicon".into(), serde_json::to_value(sorted).expect("serializes"));
        }
        lexicon.extend(extra);
        HeuristicTagger {
            descriptor: BackendDescriptor::new("heuristic-tagger", BackendKind::Tagger, None, params),
            lexicon,
        }
    }

    fn tag_one(&self, token: &str, position: usize) -> String {
        if !is_word(token) {
            return match token {
                "." | "!" | "?" => ".",
                "," => ",",
                ";" | ":" | "--" => ":",
                "(" | "[" | "{" => "-LRB-",
                ")" | "]" | "}" => "-RRB-",
                "“" | "‘" => "``",
                "”" | "’" | "\"" | "'" => "''",
                _ => "SYM",
            }
            .to_string();
        }
        let lower = token.to_lowercase();
        if let Some(tag) = self.lexicon.get(&lower) {
            return tag.clone();
        }
        if token
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | ',' | '$' | '%'))
        {
            return "CD".into();
        }
        let capitalized = token.chars().next().is_some_and(char::is_uppercase);
        if capitalized && (position > 0 || token.len() > 1) {
            return if lower.ends_with('s') && position > 0 && token.len() > 3 && !lower.ends_with("ss") {
                "NNPS".into()
            } else {
                "NNP".into()
            };
        }
        let suffix = |s: &str| lower.len() > s.len() + 2 && lower.ends_with(s);
        if suffix("ing") {
            "VBG"
        } else if suffix("ed") {
            "VBD"
        } else if suffix("ly") {
            "RB"
        } else if ["ous", "ful", "ive", "able", "ible", "al", "ic", "less"]
            .iter()
            .any(|s| suffix(s))
        {
            "JJ"
        } else if suffix("s") && !lower.ends_with("ss") {
            "NNS"
        } else {
            "NN"
        }
        .to_string()
    }
}

impl TaggerBackend for HeuristicTagger {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn tag(&self, tokens: &[String]) -> Result<Vec<String>, BackendError> {
        Ok(tokens
            .iter()
            .enumerate()
            .map(|(i, t)| self.tag_one(t, i))
            .collect())
    }
}

/// Surface-cue question-type classifier over the ten-way taxonomy.
#[derive(Debug, Clone)]
pub struct CueWordClassifier {
    descriptor: BackendDescriptor,
}

impl Default for CueWordClassifier {
    fn default() -> Self {
        CueWordClassifier {
            descriptor: BackendDescriptor::local("cue-word-classifier", BackendKind::Classifier),
        }
    }
}

impl CueWordClassifier {
    pub fn classify_text(question: &str) -> QuestionType {
        let q = question.trim().to_lowercase();
        let has = |s: &str| q.contains(s);
        let starts = |s: &[&str]| s.iter().any(|p| q.starts_with(p));
        if has("for example") || has("such as") || has("what kind") || has("what are some")
            || has("what types") || has("example")
        {
            QuestionType::Example
        } else if has("differ") || has("compare") || has("similar") {
            QuestionType::Comparison
        } else if starts(&["why"]) || has("what caused") || has("reason") {
            QuestionType::Cause
        } else if has("what happen") || has("result") || has("effect") || has("consequence")
            || has("lead to") || has("what will")
        {
            QuestionType::Consequence
        } else if starts(&["how much", "how many", "how long", "how far", "how often", "to what extent"]) {
            QuestionType::Extent
        } else if starts(&["how"]) {
            QuestionType::Procedural
        } else if has("should") || has("do you think") {
            QuestionType::Judgmental
        } else if starts(&["is ", "are ", "was ", "were ", "do ", "does ", "did ", "can ", "will ", "has ", "have "]) {
            if has(" or ") {
                QuestionType::Disjunctive
            } else {
                QuestionType::Verification
            }
        } else if starts(&["what", "who", "where", "which", "when"]) {
            QuestionType::Concept
        } else {
            QuestionType::Other
        }
    }
}

impl ClassifierBackend for CueWordClassifier {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn classify(&self, question: &str) -> Result<QuestionType, BackendError> {
        Ok(Self::classify_text(question))
    }
}

/// Exact-match question → label table.
#[derive(Debug, Clone)]
pub struct ScriptedClassifier {
    descriptor: BackendDescriptor,
    script: HashMap<String, QuestionType>,
}

impl ScriptedClassifier {
    pub fn new(script: HashMap<String, QuestionType>) -> Self {
        ScriptedClassifier {
            descriptor: BackendDescriptor::local("scripted-classifier", BackendKind::Classifier),
            script,
        }
    }
}

impl ClassifierBackend for ScriptedClassifier {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn classify(&self, question: &str) -> Result<QuestionType, BackendError> {
        self.script
            .get(question)
            .copied()
            .ok_or_else(|| BackendError::ScriptedMiss(question.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::tokenize;

    #[test]
    fn hashing_embedder_is_deterministic_and_unit_norm() {
        let e = HashingEmbedder::new(64, 0.0);
        let a = e.embed(&["football".into()]).unwrap();
        let b = e.embed(&["football".into()]).unwrap();
        assert_eq!(a, b);
        let n: f64 = a[0].iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cancelling_trigrams_still_give_a_unit_vector() {
        for dim in [1, 2, 8, 64] {
            let e = HashingEmbedder::new(dim, 0.0);
            for a in 'a'..='z' {
                for b in 'a'..='z' {
                    let v = e.vector(&format!("{a}{b}"));
                    let n: f64 = v.iter().map(|x| x * x).sum();
                    assert!((n - 1.0).abs() < 1e-12, "{a}{b} at dim {dim}");
                }
            }
        }
    }

    #[test]
    fn tagger_handles_common_shapes() {
        let t = HeuristicTagger::default();
        let toks = tokenize("The Nobel Prize is 112 years old.");
        assert_eq!(
            t.tag(&toks).unwrap(),
            vec!["DT", "NNP", "NNP", "VBZ", "CD", "NNS", "JJ", "."]
        );
    }

    #[test]
    fn cue_classifier_examples() {
        assert_eq!(CueWordClassifier::classify_text("Why is football a rough game?"), QuestionType::Cause);
        assert_eq!(CueWordClassifier::classify_text("What do call centers do?"), QuestionType::Concept);
        assert_eq!(CueWordClassifier::classify_text("How does the watermark get copied?"), QuestionType::Procedural);
        assert_eq!(CueWordClassifier::classify_text("How many people live there?"), QuestionType::Extent);
        assert_eq!(CueWordClassifier::classify_text("What happened after the vote?"), QuestionType::Consequence);
        assert_eq!(CueWordClassifier::classify_text("Is it legal?"), QuestionType::Verification);
    }

    #[test]
    fn tail_predictor_skips_punctuation() {
        let p = TailTokensPredictor::new(2);
        let toks = tokenize("She wrote about the social revolution.");
        let ctx = ContextWindow {
            pre: vec![],
            elaboration: crate::corpus::Sentence { index: 0, text: "x".into(), is_elaboration: true },
            post: vec![],
        };
        assert_eq!(p.predict(&toks, &ctx).unwrap(), RawSpan { start: 4, end: 6 });
    }
}
