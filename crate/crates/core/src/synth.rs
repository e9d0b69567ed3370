//! Deterministic synthetic corpora for tests, benchmarks and desk-scale runs
//! without licensed data.
//!
//! Each elaboration sentence carries a unique sentinel token
//! (`zqsent<doc>x<index>`), so leaks of the elaboration into a prompt can be
//! detected by plain string search.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Document, InstanceRecord, QudAnnotation, Split, TargetSpan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub docs: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub elaborations_per_doc: usize,
    pub annotators_per_instance: usize,
    /// Share of annotations flagged organizational.
    pub organizational_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            docs: 10,
            min_sentences: 6,
            max_sentences: 14,
            elaborations_per_doc: 2,
            annotators_per_instance: 2,
            organizational_rate: 0.0,
            seed: 0,
        }
    }
}

const NAMES: &[&str] = &["Anderson", "Landa", "Obama", "Maria", "Chen", "Texas", "Syria", "Nobel"];
const NOUNS: &[&str] = &[
    "city", "council", "school", "river", "farmer", "plan", "law", "water", "scientist", "game",
    "factory", "market", "children", "teacher", "storm", "museum", "party", "missile", "center",
];
const VERBS: &[&str] = &["built", "closed", "found", "helped", "studied", "opened", "moved", "paid", "asked"];
const ADJS: &[&str] = &["new", "small", "old", "busy", "rough", "strange", "public", "large"];
const DETS: &[&str] = &["the", "a", "this", "every"];
const QWORDS: &[&str] = &["What is", "Why is", "How does", "What happened to", "Who owns"];

pub fn sentinel(doc: usize, index: usize) -> String {
    format!("zqsent{doc}x{index}")
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words.choose(rng).expect("nonempty word list")
}

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let mut words = vec![pick(rng, DETS).to_string()];
    if rng.gen_bool(0.5) {
        words.push(pick(rng, ADJS).to_string());
    }
    words.push(pick(rng, NOUNS).to_string());
    if rng.gen_bool(0.4) {
        words.push("in".into());
        words.push(pick(rng, NAMES).to_string());
    }
    words.push(pick(rng, VERBS).to_string());
    words.push(pick(rng, DETS).to_string());
    words.push(pick(rng, NOUNS).to_string());
    if rng.gen_bool(0.3) {
        words.push(format!("{}", rng.gen_range(2..500)));
        words.push("years".into());
    }
    let mut s = words.join(" ");
    s[..1].make_ascii_uppercase();
    if rng.gen_bool(0.15) {
        s.push_str(", and it stayed");
    }
    s.push('.');
    s
}

/// Builds a validated dataset. Anchors always precede their elaboration, at
/// distance 1 most of the time.
pub fn synthetic_dataset(spec: &SynthSpec) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut documents = Vec::new();
    let mut instances = Vec::new();
    let mut annotations = Vec::new();
    for d in 0..spec.docs {
        let n = rng.gen_range(spec.min_sentences.max(2)..=spec.max_sentences.max(spec.min_sentences.max(2)));
        let mut candidates: Vec<usize> = (1..n).collect();
        candidates.shuffle(&mut rng);
        let mut elabs: Vec<usize> = candidates.into_iter().take(spec.elaborations_per_doc.min(n - 1)).collect();
        elabs.sort_unstable();
        let texts: Vec<String> = (0..n)
            .map(|i| {
                let s = sentence(&mut rng);
                if elabs.contains(&i) {
                    format!("{} {}.", s.trim_end_matches('.'), sentinel(d, i))
                } else {
                    s
                }
            })
            .collect();
        let doc = Document::from_texts(format!("doc{d:03}"), &texts, &elabs).expect("synthetic document is valid");
        for &e in &elabs {
            let instance_id = format!("doc{d:03}-e{e}");
            let split = match instances.len() % 5 {
                0 => Split::Test,
                1 => Split::Validation,
                _ => Split::Train,
            };
            instances.push(InstanceRecord {
                instance_id: instance_id.clone(),
                doc_id: doc.doc_id.clone(),
                elab_index: e,
                split,
            });
            for a in 0..spec.annotators_per_instance {
                let distance = if e >= 2 && rng.gen_bool(0.25) { rng.gen_range(2..=e.min(4)) } else { 1 };
                let anchor = e - distance;
                let len = doc.sentences[anchor].tokens().len();
                let start = rng.gen_range(0..len.saturating_sub(1).max(1));
                let end = (start + rng.gen_range(1..=4)).min(len);
                let target = TargetSpan::new(&doc, anchor, start, end).expect("span within sentence");
                let organizational = rng.gen_bool(spec.organizational_rate.clamp(0.0, 1.0));
                annotations.push(QudAnnotation {
                    instance_id: instance_id.clone(),
                    annotator_id: format!("ann{a}"),
                    question: if organizational {
                        String::new()
                    } else {
                        format!("{} {}?", pick(&mut rng, QWORDS), target.surface_text.to_lowercase())
                    },
                    target: (!organizational).then_some(target),
                    anchor_index: anchor,
                    is_organizational: organizational,
                    timestamp: None,
                });
            }
        }
        documents.push(doc);
    }
    Dataset::new(documents, instances, annotations).expect("synthetic dataset is valid")
}
