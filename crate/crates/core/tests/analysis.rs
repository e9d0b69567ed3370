//! Analysis statistics against hand-computed and externally computed values.

use std::collections::{BTreeMap, HashMap};

use approx::assert_relative_eq;
use proptest::prelude::*;

use qudelab::analysis::{
    agreement_from_ratings, anchor_agreement, frequency_test, pairwise_question_similarity,
    pdtb3_reference, question_type_distribution, random_article_pairs, relation_distribution,
    same_instance_pairs, t_test, target_overlap_rate, target_statistics, AnalysisError,
    FrequencyConfig, FrequencyLexicon, IdentitySimilarity, OovPolicy, OverlapPolicy, QuestionType,
    TTestVariant,
};
use qudelab::backends::{
    BackendDescriptor, BackendError, BackendKind, ScriptedClassifier, TaggerBackend,
};
use qudelab::corpus::{Dataset, Document, InstanceRecord, QudAnnotation, Split, TargetSpan};
use qudelab::par::ExecMode;

fn ratings(matrix: &[&[usize]]) -> Vec<Vec<usize>> {
    matrix
        .iter()
        .map(|row| row.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect())
        .collect()
}

// Expected values computed with exact rational arithmetic.
#[test]
fn fleiss_kappa_two_categories() {
    let a = [3, 0, 2, 1, 3, 3, 0, 2, 1, 3];
    let items: Vec<Vec<char>> = a
        .iter()
        .map(|&n| std::iter::repeat_n('A', n).chain(std::iter::repeat_n('B', 3 - n)).collect())
        .collect();
    let r = agreement_from_ratings(&items).unwrap();
    assert_relative_eq!(r.fleiss_kappa, 4.0 / 9.0, max_relative = 1e-12);
    assert_relative_eq!(r.free_marginal_kappa, 7.0 / 15.0, max_relative = 1e-12);
    assert_relative_eq!(r.percent_agreement, 11.0 / 15.0, max_relative = 1e-12);
    assert_eq!((r.n_items, r.n_categories, r.n_excluded), (10, 2, 0));
}

#[test]
fn fleiss_kappa_classic_table() {
    let m: [&[usize]; 10] = [
        &[0, 0, 0, 0, 14],
        &[0, 2, 6, 4, 2],
        &[0, 0, 3, 5, 6],
        &[0, 3, 9, 2, 0],
        &[2, 2, 8, 1, 1],
        &[7, 7, 0, 0, 0],
        &[3, 2, 6, 3, 0],
        &[2, 5, 3, 2, 2],
        &[6, 5, 2, 1, 0],
        &[0, 2, 2, 3, 7],
    ];
    let r = agreement_from_ratings(&ratings(&m)).unwrap();
    assert_relative_eq!(r.fleiss_kappa, 0.20993070442195524, max_relative = 1e-12);
    assert_relative_eq!(r.free_marginal_kappa, 0.22252747252747251, max_relative = 1e-12);
    assert_relative_eq!(r.percent_agreement, 0.378021978021978, max_relative = 1e-12);
}

#[test]
fn fleiss_kappa_variable_raters() {
    let m: [&[usize]; 4] = [&[1, 1, 0], &[2, 1, 0], &[0, 1, 1], &[3, 0, 1]];
    let r = agreement_from_ratings(&ratings(&m)).unwrap();
    assert_relative_eq!(r.fleiss_kappa, -0.3304398148148148, max_relative = 1e-12);
    assert_relative_eq!(r.free_marginal_kappa, -0.1875, max_relative = 1e-12);
    assert_relative_eq!(r.percent_agreement, 5.0 / 24.0, max_relative = 1e-12);
}

proptest! {
    #[test]
    fn unanimous_items_give_exactly_one(labels in prop::collection::vec((0u8..6, 2usize..6), 1..30)) {
        let items: Vec<Vec<u8>> = labels.iter().map(|&(c, n)| vec![c; n]).collect();
        let r = agreement_from_ratings(&items).unwrap();
        prop_assert_eq!(r.fleiss_kappa, 1.0);
        prop_assert_eq!(r.free_marginal_kappa, 1.0);
    }

    #[test]
    fn kappa_ignores_item_and_rater_order(items in prop::collection::vec(prop::collection::vec(0u8..4, 2..5), 2..20)) {
        let a = agreement_from_ratings(&items).unwrap();
        let mut shuffled: Vec<Vec<u8>> = items.iter().rev().map(|r| r.iter().rev().copied().collect()).collect();
        shuffled.rotate_left(1);
        let b = agreement_from_ratings(&shuffled).unwrap();
        prop_assert!((a.fleiss_kappa - b.fleiss_kappa).abs() < 1e-12 || (a.fleiss_kappa.is_nan() && b.fleiss_kappa.is_nan()));
        prop_assert!(a.free_marginal_kappa <= 1.0 && a.percent_agreement <= 1.0);
    }
}

/// Tags from a fixed word table; unknown words are an error.
struct HandTagger {
    descriptor: BackendDescriptor,
    tags: HashMap<&'static str, &'static str>,
}

impl HandTagger {
    fn new() -> Self {
        let tags = HashMap::from([
            ("Maria", "NNP"), ("Chen", "NNP"), ("built", "VBD"), ("a", "DT"), ("new", "JJ"),
            ("school", "NN"), ("in", "IN"), ("Texas", "NNP"), (".", "."), ("The", "DT"),
            ("council", "NN"), ("paid", "VBD"), ("for", "IN"), ("it", "PRP"), ("Many", "JJ"),
            ("parents", "NNS"), ("were", "VBD"), ("happy", "JJ"), ("opened", "VBD"), ("May", "NNP"),
            ("Students", "NNS"), ("study", "VBP"), ("there", "RB"), ("now", "RB"),
        ]);
        HandTagger {
            descriptor: BackendDescriptor::local("hand-tagger", BackendKind::Tagger),
            tags,
        }
    }
}

impl TaggerBackend for HandTagger {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn tag(&self, tokens: &[String]) -> Result<Vec<String>, BackendError> {
        tokens
            .iter()
            .map(|t| {
                self.tags
                    .get(t.as_str())
                    .map(|s| s.to_string())
                    .ok_or_else(|| BackendError::Failed(format!("untagged `{t}`")))
            })
            .collect()
    }
}

/// Two elaborations (sentences 2 and 4) with five annotated targets:
/// "Maria Chen", "built a new school", "council", "school opened in May", "May".
fn fixture() -> Dataset {
    let doc = Document::from_texts(
        "d",
        &[
            "Maria Chen built a new school in Texas.",
            "The council paid for it.",
            "Many parents were happy.",
            "The school opened in May.",
            "Students study there now.",
        ],
        &[2, 4],
    )
    .unwrap();
    let inst = |e: usize| InstanceRecord {
        instance_id: format!("d-e{e}"),
        doc_id: "d".into(),
        elab_index: e,
        split: Split::Train,
    };
    let ann = |e: usize, who: &str, q: &str, s: usize, a: usize, b: usize| QudAnnotation {
        instance_id: format!("d-e{e}"),
        annotator_id: who.into(),
        question: q.into(),
        target: Some(TargetSpan::new(&doc, s, a, b).unwrap()),
        anchor_index: s,
        is_organizational: false,
        timestamp: None,
    };
    let annotations = vec![
        ann(2, "a", "What did Maria build?", 0, 0, 2),
        ann(2, "b", "What did Maria build?", 0, 2, 6),
        ann(2, "c", "Who paid?", 1, 1, 2),
        ann(4, "a", "When did it open?", 3, 1, 5),
        ann(4, "b", "When did it open?", 3, 4, 5),
    ];
    Dataset::new(vec![doc.clone()], vec![inst(2), inst(4)], annotations).unwrap()
}

#[test]
fn target_statistics_hand_tagged() {
    let ds = fixture();
    let s = target_statistics(&ds, &HandTagger::new(), ExecMode::Sequential).unwrap();
    assert_eq!(s.n_targets, 5);
    assert_eq!(s.total_target_tokens, 12);
    assert_relative_eq!(s.mean_len_tokens, 2.4, max_relative = 1e-12);
    assert_relative_eq!(s.std_len_tokens, 1.84f64.sqrt(), max_relative = 1e-12);
    assert_relative_eq!(s.pct_with_verb, 0.4, max_relative = 1e-12);
    assert_relative_eq!(s.pct_with_proper_noun, 0.6, max_relative = 1e-12);
    let expected: BTreeMap<String, usize> = [("DT", 1), ("IN", 1), ("JJ", 1), ("NN", 3), ("NNP", 4), ("VBD", 2)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    assert_eq!(s.pos_histogram, expected);
    let p = target_statistics(&ds, &HandTagger::new(), ExecMode::Parallel).unwrap();
    assert_eq!(p, s);
}

#[test]
fn target_overlap_hand_counted() {
    let ds = fixture();
    // Four same-instance pairs; only "school opened in May" / "May" share a token.
    assert_relative_eq!(target_overlap_rate(&ds, OverlapPolicy::AnyToken).unwrap(), 0.25);
    assert_eq!(target_overlap_rate(&ds, OverlapPolicy::ExactSpan).unwrap(), 0.0);
}

#[test]
fn anchor_agreement_hand_computed() {
    // Distances: d-e2 → [2, 2, 1], d-e4 → [1, 1].
    let r = anchor_agreement(&fixture()).unwrap();
    assert_relative_eq!(r.fleiss_kappa, 11.0 / 36.0, max_relative = 1e-12);
    assert_relative_eq!(r.free_marginal_kappa, 1.0 / 3.0, max_relative = 1e-12);
    assert_eq!(r.n_items, 2);
}

#[test]
fn organizational_annotations_do_not_count_for_agreement() {
    let ds = fixture();
    let mut anns = ds.annotations().to_vec();
    anns.push(QudAnnotation {
        instance_id: "d-e4".into(),
        annotator_id: "c".into(),
        question: String::new(),
        target: None,
        anchor_index: 0,
        is_organizational: true,
        timestamp: None,
    });
    let with_org = ds.with_annotations(anns).unwrap();
    assert_eq!(anchor_agreement(&with_org).unwrap(), anchor_agreement(&ds).unwrap());
    assert_eq!(same_instance_pairs(&with_org).len(), 4);
}

// scipy.stats.ttest_ind over the same samples.
#[test]
fn frequency_test_matches_reference() {
    let lexicon = FrequencyLexicon::parse(
        "word\tlog10_fpm\nthe\t6.5\na\t6.4\nin\t6.2\nfor\t5.9\nit\t6.1\nwere\t5.8\nnew\t5.0\n\
         school\t4.5\nbuilt\t4.2\npaid\t4.0\nopened\t3.9\nmany\t5.1\nhappy\t4.6\nparents\t4.3\n\
         council\t3.8\nmay\t4.9\nstudents\t4.1\nstudy\t4.0\nthere\t5.5\nnow\t5.3\ntexas\t3.7\n",
    )
    .unwrap();
    let ds = fixture();
    let r = frequency_test(&ds, &lexicon, FrequencyConfig::default()).unwrap();
    assert_eq!((r.n_target_tokens, r.n_doc_tokens), (12, 26));
    assert_eq!((r.n_oov_target_tokens, r.n_oov_doc_tokens), (2, 2));
    assert_relative_eq!(r.mean_log_freq_targets, 3.974828334056003, max_relative = 1e-12);
    assert_relative_eq!(r.mean_log_freq_document, 4.63069000033354, max_relative = 1e-12);
    assert_relative_eq!(r.t_statistic, -0.9288042575888921, max_relative = 1e-9);
    assert_relative_eq!(r.df, 17.78174542528946, max_relative = 1e-9);
    assert_relative_eq!(r.p_value, 0.3654281531743502, max_relative = 1e-6);

    let student = frequency_test(&ds, &lexicon, FrequencyConfig { variant: TTestVariant::Student, ..Default::default() }).unwrap();
    assert_relative_eq!(student.t_statistic, -1.0095285293240837, max_relative = 1e-9);
    assert_relative_eq!(student.p_value, 0.31945874947127484, max_relative = 1e-6);

    let dropped = frequency_test(&ds, &lexicon, FrequencyConfig { oov: OovPolicy::Drop, ..Default::default() }).unwrap();
    assert_eq!((dropped.n_target_tokens, dropped.n_doc_tokens), (10, 24));
    assert_relative_eq!(dropped.t_statistic, -0.6230572842401321, max_relative = 1e-9);
    assert_relative_eq!(dropped.p_value, 0.5408688083947004, max_relative = 1e-6);
}

#[test]
fn t_test_closed_form() {
    // Means 2 and 4, variances 2.5, n = 5: se = 1, t = -2, df = 8.
    let a = [0.0, 1.0, 2.0, 3.0, 4.0];
    let b = [2.0, 3.0, 4.0, 5.0, 6.0];
    let r = t_test(&a, &b, TTestVariant::Welch).unwrap();
    assert_relative_eq!(r.t, -2.0, max_relative = 1e-12);
    assert_relative_eq!(r.df, 8.0, max_relative = 1e-12);
    assert_relative_eq!(r.p_value, 0.08051623795726257, max_relative = 1e-9);
    assert!(matches!(t_test(&[1.0], &b, TTestVariant::Welch), Err(AnalysisError::Statistics(_))));
}

#[test]
fn question_similarity_pairs() {
    let ds = fixture();
    assert_eq!(same_instance_pairs(&ds).len(), 4);
    let (random, pool) = random_article_pairs(&ds, 4, 7);
    assert_eq!((random.len(), pool), (4, 6));
    assert!(random.iter().all(|p| p.a.instance_id != p.b.instance_id));
    let r = pairwise_question_similarity(&ds, &IdentitySimilarity, 7, ExecMode::Sequential).unwrap();
    assert_eq!(r.same_elab_mean.raw, 0.5);
    assert_eq!(r.random_pair_mean.unwrap().raw, 0.0);
    let again = pairwise_question_similarity(&ds, &IdentitySimilarity, 7, ExecMode::Parallel).unwrap();
    assert_eq!(again, r);
}

#[test]
fn random_pairs_fall_back_to_replacement_when_pool_is_small() {
    let ds = fixture();
    let (random, pool) = random_article_pairs(&ds, 10, 1);
    assert_eq!((random.len(), pool), (10, 6));
    assert_eq!(random_article_pairs(&ds, 10, 1).0.len(), 10);
}

#[test]
fn question_types_scripted() {
    use QuestionType::*;
    let labels = [Cause, Cause, Cause, Cause, Concept, Concept, Concept, Procedural, Procedural, Example];
    let questions: Vec<String> = (0..10).map(|i| format!("question {i}?")).collect();
    let script = questions.iter().cloned().zip(labels).collect();
    let d = question_type_distribution(&questions, &ScriptedClassifier::new(script), ExecMode::Parallel).unwrap();
    assert_eq!(d.total, 10);
    assert_eq!(d.counts[&Cause], 4);
    assert_relative_eq!(d.proportions[&Concept], 0.3);
    assert_relative_eq!(d.proportions[&Example], 0.1);
    assert!(!d.counts.contains_key(&Judgmental));
    assert_relative_eq!(d.proportions.values().sum::<f64>(), 1.0, max_relative = 1e-12);
}

#[test]
fn relation_distribution_fixture() {
    let counts = [
        ("Contingency.Cause", 7), ("Comparison.Contrast", 1), ("Comparison.Concession", 1),
        ("Expansion.Conjunction", 8), ("Expansion.Instantiation", 2), ("Expansion.Level-of-detail", 2),
        ("Expansion.Manner", 4), ("Expansion.Substitution", 1), ("NoRel", 4), ("EntRel", 8), ("Hypophora", 2),
    ];
    let labels: Vec<(String, String)> = counts
        .iter()
        .flat_map(|&(l, n)| (0..n).map(move |i| (format!("{l}-{i}"), l.to_string())))
        .collect();
    assert_eq!(labels.len(), 40);
    let d = relation_distribution(&labels).unwrap();
    assert_relative_eq!(d["Contingency.Cause"], 0.175, max_relative = 1e-12);
    assert_relative_eq!(d["Expansion.Conjunction"], 0.2, max_relative = 1e-12);
    assert_relative_eq!(d["EntRel"], 0.2, max_relative = 1e-12);
    assert_relative_eq!(d.values().sum::<f64>(), 1.0, max_relative = 1e-12);
    assert!(matches!(
        relation_distribution(&[("i".into(), "Expansion.Cause".into())]),
        Err(AnalysisError::UnknownLabel { .. })
    ));
    let reference = pdtb3_reference();
    assert_relative_eq!(reference.values().sum::<f64>(), 1.0, epsilon = 0.01);
}
