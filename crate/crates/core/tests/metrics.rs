use std::collections::{BTreeMap, HashMap};

use approx::assert_relative_eq;
use proptest::prelude::*;

use qudelab::backends::{HashingEmbedder, TableEmbedder};
use qudelab::metrics::{
    bleu4, bleu_stats, bleu_summary, cosine, embedding_similarity, embedding_similarity_multi, greedy_match,
    read_judgments_csv, read_rankings_csv, tally_question_judgments, tally_rankings, ElabRanking,
    HumanQuestionJudgment, MetricsError, RankCriterion, Smoothing,
};
use qudelab::par::ExecMode;

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

// Values below were computed with nltk 3.9 (unsmoothed) and by hand.
#[test]
fn bleu_matches_reference_implementation() {
    let c2 = toks("why is football a rough game ?");
    let r2 = vec![toks("why is football considered a rough game ?")];
    assert_relative_eq!(bleu4(&c2, &r2, Smoothing::None), 0.5154486831107657, max_relative = 1e-12);
    assert_relative_eq!(bleu4(&c2, &r2, Smoothing::default()), 0.5154486831107657, max_relative = 1e-12);

    let c1 = toks("the cat sat on the mat");
    let r1 = vec![toks("the cat is on the mat"), toks("there is a cat on the mat")];
    assert_eq!(bleu4(&c1, &r1, Smoothing::None), 0.0);
    // p = 5/6, 3/5, 1/4 and a smoothed 1/(3+1); brevity penalty 1.
    assert_relative_eq!(bleu4(&c1, &r1, Smoothing::default()), 0.4204482076268573, max_relative = 1e-12);

    let pairs = vec![(c1, r1), (c2, r2)];
    let s = bleu_summary(&pairs, Smoothing::None, ExecMode::Sequential);
    assert_relative_eq!(s.corpus, 0.420732820275054, max_relative = 1e-12);
    assert_relative_eq!(s.sentence_mean, 0.5154486831107657 / 2.0, max_relative = 1e-12);

    // Clipping: 2 of 7 unigrams, then smoothed zero-match orders.
    let c3 = toks("the the the the the the the");
    let r3 = vec![toks("the cat is on the mat")];
    assert_relative_eq!(bleu4(&c3, &r3, Smoothing::default()), 0.19205612637498934, max_relative = 1e-12);
}

#[test]
fn bleu_edge_cases() {
    let r = vec![toks("a b c d")];
    assert_eq!(bleu4::<String>(&[], &r, Smoothing::default()), 0.0);
    assert_eq!(bleu4(&toks("x y z"), &r, Smoothing::default()), 0.0);
    assert_eq!(bleu4(&toks("a b c d"), &r, Smoothing::default()), 1.0);
}

fn ngrams(tokens: &[String], n: usize) -> Vec<String> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n).map(|i| tokens[i..i + n].join("\u{1}")).collect()
}

/// Straightforward restatement of the scoring rule, used as the oracle.
fn brute_bleu(c: &[String], refs: &[Vec<String>], k: Option<f64>) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let mut logs = 0.0;
    for n in 1..=4 {
        let cand = ngrams(c, n);
        let total = cand.len() as f64;
        let mut seen: Vec<&String> = Vec::new();
        let mut matched = 0usize;
        for g in &cand {
            if seen.contains(&g) {
                continue;
            }
            seen.push(g);
            let count = cand.iter().filter(|x| *x == g).count();
            let cap = refs.iter().map(|r| ngrams(r, n).iter().filter(|x| *x == g).count()).max().unwrap_or(0);
            matched += count.min(cap);
        }
        let p = if n == 1 {
            if matched == 0 {
                return 0.0;
            }
            matched as f64 / total
        } else if total == 0.0 {
            // Short candidates: an order with no n-grams contributes nothing.
            1.0
        } else if matched == 0 {
            match k {
                Some(k) => k / (total + k),
                None => return 0.0,
            }
        } else {
            matched as f64 / total
        };
        logs += p.ln();
    }
    let clen = c.len() as i64;
    let rlen = refs.iter().map(|r| r.len() as i64).min_by_key(|&l| ((l - clen).abs(), l)).unwrap();
    let bp = if clen >= rlen { 1.0 } else { (1.0 - rlen as f64 / clen as f64).exp() };
    bp * (logs / 4.0).exp()
}

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 0..12)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #[test]
    fn bleu_agrees_with_brute_force(c in sentence(), refs in prop::collection::vec(sentence(), 1..4)) {
        prop_assume!(refs.iter().all(|r| !r.is_empty()));
        let fast = bleu4(&c, &refs, Smoothing::default());
        let slow = brute_bleu(&c, &refs, Some(1.0));
        prop_assert!((fast - slow).abs() < 1e-12, "{} vs {}", fast, slow);
        let fast = bleu4(&c, &refs, Smoothing::None);
        let slow = brute_bleu(&c, &refs, None);
        prop_assert!((fast - slow).abs() < 1e-12, "{} vs {}", fast, slow);
    }

    #[test]
    fn bleu_in_unit_interval_and_order_free(c in sentence(), mut refs in prop::collection::vec(sentence(), 1..4)) {
        prop_assume!(refs.iter().all(|r| !r.is_empty()));
        let s = bleu4(&c, &refs, Smoothing::default());
        prop_assert!((0.0..=1.0).contains(&s));
        refs.reverse();
        prop_assert_eq!(bleu4(&c, &refs, Smoothing::default()), s);
    }

    #[test]
    fn adding_a_reference_never_lowers_matches(c in sentence(), refs in prop::collection::vec(sentence(), 1..3), extra in sentence()) {
        // The brevity penalty can move either way, the clipped counts cannot.
        let before = bleu_stats(&c, &refs);
        let mut more = refs.clone();
        more.push(extra.clone());
        let after = bleu_stats(&c, &more);
        for n in 0..4 {
            prop_assert!(after.matches[n] >= before.matches[n]);
        }
        if extra.len() == refs[0].len() {
            prop_assert!(bleu4(&c, &more, Smoothing::default()) >= bleu4(&c, &refs, Smoothing::default()) - 1e-12);
        }
    }

    #[test]
    fn similarity_in_unit_interval(a in "[a-e ]{1,30}", b in "[a-e ]{1,30}") {
        prop_assume!(!a.trim().is_empty() && !b.trim().is_empty());
        let e = HashingEmbedder::new(64, 0.0);
        let s = embedding_similarity(&a, &b, &e, 0.0).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.raw));
    }
}

#[test]
fn summary_is_mode_independent() {
    let pairs: Vec<_> = (0..50)
        .map(|i| (toks(&format!("a b c {i} d e")), vec![toks(&format!("a b {i} d e f"))]))
        .collect();
    let a = bleu_summary(&pairs, Smoothing::default(), ExecMode::Sequential);
    let b = bleu_summary(&pairs, Smoothing::default(), ExecMode::Parallel);
    assert_relative_eq!(a.sentence_mean, b.sentence_mean, max_relative = 1e-12);
    assert_eq!(a.corpus, b.corpus);
}

fn table() -> TableEmbedder {
    let v = |x: &[f64]| x.to_vec();
    TableEmbedder::new(
        HashMap::from([
            ("a".to_string(), v(&[1.0, 0.0, 0.0])),
            ("b".to_string(), v(&[0.0, 1.0, 0.0])),
            ("c".to_string(), v(&[1.0, 1.0, 0.0])),
            ("d".to_string(), v(&[0.0, 1.0, 1.0])),
        ]),
        0.2,
    )
}

#[test]
fn greedy_matching_hand_computed() {
    // Precision (1 + 2/√2) / 3, recall (1 + 1/√2) / 2.
    let e = table();
    let s = embedding_similarity("a b c", "a d", &e, 0.2).unwrap();
    assert_relative_eq!(s.raw, 0.82842712474619, max_relative = 1e-12);
    assert_relative_eq!(s.rescaled, 0.7855339059327373, max_relative = 1e-12);
    let m = embedding_similarity_multi("a b c", &["a d", "a b c"], &e, 0.2).unwrap();
    assert_eq!(m.raw, 1.0);
    assert_eq!(m.rescaled, 1.0);
}

#[test]
fn identical_vectors_have_cosine_exactly_one() {
    let v = vec![0.1, 0.7, 0.3333333333333333];
    assert_eq!(cosine(&v, &v), 1.0);
    let g = greedy_match(&[v.clone(), v.clone()], &[v]);
    assert_eq!(g.f1, 1.0);
    let e = HashingEmbedder::new(128, 0.0);
    assert_eq!(embedding_similarity("Why is it rough?", "Why is it rough?", &e, 0.0).unwrap().raw, 1.0);
}

fn judgment(q: &str, judge: &str, reasonable: bool, answered: bool) -> HumanQuestionJudgment {
    HumanQuestionJudgment {
        question_id: q.into(),
        judge_id: judge.into(),
        reasonable,
        answered,
    }
}

#[test]
fn judgment_tally_and_permutation_invariance() {
    let mut by_system = BTreeMap::new();
    by_system.insert(
        "DCQA-ft".to_string(),
        vec![
            judgment("q1", "j1", true, true),
            judgment("q1", "j2", true, false),
            judgment("q2", "j1", false, false),
            judgment("q2", "j2", false, false),
        ],
    );
    by_system.insert("INQ-PredT".to_string(), vec![judgment("q9", "j1", true, true)]);
    let t = tally_question_judgments(&by_system);
    let d = &t.per_system["DCQA-ft"];
    assert_eq!((d.n, d.reasonable.yes, d.answered.yes), (4, 2, 1));
    assert_eq!(d.reasonable.yes_rate, 0.5);
    assert_eq!(t.agreement_reasonable, Some(1.0));
    assert_eq!(t.agreement_answered, Some(0.5));
    assert_eq!(t.n_multi_judged_items, 2);

    let mut shuffled = by_system.clone();
    shuffled.get_mut("DCQA-ft").unwrap().reverse();
    assert_eq!(tally_question_judgments(&shuffled), t);
}

fn ranking(inst: &str, judge: &str, criterion: RankCriterion, first: &str, second: &str) -> ElabRanking {
    ElabRanking {
        instance_id: inst.into(),
        judge_id: judge.into(),
        criterion,
        first: first.into(),
        second: second.into(),
    }
}

#[test]
fn ranking_tally() {
    use RankCriterion::*;
    let rankings = vec![
        ranking("i1", "j1", ElaborationLike, "qud:human", "generic"),
        ranking("i2", "j1", ElaborationLike, "qud:human", "context_only"),
        ranking("i3", "j1", ElaborationLike, "generic", "qud:human"),
        ranking("i4", "j1", ElaborationLike, "human", "qud:human"),
        ranking("i1", "j1", Coherence, "generic", "qud:human"),
    ];
    let t = tally_rankings(&rankings).unwrap();
    let el = &t.per_criterion[&ElaborationLike];
    assert_eq!((el["qud:human"].first, el["qud:human"].second), (2, 2));
    assert_eq!(el["qud:human"].first_rate, 0.5);
    assert_eq!(el["generic"].first, 1);
    assert_eq!(t.per_criterion[&Coherence]["generic"].first_rate, 1.0);
    assert_eq!((t.n_rankings[&ElaborationLike], t.n_rankings[&Coherence]), (4, 1));

    let mut rev = rankings.clone();
    rev.reverse();
    assert_eq!(tally_rankings(&rev).unwrap(), t);

    let mut dup = rankings.clone();
    dup.push(ranking("i1", "j1", ElaborationLike, "generic", "human"));
    assert!(matches!(tally_rankings(&dup), Err(MetricsError::Integrity(_))));
    assert!(tally_rankings(&[ranking("i1", "j1", Coherence, "a", "a")]).is_err());
}

#[test]
fn csv_readers() {
    let j = "question_id,judge_id,reasonable,answered\nq1,j1,yes,no\nq2,j1,true,1\n";
    let rows = read_judgments_csv(j.as_bytes()).unwrap();
    assert_eq!(rows[""].len(), 2);
    assert!(rows[""][1].reasonable && rows[""][1].answered && !rows[""][0].answered);
    let r = "instance_id,judge_id,criterion,first,second\ni1,j1,coherence,generic,qud:human\n";
    let rows = read_rankings_csv(r.as_bytes()).unwrap();
    assert_eq!(rows[0].criterion, RankCriterion::Coherence);
    let bad = "instance_id,judge_id,criterion,first,second\ni1,j1,fluency,a,b\n";
    assert!(matches!(read_rankings_csv(bad.as_bytes()), Err(MetricsError::Csv { row: 1, .. })));
}
