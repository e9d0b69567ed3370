use std::sync::Arc;

use qudelab::analysis::{EmbeddingSimilarity, FrequencyConfig, FrequencyLexicon, OverlapPolicy};
use qudelab::backends::{BackendClient, ClientConfig, CueWordClassifier, Fallback, HashingEmbedder, HeuristicTagger, ScriptedMock};
use qudelab::generation::{DecodeParams, RecordKind};
use qudelab::metrics::Smoothing;
use qudelab::par::ExecMode;
use qudelab::pipeline::{
    analyze, evaluation_reports, generate_questions, to_pretty_json, AnalysisBackends, AnalysisSettings,
    EvalRow, EvalSettings, QuestionRun,
};
use qudelab::questiongen::{QgConfig, QgConfigName, QgLayouts};
use qudelab::report::ConfigFingerprint;
use qudelab::synth::{synthetic_dataset, SynthSpec};

#[test]
fn gold_questions_as_candidates_score_perfect_bleu() {
    let ds = synthetic_dataset(&SynthSpec { docs: 6, ..SynthSpec::default() });
    let decode = DecodeParams::default();
    let c = BackendClient::new(Arc::new(ScriptedMock::new("m", Fallback::Fixed("placeholder".into()))), ClientConfig::default()).unwrap();
    let mut batch = generate_questions(&ds, &QuestionRun {
        config: &QgConfig::preset(QgConfigName::DcqaFt),
        client: &c,
        span_predictor: None,
        layouts: &QgLayouts::default(),
        decode: &decode,
        split: None,
        mode: ExecMode::Parallel,
    })
    .unwrap();
    for r in &mut batch.records {
        let ann = ds
            .annotations()
            .iter()
            .find(|a| a.instance_id == r.instance_id && Some(&a.annotator_id) == r.source_annotator.as_ref())
            .unwrap();
        r.text = ann.question.clone();
    }
    let embedder = HashingEmbedder::new(64, 0.3);
    let settings = EvalSettings { smoothing: Smoothing::default(), embedder: Some(&embedder), mode: ExecMode::Parallel };
    let reports = evaluation_reports(&ds, &batch.records, &settings, &ConfigFingerprint::new()).unwrap();
    assert_eq!(reports[0].report, "question_generation");
    assert!(reports[1].is_empty());
    let rows: Vec<EvalRow> = serde_json::from_value(reports[0].values.clone()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].kind, RecordKind::Question);
    assert_eq!(rows[0].bleu4, 1.0);
    assert_eq!(rows[0].similarity.unwrap().raw, 1.0);
    assert_eq!(rows[0].similarity.unwrap().rescaled, 1.0);
}

#[test]
fn analysis_reports_are_reproducible() {
    let ds = synthetic_dataset(&SynthSpec { docs: 15, annotators_per_instance: 3, organizational_rate: 0.1, ..SynthSpec::default() });
    let tagger = HeuristicTagger::default();
    let classifier = CueWordClassifier::default();
    let similarity = EmbeddingSimilarity::new(Arc::new(HashingEmbedder::new(64, 0.0)));
    let lexicon = FrequencyLexicon::parse("the\t6.5\ncity\t4.4\nschool\t4.6\n").unwrap();
    let run = |mode| {
        let backends = AnalysisBackends {
            similarity: Some(&similarity),
            tagger: Some(&tagger),
            classifier: Some(&classifier),
            lexicon: Some(&lexicon),
            relation_labels: None,
        };
        let settings = AnalysisSettings { seed: 3, overlap: OverlapPolicy::AnyToken, frequency: FrequencyConfig::default(), mode };
        analyze(&ds, &backends, &settings, &ConfigFingerprint::new().dataset(&ds.fingerprint())).unwrap()
    };
    let a = run(ExecMode::Sequential);
    let b = run(ExecMode::Parallel);
    assert_eq!(to_pretty_json(&a), to_pretty_json(&b));
    let names: Vec<&str> = a.iter().map(|r| r.report.as_str()).collect();
    assert_eq!(
        names,
        ["anchor_agreement", "target_overlap", "question_similarity", "target_statistics", "frequency_test", "question_types", "relation_distribution"]
    );
    assert!(a[..6].iter().all(|r| !r.is_empty()));
    assert!(a[6].is_empty());
}
