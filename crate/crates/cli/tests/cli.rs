use std::collections::BTreeMap;
use std::path::Path;

use qudelab::analysis::{FrequencyConfig, OverlapPolicy};
use qudelab::backends::{CueWordClassifier, HeuristicTagger};
use qudelab::corpus::{save_dataset, Dataset, WindowSpec};
use qudelab::generation::RecordKind;
use qudelab::par::ExecMode;
use qudelab::pipeline::{analyze, AnalysisBackends, AnalysisSettings, EvalRow, RecordFile, ReportFile};
use qudelab::report::ConfigFingerprint;
use qudelab::synth::{synthetic_dataset, SynthSpec};
use qudelab_cli::{IngestFile, run};
use serde_json::{json, Value};

struct Workspace {
    dir: tempfile::TempDir,
    dataset: Dataset,
}

impl Workspace {
    fn new(spec: SynthSpec, config: Value) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let dataset = synthetic_dataset(&spec);
        std::fs::create_dir_all(dir.path().join("data")).unwrap();
        save_dataset(&dataset, dir.path().join("data/dataset.jsonl")).unwrap();
        let ws = Workspace { dir, dataset };
        ws.write("qudelab.json", &config);
        ws
    }

    fn root(&self) -> &Path {
        self.dir.path()
    }

    fn write(&self, rel: &str, value: &Value) {
        std::fs::write(self.root().join(rel), serde_json::to_string_pretty(value).unwrap()).unwrap();
    }

    fn run(&self, args: &[&str]) -> i32 {
        let root = self.root().to_str().unwrap().to_string();
        let mut full = vec!["qudelab".to_string(), "--root".into(), root];
        full.extend(args.iter().map(|s| s.to_string()));
        run(full)
    }

    fn read<T: serde::de::DeserializeOwned>(&self, rel: &str) -> T {
        serde_json::from_str(&std::fs::read_to_string(self.root().join(rel)).unwrap()).unwrap()
    }
}

fn mock_config() -> Value {
    json!({
        "seed": 5,
        "backends": {
            "fixed": {"kind": "generation", "implementation": "scripted-mock",
                      "params": {"fallback": {"fixed": "What is this about?"}}},
            "gold": {"kind": "generation", "implementation": "scripted-mock",
                     "params": {"fallback": "error", "script_file": "gold_script.json"}},
            "emb": {"kind": "embedding", "implementation": "hashing", "params": {"dim": 64}}
        },
        "roles": {"question_generator": "fixed", "elaboration_generator": "fixed", "embedder": "emb"}
    })
}

fn small() -> SynthSpec {
    SynthSpec { docs: 6, ..SynthSpec::default() }
}

#[test]
fn ingest_fingerprints_the_dataset() {
    let ws = Workspace::new(small(), json!({}));
    assert_eq!(ws.run(&["ingest"]), 0);
    let out: IngestFile = ws.read("out/ingest.json");
    assert_eq!(out.summary.dataset_sha256, ws.dataset.fingerprint());
    assert_eq!(out.summary.instances, ws.dataset.instances().len());
    assert_eq!(out.summary.documents, 6);
    assert_eq!(out.manifest.outputs, ["out/ingest.json"]);
    assert!(out.manifest.verify());
}

#[test]
fn gold_candidates_evaluate_to_bleu_one() {
    let mut config = mock_config();
    let ws = Workspace::new(small(), config.clone());
    assert_eq!(ws.run(&["gen-questions", "--config", "DCQA-ft", "--no-cache"]), 0);
    assert_eq!(ws.run(&["gen-elabs", "--condition", "context_only", "--no-cache"]), 0);

    // Script the "gold" backend to answer every prompt with its reference.
    let mut script = BTreeMap::new();
    let questions: RecordFile = ws.read("out/questions-DCQA-ft.json");
    for r in &questions.records {
        let ann = ws
            .dataset
            .annotations()
            .iter()
            .find(|a| a.instance_id == r.instance_id && Some(&a.annotator_id) == r.source_annotator.as_ref())
            .unwrap();
        script.insert(r.prompt_sha256.clone(), ann.question.clone());
    }
    let elabs: RecordFile = ws.read("out/elabs-context_only.json");
    for r in &elabs.records {
        let inst = ws.dataset.instance(&r.instance_id).unwrap();
        script.insert(r.prompt_sha256.clone(), inst.context.elaboration.text.clone());
    }
    ws.write("gold_script.json", &json!(script));
    config["roles"] = json!({"question_generator": "gold", "elaboration_generator": "gold", "embedder": "emb"});
    ws.write("qudelab.json", &config);
    assert_eq!(ws.run(&["gen-questions", "--config", "DCQA-ft", "--no-cache"]), 0);
    assert_eq!(ws.run(&["gen-elabs", "--condition", "context_only", "--no-cache"]), 0);
    assert_eq!(
        ws.run(&["evaluate", "--records", "out/questions-DCQA-ft.json", "out/elabs-context_only.json"]),
        0
    );
    let eval: ReportFile = ws.read("out/evaluation.json");
    assert_eq!(eval.reports.len(), 2);
    for (report, kind) in eval.reports.iter().zip([RecordKind::Question, RecordKind::Elaboration]) {
        let rows: Vec<EvalRow> = serde_json::from_value(report.values.clone()).unwrap();
        assert!(!rows.is_empty());
        for row in rows {
            assert_eq!(row.kind, kind);
            assert_eq!(row.bleu4, 1.0, "{row:?}");
            assert_eq!(row.bleu4_corpus, 1.0);
            assert_eq!(row.similarity.unwrap().raw, 1.0);
        }
    }
}

#[test]
fn analyze_matches_the_library() {
    let spec = SynthSpec { docs: 12, annotators_per_instance: 3, organizational_rate: 0.1, ..SynthSpec::default() };
    let ws = Workspace::new(spec, json!({"seed": 11}));
    assert_eq!(ws.run(&["analyze", "--sequential"]), 0);
    let file: ReportFile = ws.read("out/analysis.json");

    let tagger = HeuristicTagger::default();
    let classifier = CueWordClassifier::default();
    let backends = AnalysisBackends {
        similarity: None,
        tagger: Some(&tagger),
        classifier: Some(&classifier),
        lexicon: None,
        relation_labels: None,
    };
    let settings = AnalysisSettings {
        seed: 11,
        overlap: OverlapPolicy::default(),
        frequency: FrequencyConfig::default(),
        mode: ExecMode::Parallel,
    };
    let fp = ConfigFingerprint::new()
        .dataset(&ws.dataset.fingerprint())
        .setting("window", WindowSpec::default());
    let expected = analyze(&ws.dataset, &backends, &settings, &fp).unwrap();
    assert_eq!(file.reports, expected);
    assert_eq!(file.manifest.dataset_sha256, ws.dataset.fingerprint());
    assert_eq!(file.manifest.seed, 11);
}

#[test]
fn outputs_are_reproducible_across_runs() {
    let ws = Workspace::new(small(), mock_config());
    let read = |p: &str| std::fs::read(ws.root().join(p)).unwrap();
    assert_eq!(ws.run(&["gen-questions", "--config", "INQ-GoldT-base"]), 0);
    let first = read("out/questions-INQ-GoldT-base.json");
    assert_eq!(ws.run(&["gen-questions", "--config", "INQ-GoldT-base", "--sequential"]), 0);
    // The manifest records the parallel flag, so only the records must agree.
    let second: RecordFile = ws.read("out/questions-INQ-GoldT-base.json");
    let first: RecordFile = serde_json::from_slice(&first).unwrap();
    assert_eq!(first.records, second.records);
    assert_eq!(ws.run(&["gen-questions", "--config", "INQ-GoldT-base"]), 0);
    let third: RecordFile = ws.read("out/questions-INQ-GoldT-base.json");
    assert_eq!(first, third);
}

#[test]
fn qud_elaborations_take_generated_questions() {
    let ws = Workspace::new(small(), mock_config());
    assert_eq!(ws.run(&["gen-questions", "--config", "DCQA-base"]), 0);
    assert_eq!(
        ws.run(&["gen-elabs", "--condition", "qud", "--questions", "out/questions-DCQA-base.json"]),
        0
    );
    let file: RecordFile = ws.read("out/elabs-qud-questions-DCQA-base.json");
    assert!(!file.records.is_empty());
    assert!(file.records.iter().all(|r| r.prompt.contains("What is this about?")));
    // The questions file only applies to the qud condition.
    assert_eq!(
        ws.run(&["gen-elabs", "--condition", "generic", "--questions", "out/questions-DCQA-base.json"]),
        1
    );
}

#[test]
fn foreign_question_files_are_integrity_errors() {
    let ws = Workspace::new(small(), mock_config());
    assert_eq!(ws.run(&["gen-questions", "--config", "DCQA-base"]), 0);
    let other = synthetic_dataset(&SynthSpec { seed: 99, ..small() });
    save_dataset(&other, ws.root().join("data/other.jsonl")).unwrap();
    let code = ws.run(&[
        "--dataset",
        "data/other.jsonl",
        "gen-elabs",
        "--condition",
        "qud",
        "--questions",
        "out/questions-DCQA-base.json",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn exit_codes() {
    let ws = Workspace::new(small(), mock_config());
    assert_eq!(ws.run(&["--help"]), 0);
    assert_eq!(ws.run(&["gen-questions", "--config", "GPT-9"]), 1);
    assert_eq!(ws.run(&["gen-elabs", "--condition", "summary"]), 1);
    assert_eq!(ws.run(&["--dataset", "missing.jsonl", "ingest"]), 1);
    // INQ-PredT needs a span predictor role.
    assert_eq!(ws.run(&["gen-questions", "--config", "INQ-PredT"]), 1);

    std::fs::write(ws.root().join("data/broken.jsonl"), "{\"not\": \"a record\"}\n").unwrap();
    assert_eq!(ws.run(&["--dataset", "data/broken.jsonl", "ingest"]), 2);

    let mut config = mock_config();
    config["roles"]["question_generator"] = json!("gold");
    config["backends"]["gold"]["params"] = json!({"fallback": "error"});
    ws.write("qudelab.json", &config);
    assert_eq!(ws.run(&["gen-questions", "--config", "DCQA-ft", "--no-cache"]), 3);

    ws.write("qudelab.json", &json!({"unknown_key": 1}));
    assert_eq!(ws.run(&["ingest"]), 1);
}

#[test]
fn unknown_names_list_every_choice() {
    let bin = env!("CARGO_BIN_EXE_qudelab");
    for args in [["gen-questions", "--config", "nope"], ["gen-elabs", "--condition", "nope"]] {
        let out = std::process::Command::new(bin).args(args).output().unwrap();
        assert_eq!(out.status.code(), Some(1));
        let stderr = String::from_utf8(out.stderr).unwrap();
        for name in ["DCQA-base", "DCQA-ft", "INQ-GoldT-base", "INQ-GoldT-ft", "INQ-PredT", "context_only", "generic", "qud"] {
            assert!(stderr.contains(name), "{name} missing from: {stderr}");
        }
    }
}

#[test]
fn flags_override_the_config_file() {
    let ws = Workspace::new(small(), json!({"seed": 1, "output_dir": "results"}));
    assert_eq!(ws.run(&["--seed", "4", "ingest"]), 0);
    let out: IngestFile = ws.read("results/ingest.json");
    assert_eq!(out.manifest.seed, 4);
    assert_eq!(ws.run(&["--output-dir", "elsewhere", "ingest"]), 0);
    assert!(ws.root().join("elsewhere/ingest.json").exists());
}

#[test]
fn documented_config_loads() {
    let readme = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md")).unwrap();
    let block = readme.split("```json\n").nth(1).unwrap().split("```").next().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("qudelab.json");
    std::fs::write(&path, block).unwrap();
    let config = qudelab_cli::Config::load(&path).unwrap();
    assert_eq!(config.roles.question_generators["DCQA-ft"], "qg");
    let registry = config.registry(dir.path());
    assert!(registry.generation("gpt").is_ok());
    assert!(registry.span("span").is_ok());
    assert!(registry.embedding("emb").is_ok());
}
