use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Barrier};
use std::thread;
use std::time::Duration;

use qudelab::backends::{
    BackendClient, BackendDescriptor, BackendError, BackendKind, CallSource, ClientConfig,
    GenerationBackend, GenerationRequest, GenerationResponse, ScriptedMock, WholeSentencePredictor,
};
use qudelab::corpus::{load_dataset, Dataset, FORMAT_VERSION};
use qudelab::elabgen::{build_elab_prompt, generate_elaboration, ElabKind, ElabLayouts, ElabPromptCondition};
use qudelab::generation::{DecodeParams, GenError, RecordKind};
use qudelab::par::ExecMode;
use qudelab::pipeline::{generate_elaborations, generate_questions, ElabRun, QuestionRun, QuestionSource};
use qudelab::questiongen::{assemble_qg_input, generate_question, generate_question_traced, QgConfig, QgConfigName, QgLayouts};
use qudelab::synth::{synthetic_dataset, SynthSpec};

fn fixture() -> Dataset {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/prompts/input.jsonl");
    load_dataset(path, FORMAT_VERSION).unwrap()
}

fn client(mock: ScriptedMock) -> BackendClient {
    BackendClient::new(Arc::new(mock), ClientConfig::default()).unwrap()
}

fn dcqa_prompt(ds: &Dataset) -> qudelab::prompt::AssembledPrompt {
    let inst = &ds.instances()[0];
    assemble_qg_input(inst, &QgConfig::preset(QgConfigName::DcqaFt), 1, None, ds.document_of(inst), &QgLayouts::default()).unwrap()
}

#[test]
fn scripted_question_round_trip() {
    let ds = fixture();
    let prompt = dcqa_prompt(&ds);
    let c = client(ScriptedMock::new("qg-mock", qudelab::backends::Fallback::Error).with_response(&prompt.rendered, "  Why is football a rough game? \n"));
    let r = generate_question(prompt.clone(), &c, &DecodeParams::default()).unwrap();
    assert_eq!(r.text, "Why is football a rough game?");
    assert_eq!(r.kind, RecordKind::Question);
    assert_eq!(r.prompt, prompt.rendered);
    assert_eq!(r.layout_version, "qg-dcqa/1");
    assert_eq!(r.context_sentences_dropped, 0);
    assert_eq!(r.decode, DecodeParams::default());
    assert_eq!(r.prompt_sha256.len(), 64);
}

#[test]
fn repeated_calls_hit_the_cache_including_on_disk() {
    let ds = fixture();
    let dir = tempfile::tempdir().unwrap();
    let config = ClientConfig { cache_dir: Some(dir.path().to_path_buf()), ..ClientConfig::default() };
    let mock = Arc::new(ScriptedMock::echo("echo"));
    let c = BackendClient::new(mock.clone(), config.clone()).unwrap();
    let first = generate_question_traced(dcqa_prompt(&ds), &c, &DecodeParams::default()).unwrap();
    let second = generate_question_traced(dcqa_prompt(&ds), &c, &DecodeParams::default()).unwrap();
    assert_eq!(first.source, CallSource::Dispatch);
    assert_eq!(second.source, CallSource::Cache);
    assert_eq!(first.record, second.record);
    assert_eq!(mock.calls(), 1);

    let reopened = BackendClient::new(mock.clone(), config).unwrap();
    let third = generate_question_traced(dcqa_prompt(&ds), &reopened, &DecodeParams::default()).unwrap();
    assert_eq!(third.source, CallSource::Cache);
    assert_eq!(third.record, first.record);
    assert_eq!(mock.calls(), 1);

    // Different decode parameters are a different request.
    let hot = DecodeParams { temperature: 0.7, ..DecodeParams::default() };
    let fourth = generate_question_traced(dcqa_prompt(&ds), &reopened, &hot).unwrap();
    assert_eq!(fourth.source, CallSource::Dispatch);
}

#[test]
fn truncation_drops_earliest_context_first() {
    let ds = fixture();
    let inst = &ds.instances()[0];
    let prompt = build_elab_prompt(&inst.context, &ElabPromptCondition::qud("What do call centers do?"), &ElabLayouts::default()).unwrap();
    // Full prompt is 35 tokens; the limit forces the first sentence out.
    let c = client(ScriptedMock::new("small", qudelab::backends::Fallback::Fixed("They answer calls.".into())).with_context_limit(30));
    let r = generate_elaboration(prompt, &c, &DecodeParams::default()).unwrap();
    assert_eq!(r.context_sentences_dropped, 1);
    assert!(r.prompt.starts_with("Context: Anderson noticed"));
    assert!(r.prompt.ends_with("\nQuestion: What do call centers do?\nAnswer:"));
}

/// Accepts any prompt but reports an overflow for long ones, without
/// advertising a limit up front.
struct Overflowing {
    descriptor: BackendDescriptor,
    limit: usize,
}

impl GenerationBackend for Overflowing {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let n = qudelab::tokenize::tokenize(&request.prompt).len();
        if n > self.limit {
            return Err(BackendError::ContextOverflow { tokens: n, limit: self.limit });
        }
        Ok(GenerationResponse { text: "ok".into(), finish_reason: "stop".into() })
    }
}

#[test]
fn overflow_errors_trigger_reactive_truncation() {
    let ds = fixture();
    let inst = &ds.instances()[0];
    let prompt = build_elab_prompt(&inst.context, &ElabPromptCondition::context_only(), &ElabLayouts::default()).unwrap();
    let backend = Overflowing { descriptor: BackendDescriptor::local("overflowing", BackendKind::Generation), limit: 7 };
    let c = BackendClient::new(Arc::new(backend), ClientConfig::default()).unwrap();
    let r = generate_elaboration(prompt, &c, &DecodeParams::default()).unwrap();
    assert_eq!(r.context_sentences_dropped, 2);
    assert_eq!(r.prompt, "It was busy all night.");

    let prompt = build_elab_prompt(&inst.context, &ElabPromptCondition::context_only(), &ElabLayouts::default()).unwrap();
    let backend = Overflowing { descriptor: BackendDescriptor::local("tiny", BackendKind::Generation), limit: 2 };
    let c = BackendClient::new(Arc::new(backend), ClientConfig::default()).unwrap();
    assert!(matches!(
        generate_elaboration(prompt, &c, &DecodeParams::default()),
        Err(GenError::Backend(BackendError::ContextOverflow { .. }))
    ));
}

#[test]
fn elaboration_keeps_first_line_and_rejects_empty_output() {
    let ds = fixture();
    let inst = &ds.instances()[0];
    let prompt = build_elab_prompt(&inst.context, &ElabPromptCondition::generic(), &ElabLayouts::default()).unwrap();
    let c = client(ScriptedMock::new("m", qudelab::backends::Fallback::Fixed("x\ny".into())));
    assert_eq!(generate_elaboration(prompt.clone(), &c, &DecodeParams::default()).unwrap().text, "x");
    let c = client(ScriptedMock::new("blank", qudelab::backends::Fallback::Fixed(" \n \n".into())));
    assert!(matches!(
        generate_elaboration(prompt, &c, &DecodeParams::default()),
        Err(GenError::Backend(BackendError::Degenerate(_)))
    ));
}

struct Slow {
    descriptor: BackendDescriptor,
    calls: AtomicUsize,
}

impl GenerationBackend for Slow {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        thread::sleep(Duration::from_millis(50));
        Ok(GenerationResponse { text: format!("re: {}", request.prompt.len()), finish_reason: "stop".into() })
    }
}

#[test]
fn concurrent_identical_requests_dispatch_once() {
    let slow = Arc::new(Slow { descriptor: BackendDescriptor::local("slow", BackendKind::Generation), calls: AtomicUsize::new(0) });
    let c = Arc::new(BackendClient::new(slow.clone(), ClientConfig::default()).unwrap());
    let ds = Arc::new(fixture());
    let threads = 16;
    let barrier = Arc::new(Barrier::new(threads));
    let handles: Vec<_> = (0..threads)
        .map(|_| {
            let (c, ds, barrier) = (c.clone(), ds.clone(), barrier.clone());
            thread::spawn(move || {
                barrier.wait();
                generate_question_traced(dcqa_prompt(&ds), &c, &DecodeParams::default()).unwrap()
            })
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(slow.calls.load(Ordering::SeqCst), 1);
    assert_eq!(results.iter().filter(|r| r.source == CallSource::Dispatch).count(), 1);
    assert!(results.iter().all(|r| r.record == results[0].record));
}

#[test]
fn batch_runs_are_deterministic_and_mode_independent() {
    let ds = synthetic_dataset(&SynthSpec { docs: 12, organizational_rate: 0.1, ..SynthSpec::default() });
    let decode = DecodeParams::default();
    let layouts = QgLayouts::default();
    let predictor = WholeSentencePredictor::default();
    for name in QgConfigName::ALL {
        let config = QgConfig::preset(name);
        let run = |mode| {
            let c = client(ScriptedMock::echo(name.as_str()));
            generate_questions(&ds, &QuestionRun {
                config: &config,
                client: &c,
                span_predictor: Some(&predictor),
                layouts: &layouts,
                decode: &decode,
                split: None,
                mode,
            })
            .unwrap()
        };
        let a = run(ExecMode::Sequential);
        let b = run(ExecMode::Parallel);
        assert_eq!(a.records, b.records);
        let expected = ds.annotations().iter().filter(|a| a.has_question()).count();
        assert_eq!(a.records.len(), expected, "{name}");
        assert!(a.records.iter().all(|r| r.system == name.as_str() && r.source_annotator.is_some()));
    }
}

#[test]
fn elaboration_batches_label_systems_and_skip_empty_context() {
    let ds = synthetic_dataset(&SynthSpec { docs: 8, ..SynthSpec::default() });
    let decode = DecodeParams::default();
    let layouts = ElabLayouts::default();
    let c = client(ScriptedMock::echo("elab"));
    let qg = client(ScriptedMock::new("qg", qudelab::backends::Fallback::Fixed("What happened next?".into())));
    let questions = generate_questions(&ds, &QuestionRun {
        config: &QgConfig::preset(QgConfigName::DcqaFt),
        client: &qg,
        span_predictor: None,
        layouts: &QgLayouts::default(),
        decode: &decode,
        split: None,
        mode: ExecMode::Parallel,
    })
    .unwrap();
    for (kind, source, label) in [
        (ElabKind::ContextOnly, QuestionSource::Gold, "context_only"),
        (ElabKind::Generic, QuestionSource::Gold, "generic"),
        (ElabKind::Qud, QuestionSource::Gold, "qud:human"),
        (ElabKind::Qud, QuestionSource::Records(&questions.records), "qud:DCQA-ft"),
    ] {
        let batch = generate_elaborations(&ds, &ElabRun {
            kind,
            questions: source,
            client: &c,
            layouts: &layouts,
            decode: &decode,
            split: None,
            mode: ExecMode::Parallel,
        })
        .unwrap();
        assert!(!batch.records.is_empty());
        assert!(batch.records.iter().all(|r| r.system == label && r.kind == RecordKind::Elaboration), "{label}");
    }
}

#[test]
fn backend_failures_abort_but_degenerate_outputs_skip() {
    let ds = synthetic_dataset(&SynthSpec { docs: 3, ..SynthSpec::default() });
    let decode = DecodeParams::default();
    let config = QgConfig::preset(QgConfigName::InqGoldTFt);
    let run = |c: &BackendClient| {
        generate_questions(&ds, &QuestionRun {
            config: &config,
            client: c,
            span_predictor: None,
            layouts: &QgLayouts::default(),
            decode: &decode,
            split: None,
            mode: ExecMode::Sequential,
        })
    };
    let failing = client(ScriptedMock::new("miss", qudelab::backends::Fallback::Error));
    assert!(matches!(run(&failing), Err(GenError::Backend(BackendError::ScriptedMiss(_)))));
    let blank = client(ScriptedMock::new("blank", qudelab::backends::Fallback::Fixed("   ".into())));
    let batch = run(&blank).unwrap();
    assert!(batch.records.is_empty());
    assert_eq!(batch.skipped.len(), ds.annotations().len());
    assert!(batch.skipped[0].reason.starts_with("degenerate output"));
}
