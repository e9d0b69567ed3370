//! Batch runs over a dataset: question generation, elaboration generation,
//! evaluation and corpus analysis. Each run is described by a
//! [`RunManifest`] that, with mock backends, fully determines its output.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::analysis::{
    self, AnalysisError, FrequencyConfig, FrequencyLexicon, OverlapPolicy, SimilarityMetric,
};
use crate::backends::{
    canonical_json, BackendClient, BackendDescriptor, BackendError, ClassifierBackend,
    EmbeddingBackend, SpanPredictorBackend, TaggerBackend,
};
use crate::corpus::{Dataset, ElaborationInstance, QudAnnotation, Split};
use crate::elabgen::{build_elab_prompt, generate_elaboration, ElabKind, ElabLayouts, ElabPromptCondition};
use crate::generation::{DecodeParams, GenError, GenerationRecord, RecordKind};
use crate::metrics::{bleu_summary, embedding_similarity_multi, ScorePair, Smoothing};
use crate::par::{self, ExecMode};
use crate::questiongen::{
    assemble_qg_input, generate_question, predict_target, QgConfig, QgLayouts, TargetSource,
};
use crate::report::{ConfigFingerprint, MetricReport};
use crate::tokenize::{self, tokenize};

/// Identity of one batch run. `run_id` is a digest of every other field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub config: Value,
    pub dataset_sha256: String,
    pub tokenizer: String,
    pub backends: Vec<BackendDescriptor>,
    pub seed: u64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: Value,
        dataset_sha256: &str,
        backends: Vec<BackendDescriptor>,
        seed: u64,
        outputs: Vec<String>,
    ) -> Self {
        let mut m = RunManifest {
            run_id: String::new(),
            command: command.to_string(),
            config,
            dataset_sha256: dataset_sha256.to_string(),
            tokenizer: format!("{}#{}", tokenize::TOKENIZER_VERSION, tokenize::fingerprint()),
            backends,
            seed,
            outputs,
        };
        m.run_id = m.compute_id();
        m
    }

    fn compute_id(&self) -> String {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        v.as_object_mut().expect("object").remove("run_id");
        hex::encode(&Sha256::digest(canonical_json(&v).as_bytes())[..8])
    }

    pub fn verify(&self) -> bool {
        self.run_id == self.compute_id()
    }
}

/// An input that produced no record, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub instance_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_id: Option<String>,
    pub reason: String,
}

/// Contents of a `gen-questions` or `gen-elabs` output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFile {
    pub manifest: RunManifest,
    pub records: Vec<GenerationRecord>,
    #[serde(default)]
    pub skipped: Vec<Skipped>,
}

/// Contents of an `evaluate` or `analyze` output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub manifest: RunManifest,
    pub reports: Vec<MetricReport>,
}

/// Pretty JSON with a trailing newline; the on-disk form of every output file.
pub fn to_pretty_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> std::io::Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, to_pretty_json(value))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub records: Vec<GenerationRecord>,
    pub skipped: Vec<Skipped>,
}

fn in_split(inst: &ElaborationInstance, split: Option<Split>) -> bool {
    split.is_none_or(|s| inst.split == s)
}

enum Outcome {
    Done(GenerationRecord),
    Skip(Skipped),
}

fn collect(outcomes: Vec<Outcome>) -> Batch {
    let mut batch = Batch::default();
    for o in outcomes {
        match o {
            Outcome::Done(r) => batch.records.push(r),
            Outcome::Skip(s) => batch.skipped.push(s),
        }
    }
    batch
}

/// Input-level problems and degenerate outputs become skips; backend
/// failures abort the batch.
fn settle(
    result: Result<GenerationRecord, GenError>,
    instance_id: &str,
    annotator: Option<&str>,
) -> Result<Outcome, GenError> {
    let skip = |reason: String| {
        Ok(Outcome::Skip(Skipped {
            instance_id: instance_id.to_string(),
            annotator_id: annotator.map(String::from),
            reason,
        }))
    };
    match result {
        Ok(r) => Ok(Outcome::Done(r)),
        Err(GenError::Backend(BackendError::Degenerate(m))) => skip(format!("degenerate output: {m}")),
        Err(e @ (GenError::Integrity(_) | GenError::Config(_))) => skip(e.to_string()),
        Err(e) => Err(e),
    }
}

pub struct QuestionRun<'a> {
    pub config: &'a QgConfig,
    pub client: &'a BackendClient,
    /// Required for configs with predicted targets.
    pub span_predictor: Option<&'a dyn SpanPredictorBackend>,
    pub layouts: &'a QgLayouts,
    pub decode: &'a DecodeParams,
    pub split: Option<Split>,
    pub mode: ExecMode,
}

/// One question per annotated question in the dataset, using the annotated
/// anchor (and gold or predicted target where the config needs one).
pub fn generate_questions(dataset: &Dataset, run: &QuestionRun<'_>) -> Result<Batch, GenError> {
    run.config.validate()?;
    if run.config.target_source == TargetSource::Predicted && run.span_predictor.is_none() {
        return Err(GenError::Config(format!(
            "{} needs a span predictor backend",
            run.config.name
        )));
    }
    let work: Vec<(&ElaborationInstance, &QudAnnotation)> = dataset
        .instances()
        .iter()
        .filter(|i| in_split(i, run.split))
        .flat_map(|inst| {
            dataset
                .annotations()
                .iter()
                .filter(move |a| a.instance_id == inst.instance_id && a.has_question())
                .map(move |a| (inst, a))
        })
        .collect();
    let outcomes = par::try_map(run.mode, &work, |(inst, ann)| {
        let doc = dataset.document_of(inst);
        let target = match run.config.target_source {
            TargetSource::None => None,
            TargetSource::Gold => ann.target.clone(),
            TargetSource::Predicted => {
                let anchor = match doc.sentence(ann.anchor_index) {
                    Ok(s) => s,
                    Err(e) => return settle(Err(GenError::Integrity(e.to_string())), &inst.instance_id, Some(&ann.annotator_id)),
                };
                let predictor = run.span_predictor.expect("checked above");
                Some(predict_target(anchor, &inst.context, predictor)?.span)
            }
        };
        let result = assemble_qg_input(inst, run.config, ann.anchor_index, target.as_ref(), doc, run.layouts)
            .and_then(|p| generate_question(p, run.client, run.decode))
            .map(|mut r| {
                r.system = run.config.name.to_string();
                r.instance_id = inst.instance_id.clone();
                r.source_annotator = Some(ann.annotator_id.clone());
                r
            });
        settle(result, &inst.instance_id, Some(&ann.annotator_id))
    })?;
    Ok(collect(outcomes))
}

/// Where qud-condition questions come from.
pub enum QuestionSource<'a> {
    /// Annotated questions.
    Gold,
    /// Generated question records.
    Records(&'a [GenerationRecord]),
}

pub struct ElabRun<'a> {
    pub kind: ElabKind,
    pub questions: QuestionSource<'a>,
    pub client: &'a BackendClient,
    pub layouts: &'a ElabLayouts,
    pub decode: &'a DecodeParams,
    pub split: Option<Split>,
    pub mode: ExecMode,
}

/// System label of an elaboration record: the condition, plus the question
/// source for the qud condition (`qud:human`, `qud:INQ-PredT`, ...).
fn elab_system(kind: ElabKind, question_system: Option<&str>) -> String {
    match question_system {
        Some(q) => format!("{kind}:{q}"),
        None => kind.to_string(),
    }
}

pub fn generate_elaborations(dataset: &Dataset, run: &ElabRun<'_>) -> Result<Batch, GenError> {
    // (instance, condition, question system, source annotator)
    let mut work: Vec<(&ElaborationInstance, ElabPromptCondition, Option<String>, Option<String>)> = Vec::new();
    for inst in dataset.instances().iter().filter(|i| in_split(i, run.split)) {
        match run.kind {
            ElabKind::ContextOnly => work.push((inst, ElabPromptCondition::context_only(), None, None)),
            ElabKind::Generic => work.push((inst, ElabPromptCondition::generic(), None, None)),
            ElabKind::Qud => match &run.questions {
                QuestionSource::Gold => {
                    for a in dataset.annotations().iter().filter(|a| a.instance_id == inst.instance_id && a.has_question()) {
                        work.push((inst, ElabPromptCondition::qud(&a.question), Some("human".into()), Some(a.annotator_id.clone())));
                    }
                }
                QuestionSource::Records(records) => {
                    for r in records.iter().filter(|r| r.kind == RecordKind::Question && r.instance_id == inst.instance_id) {
                        work.push((inst, ElabPromptCondition::qud(&r.text), Some(r.system.clone()), r.source_annotator.clone()));
                    }
                }
            },
        }
    }
    let outcomes = par::try_map(run.mode, &work, |(inst, condition, qsys, annotator)| {
        let result = build_elab_prompt(&inst.context, condition, run.layouts)
            .and_then(|p| generate_elaboration(p, run.client, run.decode))
            .map(|mut r| {
                r.system = elab_system(run.kind, qsys.as_deref());
                r.instance_id = inst.instance_id.clone();
                r.source_annotator = annotator.clone();
                r
            });
        settle(result, &inst.instance_id, annotator.as_deref())
    })?;
    Ok(collect(outcomes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub system: String,
    pub kind: RecordKind,
    pub n: usize,
    pub bleu4: f64,
    pub bleu4_corpus: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<ScorePair>,
}

pub struct EvalSettings<'a> {
    pub smoothing: Smoothing,
    pub embedder: Option<&'a dyn EmbeddingBackend>,
    pub mode: ExecMode,
}

/// References for a record: every annotated question on the instance for
/// questions, the human elaboration sentence for elaborations.
fn references(dataset: &Dataset, record: &GenerationRecord) -> Result<Vec<String>, GenError> {
    let inst = dataset
        .instance(&record.instance_id)
        .ok_or_else(|| GenError::Integrity(format!("record for unknown instance {}", record.instance_id)))?;
    Ok(match record.kind {
        RecordKind::Question => dataset
            .annotations()
            .iter()
            .filter(|a| a.instance_id == inst.instance_id && a.has_question())
            .map(|a| a.question.clone())
            .collect(),
        RecordKind::Elaboration => vec![inst.context.elaboration.text.clone()],
    })
}

/// Per-system BLEU-4 (sentence mean and corpus) and, with an embedder,
/// best-reference similarity F1. Records without references are ignored.
pub fn evaluate_records(
    dataset: &Dataset,
    records: &[GenerationRecord],
    settings: &EvalSettings<'_>,
) -> Result<Vec<EvalRow>, GenError> {
    let mut groups: BTreeMap<(String, RecordKind), Vec<(&GenerationRecord, Vec<String>)>> = BTreeMap::new();
    for r in records {
        let refs = references(dataset, r)?;
        if refs.is_empty() {
            continue;
        }
        groups
            .entry((r.system.clone(), r.kind))
            .or_default()
            .push((r, refs));
    }
    let mut rows = Vec::new();
    for ((system, kind), items) in groups {
        let pairs: Vec<(Vec<String>, Vec<Vec<String>>)> = items
            .iter()
            .map(|(r, refs)| (tokenize(&r.text), refs.iter().map(|s| tokenize(s)).collect()))
            .collect();
        let bleu = bleu_summary(&pairs, settings.smoothing, settings.mode);
        let similarity = match settings.embedder {
            Some(e) => {
                let scores = par::try_map(settings.mode, &items, |(r, refs)| {
                    embedding_similarity_multi(&r.text, refs, e, e.baseline())
                })?;
                ScorePair::mean(&scores)
            }
            None => None,
        };
        rows.push(EvalRow {
            system,
            kind,
            n: items.len(),
            bleu4: bleu.sentence_mean,
            bleu4_corpus: bleu.corpus,
            similarity,
        });
    }
    Ok(rows)
}

fn rows_report(name: &str, rows: Vec<EvalRow>, fp: &ConfigFingerprint) -> MetricReport {
    if rows.is_empty() {
        MetricReport::empty(name, "no records with references", fp.clone())
    } else {
        MetricReport::new(name, &rows, fp.clone())
    }
}

/// Question rows and elaboration rows as separate reports.
pub fn evaluation_reports(
    dataset: &Dataset,
    records: &[GenerationRecord],
    settings: &EvalSettings<'_>,
    fingerprint: &ConfigFingerprint,
) -> Result<Vec<MetricReport>, GenError> {
    let rows = evaluate_records(dataset, records, settings)?;
    let (q, e): (Vec<EvalRow>, Vec<EvalRow>) = rows.into_iter().partition(|r| r.kind == RecordKind::Question);
    Ok(vec![
        rows_report("question_generation", q, fingerprint),
        rows_report("elaboration_generation", e, fingerprint),
    ])
}

pub struct AnalysisBackends<'a> {
    pub similarity: Option<&'a dyn SimilarityMetric>,
    pub tagger: Option<&'a dyn TaggerBackend>,
    pub classifier: Option<&'a dyn ClassifierBackend>,
    pub lexicon: Option<&'a FrequencyLexicon>,
    pub relation_labels: Option<&'a [(String, String)]>,
}

pub struct AnalysisSettings {
    pub seed: u64,
    pub overlap: OverlapPolicy,
    pub frequency: FrequencyConfig,
    pub mode: ExecMode,
}

/// Wraps an analysis result in a report, turning data shortfalls into empty markers.
pub fn settle_report<T: Serialize>(
    name: &str,
    result: Result<T, AnalysisError>,
    fp: ConfigFingerprint,
) -> Result<MetricReport, AnalysisError> {
    match result {
        Ok(v) => Ok(MetricReport::new(name, &v, fp)),
        Err(AnalysisError::EmptyInput(reason)) => Ok(MetricReport::empty(name, reason, fp)),
        Err(AnalysisError::Statistics(reason)) => Ok(MetricReport::empty(name, reason, fp)),
        Err(e) => Err(e),
    }
}

/// All corpus statistics whose backends are available. Missing inputs give
/// empty-report markers.
pub fn analyze(
    dataset: &Dataset,
    backends: &AnalysisBackends<'_>,
    settings: &AnalysisSettings,
    base: &ConfigFingerprint,
) -> Result<Vec<MetricReport>, AnalysisError> {
    let mut out = Vec::new();
    let fp = base.clone().seed(settings.seed);

    out.push(settle_report("anchor_agreement", analysis::anchor_agreement(dataset), fp.clone())?);
    out.push(settle_report(
        "target_overlap",
        analysis::target_overlap_rate(dataset, settings.overlap),
        fp.clone().setting("overlap_policy", settings.overlap),
    )?);

    out.push(match backends.similarity {
        Some(m) => settle_report(
            "question_similarity",
            analysis::pairwise_question_similarity(dataset, m, settings.seed, settings.mode),
            fp.clone().backend("similarity", &m.id()),
        )?,
        None => MetricReport::empty("question_similarity", "no similarity backend configured", fp.clone()),
    });
    out.push(match backends.tagger {
        Some(t) => settle_report(
            "target_statistics",
            analysis::target_statistics(dataset, t, settings.mode),
            fp.clone().backend("tagger", &t.descriptor().backend_id),
        )?,
        None => MetricReport::empty("target_statistics", "no tagger configured", fp.clone()),
    });
    out.push(match backends.lexicon {
        Some(lx) => settle_report(
            "frequency_test",
            analysis::frequency_test(dataset, lx, settings.frequency),
            fp.clone().setting("frequency", settings.frequency),
        )?,
        None => MetricReport::empty("frequency_test", "no frequency lexicon configured", fp.clone()),
    });
    out.push(match backends.classifier {
        Some(c) => {
            let questions: Vec<String> = dataset
                .annotations()
                .iter()
                .filter(|a| a.has_question())
                .map(|a| a.question.clone())
                .collect();
            settle_report(
                "question_types",
                analysis::question_type_distribution(&questions, c, settings.mode),
                fp.clone().backend("classifier", &c.descriptor().backend_id),
            )?
        }
        None => MetricReport::empty("question_types", "no classifier configured", fp.clone()),
    });
    out.push(match backends.relation_labels {
        Some(labels) => settle_report(
            "relation_distribution",
            analysis::relation_distribution(labels).map(|d| {
                serde_json::json!({ "observed": d, "pdtb3_reference": analysis::pdtb3_reference() })
            }),
            fp.clone(),
        )?,
        None => MetricReport::empty("relation_distribution", "no relation labels supplied", fp.clone()),
    });
    Ok(out)
}
