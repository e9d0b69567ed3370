//! Command-line driver: ingest, analyze, gen-questions, gen-elabs, evaluate
//! and serve.
//!
//! Every output file is a JSON document carrying the [`RunManifest`] of the
//! run that wrote it. With mock backends, the same manifest always yields the
//! same bytes.

pub mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use qudelab::analysis::{AnalysisError, EmbeddingSimilarity, FrequencyLexicon};
use qudelab::backends::{
    BackendClient, BackendDescriptor, ClassifierBackend, CueWordClassifier, HeuristicTagger,
    RegistryError, TaggerBackend,
};
use qudelab::corpus::{load_dataset, CorpusError, Dataset, InstanceRecord, Split};
use qudelab::elabgen::{ElabKind, ElabLayouts};
use qudelab::generation::GenError;
use qudelab::par::ExecMode;
use qudelab::pipeline::{
    analyze, evaluation_reports, generate_elaborations, generate_questions, write_json,
    AnalysisBackends, AnalysisSettings, ElabRun, EvalSettings, QuestionRun, QuestionSource,
    RecordFile, ReportFile, RunManifest,
};
use qudelab::questiongen::{QgConfig, QgConfigName, QgLayouts};
use qudelab::report::ConfigFingerprint;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use config::Config;

/// Process exit status for each failure class.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Integrity(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Integrity(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Integrity(format!("dataset: {e}"))
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        match e {
            GenError::Config(m) => CliError::Usage(m),
            GenError::Backend(b) => CliError::Backend(b.to_string()),
            other => CliError::Integrity(other.to_string()),
        }
    }
}

impl From<RegistryError> for CliError {
    fn from(e: RegistryError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Backend { .. } => CliError::Backend(e.to_string()),
            AnalysisError::UnknownLabel { .. } | AnalysisError::Io(_) => CliError::Usage(e.to_string()),
            other => CliError::Integrity(other.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "qudelab", version, about = "QUD-driven elaborative simplification experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON configuration file; defaults to `qudelab.json` under the root if present.
    #[arg(short = 'c', long = "config-file", global = true)]
    pub config: Option<PathBuf>,
    /// Workspace root that relative paths resolve against; defaults to the
    /// config file's directory, else the current directory.
    #[arg(long, global = true)]
    pub root: Option<PathBuf>,
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_split)]
    pub split: Option<Split>,
    /// Run batch loops on the calling thread only.
    #[arg(long, global = true)]
    pub sequential: bool,
    /// Upper bound on concurrent calls to each backend.
    #[arg(long, global = true)]
    pub max_in_flight: Option<usize>,
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Disable the on-disk response cache.
    #[arg(long, global = true)]
    pub no_cache: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and fingerprint a dataset.
    Ingest {
        /// Dataset to check instead of the configured one.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Corpus statistics over the annotations.
    Analyze {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate questions with one QG configuration.
    GenQuestions {
        #[arg(long = "config", value_name = "NAME", value_parser = parse_qg_config)]
        config_name: QgConfigName,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate elaborations under one prompt condition.
    GenElabs {
        #[arg(long, value_parser = parse_condition)]
        condition: ElabKind,
        /// Question records for the qud condition; annotated questions otherwise.
        #[arg(long)]
        questions: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// BLEU-4 and embedding similarity of generated records against references.
    Evaluate {
        #[arg(long = "records", required = true, num_args = 1..)]
        records: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the annotation and judgment service.
    Serve {
        #[arg(long)]
        addr: Option<String>,
        #[arg(long)]
        store: Option<PathBuf>,
    },
}

fn choices() -> String {
    let configs: Vec<&str> = QgConfigName::ALL.iter().map(|n| n.as_str()).collect();
    let conditions: Vec<&str> = ElabKind::ALL.iter().map(|k| k.as_str()).collect();
    format!(
        "QG configs: {}; elaboration conditions: {}",
        configs.join(", "),
        conditions.join(", ")
    )
}

fn parse_qg_config(s: &str) -> Result<QgConfigName, String> {
    s.parse().map_err(|_| format!("unknown QG config `{s}`. {}", choices()))
}

fn parse_condition(s: &str) -> Result<ElabKind, String> {
    s.parse().map_err(|_| format!("unknown elaboration condition `{s}`. {}", choices()))
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse()
}

/// Resolved configuration and root for one invocation.
pub struct Context {
    pub root: PathBuf,
    pub config: Config,
}

impl Context {
    pub fn from_args(g: &GlobalArgs) -> Result<Self, CliError> {
        let cwd = std::env::current_dir().map_err(|e| CliError::Usage(e.to_string()))?;
        let explicit_root = g.root.as_ref().map(|r| cwd.join(r));
        let config_path = match &g.config {
            Some(p) => Some(explicit_root.as_deref().unwrap_or(&cwd).join(p)),
            None => {
                let p = explicit_root.as_deref().unwrap_or(&cwd).join("qudelab.json");
                p.exists().then_some(p)
            }
        };
        let mut config = match &config_path {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let root = match (explicit_root, &config_path) {
            (Some(r), _) => r,
            (None, Some(p)) => p.parent().map(Path::to_path_buf).unwrap_or(cwd),
            (None, None) => cwd,
        };
        if let Some(d) = &g.dataset {
            config.dataset = d.clone();
        }
        if let Some(o) = &g.output_dir {
            config.output_dir = o.clone();
        }
        if let Some(s) = g.seed {
            config.seed = s;
        }
        if g.split.is_some() {
            config.split = g.split;
        }
        if g.sequential {
            config.parallel = false;
        }
        if let Some(n) = g.max_in_flight {
            config.client.max_in_flight = n;
        }
        if let Some(c) = &g.cache_dir {
            config.client.cache_dir = Some(c.clone());
        }
        if g.no_cache {
            config.client.cache_dir = None;
        }
        if let Ok(token) = std::env::var("QUDELAB_ADMIN_TOKEN") {
            config.service.admin_token = token;
        }
        Ok(Context { root, config })
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    fn mode(&self) -> ExecMode {
        if self.config.parallel {
            ExecMode::best()
        } else {
            ExecMode::Sequential
        }
    }

    /// Output path (absolute) and its form as recorded in the manifest.
    fn output(&self, explicit: Option<&PathBuf>, default_name: &str) -> (PathBuf, String) {
        let rel = explicit
            .cloned()
            .unwrap_or_else(|| self.config.output_dir.join(default_name));
        (self.path(&rel), rel.to_string_lossy().replace('\\', "/"))
    }

    pub fn dataset(&self) -> Result<Dataset, CliError> {
        let path = self.path(&self.config.dataset);
        if !path.exists() {
            return Err(CliError::Usage(format!("dataset {} not found", path.display())));
        }
        let ds = load_dataset(&path, &self.config.format_version)?;
        if ds.window() == self.config.window {
            return Ok(ds);
        }
        let records = ds.instances().iter().map(InstanceRecord::from).collect();
        Ok(Dataset::with_window(
            self.config.window,
            ds.documents().to_vec(),
            records,
            ds.annotations().to_vec(),
        )?)
    }

    fn qg_layouts(&self) -> Result<QgLayouts, CliError> {
        match &self.config.qg_layouts {
            Some(p) => read_json(&self.path(p)),
            None => Ok(QgLayouts::default()),
        }
    }

    fn elab_layouts(&self) -> Result<ElabLayouts, CliError> {
        match &self.config.elab_layouts {
            Some(p) => read_json(&self.path(p)),
            None => Ok(ElabLayouts::default()),
        }
    }

    fn client(&self, backend: &str) -> Result<BackendClient, CliError> {
        let registry = self.config.registry(&self.root);
        BackendClient::new(registry.generation(backend)?, self.config.client_config(&self.root))
            .map_err(|e| CliError::Usage(format!("response cache: {e}")))
    }

    fn tagger(&self) -> Result<Arc<dyn TaggerBackend>, CliError> {
        Ok(match &self.config.roles.tagger {
            Some(name) => self.config.registry(&self.root).tagger(name)?,
            None => Arc::new(HeuristicTagger::default()),
        })
    }

    fn classifier(&self) -> Result<Arc<dyn ClassifierBackend>, CliError> {
        Ok(match &self.config.roles.classifier {
            Some(name) => self.config.registry(&self.root).classifier(name)?,
            None => Arc::new(CueWordClassifier::default()),
        })
    }

    fn manifest(
        &self,
        command: &str,
        extra: Value,
        dataset: &Dataset,
        backends: Vec<BackendDescriptor>,
        outputs: Vec<String>,
    ) -> RunManifest {
        let config = json!({ "config": self.config.snapshot(), "command": extra });
        RunManifest::new(command, config, &dataset.fingerprint(), backends, self.config.seed, outputs)
    }

    fn fingerprint(&self, dataset: &Dataset) -> ConfigFingerprint {
        ConfigFingerprint::new()
            .dataset(&dataset.fingerprint())
            .setting("window", self.config.window)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Integrity(format!("{}: {e}", path.display())))
}

fn write_output(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    write_json(path, value).map_err(|e| io_error(path, e))
}

/// Summary written by `ingest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub dataset_sha256: String,
    pub documents: usize,
    pub instances: usize,
    pub annotations: usize,
    pub organizational: usize,
    pub annotators: usize,
    pub instances_per_split: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestFile {
    pub manifest: RunManifest,
    pub summary: IngestSummary,
}

fn ingest(ctx: &mut Context, input: Option<&PathBuf>, out: Option<&PathBuf>) -> Result<PathBuf, CliError> {
    if let Some(i) = input {
        ctx.config.dataset = i.clone();
    }
    let ds = ctx.dataset()?;
    let mut per_split = BTreeMap::new();
    for inst in ds.instances() {
        *per_split.entry(inst.split.as_str().to_string()).or_insert(0) += 1;
    }
    let annotators: std::collections::BTreeSet<&str> =
        ds.annotations().iter().map(|a| a.annotator_id.as_str()).collect();
    let summary = IngestSummary {
        dataset_sha256: ds.fingerprint(),
        documents: ds.documents().len(),
        instances: ds.instances().len(),
        annotations: ds.annotations().len(),
        organizational: ds.annotations().iter().filter(|a| a.is_organizational).count(),
        annotators: annotators.len(),
        instances_per_split: per_split,
    };
    let (path, rel) = ctx.output(out, "ingest.json");
    let manifest = ctx.manifest("ingest", json!({}), &ds, vec![], vec![rel]);
    write_output(&path, &IngestFile { manifest, summary })?;
    Ok(path)
}

fn read_relation_labels(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(n, l)| {
            l.split_once('\t')
                .map(|(i, r)| (i.trim().to_string(), r.trim().to_string()))
                .ok_or_else(|| CliError::Integrity(format!("{} line {}: expected instance<TAB>relation", path.display(), n + 1)))
        })
        .collect()
}

pub fn run_analyze(ctx: &Context, out: Option<&PathBuf>) -> Result<PathBuf, CliError> {
    let ds = ctx.dataset()?;
    let registry = ctx.config.registry(&ctx.root);
    let tagger = ctx.tagger()?;
    let classifier = ctx.classifier()?;
    let similarity = match &ctx.config.roles.embedder {
        Some(name) => Some(EmbeddingSimilarity::new(registry.embedding(name)?)),
        None => None,
    };
    let lexicon = match &ctx.config.analysis.lexicon {
        Some(p) => Some(FrequencyLexicon::load(ctx.path(p))?),
        None => None,
    };
    let labels = match &ctx.config.analysis.relation_labels {
        Some(p) => Some(read_relation_labels(&ctx.path(p))?),
        None => None,
    };
    let backends = AnalysisBackends {
        similarity: similarity.as_ref().map(|s| s as _),
        tagger: Some(tagger.as_ref()),
        classifier: Some(classifier.as_ref()),
        lexicon: lexicon.as_ref(),
        relation_labels: labels.as_deref(),
    };
    let settings = AnalysisSettings {
        seed: ctx.config.seed,
        overlap: ctx.config.analysis.overlap,
        frequency: ctx.config.analysis.frequency,
        mode: ctx.mode(),
    };
    let reports = analyze(&ds, &backends, &settings, &ctx.fingerprint(&ds))?;
    let mut descriptors = vec![tagger.descriptor().clone(), classifier.descriptor().clone()];
    if let Some(name) = &ctx.config.roles.embedder {
        descriptors.push(registry.embedding(name)?.descriptor().clone());
    }
    let (path, rel) = ctx.output(out, "analysis.json");
    let manifest = ctx.manifest("analyze", json!({}), &ds, descriptors, vec![rel]);
    write_output(&path, &ReportFile { manifest, reports })?;
    Ok(path)
}

fn run_gen_questions(ctx: &Context, name: QgConfigName, out: Option<&PathBuf>) -> Result<PathBuf, CliError> {
    let ds = ctx.dataset()?;
    let roles = &ctx.config.roles;
    let backend = roles
        .question_generators
        .get(name.as_str())
        .or(roles.question_generator.as_ref())
        .ok_or_else(|| CliError::Usage(format!("no question generator configured for {name}")))?;
    let client = ctx.client(backend)?;
    let config = QgConfig::preset(name);
    let registry = ctx.config.registry(&ctx.root);
    let span = match (&config.target_source, &roles.span_predictor) {
        (qudelab::questiongen::TargetSource::Predicted, Some(n)) => Some(registry.span(n)?),
        (qudelab::questiongen::TargetSource::Predicted, None) => {
            return Err(CliError::Usage(format!("{name} needs roles.span_predictor")))
        }
        _ => None,
    };
    let layouts = ctx.qg_layouts()?;
    let batch = generate_questions(
        &ds,
        &QuestionRun {
            config: &config,
            client: &client,
            span_predictor: span.as_deref(),
            layouts: &layouts,
            decode: &ctx.config.decode,
            split: ctx.config.split,
            mode: ctx.mode(),
        },
    )?;
    let mut descriptors = vec![client.descriptor().clone()];
    if let Some(s) = &span {
        descriptors.push(s.descriptor().clone());
    }
    let (path, rel) = ctx.output(out, &format!("questions-{name}.json"));
    let manifest = ctx.manifest(
        "gen-questions",
        json!({ "qg_config": config }),
        &ds,
        descriptors,
        vec![rel],
    );
    write_output(&path, &RecordFile { manifest, records: batch.records, skipped: batch.skipped })?;
    Ok(path)
}

fn load_records(path: &Path, ds: &Dataset) -> Result<RecordFile, CliError> {
    let file: RecordFile = read_json(path)?;
    if file.manifest.dataset_sha256 != ds.fingerprint() {
        return Err(CliError::Integrity(format!(
            "{} was generated from dataset {}, not {}",
            path.display(),
            file.manifest.dataset_sha256,
            ds.fingerprint()
        )));
    }
    if !file.manifest.verify() {
        return Err(CliError::Integrity(format!("{}: manifest run_id does not match its contents", path.display())));
    }
    Ok(file)
}

fn run_gen_elabs(
    ctx: &Context,
    kind: ElabKind,
    questions: Option<&PathBuf>,
    out: Option<&PathBuf>,
) -> Result<PathBuf, CliError> {
    let ds = ctx.dataset()?;
    if questions.is_some() && kind != ElabKind::Qud {
        return Err(CliError::Usage("--questions applies to the qud condition only".into()));
    }
    let backend = ctx
        .config
        .roles
        .elaboration_generator
        .as_ref()
        .ok_or_else(|| CliError::Usage("no elaboration generator configured (roles.elaboration_generator)".into()))?;
    let client = ctx.client(backend)?;
    let question_file = questions.map(|p| load_records(&ctx.path(p), &ds)).transpose()?;
    let source = match &question_file {
        Some(f) => QuestionSource::Records(&f.records),
        None => QuestionSource::Gold,
    };
    let layouts = ctx.elab_layouts()?;
    let batch = generate_elaborations(
        &ds,
        &ElabRun {
            kind,
            questions: source,
            client: &client,
            layouts: &layouts,
            decode: &ctx.config.decode,
            split: ctx.config.split,
            mode: ctx.mode(),
        },
    )?;
    let default_name = match (&question_file, questions) {
        (Some(_), Some(p)) => format!(
            "elabs-{kind}-{}.json",
            p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        ),
        _ => format!("elabs-{kind}.json"),
    };
    let (path, rel) = ctx.output(out, &default_name);
    let extra = json!({
        "condition": kind.as_str(),
        "questions": question_file.as_ref().map(|f| f.manifest.run_id.clone()),
    });
    let manifest = ctx.manifest("gen-elabs", extra, &ds, vec![client.descriptor().clone()], vec![rel]);
    write_output(&path, &RecordFile { manifest, records: batch.records, skipped: batch.skipped })?;
    Ok(path)
}

fn run_evaluate(ctx: &Context, inputs: &[PathBuf], out: Option<&PathBuf>) -> Result<PathBuf, CliError> {
    let ds = ctx.dataset()?;
    let mut records = Vec::new();
    let mut sources = Vec::new();
    for p in inputs {
        let f = load_records(&ctx.path(p), &ds)?;
        sources.push(f.manifest.run_id.clone());
        records.extend(f.records);
    }
    let registry = ctx.config.registry(&ctx.root);
    let embedder = match &ctx.config.roles.embedder {
        Some(name) => Some(registry.embedding(name)?),
        None => None,
    };
    let settings = EvalSettings {
        smoothing: ctx.config.smoothing,
        embedder: embedder.as_deref(),
        mode: ctx.mode(),
    };
    let mut fp = ctx.fingerprint(&ds).setting("smoothing", ctx.config.smoothing);
    if let Some(e) = &embedder {
        fp = fp.backend("embedder", &e.descriptor().backend_id);
    }
    let reports = evaluation_reports(&ds, &records, &settings, &fp)?;
    let descriptors = embedder.iter().map(|e| e.descriptor().clone()).collect();
    let (path, rel) = ctx.output(out, "evaluation.json");
    let manifest = ctx.manifest("evaluate", json!({ "records": sources }), &ds, descriptors, vec![rel]);
    write_output(&path, &ReportFile { manifest, reports })?;
    Ok(path)
}

fn run_serve(ctx: &Context, addr: Option<&String>, store: Option<&PathBuf>) -> Result<(), CliError> {
    use qudelab_service::{AppState, ServiceConfig, Store};
    let ds = ctx.dataset()?;
    let addr = addr.unwrap_or(&ctx.config.service.addr);
    let addr: std::net::SocketAddr = addr
        .parse()
        .map_err(|e| CliError::Usage(format!("address `{addr}`: {e}")))?;
    let store_path = ctx.path(store.unwrap_or(&ctx.config.service.store));
    let store = Store::open(&store_path, &ds.fingerprint())
        .map_err(|e| CliError::Integrity(format!("{}: {e}", store_path.display())))?;
    let config = ServiceConfig {
        redundancy: ctx.config.thresholds.redundancy,
        guardrail_threshold: ctx.config.thresholds.guardrail_overlap,
        seed: ctx.config.seed,
        admin_token: ctx.config.service.admin_token.clone(),
    };
    let state = AppState::new(Arc::new(ds), store, config)
        .with_tagger(ctx.tagger()?)
        .with_classifier(ctx.classifier()?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    runtime
        .block_on(qudelab_service::serve(addr, Arc::new(state)))
        .map_err(|e| CliError::Usage(format!("serve on {addr}: {e}")))
}

/// Runs a parsed command. Returns the written output file, if any.
pub fn execute(cli: &Cli) -> Result<Option<PathBuf>, CliError> {
    let mut ctx = Context::from_args(&cli.global)?;
    match &cli.command {
        Command::Ingest { input, out } => ingest(&mut ctx, input.as_ref(), out.as_ref()).map(Some),
        Command::Analyze { out } => run_analyze(&ctx, out.as_ref()).map(Some),
        Command::GenQuestions { config_name, out } => run_gen_questions(&ctx, *config_name, out.as_ref()).map(Some),
        Command::GenElabs { condition, questions, out } => {
            run_gen_elabs(&ctx, *condition, questions.as_ref(), out.as_ref()).map(Some)
        }
        Command::Evaluate { records, out } => run_evaluate(&ctx, records, out.as_ref()).map(Some),
        Command::Serve { addr, store } => run_serve(&ctx, addr.as_ref(), store.as_ref()).map(|_| None),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(Some(path)) => {
            println!("{}", path.display());
            0
        }
        Ok(None) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
