//! Request and response bodies and the route handlers.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use qudelab::corpus::{ElaborationInstance, QudAnnotation, Sentence, Split, TargetSpan};
use qudelab::metrics::{ElabRanking, HumanQuestionJudgment, RankCriterion};
use qudelab::report::MetricReport;
use qudelab::tokenize::content_tokens;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ApiError;
use crate::store::{ItemKind, JudgeItem, QualificationRecord, QualificationStatus, Role, TaskRow, TaskState};
use crate::{reports, AppState, OPENAPI_YAML};

/// Size of every qualification round.
pub const QUALIFICATION_SIZE: usize = 6;

type Shared = State<Arc<AppState>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceView {
    pub index: usize,
    pub text: String,
    pub tokens: Vec<String>,
}

impl From<&Sentence> for SentenceView {
    fn from(s: &Sentence) -> Self {
        SentenceView {
            index: s.index,
            text: s.text.clone(),
            tokens: s.tokens(),
        }
    }
}

/// The context window of one instance. `context` holds only the sentences
/// before the elaboration; `previous_index` marks the one right before it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceView {
    pub instance_id: String,
    pub doc_id: String,
    pub split: Split,
    pub context: Vec<SentenceView>,
    pub previous_index: Option<usize>,
    pub elaboration: SentenceView,
    pub post: Vec<SentenceView>,
}

impl From<&ElaborationInstance> for InstanceView {
    fn from(inst: &ElaborationInstance) -> Self {
        let w = &inst.context;
        InstanceView {
            instance_id: inst.instance_id.clone(),
            doc_id: inst.doc_id.clone(),
            split: inst.split,
            context: w.pre.iter().map(SentenceView::from).collect(),
            previous_index: w.pre.last().map(|s| s.index),
            elaboration: SentenceView::from(&w.elaboration),
            post: w.post.iter().map(SentenceView::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: i64,
    pub instance_id: String,
    pub assigned_to: String,
    pub state: TaskState,
    pub qualification: bool,
    pub payload: InstanceView,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetInput {
    pub sentence_index: usize,
    pub start_token: usize,
    pub end_token: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationInput {
    pub task_id: i64,
    #[serde(default)]
    pub question: String,
    #[serde(default)]
    pub target: Option<TargetInput>,
    pub anchor_index: usize,
    #[serde(default)]
    pub is_organizational: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub task_id: i64,
    pub state: TaskState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputView {
    pub system: String,
    pub text: String,
}

/// An evaluation item as one judge sees it. `context` never includes the
/// elaboration; question items carry it separately so the judge can tell
/// whether it answers the question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemView {
    pub item_id: String,
    pub instance_id: String,
    pub kind: ItemKind,
    pub context: Vec<SentenceView>,
    pub elaboration: Option<SentenceView>,
    pub outputs: Vec<OutputView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentInput {
    pub item_id: String,
    pub system: String,
    pub reasonable: bool,
    pub answered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingInput {
    pub item_id: String,
    pub criterion: RankCriterion,
    pub first: String,
    pub second: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewAnnotator {
    pub annotator_id: String,
    pub token: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewQualification {
    pub annotator_id: String,
    pub instance_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualificationDecision {
    pub status: QualificationStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedundancyOverride {
    pub instance_id: String,
    pub n: usize,
}

/// Order in which a judge sees an item's systems. Depends only on the seed,
/// the judge and the item.
pub fn system_order(seed: u64, judge_id: &str, item_id: &str, systems: &[String]) -> Vec<String> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(judge_id.as_bytes());
    h.update([0u8]);
    h.update(item_id.as_bytes());
    let key: [u8; 32] = h.finalize().into();
    let mut order: Vec<String> = systems.to_vec();
    order.sort();
    order.shuffle(&mut ChaCha8Rng::from_seed(key));
    order
}

/// |Qc ∩ Ec| / |Qc| over distinct content tokens; zero for a question with no
/// content tokens.
pub fn elaboration_overlap(question: &str, elaboration: &str) -> f64 {
    let q: BTreeSet<String> = content_tokens(question).into_iter().collect();
    if q.is_empty() {
        return 0.0;
    }
    let e: BTreeSet<String> = content_tokens(elaboration).into_iter().collect();
    q.intersection(&e).count() as f64 / q.len() as f64
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::invalid_field("body", e.body_text()))
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

fn caller(state: &AppState, headers: &HeaderMap) -> Result<(String, Role), ApiError> {
    let token = bearer(headers).ok_or_else(ApiError::unauthorized)?;
    state
        .store()?
        .annotator_by_token(token)?
        .ok_or_else(ApiError::unauthorized)
}

fn caller_with(state: &AppState, headers: &HeaderMap, role: Role) -> Result<String, ApiError> {
    let (id, r) = caller(state, headers)?;
    if r != role {
        return Err(ApiError::forbidden(format!("{id} is not registered as a {role:?}").to_lowercase()));
    }
    Ok(id)
}

fn is_admin(state: &AppState, headers: &HeaderMap) -> bool {
    bearer(headers) == Some(state.config.admin_token.as_str())
}

fn require_admin(state: &AppState, headers: &HeaderMap) -> Result<(), ApiError> {
    match bearer(headers) {
        None => Err(ApiError::unauthorized()),
        Some(_) if is_admin(state, headers) => Ok(()),
        Some(_) => Err(ApiError::forbidden("admin token required")),
    }
}

/// Admin or any registered annotator or judge.
fn require_reader(state: &AppState, headers: &HeaderMap) -> Result<(), ApiError> {
    if is_admin(state, headers) {
        return Ok(());
    }
    caller(state, headers).map(|_| ())
}

fn instance<'a>(state: &'a AppState, instance_id: &str) -> Result<&'a ElaborationInstance, ApiError> {
    state
        .dataset
        .instance(instance_id)
        .ok_or_else(|| ApiError::not_found(format!("no instance {instance_id}")))
}

fn task_view(state: &AppState, task: TaskRow) -> Result<AnnotationTask, ApiError> {
    let payload = InstanceView::from(instance(state, &task.instance_id)?);
    Ok(AnnotationTask {
        task_id: task.task_id,
        instance_id: task.instance_id,
        assigned_to: task.assigned_to,
        state: task.state,
        qualification: task.qualification,
        payload,
    })
}

pub fn routes() -> Router<Arc<AppState>> {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/openapi.yaml", get(openapi))
        .route("/tasks/next", post(next_task))
        .route("/annotations", post(submit_annotation))
        .route("/instances/{instance_id}", get(get_instance))
        .route("/items", get(list_items))
        .route("/judgments", post(submit_judgment))
        .route("/rankings", post(submit_ranking))
        .route("/reports/{name}", get(get_report))
        .route("/admin/annotators", post(add_annotator))
        .route("/admin/qualifications", post(add_qualification))
        .route("/admin/qualifications/{annotator_id}/decision", post(decide_qualification))
        .route("/admin/tasks", get(list_tasks))
        .route("/admin/tasks/{task_id}/approve", post(approve_task))
        .route("/admin/redundancy", post(set_redundancy))
        .route("/admin/items", post(add_item))
}

async fn openapi() -> impl IntoResponse {
    ([(CONTENT_TYPE, "application/yaml")], OPENAPI_YAML)
}

/// Returns the caller's open task, or assigns a new one. Annotators with a
/// pending qualification draw from their six qualification instances; those
/// who passed draw from the main pool, where the instance with the fewest
/// completed annotations that still has room goes first.
async fn next_task(State(state): Shared, headers: HeaderMap) -> Result<Response, ApiError> {
    let me = caller_with(&state, &headers, Role::Annotator)?;
    let store = state.store()?;
    let qualification = match store.qualification(&me)? {
        None => return Err(ApiError::forbidden(format!("{me} has no qualification record"))),
        Some(q) if q.status == QualificationStatus::Failed => {
            return Err(ApiError::forbidden(format!("{me} did not pass qualification")))
        }
        Some(q) => q,
    };
    if let Some(open) = store.open_task_for(&me)? {
        drop(store);
        return Ok(Json(task_view(&state, open)?).into_response());
    }
    let seen = store.instances_seen_by(&me)?;

    let pick = if qualification.status == QualificationStatus::Pending {
        qualification
            .instance_ids
            .iter()
            .find(|id| !seen.contains(*id))
            .cloned()
    } else {
        let counts = store.task_counts()?;
        let overrides = store.redundancy_overrides()?;
        state
            .dataset
            .instances()
            .iter()
            .enumerate()
            .filter(|(_, inst)| !seen.contains(&inst.instance_id))
            .filter_map(|(pos, inst)| {
                let c = counts.get(&inst.instance_id).copied().unwrap_or(crate::store::TaskCounts {
                    assigned: 0,
                    completed: 0,
                });
                let cap = overrides
                    .get(&inst.instance_id)
                    .copied()
                    .unwrap_or(state.config.redundancy);
                (c.assigned < cap).then_some(((c.completed, c.assigned, pos), inst))
            })
            .min_by_key(|(key, _)| *key)
            .map(|(_, inst)| inst.instance_id.clone())
    };
    let Some(instance_id) = pick else {
        return Ok(StatusCode::NO_CONTENT.into_response());
    };
    let task = store.create_task(&instance_id, &me, qualification.status == QualificationStatus::Pending)?;
    drop(store);
    Ok(Json(task_view(&state, task)?).into_response())
}

async fn submit_annotation(
    State(state): Shared,
    headers: HeaderMap,
    payload: Result<Json<AnnotationInput>, JsonRejection>,
) -> Result<Json<SubmitResponse>, ApiError> {
    let me = caller_with(&state, &headers, Role::Annotator)?;
    let input = body(payload)?;
    let mut store = state.store()?;
    let task = store
        .task(input.task_id)?
        .ok_or_else(|| ApiError::not_found(format!("no task {}", input.task_id)))?;
    if task.assigned_to != me {
        return Err(ApiError::forbidden(format!("task {} is not assigned to {me}", task.task_id)));
    }
    if task.state != TaskState::Open {
        return Err(ApiError::conflict(format!("task {} is already {:?}", task.task_id, task.state).to_lowercase()));
    }
    let inst = instance(&state, &task.instance_id)?;
    let doc = state.dataset.document_of(inst);
    let before: Vec<usize> = inst.context.pre.iter().map(|s| s.index).collect();
    let allowed = match (before.first(), before.last()) {
        (Some(a), Some(b)) => format!("{a}..={b}"),
        _ => "none".to_string(),
    };

    let mut fields = BTreeMap::new();
    if !input.is_organizational && input.question.trim().is_empty() {
        fields.insert("question".to_string(), "required unless organizational".to_string());
    }
    if !before.contains(&input.anchor_index) {
        fields.insert(
            "anchor_index".to_string(),
            format!("must be a context sentence before the elaboration ({allowed})"),
        );
    }
    let target = match (&input.target, input.is_organizational) {
        (None, false) => {
            fields.insert("target".to_string(), "required unless organizational".to_string());
            None
        }
        (None, true) => None,
        (Some(t), _) => {
            if !before.contains(&t.sentence_index) {
                fields.insert(
                    "target.sentence_index".to_string(),
                    format!("must be a context sentence before the elaboration ({allowed})"),
                );
                None
            } else {
                match TargetSpan::new(doc, t.sentence_index, t.start_token, t.end_token) {
                    Ok(span) => Some(span),
                    Err(e) => {
                        fields.insert("target".to_string(), e.to_string());
                        None
                    }
                }
            }
        }
    };
    if !fields.is_empty() {
        return Err(ApiError::invalid(fields));
    }

    if !input.is_organizational {
        let overlap = elaboration_overlap(&input.question, &inst.context.elaboration.text);
        if overlap >= state.config.guardrail_threshold {
            let mut e = ApiError::invalid_field(
                "question",
                format!(
                    "shares {:.0}% of its content words with the elaboration (limit {:.0}%)",
                    overlap * 100.0,
                    state.config.guardrail_threshold * 100.0
                ),
            );
            e.body.code = "guardrail_overlap".to_string();
            e.body.message = "question copies the elaboration".to_string();
            return Err(e);
        }
    }

    let annotation = QudAnnotation {
        instance_id: task.instance_id.clone(),
        annotator_id: me,
        question: input.question.trim().to_string(),
        target,
        anchor_index: input.anchor_index,
        is_organizational: input.is_organizational,
        timestamp: Some(Utc::now()),
    };
    annotation
        .validate(doc)
        .map_err(|e| ApiError::invalid_field("annotation", e.to_string()))?;
    store.submit(task.task_id, &annotation)?;
    Ok(Json(SubmitResponse {
        task_id: task.task_id,
        state: TaskState::Submitted,
    }))
}

async fn get_instance(
    State(state): Shared,
    headers: HeaderMap,
    Path(instance_id): Path<String>,
) -> Result<Json<InstanceView>, ApiError> {
    require_reader(&state, &headers)?;
    Ok(Json(InstanceView::from(instance(&state, &instance_id)?)))
}

fn item_view(state: &AppState, judge_id: &str, item: &JudgeItem) -> Result<ItemView, ApiError> {
    let inst = instance(state, &item.instance_id)?;
    let systems: Vec<String> = item.outputs.keys().cloned().collect();
    let outputs = system_order(state.config.seed, judge_id, &item.item_id, &systems)
        .into_iter()
        .map(|system| OutputView {
            text: item.outputs[&system].clone(),
            system,
        })
        .collect();
    Ok(ItemView {
        item_id: item.item_id.clone(),
        instance_id: item.instance_id.clone(),
        kind: item.kind,
        context: inst.context.pre.iter().map(SentenceView::from).collect(),
        elaboration: (item.kind == ItemKind::Question).then(|| SentenceView::from(&inst.context.elaboration)),
        outputs,
    })
}

async fn list_items(State(state): Shared, headers: HeaderMap) -> Result<Json<Vec<ItemView>>, ApiError> {
    let me = caller_with(&state, &headers, Role::Judge)?;
    let items = state.store()?.items()?;
    let views = items
        .iter()
        .map(|item| item_view(&state, &me, item))
        .collect::<Result<_, _>>()?;
    Ok(Json(views))
}

fn judged_item(state: &AppState, item_id: &str, kind: ItemKind) -> Result<JudgeItem, ApiError> {
    let item = state
        .store()?
        .item(item_id)?
        .ok_or_else(|| ApiError::not_found(format!("no item {item_id}")))?;
    if item.kind != kind {
        return Err(ApiError::invalid_field(
            "item_id",
            format!("item {item_id} is a {:?} item", item.kind).to_lowercase(),
        ));
    }
    Ok(item)
}

async fn submit_judgment(
    State(state): Shared,
    headers: HeaderMap,
    payload: Result<Json<JudgmentInput>, JsonRejection>,
) -> Result<StatusCode, ApiError> {
    let me = caller_with(&state, &headers, Role::Judge)?;
    let input = body(payload)?;
    let item = judged_item(&state, &input.item_id, ItemKind::Question)?;
    if !item.outputs.contains_key(&input.system) {
        return Err(ApiError::invalid_field("system", format!("not a system of item {}", item.item_id)));
    }
    let judgment = HumanQuestionJudgment {
        question_id: item.item_id.clone(),
        judge_id: me,
        reasonable: input.reasonable,
        answered: input.answered,
    };
    state.store()?.add_judgment(&item.item_id, &input.system, &judgment)?;
    Ok(StatusCode::CREATED)
}

async fn submit_ranking(
    State(state): Shared,
    headers: HeaderMap,
    payload: Result<Json<RankingInput>, JsonRejection>,
) -> Result<StatusCode, ApiError> {
    let me = caller_with(&state, &headers, Role::Judge)?;
    let input = body(payload)?;
    let item = judged_item(&state, &input.item_id, ItemKind::Elaboration)?;
    let mut fields = BTreeMap::new();
    for (name, system) in [("first", &input.first), ("second", &input.second)] {
        if !item.outputs.contains_key(system) {
            fields.insert(name.to_string(), format!("not a system of item {}", item.item_id));
        }
    }
    if input.first == input.second {
        fields.insert("second".to_string(), "must differ from first".to_string());
    }
    if !fields.is_empty() {
        return Err(ApiError::invalid(fields));
    }
    state.store()?.add_ranking(&ElabRanking {
        instance_id: item.item_id,
        judge_id: me,
        criterion: input.criterion,
        first: input.first,
        second: input.second,
    })?;
    Ok(StatusCode::CREATED)
}

async fn get_report(
    State(state): Shared,
    headers: HeaderMap,
    Path(name): Path<String>,
) -> Result<Json<MetricReport>, ApiError> {
    require_reader(&state, &headers)?;
    Ok(Json(reports::compute(&state, &name)?))
}

async fn add_annotator(
    State(state): Shared,
    headers: HeaderMap,
    payload: Result<Json<NewAnnotator>, JsonRejection>,
) -> Result<StatusCode, ApiError> {
    require_admin(&state, &headers)?;
    let input = body(payload)?;
    let mut fields = BTreeMap::new();
    if input.annotator_id.trim().is_empty() {
        fields.insert("annotator_id".to_string(), "must not be empty".to_string());
    }
    if input.token.trim().is_empty() || input.token == state.config.admin_token {
        fields.insert("token".to_string(), "must be non-empty and distinct from the admin token".to_string());
    }
    if !fields.is_empty() {
        return Err(ApiError::invalid(fields));
    }
    state.store()?.add_annotator(&input.annotator_id, &input.token, input.role)?;
    Ok(StatusCode::CREATED)
}

async fn add_qualification(
    State(state): Shared,
    headers: HeaderMap,
    payload: Result<Json<NewQualification>, JsonRejection>,
) -> Result<(StatusCode, Json<QualificationRecord>), ApiError> {
    require_admin(&state, &headers)?;
    let input = body(payload)?;
    let distinct: BTreeSet<&String> = input.instance_ids.iter().collect();
    if input.instance_ids.len() != QUALIFICATION_SIZE || distinct.len() != QUALIFICATION_SIZE {
        return Err(ApiError::invalid_field(
            "instance_ids",
            format!("exactly {QUALIFICATION_SIZE} distinct instances required"),
        ));
    }
    if let Some(missing) = input.instance_ids.iter().find(|id| state.dataset.instance(id).is_none()) {
        return Err(ApiError::invalid_field("instance_ids", format!("unknown instance {missing}")));
    }
    let store = state.store()?;
    let registered = store.connection().query_row(
        "SELECT role FROM annotators WHERE annotator_id = ?1",
        [&input.annotator_id],
        |r| r.get::<_, String>(0),
    );
    if registered.as_deref() != Ok("annotator") {
        return Err(ApiError::invalid_field("annotator_id", "not a registered annotator"));
    }
    store.set_qualification(&input.annotator_id, &input.instance_ids)?;
    let record = store
        .qualification(&input.annotator_id)?
        .ok_or_else(|| ApiError::internal("qualification vanished"))?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn decide_qualification(
    State(state): Shared,
    headers: HeaderMap,
    Path(annotator_id): Path<String>,
    payload: Result<Json<QualificationDecision>, JsonRejection>,
) -> Result<Json<QualificationRecord>, ApiError> {
    require_admin(&state, &headers)?;
    let input = body(payload)?;
    if input.status == QualificationStatus::Pending {
        return Err(ApiError::invalid_field("status", "must be passed or failed"));
    }
    let store = state.store()?;
    store.decide_qualification(&annotator_id, input.status)?;
    let record = store
        .qualification(&annotator_id)?
        .ok_or_else(|| ApiError::internal("qualification vanished"))?;
    Ok(Json(record))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSummary {
    #[serde(flatten)]
    pub task: TaskRow,
    pub annotation: Option<QudAnnotation>,
}

async fn list_tasks(State(state): Shared, headers: HeaderMap) -> Result<Json<Vec<TaskSummary>>, ApiError> {
    require_admin(&state, &headers)?;
    let store = state.store()?;
    let tasks = store.tasks()?;
    let out = tasks
        .into_iter()
        .map(|task| {
            let annotation = store.annotation_for_task(task.task_id)?;
            Ok(TaskSummary { task, annotation })
        })
        .collect::<Result<_, ApiError>>()?;
    Ok(Json(out))
}

async fn approve_task(
    State(state): Shared,
    headers: HeaderMap,
    Path(task_id): Path<i64>,
) -> Result<Json<SubmitResponse>, ApiError> {
    require_admin(&state, &headers)?;
    state.store()?.approve(task_id)?;
    Ok(Json(SubmitResponse {
        task_id,
        state: TaskState::Approved,
    }))
}

async fn set_redundancy(
    State(state): Shared,
    headers: HeaderMap,
    payload: Result<Json<RedundancyOverride>, JsonRejection>,
) -> Result<StatusCode, ApiError> {
    require_admin(&state, &headers)?;
    let input = body(payload)?;
    instance(&state, &input.instance_id)?;
    if input.n == 0 {
        return Err(ApiError::invalid_field("n", "must be at least 1"));
    }
    state.store()?.set_redundancy(&input.instance_id, input.n)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn add_item(
    State(state): Shared,
    headers: HeaderMap,
    payload: Result<Json<JudgeItem>, JsonRejection>,
) -> Result<StatusCode, ApiError> {
    require_admin(&state, &headers)?;
    let item = body(payload)?;
    if state.dataset.instance(&item.instance_id).is_none() {
        return Err(ApiError::invalid_field("instance_id", format!("unknown instance {}", item.instance_id)));
    }
    let needed = if item.kind == ItemKind::Elaboration { 2 } else { 1 };
    if item.outputs.len() < needed {
        return Err(ApiError::invalid_field("outputs", format!("at least {needed} system outputs required")));
    }
    state.store()?.add_item(&item)?;
    Ok(StatusCode::CREATED)
}
