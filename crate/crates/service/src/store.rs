//! SQLite persistence. Annotations are append-only; task state moves forward
//! through compare-and-set updates.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use qudelab::corpus::QudAnnotation;
use qudelab::metrics::{ElabRanking, HumanQuestionJudgment, RankCriterion};
use rusqlite::{params, Connection, OptionalExtension};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Sqlite(#[from] rusqlite::Error),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    NotFound(String),
    #[error("stored record is corrupt: {0}")]
    Corrupt(String),
}

pub type StoreResult<T> = Result<T, StoreError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Annotator,
    Judge,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::Annotator => "annotator",
            Role::Judge => "judge",
        }
    }

    fn parse(s: &str) -> StoreResult<Self> {
        match s {
            "annotator" => Ok(Role::Annotator),
            "judge" => Ok(Role::Judge),
            other => Err(StoreError::Corrupt(format!("role `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualificationStatus {
    Pending,
    Passed,
    Failed,
}

impl QualificationStatus {
    fn as_str(self) -> &'static str {
        match self {
            QualificationStatus::Pending => "pending",
            QualificationStatus::Passed => "passed",
            QualificationStatus::Failed => "failed",
        }
    }

    fn parse(s: &str) -> StoreResult<Self> {
        match s {
            "pending" => Ok(QualificationStatus::Pending),
            "passed" => Ok(QualificationStatus::Passed),
            "failed" => Ok(QualificationStatus::Failed),
            other => Err(StoreError::Corrupt(format!("qualification status `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualificationRecord {
    pub annotator_id: String,
    pub instance_ids: Vec<String>,
    pub status: QualificationStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Open,
    Submitted,
    Approved,
}

impl TaskState {
    fn as_str(self) -> &'static str {
        match self {
            TaskState::Open => "open",
            TaskState::Submitted => "submitted",
            TaskState::Approved => "approved",
        }
    }

    fn parse(s: &str) -> StoreResult<Self> {
        match s {
            "open" => Ok(TaskState::Open),
            "submitted" => Ok(TaskState::Submitted),
            "approved" => Ok(TaskState::Approved),
            other => Err(StoreError::Corrupt(format!("task state `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRow {
    pub task_id: i64,
    pub instance_id: String,
    pub assigned_to: String,
    pub state: TaskState,
    /// Part of the annotator's qualification round rather than the main pool.
    pub qualification: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    /// Generated questions, judged for reasonableness and answeredness.
    Question,
    /// Candidate elaborations, ranked top-two.
    Elaboration,
}

impl ItemKind {
    fn as_str(self) -> &'static str {
        match self {
            ItemKind::Question => "question",
            ItemKind::Elaboration => "elaboration",
        }
    }

    fn parse(s: &str) -> StoreResult<Self> {
        match s {
            "question" => Ok(ItemKind::Question),
            "elaboration" => Ok(ItemKind::Elaboration),
            other => Err(StoreError::Corrupt(format!("item kind `{other}`"))),
        }
    }
}

/// One evaluation item: several systems' outputs for the same instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeItem {
    pub item_id: String,
    pub instance_id: String,
    pub kind: ItemKind,
    /// System name → output text.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskCounts {
    pub assigned: usize,
    pub completed: usize,
}

const SCHEMA: &str = r#"
CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS annotators (
    annotator_id TEXT PRIMARY KEY,
    token TEXT NOT NULL UNIQUE,
    role TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS qualifications (
    annotator_id TEXT PRIMARY KEY REFERENCES annotators(annotator_id),
    instance_ids TEXT NOT NULL,
    status TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS redundancy (
    instance_id TEXT PRIMARY KEY,
    n INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS tasks (
    task_id INTEGER PRIMARY KEY AUTOINCREMENT,
    instance_id TEXT NOT NULL,
    annotator_id TEXT NOT NULL REFERENCES annotators(annotator_id),
    state TEXT NOT NULL,
    qualification INTEGER NOT NULL,
    UNIQUE (instance_id, annotator_id)
);
CREATE TABLE IF NOT EXISTS annotations (
    annotation_id INTEGER PRIMARY KEY AUTOINCREMENT,
    task_id INTEGER NOT NULL UNIQUE REFERENCES tasks(task_id),
    body TEXT NOT NULL
);
CREATE TRIGGER IF NOT EXISTS annotations_no_update BEFORE UPDATE ON annotations
BEGIN SELECT RAISE(ABORT, 'annotations are append-only'); END;
CREATE TRIGGER IF NOT EXISTS annotations_no_delete BEFORE DELETE ON annotations
BEGIN SELECT RAISE(ABORT, 'annotations are append-only'); END;
CREATE TABLE IF NOT EXISTS items (
    item_id TEXT PRIMARY KEY,
    instance_id TEXT NOT NULL,
    kind TEXT NOT NULL,
    outputs TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS judgments (
    item_id TEXT NOT NULL REFERENCES items(item_id),
    judge_id TEXT NOT NULL,
    system TEXT NOT NULL,
    reasonable INTEGER NOT NULL,
    answered INTEGER NOT NULL,
    UNIQUE (item_id, judge_id, system)
);
CREATE TABLE IF NOT EXISTS rankings (
    item_id TEXT NOT NULL REFERENCES items(item_id),
    judge_id TEXT NOT NULL,
    criterion TEXT NOT NULL,
    first TEXT NOT NULL,
    second TEXT NOT NULL,
    UNIQUE (item_id, judge_id, criterion)
);
"#;

fn is_unique_violation(e: &rusqlite::Error) -> bool {
    matches!(
        e,
        rusqlite::Error::SqliteFailure(f, _)
            if f.code == rusqlite::ErrorCode::ConstraintViolation
    )
}

fn corrupt(e: serde_json::Error) -> StoreError {
    StoreError::Corrupt(e.to_string())
}

pub struct Store {
    conn: Connection,
}

impl Store {
    /// Opens (or creates) a store bound to one dataset. Reopening with a
    /// different dataset fingerprint is refused.
    pub fn open(path: impl AsRef<Path>, dataset_sha256: &str) -> StoreResult<Self> {
        Self::init(Connection::open(path)?, dataset_sha256)
    }

    pub fn in_memory(dataset_sha256: &str) -> StoreResult<Self> {
        Self::init(Connection::open_in_memory()?, dataset_sha256)
    }

    fn init(conn: Connection, dataset_sha256: &str) -> StoreResult<Self> {
        conn.execute_batch("PRAGMA foreign_keys = ON;")?;
        conn.execute_batch(SCHEMA)?;
        let existing: Option<String> = conn
            .query_row("SELECT value FROM meta WHERE key = 'dataset_sha256'", [], |r| r.get(0))
            .optional()?;
        match existing {
            Some(sha) if sha != dataset_sha256 => {
                return Err(StoreError::Conflict(format!(
                    "store belongs to dataset {sha}, not {dataset_sha256}"
                )))
            }
            Some(_) => {}
            None => {
                conn.execute(
                    "INSERT INTO meta (key, value) VALUES ('dataset_sha256', ?1)",
                    params![dataset_sha256],
                )?;
            }
        }
        Ok(Store { conn })
    }

    pub fn add_annotator(&self, annotator_id: &str, token: &str, role: Role) -> StoreResult<()> {
        self.conn
            .execute(
                "INSERT INTO annotators (annotator_id, token, role) VALUES (?1, ?2, ?3)",
                params![annotator_id, token, role.as_str()],
            )
            .map_err(|e| {
                if is_unique_violation(&e) {
                    StoreError::Conflict(format!("annotator {annotator_id} or its token already exists"))
                } else {
                    e.into()
                }
            })?;
        Ok(())
    }

    pub fn annotator_by_token(&self, token: &str) -> StoreResult<Option<(String, Role)>> {
        let row: Option<(String, String)> = self
            .conn
            .query_row(
                "SELECT annotator_id, role FROM annotators WHERE token = ?1",
                params![token],
                |r| Ok((r.get(0)?, r.get(1)?)),
            )
            .optional()?;
        row.map(|(id, role)| Ok((id, Role::parse(&role)?))).transpose()
    }

    pub fn set_qualification(&self, annotator_id: &str, instance_ids: &[String]) -> StoreResult<()> {
        let ids = serde_json::to_string(instance_ids).map_err(corrupt)?;
        self.conn
            .execute(
                "INSERT INTO qualifications (annotator_id, instance_ids, status) VALUES (?1, ?2, 'pending')",
                params![annotator_id, ids],
            )
            .map_err(|e| {
                if is_unique_violation(&e) {
                    StoreError::Conflict(format!("{annotator_id} already has a qualification record"))
                } else {
                    e.into()
                }
            })?;
        Ok(())
    }

    pub fn qualification(&self, annotator_id: &str) -> StoreResult<Option<QualificationRecord>> {
        let row: Option<(String, String)> = self
            .conn
            .query_row(
                "SELECT instance_ids, status FROM qualifications WHERE annotator_id = ?1",
                params![annotator_id],
                |r| Ok((r.get(0)?, r.get(1)?)),
            )
            .optional()?;
        row.map(|(ids, status)| {
            Ok(QualificationRecord {
                annotator_id: annotator_id.to_string(),
                instance_ids: serde_json::from_str(&ids).map_err(corrupt)?,
                status: QualificationStatus::parse(&status)?,
            })
        })
        .transpose()
    }

    /// Pending → passed or failed. A second decision is a conflict.
    pub fn decide_qualification(&self, annotator_id: &str, status: QualificationStatus) -> StoreResult<()> {
        if self.qualification(annotator_id)?.is_none() {
            return Err(StoreError::NotFound(format!("no qualification record for {annotator_id}")));
        }
        let n = self.conn.execute(
            "UPDATE qualifications SET status = ?2 WHERE annotator_id = ?1 AND status = 'pending'",
            params![annotator_id, status.as_str()],
        )?;
        if n == 0 {
            return Err(StoreError::Conflict(format!("qualification of {annotator_id} already decided")));
        }
        Ok(())
    }

    pub fn set_redundancy(&self, instance_id: &str, n: usize) -> StoreResult<()> {
        self.conn.execute(
            "INSERT INTO redundancy (instance_id, n) VALUES (?1, ?2)
             ON CONFLICT (instance_id) DO UPDATE SET n = excluded.n",
            params![instance_id, n as i64],
        )?;
        Ok(())
    }

    pub fn redundancy_overrides(&self) -> StoreResult<BTreeMap<String, usize>> {
        let mut stmt = self.conn.prepare("SELECT instance_id, n FROM redundancy")?;
        let rows = stmt.query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, i64>(1)? as usize)))?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    fn task_from_row(r: &rusqlite::Row<'_>) -> rusqlite::Result<(i64, String, String, String, bool)> {
        Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?))
    }

    fn build_task(raw: (i64, String, String, String, bool)) -> StoreResult<TaskRow> {
        Ok(TaskRow {
            task_id: raw.0,
            instance_id: raw.1,
            assigned_to: raw.2,
            state: TaskState::parse(&raw.3)?,
            qualification: raw.4,
        })
    }

    pub fn task(&self, task_id: i64) -> StoreResult<Option<TaskRow>> {
        self.conn
            .query_row(
                "SELECT task_id, instance_id, annotator_id, state, qualification FROM tasks WHERE task_id = ?1",
                params![task_id],
                Self::task_from_row,
            )
            .optional()?
            .map(Self::build_task)
            .transpose()
    }

    pub fn open_task_for(&self, annotator_id: &str) -> StoreResult<Option<TaskRow>> {
        self.conn
            .query_row(
                "SELECT task_id, instance_id, annotator_id, state, qualification FROM tasks
                 WHERE annotator_id = ?1 AND state = 'open' ORDER BY task_id LIMIT 1",
                params![annotator_id],
                Self::task_from_row,
            )
            .optional()?
            .map(Self::build_task)
            .transpose()
    }

    pub fn tasks(&self) -> StoreResult<Vec<TaskRow>> {
        let mut stmt = self.conn.prepare(
            "SELECT task_id, instance_id, annotator_id, state, qualification FROM tasks ORDER BY task_id",
        )?;
        let rows = stmt.query_map([], Self::task_from_row)?;
        rows.map(|r| Self::build_task(r?)).collect()
    }

    /// Instances ever assigned to this annotator, in either pool.
    pub fn instances_seen_by(&self, annotator_id: &str) -> StoreResult<BTreeSet<String>> {
        let mut stmt = self.conn.prepare("SELECT instance_id FROM tasks WHERE annotator_id = ?1")?;
        let rows = stmt.query_map(params![annotator_id], |r| r.get::<_, String>(0))?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    /// Main-pool task counts per instance.
    pub fn task_counts(&self) -> StoreResult<BTreeMap<String, TaskCounts>> {
        let mut stmt = self.conn.prepare(
            "SELECT instance_id, COUNT(*), SUM(CASE WHEN state = 'open' THEN 0 ELSE 1 END)
             FROM tasks WHERE qualification = 0 GROUP BY instance_id",
        )?;
        let rows = stmt.query_map([], |r| {
            Ok((
                r.get::<_, String>(0)?,
                TaskCounts {
                    assigned: r.get::<_, i64>(1)? as usize,
                    completed: r.get::<_, i64>(2)? as usize,
                },
            ))
        })?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    pub fn create_task(&self, instance_id: &str, annotator_id: &str, qualification: bool) -> StoreResult<TaskRow> {
        self.conn
            .execute(
                "INSERT INTO tasks (instance_id, annotator_id, state, qualification) VALUES (?1, ?2, 'open', ?3)",
                params![instance_id, annotator_id, qualification],
            )
            .map_err(|e| {
                if is_unique_violation(&e) {
                    StoreError::Conflict(format!("{instance_id} was already assigned to {annotator_id}"))
                } else {
                    e.into()
                }
            })?;
        Ok(TaskRow {
            task_id: self.conn.last_insert_rowid(),
            instance_id: instance_id.to_string(),
            assigned_to: annotator_id.to_string(),
            state: TaskState::Open,
            qualification,
        })
    }

    /// Moves the task from open to submitted and appends the annotation, in
    /// one transaction. Fails with a conflict if the task is no longer open.
    pub fn submit(&mut self, task_id: i64, annotation: &QudAnnotation) -> StoreResult<()> {
        let body = serde_json::to_string(annotation).map_err(corrupt)?;
        let tx = self.conn.transaction()?;
        let n = tx.execute(
            "UPDATE tasks SET state = 'submitted' WHERE task_id = ?1 AND state = 'open'",
            params![task_id],
        )?;
        if n == 0 {
            return Err(StoreError::Conflict(format!("task {task_id} is not open")));
        }
        tx.execute(
            "INSERT INTO annotations (task_id, body) VALUES (?1, ?2)",
            params![task_id, body],
        )?;
        tx.commit()?;
        Ok(())
    }

    pub fn approve(&self, task_id: i64) -> StoreResult<()> {
        let n = self.conn.execute(
            "UPDATE tasks SET state = 'approved' WHERE task_id = ?1 AND state = 'submitted'",
            params![task_id],
        )?;
        if n == 0 {
            return match self.task(task_id)? {
                None => Err(StoreError::NotFound(format!("no task {task_id}"))),
                Some(t) => Err(StoreError::Conflict(format!(
                    "task {task_id} is {}, not submitted",
                    t.state.as_str()
                ))),
            };
        }
        Ok(())
    }

    /// Approved main-pool annotations in submission order.
    pub fn approved_annotations(&self) -> StoreResult<Vec<QudAnnotation>> {
        let mut stmt = self.conn.prepare(
            "SELECT a.body FROM annotations a JOIN tasks t ON t.task_id = a.task_id
             WHERE t.state = 'approved' AND t.qualification = 0 ORDER BY a.annotation_id",
        )?;
        let rows = stmt.query_map([], |r| r.get::<_, String>(0))?;
        rows.map(|b| serde_json::from_str(&b?).map_err(corrupt)).collect()
    }

    pub fn annotation_for_task(&self, task_id: i64) -> StoreResult<Option<QudAnnotation>> {
        let body: Option<String> = self
            .conn
            .query_row("SELECT body FROM annotations WHERE task_id = ?1", params![task_id], |r| r.get(0))
            .optional()?;
        body.map(|b| serde_json::from_str(&b).map_err(corrupt)).transpose()
    }

    /// Raw access for tests of the append-only guarantee.
    pub fn connection(&self) -> &Connection {
        &self.conn
    }

    pub fn add_item(&self, item: &JudgeItem) -> StoreResult<()> {
        let outputs = serde_json::to_string(&item.outputs).map_err(corrupt)?;
        self.conn
            .execute(
                "INSERT INTO items (item_id, instance_id, kind, outputs) VALUES (?1, ?2, ?3, ?4)",
                params![item.item_id, item.instance_id, item.kind.as_str(), outputs],
            )
            .map_err(|e| {
                if is_unique_violation(&e) {
                    StoreError::Conflict(format!("item {} already exists", item.item_id))
                } else {
                    e.into()
                }
            })?;
        Ok(())
    }

    fn item_from_row(r: &rusqlite::Row<'_>) -> rusqlite::Result<(String, String, String, String)> {
        Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?))
    }

    fn build_item(raw: (String, String, String, String)) -> StoreResult<JudgeItem> {
        Ok(JudgeItem {
            item_id: raw.0,
            instance_id: raw.1,
            kind: ItemKind::parse(&raw.2)?,
            outputs: serde_json::from_str(&raw.3).map_err(corrupt)?,
        })
    }

    pub fn item(&self, item_id: &str) -> StoreResult<Option<JudgeItem>> {
        self.conn
            .query_row(
                "SELECT item_id, instance_id, kind, outputs FROM items WHERE item_id = ?1",
                params![item_id],
                Self::item_from_row,
            )
            .optional()?
            .map(Self::build_item)
            .transpose()
    }

    pub fn items(&self) -> StoreResult<Vec<JudgeItem>> {
        let mut stmt = self
            .conn
            .prepare("SELECT item_id, instance_id, kind, outputs FROM items ORDER BY item_id")?;
        let rows = stmt.query_map([], Self::item_from_row)?;
        rows.map(|r| Self::build_item(r?)).collect()
    }

    pub fn add_judgment(&self, item_id: &str, system: &str, judgment: &HumanQuestionJudgment) -> StoreResult<()> {
        self.conn
            .execute(
                "INSERT INTO judgments (item_id, judge_id, system, reasonable, answered) VALUES (?1, ?2, ?3, ?4, ?5)",
                params![item_id, judgment.judge_id, system, judgment.reasonable, judgment.answered],
            )
            .map_err(|e| {
                if is_unique_violation(&e) {
                    StoreError::Conflict(format!(
                        "{} already judged {system} on {item_id}",
                        judgment.judge_id
                    ))
                } else {
                    e.into()
                }
            })?;
        Ok(())
    }

    /// Judgments grouped by system. `question_id` is the item id.
    pub fn judgments(&self) -> StoreResult<BTreeMap<String, Vec<HumanQuestionJudgment>>> {
        let mut stmt = self.conn.prepare(
            "SELECT item_id, judge_id, system, reasonable, answered FROM judgments
             ORDER BY system, item_id, judge_id",
        )?;
        let rows = stmt.query_map([], |r| {
            Ok((
                r.get::<_, String>(2)?,
                HumanQuestionJudgment {
                    question_id: r.get(0)?,
                    judge_id: r.get(1)?,
                    reasonable: r.get(3)?,
                    answered: r.get(4)?,
                },
            ))
        })?;
        let mut out: BTreeMap<String, Vec<HumanQuestionJudgment>> = BTreeMap::new();
        for row in rows {
            let (system, j) = row?;
            out.entry(system).or_default().push(j);
        }
        Ok(out)
    }

    /// `ranking.instance_id` is taken as the item id.
    pub fn add_ranking(&self, ranking: &ElabRanking) -> StoreResult<()> {
        self.conn
            .execute(
                "INSERT INTO rankings (item_id, judge_id, criterion, first, second) VALUES (?1, ?2, ?3, ?4, ?5)",
                params![
                    ranking.instance_id,
                    ranking.judge_id,
                    ranking.criterion.as_str(),
                    ranking.first,
                    ranking.second
                ],
            )
            .map_err(|e| {
                if is_unique_violation(&e) {
                    StoreError::Conflict(format!(
                        "{} already ranked {} on {}",
                        ranking.judge_id,
                        ranking.criterion.as_str(),
                        ranking.instance_id
                    ))
                } else {
                    e.into()
                }
            })?;
        Ok(())
    }

    pub fn rankings(&self) -> StoreResult<Vec<ElabRanking>> {
        let mut stmt = self.conn.prepare(
            "SELECT item_id, judge_id, criterion, first, second FROM rankings
             ORDER BY item_id, judge_id, criterion",
        )?;
        let rows = stmt.query_map([], |r| {
            Ok((
                r.get::<_, String>(0)?,
                r.get::<_, String>(1)?,
                r.get::<_, String>(2)?,
                r.get::<_, String>(3)?,
                r.get::<_, String>(4)?,
            ))
        })?;
        rows.map(|row| {
            let (item, judge, criterion, first, second) = row?;
            let criterion: RankCriterion = criterion.parse().map_err(StoreError::Corrupt)?;
            Ok(ElabRanking {
                instance_id: item,
                judge_id: judge,
                criterion,
                first,
                second,
            })
        })
        .collect()
    }
}
