use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Deserializer, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanQuestionJudgment {
    pub question_id: String,
    pub judge_id: String,
    /// Is the question reasonable to ask given the context?
    pub reasonable: bool,
    /// Does the elaboration answer it?
    pub answered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankCriterion {
    ElaborationLike,
    Coherence,
}

impl RankCriterion {
    pub const ALL: [RankCriterion; 2] = [RankCriterion::ElaborationLike, RankCriterion::Coherence];

    pub fn as_str(self) -> &'static str {
        match self {
            RankCriterion::ElaborationLike => "elaboration_like",
            RankCriterion::Coherence => "coherence",
        }
    }
}

impl std::str::FromStr for RankCriterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "elaboration_like" => Ok(RankCriterion::ElaborationLike),
            "coherence" => Ok(RankCriterion::Coherence),
            _ => Err(format!(
                "unknown criterion `{s}` (expected elaboration_like or coherence)"
            )),
        }
    }
}

/// A judge's top-two pick among system outputs for one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElabRanking {
    pub instance_id: String,
    pub judge_id: String,
    pub criterion: RankCriterion,
    pub first: String,
    pub second: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct YesNo {
    pub yes: usize,
    pub no: usize,
    pub yes_rate: f64,
}

impl YesNo {
    fn from_counts(yes: usize, no: usize) -> Self {
        let n = yes + no;
        YesNo {
            yes,
            no,
            yes_rate: if n == 0 { 0.0 } else { yes as f64 / n as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemJudgments {
    pub n: usize,
    pub reasonable: YesNo,
    pub answered: YesNo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentTally {
    pub per_system: BTreeMap<String, SystemJudgments>,
    /// Mean pairwise judge agreement over items with two or more judges.
    pub agreement_reasonable: Option<f64>,
    pub agreement_answered: Option<f64>,
    pub n_multi_judged_items: usize,
}

fn pairwise_agreement(values: &[bool]) -> f64 {
    let n = values.len();
    let yes = values.iter().filter(|v| **v).count();
    let no = n - yes;
    let agreeing = yes * yes.saturating_sub(1) / 2 + no * no.saturating_sub(1) / 2;
    agreeing as f64 / (n * (n - 1) / 2) as f64
}

pub fn tally_question_judgments(
    by_system: &BTreeMap<String, Vec<HumanQuestionJudgment>>,
) -> JudgmentTally {
    let mut per_system = BTreeMap::new();
    let mut items: BTreeMap<(&str, &str), Vec<&HumanQuestionJudgment>> = BTreeMap::new();
    for (system, judgments) in by_system {
        let r = judgments.iter().filter(|j| j.reasonable).count();
        let a = judgments.iter().filter(|j| j.answered).count();
        let n = judgments.len();
        per_system.insert(
            system.clone(),
            SystemJudgments {
                n,
                reasonable: YesNo::from_counts(r, n - r),
                answered: YesNo::from_counts(a, n - a),
            },
        );
        for j in judgments {
            items
                .entry((system.as_str(), j.question_id.as_str()))
                .or_default()
                .push(j);
        }
    }
    let multi: Vec<&Vec<&HumanQuestionJudgment>> =
        items.values().filter(|js| js.len() >= 2).collect();
    let agreement = |f: fn(&HumanQuestionJudgment) -> bool| {
        if multi.is_empty() {
            return None;
        }
        let total: f64 = multi
            .iter()
            .map(|js| pairwise_agreement(&js.iter().map(|j| f(j)).collect::<Vec<_>>()))
            .sum();
        Some(total / multi.len() as f64)
    };
    JudgmentTally {
        agreement_reasonable: agreement(|j| j.reasonable),
        agreement_answered: agreement(|j| j.answered),
        n_multi_judged_items: multi.len(),
        per_system,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RankCounts {
    pub first: usize,
    pub second: usize,
    /// Shares of this criterion's rankings.
    pub first_rate: f64,
    pub second_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankingTally {
    pub per_criterion: BTreeMap<RankCriterion, BTreeMap<String, RankCounts>>,
    pub n_rankings: BTreeMap<RankCriterion, usize>,
}

pub fn tally_rankings(rankings: &[ElabRanking]) -> Result<RankingTally, MetricsError> {
    let mut seen = BTreeSet::new();
    let mut tally = RankingTally::default();
    for r in rankings {
        if r.first == r.second {
            return Err(MetricsError::Integrity(format!(
                "ranking by {} on {} picks {} twice",
                r.judge_id, r.instance_id, r.first
            )));
        }
        if !seen.insert((&r.instance_id, &r.judge_id, r.criterion)) {
            return Err(MetricsError::Integrity(format!(
                "duplicate ranking for ({}, {}, {})",
                r.instance_id,
                r.judge_id,
                r.criterion.as_str()
            )));
        }
        *tally.n_rankings.entry(r.criterion).or_insert(0) += 1;
        let systems = tally.per_criterion.entry(r.criterion).or_default();
        systems.entry(r.first.clone()).or_default().first += 1;
        systems.entry(r.second.clone()).or_default().second += 1;
    }
    for (criterion, systems) in tally.per_criterion.iter_mut() {
        let n = tally.n_rankings[criterion] as f64;
        for c in systems.values_mut() {
            c.first_rate = c.first as f64 / n;
            c.second_rate = c.second as f64 / n;
        }
    }
    Ok(tally)
}

fn flexible_bool<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "y" | "1" => Ok(true),
        "false" | "no" | "n" | "0" => Ok(false),
        other => Err(serde::de::Error::custom(format!("not a yes/no value: `{other}`"))),
    }
}

#[derive(Debug, Deserialize)]
struct JudgmentRow {
    #[serde(default)]
    system: Option<String>,
    question_id: String,
    judge_id: String,
    #[serde(deserialize_with = "flexible_bool")]
    reasonable: bool,
    #[serde(deserialize_with = "flexible_bool")]
    answered: bool,
}

/// Reads judgments from CSV with headers `question_id,judge_id,reasonable,answered`
/// and an optional `system` column (rows without one go under `""`).
pub fn read_judgments_csv<R: Read>(
    reader: R,
) -> Result<BTreeMap<String, Vec<HumanQuestionJudgment>>, MetricsError> {
    let mut out: BTreeMap<String, Vec<HumanQuestionJudgment>> = BTreeMap::new();
    for (i, row) in csv::Reader::from_reader(reader).deserialize().enumerate() {
        let row: JudgmentRow = row.map_err(|e| MetricsError::Csv {
            row: i + 1,
            message: e.to_string(),
        })?;
        out.entry(row.system.unwrap_or_default())
            .or_default()
            .push(HumanQuestionJudgment {
                question_id: row.question_id,
                judge_id: row.judge_id,
                reasonable: row.reasonable,
                answered: row.answered,
            });
    }
    Ok(out)
}

/// Reads rankings from CSV with headers matching [`ElabRanking`].
pub fn read_rankings_csv<R: Read>(reader: R) -> Result<Vec<ElabRanking>, MetricsError> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| MetricsError::Csv {
                row: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
