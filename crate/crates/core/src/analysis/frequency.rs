use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::AnalysisError;
use crate::corpus::Dataset;
use crate::tokenize::is_word;

/// Word → log10 frequency per million words.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrequencyLexicon {
    entries: HashMap<String, f64>,
}

impl FrequencyLexicon {
    /// Two-column TSV (`word<TAB>log10 freq`). Blank lines and `#` comments are
    /// skipped; a non-numeric second column on the first line is taken as a header.
    pub fn parse(text: &str) -> Result<Self, AnalysisError> {
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let (word, value) = match (cols.next(), cols.next()) {
                (Some(w), Some(v)) => (w.trim(), v.trim()),
                _ => {
                    return Err(AnalysisError::Statistics(format!(
                        "lexicon line {}: expected word<TAB>log10 frequency",
                        i + 1
                    )))
                }
            };
            match value.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    entries.insert(word.to_lowercase(), v);
                }
                _ if i == 0 => {}
                _ => {
                    return Err(AnalysisError::Statistics(format!(
                        "lexicon line {}: `{value}` is not a number",
                        i + 1
                    )))
                }
            }
        }
        Ok(FrequencyLexicon { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AnalysisError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn from_map(entries: HashMap<String, f64>) -> Self {
        FrequencyLexicon {
            entries: entries.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect(),
        }
    }

    pub fn get(&self, word: &str) -> Option<f64> {
        self.entries.get(&word.to_lowercase()).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum OovPolicy {
    /// Out-of-vocabulary words take this log frequency.
    Floor { value: f64 },
    Drop,
}

impl Default for OovPolicy {
    fn default() -> Self {
        OovPolicy::Floor { value: 0.5f64.log10() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TTestVariant {
    #[default]
    Welch,
    Student,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FrequencyConfig {
    pub oov: OovPolicy,
    pub variant: TTestVariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p_value: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Independent-samples t-test of `a` against `b`; `t < 0` when `a`'s mean is lower.
pub fn t_test(a: &[f64], b: &[f64], variant: TTestVariant) -> Result<TTest, AnalysisError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(AnalysisError::Statistics(format!(
            "t-test needs two or more values per sample (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (se, df) = match variant {
        TTestVariant::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = qa + qb;
            let denom = qa * qa / (na - 1.0) + qb * qb / (nb - 1.0);
            let df = if denom > 0.0 { se2 * se2 / denom } else { na + nb - 2.0 };
            (se2.sqrt(), df)
        }
        TTestVariant::Student => {
            let df = na + nb - 2.0;
            let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
            ((pooled * (1.0 / na + 1.0 / nb)).sqrt(), df)
        }
    };
    let diff = ma - mb;
    if se == 0.0 {
        return Ok(if diff == 0.0 {
            TTest { t: 0.0, df, p_value: 1.0 }
        } else {
            TTest {
                t: diff.signum() * f64::INFINITY,
                df,
                p_value: 0.0,
            }
        });
    }
    let t = diff / se;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| AnalysisError::Statistics(e.to_string()))?;
    let p_value = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
    Ok(TTest { t, df, p_value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTestReport {
    pub mean_log_freq_targets: f64,
    pub mean_log_freq_document: f64,
    pub t_statistic: f64,
    pub df: f64,
    pub p_value: f64,
    pub n_target_tokens: usize,
    pub n_doc_tokens: usize,
    pub n_oov_target_tokens: usize,
    pub n_oov_doc_tokens: usize,
    pub config: FrequencyConfig,
}

fn sample<'a>(
    words: impl Iterator<Item = &'a str>,
    lexicon: &FrequencyLexicon,
    oov: OovPolicy,
) -> (Vec<f64>, usize) {
    let mut values = Vec::new();
    let mut missing = 0;
    for w in words.filter(|w| is_word(w)) {
        match (lexicon.get(w), oov) {
            (Some(v), _) => values.push(v),
            (None, OovPolicy::Floor { value }) => {
                missing += 1;
                values.push(value);
            }
            (None, OovPolicy::Drop) => missing += 1,
        }
    }
    (values, missing)
}

/// Compares the log frequency of words inside targets with that of all words
/// in the corpus documents. Punctuation and other non-word tokens are ignored.
pub fn frequency_test(
    dataset: &Dataset,
    lexicon: &FrequencyLexicon,
    config: FrequencyConfig,
) -> Result<FrequencyTestReport, AnalysisError> {
    let mut target_tokens: Vec<String> = Vec::new();
    for a in dataset.annotations() {
        if let Some(t) = &a.target {
            let inst = dataset.instance(&a.instance_id).ok_or_else(|| {
                AnalysisError::Integrity(format!("unknown instance {}", a.instance_id))
            })?;
            let sentence = dataset
                .document_of(inst)
                .sentence(t.sentence_index)
                .map_err(|e| AnalysisError::Integrity(e.to_string()))?;
            target_tokens.extend(sentence.tokens().drain(t.start_token..t.end_token));
        }
    }
    let doc_tokens: Vec<String> = dataset
        .documents()
        .iter()
        .flat_map(|d| d.sentences.iter().flat_map(|s| s.tokens()))
        .collect();

    let (ts, t_oov) = sample(target_tokens.iter().map(String::as_str), lexicon, config.oov);
    let (ds, d_oov) = sample(doc_tokens.iter().map(String::as_str), lexicon, config.oov);
    if ts.is_empty() || ds.is_empty() {
        return Err(AnalysisError::Statistics(
            "empty sample: no scorable words in targets or documents".into(),
        ));
    }
    let test = t_test(&ts, &ds, config.variant)?;
    Ok(FrequencyTestReport {
        mean_log_freq_targets: ts.iter().sum::<f64>() / ts.len() as f64,
        mean_log_freq_document: ds.iter().sum::<f64>() / ds.len() as f64,
        t_statistic: test.t,
        df: test.df,
        p_value: test.p_value,
        n_target_tokens: ts.len(),
        n_doc_tokens: ds.len(),
        n_oov_target_tokens: t_oov,
        n_oov_doc_tokens: d_oov,
        config,
    })
}
