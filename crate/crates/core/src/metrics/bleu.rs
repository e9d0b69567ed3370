use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::par::{self, ExecMode};

pub const MAX_ORDER: usize = 4;

/// Treatment of n-gram orders with no matches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Smoothing {
    None,
    /// For orders n ≥ 2 with zero matches, use `k / (total + k)` as the
    /// precision. A candidate without a single matching unigram still scores 0.
    AddK { k: f64 },
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::AddK { k: 1.0 }
    }
}

/// Sufficient statistics for BLEU: clipped matches and totals per order, the
/// candidate length and the closest reference length.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub candidate_len: u64,
    pub reference_len: u64,
}

impl BleuStats {
    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            let key: Vec<&str> = w.iter().map(AsRef::as_ref).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Length of the reference closest to `candidate_len`; ties go to the shorter.
fn closest_ref_len<S: AsRef<str>>(candidate_len: usize, references: &[Vec<S>]) -> usize {
    references
        .iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(candidate_len), r))
        .unwrap_or(0)
}

pub fn bleu_stats<S: AsRef<str>>(candidate: &[S], references: &[Vec<S>]) -> BleuStats {
    let mut stats = BleuStats {
        candidate_len: candidate.len() as u64,
        reference_len: closest_ref_len(candidate.len(), references) as u64,
        ..BleuStats::default()
    };
    for n in 1..=MAX_ORDER {
        let cand = ngram_counts(candidate, n);
        let mut max_ref: HashMap<Vec<&str>, u64> = HashMap::new();
        for r in references {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        stats.totals[n - 1] = candidate.len().saturating_sub(n - 1) as u64;
        stats.matches[n - 1] = cand
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
    }
    stats
}

pub fn bleu_from_stats(stats: &BleuStats, smoothing: Smoothing) -> f64 {
    if stats.candidate_len == 0 || stats.matches[0] == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 0..MAX_ORDER {
        let (m, t) = (stats.matches[n], stats.totals[n]);
        // A candidate shorter than n has no n-grams; the order is skipped.
        if t == 0 {
            continue;
        }
        let p = if m > 0 {
            m as f64 / t as f64
        } else {
            match smoothing {
                Smoothing::None => return 0.0,
                Smoothing::AddK { k } => k / (t as f64 + k),
            }
        };
        log_sum += p.ln() / MAX_ORDER as f64;
    }
    let (c, r) = (stats.candidate_len as f64, stats.reference_len as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    (bp * log_sum.exp()).clamp(0.0, 1.0)
}

/// Sentence-level BLEU-4 with clipped multi-reference counts and a brevity
/// penalty against the closest reference length. An empty candidate scores 0.
pub fn bleu4<S: AsRef<str>>(candidate: &[S], references: &[Vec<S>], smoothing: Smoothing) -> f64 {
    if candidate.is_empty() {
        log::warn!("bleu4: empty candidate scored as 0");
        return 0.0;
    }
    bleu_from_stats(&bleu_stats(candidate, references), smoothing)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuSummary {
    /// Mean of sentence-level scores.
    pub sentence_mean: f64,
    /// Score over pooled statistics.
    pub corpus: f64,
    pub n: usize,
}

/// Sentence-level mean and corpus-level BLEU-4 over `(candidate, references)` pairs.
pub fn bleu_summary(
    pairs: &[(Vec<String>, Vec<Vec<String>>)],
    smoothing: Smoothing,
    mode: ExecMode,
) -> BleuSummary {
    if pairs.is_empty() {
        return BleuSummary {
            sentence_mean: 0.0,
            corpus: 0.0,
            n: 0,
        };
    }
    let stats = par::map(mode, pairs, |(c, r)| bleu_stats(c, r));
    let sentence_sum = par::sum(mode, pairs, |(c, r)| bleu4(c, r, smoothing));
    let mut pooled = BleuStats::default();
    for s in &stats {
        pooled.add(s);
    }
    BleuSummary {
        sentence_mean: sentence_sum / pairs.len() as f64,
        corpus: bleu_from_stats(&pooled, smoothing),
        n: pairs.len(),
    }
}
