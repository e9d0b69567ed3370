use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::corpus::{anchor_distance, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Fixed-marginal (Fleiss) kappa; the headline value.
    pub fleiss_kappa: f64,
    /// Free-marginal (Randolph) kappa over the observed categories.
    pub free_marginal_kappa: f64,
    pub percent_agreement: f64,
    pub n_items: usize,
    pub n_categories: usize,
    /// Items dropped for having fewer than two ratings.
    pub n_excluded: usize,
}

/// Per-item category counts with categories in sorted order.
pub fn category_counts<C: Ord + Clone>(items: &[Vec<C>]) -> (Vec<C>, Vec<Vec<usize>>) {
    let mut categories: Vec<C> = items.iter().flatten().cloned().collect();
    categories.sort();
    categories.dedup();
    let counts = items
        .iter()
        .map(|ratings| {
            let mut row = vec![0usize; categories.len()];
            for r in ratings {
                let j = categories.binary_search(r).expect("category collected above");
                row[j] += 1;
            }
            row
        })
        .collect();
    (categories, counts)
}

/// Agreement over items rated by two or more raters. Raters per item may vary:
/// each item's observed agreement is `(Σ n_ij² − n_i) / (n_i (n_i − 1))` and
/// category shares are pooled over all ratings.
pub fn agreement_from_ratings<C: Ord + Clone>(
    items: &[Vec<C>],
) -> Result<AgreementReport, AnalysisError> {
    let kept: Vec<Vec<C>> = items.iter().filter(|r| r.len() >= 2).cloned().collect();
    let n_excluded = items.len() - kept.len();
    if kept.is_empty() {
        return Err(AnalysisError::EmptyInput(
            "no item has two or more ratings".into(),
        ));
    }
    let (categories, counts) = category_counts(&kept);
    let k = categories.len();

    let mut p_bar = 0.0;
    let mut totals = vec![0usize; k];
    let mut n_ratings = 0usize;
    for row in &counts {
        let n: usize = row.iter().sum();
        let sq: usize = row.iter().map(|c| c * c).sum();
        p_bar += (sq - n) as f64 / (n * (n - 1)) as f64;
        for (t, c) in totals.iter_mut().zip(row) {
            *t += c;
        }
        n_ratings += n;
    }
    p_bar /= counts.len() as f64;
    let p_e: f64 = totals
        .iter()
        .map(|&t| {
            let p = t as f64 / n_ratings as f64;
            p * p
        })
        .sum();

    let unanimous = counts.iter().all(|row| row.iter().filter(|c| **c > 0).count() == 1);
    let (fleiss, free) = if unanimous {
        (1.0, 1.0)
    } else {
        let inv_k = 1.0 / k as f64;
        ((p_bar - p_e) / (1.0 - p_e), (p_bar - inv_k) / (1.0 - inv_k))
    };
    Ok(AgreementReport {
        fleiss_kappa: fleiss,
        free_marginal_kappa: free,
        percent_agreement: if unanimous { 1.0 } else { p_bar },
        n_items: counts.len(),
        n_categories: k,
        n_excluded,
    })
}

/// Agreement on anchor placement: each instance is an item and each distinct
/// anchor distance a category. Organizational annotations carry no question
/// and are left out.
pub fn anchor_agreement(dataset: &Dataset) -> Result<AgreementReport, AnalysisError> {
    let mut items: BTreeMap<&str, Vec<i64>> = BTreeMap::new();
    for inst in dataset.instances() {
        items.insert(inst.instance_id.as_str(), Vec::new());
    }
    for a in dataset.annotations().iter().filter(|a| a.has_question()) {
        let inst = dataset
            .instance(&a.instance_id)
            .ok_or_else(|| AnalysisError::Integrity(format!("unknown instance {}", a.instance_id)))?;
        let d = anchor_distance(a, inst).map_err(|e| AnalysisError::Integrity(e.to_string()))?;
        items.entry(inst.instance_id.as_str()).or_default().push(d);
    }
    let rated: Vec<Vec<i64>> = items.into_values().filter(|v| !v.is_empty()).collect();
    agreement_from_ratings(&rated)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unanimous_is_exactly_one() {
        let r = agreement_from_ratings(&[vec![1, 1], vec![2, 2, 2], vec![1, 1]]).unwrap();
        assert_eq!(r.fleiss_kappa, 1.0);
        assert_eq!(r.free_marginal_kappa, 1.0);
        assert_eq!(r.percent_agreement, 1.0);
    }

    #[test]
    fn single_rated_items_are_excluded() {
        let r = agreement_from_ratings(&[vec![1, 2], vec![3]]).unwrap();
        assert_eq!((r.n_items, r.n_excluded), (1, 1));
        assert!(agreement_from_ratings(&[vec![1]]).is_err());
    }

    #[test]
    fn relabeling_keeps_percent_agreement() {
        let a = agreement_from_ratings(&[vec![1, 1, 2], vec![2, 2, 2], vec![1, 2, 3]]).unwrap();
        let b = agreement_from_ratings(&[vec![9, 9, 7], vec![7, 7, 7], vec![9, 7, 5]]).unwrap();
        assert_eq!(a.percent_agreement, b.percent_agreement);
        assert_eq!(a.fleiss_kappa, b.fleiss_kappa);
    }
}
