use std::collections::BTreeMap;

use super::AnalysisError;

/// PDTB-3 level-2 senses plus the non-explicit relation types.
pub const PDTB3_LEVEL2: &[&str] = &[
    "Temporal.Asynchronous",
    "Temporal.Synchronous",
    "Contingency.Cause",
    "Contingency.Cause+Belief",
    "Contingency.Cause+SpeechAct",
    "Contingency.Condition",
    "Contingency.Condition+SpeechAct",
    "Contingency.Negative-condition",
    "Contingency.Negative-condition+SpeechAct",
    "Contingency.Purpose",
    "Comparison.Contrast",
    "Comparison.Similarity",
    "Comparison.Concession",
    "Comparison.Concession+SpeechAct",
    "Expansion.Conjunction",
    "Expansion.Disjunction",
    "Expansion.Equivalence",
    "Expansion.Exception",
    "Expansion.Instantiation",
    "Expansion.Level-of-detail",
    "Expansion.Manner",
    "Expansion.Substitution",
    "EntRel",
    "NoRel",
    "Hypophora",
];

const REFERENCE_JSON: &str = include_str!("../../assets/pdtb3_level2_reference.json");

/// Reference proportions of level-2 relations in PDTB-3.
pub fn pdtb3_reference() -> BTreeMap<String, f64> {
    serde_json::from_str(REFERENCE_JSON).expect("bundled reference fixture is valid JSON")
}

/// Normalized tally of externally supplied `(instance_id, label)` pairs.
pub fn relation_distribution(
    labels: &[(String, String)],
) -> Result<BTreeMap<String, f64>, AnalysisError> {
    if labels.is_empty() {
        return Err(AnalysisError::EmptyInput("no relation labels".into()));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for (_, label) in labels {
        let label = label.trim();
        if !PDTB3_LEVEL2.contains(&label) {
            return Err(AnalysisError::UnknownLabel {
                label: label.to_string(),
                allowed: PDTB3_LEVEL2.iter().map(|s| s.to_string()).collect(),
            });
        }
        *counts.entry(label.to_string()).or_insert(0) += 1;
    }
    let n = labels.len() as f64;
    Ok(counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_is_a_distribution_over_known_labels() {
        let r = pdtb3_reference();
        assert!((r.values().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(r.keys().all(|k| PDTB3_LEVEL2.contains(&k.as_str())));
    }

    #[test]
    fn unknown_label_lists_the_set() {
        let err = relation_distribution(&[("i".into(), "Cause".into())]).unwrap_err();
        assert!(err.to_string().contains("Contingency.Cause"));
    }
}
