//! Recall@k over prediction files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::ingest::Document;
use crate::kg::KnowledgeGraph;
use crate::linking::{build_lookup, LinkedPrediction};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions line {line}: {reason}")]
    MalformedPredictions { line: usize, reason: String },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn is_hit(p: &LinkedPrediction, k: usize) -> bool {
    p.candidates.iter().take(k).any(|c| c.entity == p.gold)
}

/// Fraction of predictions whose gold id is among the first `k` candidates;
/// 0 for an empty set.
pub fn recall_at_k<F: Scalar>(predictions: &[LinkedPrediction], k: usize) -> F {
    if predictions.is_empty() {
        return F::zero();
    }
    let hits = predictions.iter().filter(|p| is_hit(p, k)).count();
    F::of_usize(hits) / F::of_usize(predictions.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub recall_at: BTreeMap<usize, f64>,
    pub mentions: usize,
    /// Gold ids absent from the knowledge graph; each counts as a miss.
    pub unresolved_gold: usize,
    /// Mentions whose top-1 surface is owned by more than one entity.
    pub ambiguity_affected: usize,
    /// Set when there were no mentions to evaluate.
    pub empty: bool,
}

/// Recall at every requested k plus diagnostics. Counts that need the graph
/// are 0 without one.
pub fn report(
    predictions: &[LinkedPrediction],
    ks: &[usize],
    kg: Option<&KnowledgeGraph>,
) -> Result<EvalReport, EvalError> {
    if ks.contains(&0) {
        return Err(EvalError::InvalidK);
    }
    let mut recall_at = BTreeMap::new();
    for &k in ks {
        recall_at.insert(k, recall_at_k::<f64>(predictions, k));
    }
    debug_assert!(recall_at
        .values()
        .zip(recall_at.values().skip(1))
        .all(|(a, b)| a <= b));
    let (unresolved_gold, ambiguity_affected) = match kg {
        Some(kg) => {
            let table = build_lookup(kg);
            let unresolved = predictions
                .iter()
                .filter(|p| !kg.contains_entity(&p.gold))
                .count();
            let ambiguous = predictions
                .iter()
                .filter(|p| {
                    p.candidates
                        .first()
                        .and_then(|c| table.get(&c.surface))
                        .is_some_and(|owners| owners.len() > 1)
                })
                .count();
            (unresolved, ambiguous)
        }
        None => (0, 0),
    };
    Ok(EvalReport {
        recall_at,
        mentions: predictions.len(),
        unresolved_gold,
        ambiguity_affected,
        empty: predictions.is_empty(),
    })
}

/// Reads a predictions JSON-lines file.
pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<LinkedPrediction>, EvalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_predictions(&text)
}

pub fn parse_predictions(text: &str) -> Result<Vec<LinkedPrediction>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: LinkedPrediction =
            serde_json::from_str(line).map_err(|e| EvalError::MalformedPredictions {
                line: i + 1,
                reason: e.to_string(),
            })?;
        out.push(p);
    }
    Ok(out)
}

/// Checks that `predictions` cover exactly the mentions of `docs`, in order,
/// with matching gold ids.
pub fn check_alignment(
    predictions: &[LinkedPrediction],
    docs: &[Document],
) -> Result<(), EvalError> {
    let expected: Vec<(&str, usize, &str)> = docs
        .iter()
        .flat_map(|d| {
            d.mentions
                .iter()
                .enumerate()
                .map(move |(i, m)| (d.doc_id.as_str(), i, m.gold.as_str()))
        })
        .collect();
    if expected.len() != predictions.len() {
        return Err(EvalError::MalformedPredictions {
            line: 0,
            reason: format!(
                "{} predictions for {} gold mentions",
                predictions.len(),
                expected.len()
            ),
        });
    }
    for (line, (p, e)) in predictions.iter().zip(&expected).enumerate() {
        if (p.doc_id.as_str(), p.mention_index, p.gold.as_str()) != *e {
            return Err(EvalError::MalformedPredictions {
                line: line + 1,
                reason: format!(
                    "prediction ({}, {}, {}) does not match gold mention ({}, {}, {})",
                    p.doc_id, p.mention_index, p.gold, e.0, e.1, e.2
                ),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linking::Candidate;

    fn pred(gold: &str, ranked: &[&str]) -> LinkedPrediction {
        LinkedPrediction {
            doc_id: "d".into(),
            mention_index: 0,
            gold: gold.into(),
            candidates: ranked
                .iter()
                .map(|e| Candidate {
                    surface: e.to_lowercase(),
                    entity: (*e).into(),
                    score: -1.0,
                })
                .collect(),
        }
    }

    #[test]
    fn recall_arithmetic() {
        let preds = vec![
            pred("A", &["A"]),
            pred("B", &["A", "B"]),
            pred("C", &["C"]),
            pred("D", &[]),
        ];
        assert_eq!(recall_at_k::<f64>(&preds, 1), 0.5);
        assert_eq!(recall_at_k::<f64>(&preds, 2), 0.75);
        assert_eq!(
            recall_at_k::<f64>(&[pred("A", &[]), pred("B", &[])], 1),
            0.0
        );
        assert_eq!(recall_at_k::<f32>(&[], 1), 0.0);
    }

    #[test]
    fn report_with_gold_at_rank_three() {
        let r = report(&[pred("C", &["A", "B", "C"])], &[1, 5], None).unwrap();
        assert_eq!(r.recall_at[&1], 0.0);
        assert_eq!(r.recall_at[&5], 1.0);
        assert!(!r.empty);
        let r = report(&[], &[1], None).unwrap();
        assert!(r.empty);
        assert_eq!(r.recall_at[&1], 0.0);
        assert!(matches!(report(&[], &[0], None), Err(EvalError::InvalidK)));
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            parse_predictions("{\"doc_id\":\"d\"}\n"),
            Err(EvalError::MalformedPredictions { line: 1, .. })
        ));
        let ok = parse_predictions(
            "{\"doc_id\":\"d\",\"mention_index\":0,\"gold\":\"A\",\"candidates\":[{\"surface\":\"a\",\"entity\":\"A\",\"score\":-0.5}]}\n",
        )
        .unwrap();
        assert_eq!(ok[0].candidates[0].entity, "A");
    }
}
