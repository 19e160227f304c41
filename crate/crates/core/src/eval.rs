//! Unlabeled sentence-level F1 and per-label recall.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::treebank::SpanSet;

/// Phrasal categories reported by default.
pub const DEFAULT_LABELS: &[&str] = &["SBAR", "NP", "VP", "PP", "ADJP", "ADVP"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("no scorable sentences (all {0} were skipped)")]
    AllSkipped(usize),
    #[error("unknown label {label:?}; known labels: {known}")]
    UnknownLabel { label: String, known: String },
    #[error("corpora differ in size: {pred} predicted vs {gold} gold")]
    CountMismatch { pred: usize, gold: usize },
}

/// How sentences whose gold span set is empty enter the corpus mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmptyGoldPolicy {
    #[default]
    Exclude,
    ScoreOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub skipped: bool,
}

pub fn sentence_f1(pred: &SpanSet, gold: &SpanSet) -> SentenceScore {
    sentence_f1_with(pred, gold, EmptyGoldPolicy::Exclude)
}

pub fn sentence_f1_with(pred: &SpanSet, gold: &SpanSet, policy: EmptyGoldPolicy) -> SentenceScore {
    if gold.is_empty() {
        let skipped = policy == EmptyGoldPolicy::Exclude;
        let v = if skipped { 0.0 } else { 1.0 };
        return SentenceScore {
            precision: v,
            recall: v,
            f1: v,
            skipped,
        };
    }
    let hits = pred.intersection_count(gold) as f64;
    let precision = if pred.is_empty() { 0.0 } else { hits / pred.len() as f64 };
    let recall = hits / gold.len() as f64;
    SentenceScore {
        precision,
        recall,
        f1: harmonic(precision, recall),
        skipped: false,
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Mean F1 over the non-skipped sentences.
pub fn corpus_f1(scores: &[SentenceScore]) -> Result<f64, EvalError> {
    let (sum, n) = scores
        .iter()
        .filter(|s| !s.skipped)
        .fold((0.0, 0usize), |(sum, n), s| (sum + s.f1, n + 1));
    if n == 0 {
        return Err(EvalError::AllSkipped(scores.len()));
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecall {
    pub matched: usize,
    pub gold: usize,
    /// `None` when the label never occurs in the gold corpus.
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelRecallReport {
    pub labels: BTreeMap<String, LabelRecall>,
}

/// For each label, the fraction of gold constituents carrying it whose span
/// the prediction also contains. Both sides are expected to be filtered of
/// trivial spans the same way.
pub fn label_recall(pred: &[SpanSet], gold: &[SpanSet], labels: &[&str]) -> Result<LabelRecallReport, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::CountMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (p, g) in pred.iter().zip(gold) {
        for (span, span_labels) in g.labeled() {
            let hit = p.contains(span);
            for label in span_labels {
                let entry = counts.entry(label.as_str()).or_default();
                entry.1 += 1;
                if hit {
                    entry.0 += 1;
                }
            }
        }
    }
    let mut report = LabelRecallReport::default();
    for &label in labels {
        let Some(&(matched, total)) = counts.get(label) else {
            if DEFAULT_LABELS.contains(&label) {
                report.labels.insert(
                    label.to_string(),
                    LabelRecall {
                        matched: 0,
                        gold: 0,
                        recall: None,
                    },
                );
                continue;
            }
            return Err(EvalError::UnknownLabel {
                label: label.to_string(),
                known: counts.keys().copied().collect::<Vec<_>>().join(", "),
            });
        };
        report.labels.insert(
            label.to_string(),
            LabelRecall {
                matched,
                gold: total,
                recall: Some(matched as f64 / total as f64),
            },
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::Span;

    fn set(spans: &[(usize, usize)]) -> SpanSet {
        spans.iter().map(|&(i, j)| Span::new(i, j)).collect()
    }

    fn labeled(spans: &[(usize, usize, &str)]) -> SpanSet {
        let mut s = SpanSet::new();
        for &(i, j, l) in spans {
            s.insert_labeled(Span::new(i, j), l);
        }
        s
    }

    #[test]
    fn perfect_match() {
        let g = set(&[(1, 2), (3, 4)]);
        let s = sentence_f1(&g, &g);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn half_overlap() {
        let s = sentence_f1(&set(&[(1, 2), (2, 4)]), &set(&[(1, 2), (3, 4)]));
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn empty_gold_is_skipped_or_scored() {
        let s = sentence_f1(&set(&[]), &set(&[]));
        assert!(s.skipped);
        let s = sentence_f1_with(&set(&[]), &set(&[]), EmptyGoldPolicy::ScoreOne);
        assert!(!s.skipped);
        assert_eq!(s.f1, 1.0);
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let s = sentence_f1(&set(&[]), &set(&[(1, 2)]));
        assert_eq!(s.f1, 0.0);
        assert!(!s.skipped);
    }

    #[test]
    fn corpus_means() {
        let mk = |f1, skipped| SentenceScore {
            precision: f1,
            recall: f1,
            f1,
            skipped,
        };
        assert_eq!(corpus_f1(&[mk(1.0, false), mk(0.5, false)]).unwrap(), 0.75);
        assert_eq!(corpus_f1(&[mk(0.0, true), mk(0.5, false)]).unwrap(), 0.5);
        assert_eq!(corpus_f1(&[mk(0.0, true)]).unwrap_err(), EvalError::AllSkipped(1));
    }

    #[test]
    fn np_recall_half() {
        let gold = labeled(&[(1, 2, "NP"), (4, 5, "NP"), (3, 5, "VP")]);
        let pred = set(&[(1, 2), (3, 5)]);
        let r = label_recall(&[pred], std::slice::from_ref(&gold), &["NP", "VP"]).unwrap();
        assert_eq!(r.labels["NP"].recall, Some(0.5));
        assert_eq!(r.labels["VP"].recall, Some(1.0));
        let full = label_recall(std::slice::from_ref(&gold), std::slice::from_ref(&gold), &["NP", "VP"]).unwrap();
        assert!(full.labels.values().all(|l| l.recall == Some(1.0)));
    }

    #[test]
    fn unknown_label_lists_known() {
        let gold = labeled(&[(1, 2, "NP")]);
        let err = label_recall(&[set(&[])], &[gold], &["QP"]).unwrap_err();
        assert_eq!(
            err,
            EvalError::UnknownLabel {
                label: "QP".into(),
                known: "NP".into()
            }
        );
    }

    #[test]
    fn absent_default_label_has_no_recall() {
        let gold = labeled(&[(1, 2, "NP")]);
        let r = label_recall(&[set(&[])], &[gold], &["SBAR"]).unwrap();
        assert_eq!(r.labels["SBAR"].recall, None);
    }
}
