use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::treebank::Tree;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    /// Percentages in 0..=100.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Labeled constituent spans `(label, start, end)` over terminal indices,
/// end exclusive. Every internal node counts, the root and single-word
/// constituents included; no label deletions.
pub fn labeled_spans(tree: &Tree) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    fn rec(t: &Tree, start: usize, out: &mut Vec<(String, usize, usize)>) -> usize {
        match t {
            Tree::Leaf { .. } => start + 1,
            Tree::Internal { label, children } => {
                let mut end = start;
                for c in children {
                    end = rec(c, end, out);
                }
                out.push((label.clone(), start, end));
                end
            }
        }
    }
    rec(tree, 0, &mut out);
    out
}

/// Multiset span-match counts: `(matched, gold spans, predicted spans)`.
/// Corpus-level scores sum these across sentences.
pub fn match_counts(gold: &Tree, predicted: &Tree) -> Result<(usize, usize, usize)> {
    if gold.terminals() != predicted.terminals() {
        return Err(Error::data(
            "bracketing score requires identical terminal strings",
        ));
    }
    let gold_spans = labeled_spans(gold);
    let pred_spans = labeled_spans(predicted);

    let mut counts: HashMap<(String, usize, usize), usize> = HashMap::new();
    for s in &gold_spans {
        *counts.entry(s.clone()).or_insert(0) += 1;
    }
    let mut matched = 0usize;
    for s in &pred_spans {
        if let Some(c) = counts.get_mut(s) {
            if *c > 0 {
                *c -= 1;
                matched += 1;
            }
        }
    }
    Ok((matched, gold_spans.len(), pred_spans.len()))
}

/// Labeled bracketing precision/recall/F1 with multiset span matching.
pub fn bracket_f1(gold: &Tree, predicted: &Tree) -> Result<F1Score> {
    let (matched, n_gold, n_pred) = match_counts(gold, predicted)?;
    let precision = 100.0 * matched as f64 / n_pred as f64;
    let recall = 100.0 * matched as f64 / n_gold as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(F1Score {
        precision,
        recall,
        f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::{parse_bracketed, to_left_branching};

    const FIG_TREE: &str = "(S (NP the blue bird NP) (VP sings VP) S)";

    #[test]
    fn identical_trees_score_100() {
        let t = parse_bracketed(FIG_TREE).unwrap();
        let s = bracket_f1(&t, &t).unwrap();
        assert_eq!(s.precision, 100.0);
        assert_eq!(s.recall, 100.0);
        assert_eq!(s.f1, 100.0);
    }

    #[test]
    fn left_branching_transform_scores_two_thirds() {
        let gold = parse_bracketed(FIG_TREE).unwrap();
        let pred = to_left_branching(&gold);
        // gold spans {S(0,4), NP(0,3), VP(3,4)}; predicted {S(0,4), NP(0,3), VP(0,2)}
        let mut gold_spans = labeled_spans(&gold);
        gold_spans.sort();
        assert_eq!(
            gold_spans,
            vec![
                ("NP".to_string(), 0, 3),
                ("S".to_string(), 0, 4),
                ("VP".to_string(), 3, 4)
            ]
        );
        let s = bracket_f1(&gold, &pred).unwrap();
        assert!((s.precision - 200.0 / 3.0).abs() < 1e-9);
        assert!((s.recall - 200.0 / 3.0).abs() < 1e-9);
        assert!((s.f1 - 200.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn different_single_node_labels_score_zero() {
        let a = parse_bracketed("(X w X)").unwrap();
        let b = parse_bracketed("(Y w Y)").unwrap();
        let s = bracket_f1(&a, &b).unwrap();
        assert_eq!(s.f1, 0.0);
    }

    #[test]
    fn terminal_mismatch_is_error() {
        let a = parse_bracketed("(X w X)").unwrap();
        let b = parse_bracketed("(X v X)").unwrap();
        assert!(bracket_f1(&a, &b).is_err());
    }

    #[test]
    fn swap_exchanges_precision_and_recall() {
        let gold = parse_bracketed(FIG_TREE).unwrap();
        let pred = parse_bracketed("(S (NP the blue NP) bird sings S)").unwrap();
        let a = bracket_f1(&gold, &pred).unwrap();
        let b = bracket_f1(&pred, &gold).unwrap();
        assert_eq!(a.precision, b.recall);
        assert_eq!(a.recall, b.precision);
        assert_eq!(a.f1, b.f1);
    }
}
