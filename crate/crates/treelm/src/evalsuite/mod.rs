//! Evaluation procedures: marginalized perplexity bounds over proposal
//! trees, greedy document-level marginals, parse reranking, labeled
//! bracketing F1, inequality-based syntactic test suites, and per-token
//! model comparison.

mod compare;
mod f1;
mod files;
mod sg;

pub use compare::{compare_logprobs, ContextFlag, DeltaRecord};
pub use f1::{bracket_f1, labeled_spans, match_counts, F1Score};
pub use files::{load_proposals, load_sg_suites, save_proposals};
pub use sg::{sg_score, SgCondition, SgItem, SgReport, SgSuite, SuiteScore};

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::treebank::Tree;

/// Joint scorer over (string, tree) pairs, optionally conditioned on the
/// action sequences of preceding trees.
pub trait JointScorer: Sync {
    fn joint_logprob(&self, prefix: &[Tree], tree: &Tree) -> Result<f64>;

    /// True when the scorer models terminal strings directly, so string
    /// probabilities are exact and proposals are unnecessary.
    fn exact_over_strings(&self) -> bool {
        false
    }
}

/// Scorers that can truncate a tree's joint probability right after each
/// word's terminal action, for word-level surprisals.
pub trait PrefixScorer: JointScorer {
    /// `out[t]` = log probability of all actions up to and including the
    /// `t`-th word's terminal action (0-based).
    fn word_prefix_logprobs(&self, tree: &Tree) -> Result<Vec<f64>>;
}

/// A sentence with its candidate parses.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProposalSet {
    pub id: String,
    /// The terminal string, as words.
    pub sentence: Vec<String>,
    #[serde(
        serialize_with = "files::trees_to_strings",
        deserialize_with = "files::trees_from_strings"
    )]
    pub trees: Vec<Tree>,
}

impl ProposalSet {
    pub fn new(id: impl Into<String>, trees: Vec<Tree>) -> Result<ProposalSet> {
        let id = id.into();
        let first = trees
            .first()
            .ok_or_else(|| Error::data(format!("proposal set {id} has no trees")))?;
        let sentence: Vec<String> = first.terminals().iter().map(|w| w.to_string()).collect();
        let set = ProposalSet {
            id,
            sentence,
            trees,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.trees {
            let words: Vec<String> = t.terminals().iter().map(|w| w.to_string()).collect();
            if words != self.sentence {
                return Err(Error::data(format!(
                    "proposal for {} yields a different terminal string",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Distinct trees in file order; logs a warning when duplicates are
    /// dropped.
    pub fn distinct_trees(&self) -> Vec<&Tree> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut dropped = 0usize;
        for t in &self.trees {
            if seen.insert(t) {
                out.push(t);
            } else {
                dropped += 1;
            }
        }
        if dropped > 0 {
            log::warn!(
                "proposal set {}: dropped {dropped} duplicate tree(s)",
                self.id
            );
        }
        out
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Lower bound on `log p(x)`: log-sum-exp of joint log probabilities over
/// the distinct proposals. Monotone nondecreasing in the proposal set.
pub fn marginal_lower_bound(scorer: &dyn JointScorer, set: &ProposalSet) -> Result<f64> {
    let trees = set.distinct_trees();
    let scores: Vec<f64> = trees
        .iter()
        .map(|t| scorer.joint_logprob(&[], t))
        .collect::<Result<_>>()?;
    Ok(log_sum_exp(&scores))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SentenceScore {
    pub id: String,
    pub logprob: f64,
    pub n_words: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PplReport {
    pub corpus_ppl: f64,
    pub total_nll: f64,
    pub n_words: usize,
    pub sentences: Vec<SentenceScore>,
}

impl PplReport {
    fn from_scores(sentences: Vec<SentenceScore>) -> Result<PplReport> {
        if sentences.is_empty() {
            return Err(Error::data("empty dataset"));
        }
        let total_nll: f64 = sentences.iter().map(|s| -s.logprob).sum();
        let n_words: usize = sentences.iter().map(|s| s.n_words).sum();
        if n_words == 0 {
            return Err(Error::data("dataset has no words"));
        }
        Ok(PplReport {
            corpus_ppl: (total_nll / n_words as f64).exp(),
            total_nll,
            n_words,
            sentences,
        })
    }
}

/// Corpus word perplexity `exp(total NLL / N_w)`, where `N_w` counts
/// terminals only. Tree models marginalize over per-sentence proposals;
/// exact string models score the gold trees' terminals directly and need no
/// proposals.
pub fn corpus_ppl(
    scorer: &dyn JointScorer,
    dataset: &[(String, Tree)],
    proposals: &[ProposalSet],
) -> Result<PplReport> {
    if scorer.exact_over_strings() {
        let sentences: Vec<SentenceScore> = dataset
            .par_iter()
            .map(|(id, tree)| {
                Ok(SentenceScore {
                    id: id.clone(),
                    logprob: scorer.joint_logprob(&[], tree)?,
                    n_words: tree.terminals().len(),
                })
            })
            .collect::<Result<_>>()?;
        return PplReport::from_scores(sentences);
    }

    let by_id: std::collections::HashMap<&str, &ProposalSet> =
        proposals.iter().map(|p| (p.id.as_str(), p)).collect();
    let missing: Vec<&str> = dataset
        .iter()
        .filter(|(id, _)| !by_id.contains_key(id.as_str()))
        .map(|(id, _)| id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::data(format!(
            "missing proposals for sentences: {}",
            missing.join(", ")
        )));
    }
    let sentences: Vec<SentenceScore> = dataset
        .par_iter()
        .map(|(id, tree)| {
            let set = by_id[id.as_str()];
            set.validate()?;
            Ok(SentenceScore {
                id: id.clone(),
                logprob: marginal_lower_bound(scorer, set)?,
                n_words: tree.terminals().len(),
            })
        })
        .collect::<Result<_>>()?;
    PplReport::from_scores(sentences)
}

/// Document-level marginal bound: for sentence `i`, the prefix is the
/// concatenation of the argmax-joint trees of sentences `< i`, chosen
/// greedily left to right under the model; the sentence's score is the
/// log-sum-exp over its proposals conditioned on that prefix.
pub fn doc_marginal(scorer: &dyn JointScorer, sentences: &[ProposalSet]) -> Result<f64> {
    let mut chosen: Vec<Tree> = Vec::new();
    let mut total = 0.0;
    for set in sentences {
        set.validate()?;
        let trees = set.distinct_trees();
        let scores: Vec<f64> = trees
            .iter()
            .map(|t| scorer.joint_logprob(&chosen, t))
            .collect::<Result<_>>()?;
        total += log_sum_exp(&scores);
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        chosen.push(trees[best].clone());
    }
    Ok(total)
}

/// Index of the proposal with the highest joint log probability; ties break
/// to the first in file order.
pub fn rerank(scorer: &dyn JointScorer, set: &ProposalSet) -> Result<usize> {
    if set.trees.is_empty() {
        return Err(Error::data(format!("proposal set {} is empty", set.id)));
    }
    set.validate()?;
    let scores: Vec<f64> = set
        .trees
        .par_iter()
        .map(|t| scorer.joint_logprob(&[], t))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}
