use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalsuite::{log_sum_exp, PrefixScorer};
use crate::treebank::Tree;

/// One named condition: a sentence given as proposal trees plus the scored
/// word region `[start, end)` (0-based).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SgCondition {
    #[serde(
        serialize_with = "crate::evalsuite::files::trees_to_strings",
        deserialize_with = "crate::evalsuite::files::trees_from_strings"
    )]
    pub trees: Vec<Tree>,
    pub region: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence: Option<Vec<String>>,
}

/// A test item: named conditions and a boolean criterion over their region
/// surprisals, e.g. `s(gram) < s(ungram) && s(gram) < s(other)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SgItem {
    pub conditions: BTreeMap<String, SgCondition>,
    pub criterion: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SgSuite {
    pub suite: String,
    pub items: Vec<SgItem>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteScore {
    pub suite: String,
    pub accuracy: f64,
    pub n_items: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SgReport {
    pub suites: Vec<SuiteScore>,
    pub mean_accuracy: f64,
}

/// Region surprisal of one condition: per-word surprisals are differences
/// of marginalized word-prefix log probabilities
/// `s(w_t) = log p(w_{<t}) - log p(w_{<=t})`, each marginal a log-sum-exp
/// over the condition's proposal trees truncated right after the word.
fn region_surprisal(scorer: &dyn PrefixScorer, cond: &SgCondition) -> Result<f64> {
    if cond.trees.is_empty() {
        return Err(Error::data("condition has no proposal trees"));
    }
    let n_words = cond.trees[0].terminals().len();
    let (start, end) = cond.region;
    if start >= end || end > n_words {
        return Err(Error::data(format!(
            "region {start}..{end} out of range for {n_words} words"
        )));
    }
    if let Some(words) = &cond.sentence {
        let have: Vec<String> = cond.trees[0].terminals().iter().map(|w| w.to_string()).collect();
        if *words != have {
            return Err(Error::data("condition sentence does not match its trees"));
        }
    }

    // per-tree cumulative prefixes, then marginalize per word
    let per_tree: Vec<Vec<f64>> = cond
        .trees
        .iter()
        .map(|t| {
            let p = scorer.word_prefix_logprobs(t)?;
            if p.len() != n_words {
                return Err(Error::data("proposal trees disagree on word count"));
            }
            Ok(p)
        })
        .collect::<Result<_>>()?;

    let marginal_at = |t: usize| -> f64 {
        if t == 0 {
            // empty prefix has probability 1 under every tree; the
            // marginal over N proposals is log N, which cancels in the
            // surprisal differences below
            (per_tree.len() as f64).ln()
        } else {
            let vals: Vec<f64> = per_tree.iter().map(|p| p[t - 1]).collect();
            log_sum_exp(&vals)
        }
    };

    let mut total = 0.0;
    for t in start..end {
        let s = marginal_at(t) - marginal_at(t + 1);
        total += s;
    }
    Ok(total)
}

/// Evaluates every suite: an item passes when its criterion holds over the
/// conditions' region surprisals.
pub fn sg_score(scorer: &dyn PrefixScorer, suites: &[SgSuite]) -> Result<SgReport> {
    let mut scores = Vec::with_capacity(suites.len());
    for suite in suites {
        if suite.items.is_empty() {
            return Err(Error::data(format!("suite {} has no items", suite.suite)));
        }
        let passes: Vec<bool> = suite
            .items
            .par_iter()
            .map(|item| {
                let mut surprisals = BTreeMap::new();
                for (name, cond) in &item.conditions {
                    surprisals.insert(name.clone(), region_surprisal(scorer, cond)?);
                }
                eval_criterion(&item.criterion, &surprisals)
            })
            .collect::<Result<_>>()?;
        let n_pass = passes.iter().filter(|&&p| p).count();
        scores.push(SuiteScore {
            suite: suite.suite.clone(),
            accuracy: n_pass as f64 / suite.items.len() as f64,
            n_items: suite.items.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::data("no suites to score"));
    }
    let mean = scores.iter().map(|s| s.accuracy).sum::<f64>() / scores.len() as f64;
    Ok(SgReport {
        suites: scores,
        mean_accuracy: mean,
    })
}

/// Criterion grammar: `cmp ( '&&' cmp )*` with `cmp := s(NAME) OP s(NAME)`
/// and `OP` one of `<`, `>`.
pub fn eval_criterion(text: &str, surprisals: &BTreeMap<String, f64>) -> Result<bool> {
    let mut result = true;
    for clause in text.split("&&") {
        let clause = clause.trim();
        let (op_at, op) = clause
            .find('<')
            .map(|i| (i, '<'))
            .or_else(|| clause.find('>').map(|i| (i, '>')))
            .ok_or_else(|| Error::data(format!("criterion clause {clause:?} has no comparison")))?;
        let lhs = parse_term(&clause[..op_at])?;
        let rhs = parse_term(&clause[op_at + 1..])?;
        let l = *surprisals
            .get(&lhs)
            .ok_or_else(|| Error::data(format!("criterion references unknown condition {lhs:?}")))?;
        let r = *surprisals
            .get(&rhs)
            .ok_or_else(|| Error::data(format!("criterion references unknown condition {rhs:?}")))?;
        result &= match op {
            '<' => l < r,
            _ => l > r,
        };
    }
    Ok(result)
}

fn parse_term(text: &str) -> Result<String> {
    let t = text.trim();
    let inner = t
        .strip_prefix("s(")
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| Error::data(format!("criterion term {t:?} is not of the form s(NAME)")))?;
    Ok(inner.trim().to_string())
}
