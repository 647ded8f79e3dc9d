use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TreeScorer;
use crate::treebank::{linearize, ActionKind, ActionSequence, Tree};

/// Where the predicted terminal appears in the document context.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextFlag {
    /// Appears earlier in the current sentence.
    CurrentSentence,
    /// Appears in a previous sentence but not earlier in the current one.
    PreviousSentence,
    Absent,
}

/// Per-token difference in log probability between two models, keyed by the
/// position in the document's raw concatenated action sequence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeltaRecord {
    pub id: String,
    pub pos: usize,
    pub token: String,
    pub kind: String,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context: Option<ContextFlag>,
}

fn kind_name(kind: ActionKind) -> &'static str {
    match kind {
        ActionKind::Open => "open",
        ActionKind::Terminal => "terminal",
        _ => "close",
    }
}

/// Per-token log-probability differences `log p_a - log p_b` on the given
/// documents, over the positions both models predict. Both scorers must
/// share the vocabulary.
pub fn compare_logprobs(
    a: &TreeScorer<'_>,
    b: &TreeScorer<'_>,
    docs: &[(String, Vec<Tree>)],
) -> Result<Vec<DeltaRecord>> {
    if a.vocab() != b.vocab() {
        return Err(Error::data(
            "model comparison requires a shared vocabulary",
        ));
    }
    let mut out = Vec::new();
    for (id, trees) in docs {
        let raw_parts: Vec<ActionSequence> = trees.iter().map(linearize).collect();
        let raw = ActionSequence::concat(&raw_parts)?;

        // sentence index of each raw position
        let mut sentence_of = Vec::with_capacity(raw.len());
        for (s, part) in raw_parts.iter().enumerate() {
            sentence_of.extend(std::iter::repeat_n(s, part.len()));
        }

        let scores_a: HashMap<usize, f64> = a
            .raw_events(trees)?
            .into_iter()
            .map(|e| (e.raw_pos, e.logprob))
            .collect();
        let scores_b: HashMap<usize, f64> = b
            .raw_events(trees)?
            .into_iter()
            .map(|e| (e.raw_pos, e.logprob))
            .collect();

        let mut seen_by_sentence: Vec<HashSet<&str>> = vec![HashSet::new(); trees.len()];
        for (pos, action) in raw.actions().iter().enumerate() {
            let sent = sentence_of[pos];
            let context = if action.kind == ActionKind::Terminal {
                let word = action.symbol.as_str();
                let flag = if seen_by_sentence[sent].contains(word) {
                    ContextFlag::CurrentSentence
                } else if seen_by_sentence[..sent].iter().any(|s| s.contains(word)) {
                    ContextFlag::PreviousSentence
                } else {
                    ContextFlag::Absent
                };
                seen_by_sentence[sent].insert(word);
                Some(flag)
            } else {
                None
            };
            if let (Some(la), Some(lb)) = (scores_a.get(&pos), scores_b.get(&pos)) {
                out.push(DeltaRecord {
                    id: id.clone(),
                    pos,
                    token: action.symbol.clone(),
                    kind: kind_name(action.kind).to_string(),
                    delta: la - lb,
                    context,
                });
            }
        }
    }
    Ok(out)
}
