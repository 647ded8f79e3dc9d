use crate::error::{Error, Result};
use crate::evalsuite::{JointScorer, PrefixScorer};
use crate::maskgen::{encode_document, InputView, StepKind};
use crate::model::{Model, Prepared};
use crate::treebank::{linearize, ActionKind, ActionSequence, Tree, Vocabulary};

/// Scores trees under a trained model in 64-bit.
pub struct TreeScorer<'a> {
    model: &'a Model<f64>,
    vocab: &'a Vocabulary,
}

/// One prediction event keyed by its position in the raw (unduplicated)
/// action sequence of a document.
#[derive(Clone, Debug)]
pub struct RawEvent {
    pub raw_pos: usize,
    pub logprob: f64,
}

impl<'a> TreeScorer<'a> {
    pub fn new(model: &'a Model<f64>, vocab: &'a Vocabulary) -> Result<TreeScorer<'a>> {
        if model.cfg.vocab_size != vocab.len() {
            return Err(Error::data(format!(
                "model expects {} vocabulary entries, file has {}",
                model.cfg.vocab_size,
                vocab.len()
            )));
        }
        Ok(TreeScorer { model, vocab })
    }

    pub fn view(&self) -> InputView {
        self.model.cfg.mode.view
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.vocab
    }

    fn prepare_doc(&self, trees: &[Tree]) -> Result<Prepared> {
        let steps = encode_document(trees, self.vocab, self.view())?;
        self.model.prepare(&steps)
    }

    /// Joint log probability of `tree`'s actions given the actions of
    /// `prefix`, summing event log probabilities whose targets lie in the
    /// tree's span.
    pub fn score_with_prefix(&self, prefix: &[Tree], tree: &Tree) -> Result<f64> {
        let prefix_len = if prefix.is_empty() {
            0
        } else {
            encode_document(prefix, self.vocab, self.view())?.len()
        };
        let mut all: Vec<Tree> = prefix.to_vec();
        all.push(tree.clone());
        let prep = self.prepare_doc(&all)?;
        let events = self.model.event_logprobs(&prep)?;
        Ok(events
            .iter()
            .filter(|e| e.target_pos > prefix_len)
            .map(|e| e.logprob)
            .sum())
    }

    /// Cumulative joint log probability truncated immediately after each
    /// word's terminal action: entry `t` covers everything up to and
    /// including the `t`-th word, before any closings that follow it.
    pub fn word_prefixes(&self, tree: &Tree) -> Result<Vec<f64>> {
        let prep = self.prepare_doc(std::slice::from_ref(tree))?;
        let steps = prep.plan.steps();
        let events = self.model.event_logprobs(&prep)?;
        let mut out = Vec::new();
        let mut cum = 0.0;
        let mut it = events.iter().peekable();
        for pos in 0..prep.plan.real_len() {
            while let Some(e) = it.peek() {
                if e.target_pos <= pos {
                    cum += e.logprob;
                    it.next();
                } else {
                    break;
                }
            }
            if steps.kinds[pos] == StepKind::Terminal {
                out.push(cum);
            }
        }
        Ok(out)
    }

    /// Event log probabilities aligned to positions of the document's raw
    /// concatenated action sequence (terminal-only models cover only the
    /// terminal positions).
    pub fn raw_events(&self, doc: &[Tree]) -> Result<Vec<RawEvent>> {
        let prep = self.prepare_doc(doc)?;
        let events = self.model.event_logprobs(&prep)?;

        // raw concatenated sequence for position mapping
        let raw_parts: Vec<ActionSequence> = doc.iter().map(linearize).collect();
        let raw = ActionSequence::concat(&raw_parts)?;

        // map each model-input position (1-based past the leading token) to
        // a raw position
        let steps = prep.plan.steps();
        let mut input_to_raw: Vec<Option<usize>> = vec![None; prep.plan.real_len()];
        match self.view() {
            InputView::RawTrees => {
                for p in 1..prep.plan.real_len() {
                    input_to_raw[p] = Some(p - 1);
                }
            }
            InputView::DuplicatedTrees => {
                let mut raw_idx = 0usize;
                for p in 1..prep.plan.real_len() {
                    if steps.kinds[p] == StepKind::CloseStack {
                        continue;
                    }
                    input_to_raw[p] = Some(raw_idx);
                    raw_idx += 1;
                }
            }
            InputView::TerminalsOnly => {
                let term_positions: Vec<usize> = raw
                    .actions()
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| a.kind == ActionKind::Terminal)
                    .map(|(i, _)| i)
                    .collect();
                for p in 1..prep.plan.real_len() {
                    input_to_raw[p] = Some(term_positions[p - 1]);
                }
            }
        }

        Ok(events
            .iter()
            .filter_map(|e| {
                input_to_raw[e.target_pos].map(|raw_pos| RawEvent {
                    raw_pos,
                    logprob: e.logprob,
                })
            })
            .collect())
    }
}

impl JointScorer for TreeScorer<'_> {
    fn joint_logprob(&self, prefix: &[Tree], tree: &Tree) -> Result<f64> {
        self.score_with_prefix(prefix, tree)
    }

    fn exact_over_strings(&self) -> bool {
        self.view() == InputView::TerminalsOnly
    }
}

impl PrefixScorer for TreeScorer<'_> {
    fn word_prefix_logprobs(&self, tree: &Tree) -> Result<Vec<f64>> {
        self.word_prefixes(tree)
    }
}
