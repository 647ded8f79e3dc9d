use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::maskgen::{InputView, StepKind, StepSeq};
use crate::model::{Decoder, Model, Real};
use crate::treebank::{ActionSequence, SymbolClass, Tree, Vocabulary};

#[derive(Clone, Debug)]
pub struct SampleOutcome {
    /// The sampled duplicated action sequence (stack copies inserted
    /// deterministically, without prediction events).
    pub steps: StepSeq,
    pub symbols: Vec<String>,
    pub well_formed: bool,
    pub tree: Option<Tree>,
}

struct OpenFrame {
    label_close_id: u32,
    children: usize,
}

/// Ancestral sampling of one tree as a duplicated action sequence, decoding
/// one token at a time over the recurrent memory.
///
/// After a closing symbol is sampled (the compose copy), the stack copy is
/// appended deterministically without a prediction event. With constraints
/// on, continuations that cannot end in a balanced tree within `max_len`
/// tokens are masked out and renormalized; `temperature == 0` picks the
/// argmax. With constraints off, any non-special token may be sampled and
/// the outcome is flagged ill-formed when it does not parse.
pub fn sample_tree<F: Real>(
    model: &Model<F>,
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
    max_len: usize,
    temperature: f64,
    constrained: bool,
    depth_cap: u32,
) -> Result<SampleOutcome> {
    if model.cfg.mode.view != InputView::DuplicatedTrees {
        return Err(Error::data(
            "sampling trees requires a model over the duplicated-trees view",
        ));
    }
    let mut decoder = Decoder::new(model);
    let mut logits = decoder.push(vocab.bos_id(), StepKind::Bos, 0)?;

    let mut ids: Vec<u32> = Vec::new();
    let mut kinds: Vec<StepKind> = Vec::new();
    let mut depths: Vec<u32> = Vec::new();
    let mut symbols: Vec<String> = Vec::new();
    let mut open: Vec<OpenFrame> = Vec::new();
    let mut well_formed = true;

    loop {
        if ids.len() >= max_len {
            well_formed = false;
            break;
        }
        let remaining = max_len - ids.len();
        let depth = open.len();

        // enumerate the ids allowed right now
        let mut allowed: Vec<u32> = Vec::new();
        if constrained {
            for id in 0..vocab.len() as u32 {
                match vocab.class(id) {
                    SymbolClass::Special => {}
                    SymbolClass::Open => {
                        // opening must leave room for one child and every
                        // closing pair below it
                        let fits = remaining >= 2 * (depth + 1) + 2;
                        let placable = depth > 0 || ids.is_empty();
                        if fits && (depth as u32) < depth_cap && placable {
                            allowed.push(id);
                        }
                    }
                    SymbolClass::Terminal => {
                        if depth >= 1 && remaining >= 1 + 2 * depth {
                            allowed.push(id);
                        }
                    }
                    SymbolClass::Close => {
                        if let Some(top) = open.last() {
                            if top.children >= 1 && id == top.label_close_id {
                                allowed.push(id);
                            }
                        }
                    }
                }
            }
            if allowed.is_empty() {
                well_formed = false;
                break;
            }
        } else {
            allowed.extend(
                (0..vocab.len() as u32).filter(|&id| vocab.class(id) != SymbolClass::Special),
            );
        }

        let next = pick(logits.view(), &allowed, temperature, rng);

        match vocab.class(next) {
            SymbolClass::Open => {
                ids.push(next);
                kinds.push(StepKind::Open);
                depths.push(depth as u32);
                symbols.push(vocab.symbol(next).to_string());
                logits = decoder.push(next, StepKind::Open, depth as u32)?;
                if let Some(top) = open.last_mut() {
                    top.children += 1;
                }
                let label = &vocab.symbol(next)[1..];
                open.push(OpenFrame {
                    label_close_id: vocab.close_id(label)?,
                    children: 0,
                });
            }
            SymbolClass::Terminal | SymbolClass::Special => {
                if open.is_empty() {
                    well_formed = false;
                    break;
                }
                ids.push(next);
                kinds.push(StepKind::Terminal);
                depths.push(depth as u32);
                symbols.push(vocab.symbol(next).to_string());
                logits = decoder.push(next, StepKind::Terminal, depth as u32)?;
                open.last_mut().unwrap().children += 1;
            }
            SymbolClass::Close => {
                let Some(top) = open.pop() else {
                    well_formed = false;
                    break;
                };
                if top.label_close_id != next || top.children == 0 {
                    well_formed = false;
                }
                if ids.len() + 2 > max_len {
                    well_formed = false;
                    break;
                }
                let node_depth = (depth - 1) as u32;
                for kind in [StepKind::CloseCompose, StepKind::CloseStack] {
                    ids.push(next);
                    kinds.push(kind);
                    depths.push(node_depth);
                    symbols.push(vocab.symbol(next).to_string());
                    logits = decoder.push(next, kind, node_depth)?;
                }
                if let Some(parent) = open.last_mut() {
                    parent.children += 1;
                } else {
                    break; // root closed
                }
            }
        }
    }

    if !open.is_empty() || ids.is_empty() {
        well_formed = false;
    }

    let tree = if well_formed {
        match reconstruct(&symbols, &kinds) {
            Ok(t) => Some(t),
            Err(_) => {
                well_formed = false;
                None
            }
        }
    } else {
        None
    };

    Ok(SampleOutcome {
        steps: StepSeq::new(ids, kinds, Some(depths)),
        symbols,
        well_formed,
        tree,
    })
}

fn reconstruct(symbols: &[String], kinds: &[StepKind]) -> Result<Tree> {
    use crate::treebank::{Action, ActionKind};
    let actions: Vec<Action> = symbols
        .iter()
        .zip(kinds)
        .map(|(s, k)| Action {
            symbol: s.clone(),
            kind: match k {
                StepKind::Open => ActionKind::Open,
                StepKind::CloseCompose => ActionKind::CloseCompose,
                StepKind::CloseStack => ActionKind::CloseStack,
                _ => ActionKind::Terminal,
            },
            depth: 0,
        })
        .collect();
    ActionSequence::from_parts(actions, true).reconstruct()
}

fn pick<F: Real>(
    logits: ndarray::ArrayView1<F>,
    allowed: &[u32],
    temperature: f64,
    rng: &mut ChaCha8Rng,
) -> u32 {
    debug_assert!(!allowed.is_empty());
    if temperature <= 0.0 {
        return *allowed
            .iter()
            .max_by(|&&a, &&b| {
                logits[a as usize]
                    .partial_cmp(&logits[b as usize])
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
    }
    let vals: Vec<f64> = allowed
        .iter()
        .map(|&id| logits[id as usize].as_f64() / temperature)
        .collect();
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = vals.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut coin: f64 = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        coin -= w;
        if coin <= 0.0 {
            return allowed[i];
        }
    }
    *allowed.last().unwrap()
}
