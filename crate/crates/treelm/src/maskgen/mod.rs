//! Attention masks and relative positions for linearized tree sequences.
//!
//! The stack/compose mask walks the sequence once, maintaining a stack of
//! positions. A compose step (first closing copy) attends itself, its
//! constituent's positions popped off the stack, and the matching opening,
//! then pushes itself as the composed representation. A stack step (second
//! closing copy) attends the current stack without pushing. Everything else
//! pushes itself and attends the whole stack. Positions popped during a
//! compose are never attendable again, which is the composition bottleneck.

mod bitmat;

pub use bitmat::BitMatrix;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::treebank::{
    linearize, terminals_sequence, ActionKind, ActionSequence, Tree, Vocabulary,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionKind {
    /// Stack/compose masking over duplicated sequences.
    StackCompose,
    /// Plain lower-triangular masking.
    Causal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PositionScheme {
    /// Relative position is the difference in tree depth.
    TreeDepth,
    /// Relative position is the difference in linear position.
    Linear,
    /// No positional information: every defined entry is zero.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InputView {
    DuplicatedTrees,
    RawTrees,
    TerminalsOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskMode {
    pub attention: AttentionKind,
    pub positions: PositionScheme,
    pub view: InputView,
}

impl MaskMode {
    /// Stack/compose attention with tree-depth positions over duplicated
    /// sequences.
    pub fn stack_compose() -> MaskMode {
        MaskMode {
            attention: AttentionKind::StackCompose,
            positions: PositionScheme::TreeDepth,
            view: InputView::DuplicatedTrees,
        }
    }

    /// Causal baseline over the raw linearized tree sequence.
    pub fn causal_trees() -> MaskMode {
        MaskMode {
            attention: AttentionKind::Causal,
            positions: PositionScheme::Linear,
            view: InputView::RawTrees,
        }
    }

    /// Causal baseline over the terminal words only.
    pub fn causal_terminals() -> MaskMode {
        MaskMode {
            attention: AttentionKind::Causal,
            positions: PositionScheme::Linear,
            view: InputView::TerminalsOnly,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.attention == AttentionKind::StackCompose && self.view != InputView::DuplicatedTrees
        {
            return Err(Error::data(
                "stack/compose attention requires the duplicated-trees input view",
            ));
        }
        Ok(())
    }
}

/// Step kinds as seen by the masking layer. `Bos` behaves like an ordinary
/// stack token at depth 0; `Pad` rows attend only themselves and never touch
/// the stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    Open,
    Terminal,
    Close,
    CloseCompose,
    CloseStack,
    Bos,
    Pad,
}

impl From<ActionKind> for StepKind {
    fn from(k: ActionKind) -> StepKind {
        match k {
            ActionKind::Open => StepKind::Open,
            ActionKind::Terminal => StepKind::Terminal,
            ActionKind::Close => StepKind::Close,
            ActionKind::CloseCompose => StepKind::CloseCompose,
            ActionKind::CloseStack => StepKind::CloseStack,
        }
    }
}

/// A token-id sequence with the per-position metadata masks need.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepSeq {
    pub ids: Vec<u32>,
    pub kinds: Vec<StepKind>,
    /// Tree depths; absent for sequences built from bare ids.
    pub depths: Option<Vec<u32>>,
}

impl StepSeq {
    pub fn new(ids: Vec<u32>, kinds: Vec<StepKind>, depths: Option<Vec<u32>>) -> StepSeq {
        assert_eq!(ids.len(), kinds.len());
        if let Some(d) = &depths {
            assert_eq!(d.len(), ids.len());
        }
        StepSeq { ids, kinds, depths }
    }

    /// A plain word sequence (causal baselines, tests).
    pub fn words(ids: Vec<u32>) -> StepSeq {
        let kinds = vec![StepKind::Terminal; ids.len()];
        StepSeq {
            ids,
            kinds,
            depths: None,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn depth(&self, i: usize) -> u32 {
        self.depths.as_ref().map(|d| d[i]).unwrap_or(0)
    }

    /// Prepends the beginning-of-sequence token at depth 0.
    pub fn with_bos(&self, vocab: &Vocabulary) -> StepSeq {
        let mut ids = Vec::with_capacity(self.len() + 1);
        ids.push(vocab.bos_id());
        ids.extend_from_slice(&self.ids);
        let mut kinds = Vec::with_capacity(self.len() + 1);
        kinds.push(StepKind::Bos);
        kinds.extend_from_slice(&self.kinds);
        let depths = self.depths.as_ref().map(|d| {
            let mut out = Vec::with_capacity(d.len() + 1);
            out.push(0);
            out.extend_from_slice(d);
            out
        });
        StepSeq { ids, kinds, depths }
    }

    pub fn from_actions(seq: &ActionSequence, vocab: &Vocabulary) -> Result<StepSeq> {
        let mut ids = Vec::with_capacity(seq.len());
        let mut kinds = Vec::with_capacity(seq.len());
        let mut depths = Vec::with_capacity(seq.len());
        for a in seq.actions() {
            let id = match a.kind {
                ActionKind::Terminal => vocab.terminal_id(&a.symbol),
                _ => vocab
                    .id(&a.symbol)
                    .ok_or_else(|| Error::data(format!("unknown symbol {:?}", a.symbol)))?,
            };
            ids.push(id);
            kinds.push(a.kind.into());
            depths.push(a.depth);
        }
        Ok(StepSeq {
            ids,
            kinds,
            depths: Some(depths),
        })
    }
}

/// Builds the view-specific action sequence for one tree.
pub fn view_sequence(tree: &Tree, view: InputView) -> Result<ActionSequence> {
    match view {
        InputView::DuplicatedTrees => linearize(tree).duplicate_closing(),
        InputView::RawTrees => Ok(linearize(tree)),
        InputView::TerminalsOnly => Ok(terminals_sequence(tree)),
    }
}

pub fn encode_tree(tree: &Tree, vocab: &Vocabulary, view: InputView) -> Result<StepSeq> {
    StepSeq::from_actions(&view_sequence(tree, view)?, vocab)
}

/// Encodes a document: the trees' sequences concatenated with no separator.
pub fn encode_document(trees: &[Tree], vocab: &Vocabulary, view: InputView) -> Result<StepSeq> {
    let parts: Vec<ActionSequence> = trees
        .iter()
        .map(|t| view_sequence(t, view))
        .collect::<Result<_>>()?;
    StepSeq::from_actions(&ActionSequence::concat(&parts)?, vocab)
}

/// Default clamp bound for relative positions: values land in `[-16, 16]`.
pub const DEFAULT_POS_CLAMP: i32 = 16;

fn clamp_rel(v: i64, clamp: i32) -> i32 {
    v.clamp(-(clamp as i64), clamp as i64) as i32
}

/// One stack entry: the original position, the matrix column that addresses
/// it, and the metadata masking needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct StackEntry {
    pub origin: usize,
    pub col: usize,
    pub kind: StepKind,
    pub depth: u32,
}

/// Applies one stack/compose step for the token at `entry`, invoking
/// `attend` for every attendable entry (the entry for the current position
/// included where the rules say so).
pub(crate) fn apply_step(
    stack: &mut Vec<StackEntry>,
    entry: StackEntry,
    mut attend: impl FnMut(StackEntry),
) -> Result<()> {
    match entry.kind {
        StepKind::CloseCompose => {
            attend(entry);
            loop {
                let top = stack.pop().ok_or_else(|| {
                    Error::data(format!(
                        "unbalanced sequence: closing at index {} with empty stack",
                        entry.origin
                    ))
                })?;
                let done = top.kind == StepKind::Open;
                attend(top);
                if done {
                    break;
                }
            }
            stack.push(entry);
        }
        StepKind::CloseStack => {
            for e in stack.iter() {
                attend(*e);
            }
        }
        StepKind::Pad => {
            attend(entry);
        }
        StepKind::Close => {
            return Err(Error::data(format!(
                "raw closing at index {}: stack/compose masking requires duplicated sequences",
                entry.origin
            )));
        }
        StepKind::Open | StepKind::Terminal | StepKind::Bos => {
            stack.push(entry);
            for e in stack.iter() {
                attend(*e);
            }
        }
    }
    Ok(())
}

/// Attention mask, relative positions, and stack bookkeeping for one
/// sequence or segment.
///
/// The mask is bit-packed; relative positions are stored only for set
/// entries, parallel to the ascending set bits of each row.
#[derive(Clone, Debug)]
pub struct MaskBundle {
    mask: BitMatrix,
    rel: Vec<Vec<i32>>,
    stack: Vec<usize>,
    row_origins: Vec<usize>,
    col_origins: Vec<usize>,
}

impl MaskBundle {
    pub fn rows(&self) -> usize {
        self.mask.rows()
    }

    pub fn cols(&self) -> usize {
        self.mask.cols()
    }

    pub fn mask(&self) -> &BitMatrix {
        &self.mask
    }

    pub fn is_attended(&self, r: usize, c: usize) -> bool {
        self.mask.get(r, c)
    }

    /// Relative position, defined only where the mask is set.
    pub fn rel(&self, r: usize, c: usize) -> Option<i32> {
        let mut k = 0;
        for col in self.mask.row_iter(r) {
            if col == c {
                return Some(self.rel[r][k]);
            }
            k += 1;
        }
        None
    }

    /// `(column, relative position)` pairs of row `r`, columns ascending.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, i32)> + '_ {
        self.mask.row_iter(r).zip(self.rel[r].iter().copied())
    }

    pub fn attended_cols(&self, r: usize) -> Vec<usize> {
        self.mask.row_iter(r).collect()
    }

    /// Final stack contents after the last position, as original positions.
    pub fn stack_trace(&self) -> &[usize] {
        &self.stack
    }

    /// Original position of each row.
    pub fn row_origins(&self) -> &[usize] {
        &self.row_origins
    }

    /// Original position addressed by each column; `usize::MAX` marks dead
    /// memory columns.
    pub fn col_origins(&self) -> &[usize] {
        &self.col_origins
    }

    pub(crate) fn from_rows(
        rows: usize,
        cols: usize,
        row_entries: Vec<Vec<(usize, i32)>>,
        stack: Vec<usize>,
        row_origins: Vec<usize>,
        col_origins: Vec<usize>,
    ) -> MaskBundle {
        let mut mask = BitMatrix::zeros(rows, cols);
        let mut rel = Vec::with_capacity(rows);
        for (r, mut entries) in row_entries.into_iter().enumerate() {
            entries.sort_unstable_by_key(|(c, _)| *c);
            let mut row_rel = Vec::with_capacity(entries.len());
            for (c, v) in entries {
                mask.set(r, c);
                row_rel.push(v);
            }
            rel.push(row_rel);
        }
        MaskBundle {
            mask,
            rel,
            stack,
            row_origins,
            col_origins,
        }
    }

    /// Textual grid: rows attend top-to-bottom, `1` for attended, `.` for
    /// masked.
    pub fn render_grid(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows() {
            let mut row = vec!['.'; self.cols()];
            for c in self.mask.row_iter(r) {
                row[c] = '1';
            }
            out.extend(row);
            out.push('\n');
        }
        out
    }

    /// Textual relative-position grid: `.` for masked entries.
    pub fn render_rel(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows() {
            let mut cells = vec![".".to_string(); self.cols()];
            for (c, v) in self.row(r) {
                cells[c] = v.to_string();
            }
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}

fn rel_value(scheme: PositionScheme, row: StackEntry, col: StackEntry, clamp: i32) -> i32 {
    match scheme {
        PositionScheme::TreeDepth => {
            clamp_rel(row.depth as i64 - col.depth as i64, clamp)
        }
        PositionScheme::Linear => clamp_rel(row.origin as i64 - col.origin as i64, clamp),
        PositionScheme::None => 0,
    }
}

fn require_depths(seq: &StepSeq, scheme: PositionScheme) -> Result<()> {
    if scheme == PositionScheme::TreeDepth && seq.depths.is_none() {
        return Err(Error::data(
            "tree-depth positions requested but the sequence has no depths",
        ));
    }
    Ok(())
}

/// The stack/compose mask of a whole duplicated sequence.
pub fn stack_compose_mask(
    seq: &StepSeq,
    positions: PositionScheme,
    clamp: i32,
) -> Result<MaskBundle> {
    require_depths(seq, positions)?;
    let n = seq.len();
    let mut stack: Vec<StackEntry> = Vec::new();
    let mut rows: Vec<Vec<(usize, i32)>> = Vec::with_capacity(n);
    for i in 0..n {
        let entry = StackEntry {
            origin: i,
            col: i,
            kind: seq.kinds[i],
            depth: seq.depth(i),
        };
        let mut row = Vec::new();
        apply_step(&mut stack, entry, |e| {
            row.push((e.col, rel_value(positions, entry, e, clamp)));
        })?;
        rows.push(row);
    }
    let trace = stack.iter().map(|e| e.origin).collect();
    Ok(MaskBundle::from_rows(
        n,
        n,
        rows,
        trace,
        (0..n).collect(),
        (0..n).collect(),
    ))
}

/// Plain causal mask: row `i` attends columns `0..=i`; pad rows attend only
/// themselves.
pub fn causal_mask(seq: &StepSeq, positions: PositionScheme, clamp: i32) -> Result<MaskBundle> {
    require_depths(seq, positions)?;
    let n = seq.len();
    let mut rows: Vec<Vec<(usize, i32)>> = Vec::with_capacity(n);
    let mut window: Vec<usize> = Vec::new();
    for i in 0..n {
        let entry = StackEntry {
            origin: i,
            col: i,
            kind: seq.kinds[i],
            depth: seq.depth(i),
        };
        let mut row = Vec::new();
        if seq.kinds[i] == StepKind::Pad {
            row.push((i, 0));
        } else {
            window.push(i);
            for &j in &window {
                let col = StackEntry {
                    origin: j,
                    col: j,
                    kind: seq.kinds[j],
                    depth: seq.depth(j),
                };
                row.push((j, rel_value(positions, entry, col, clamp)));
            }
        }
        rows.push(row);
    }
    Ok(MaskBundle::from_rows(
        n,
        n,
        rows,
        window,
        (0..n).collect(),
        (0..n).collect(),
    ))
}

/// Relative-position values for an existing mask, parallel to the ascending
/// set bits of each row.
pub fn relative_positions(
    seq: &StepSeq,
    positions: PositionScheme,
    mask: &BitMatrix,
    clamp: i32,
) -> Result<Vec<Vec<i32>>> {
    require_depths(seq, positions)?;
    let mut rel = Vec::with_capacity(mask.rows());
    for r in 0..mask.rows() {
        let row_entry = StackEntry {
            origin: r,
            col: r,
            kind: seq.kinds[r],
            depth: seq.depth(r),
        };
        let row: Vec<i32> = mask
            .row_iter(r)
            .map(|c| {
                let col_entry = StackEntry {
                    origin: c,
                    col: c,
                    kind: seq.kinds[c],
                    depth: seq.depth(c),
                };
                rel_value(positions, row_entry, col_entry, clamp)
            })
            .collect();
        rel.push(row);
    }
    Ok(rel)
}

/// Stack contents right after processing position `i`: exactly the positions
/// any later position may still attend.
pub fn attendable_set(seq: &StepSeq, i: usize) -> Result<Vec<usize>> {
    if i >= seq.len() {
        return Err(Error::data(format!(
            "position {i} out of range for sequence of length {}",
            seq.len()
        )));
    }
    let mut stack: Vec<StackEntry> = Vec::new();
    for p in 0..=i {
        let entry = StackEntry {
            origin: p,
            col: p,
            kind: seq.kinds[p],
            depth: seq.depth(p),
        };
        apply_step(&mut stack, entry, |_| {})?;
    }
    Ok(stack.iter().map(|e| e.origin).collect())
}
