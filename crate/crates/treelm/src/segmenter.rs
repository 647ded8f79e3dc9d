//! Fixed-length segmentation and the pruned recurrent memory.
//!
//! Long sequences are processed as consecutive segments of `L` tokens. A
//! memory of at most `M` retained positions carries hidden states between
//! segments. Under stack/compose masking only positions still on the stack
//! can ever be attended again, so the memory keeps exactly those; under
//! causal masking it keeps the last `M` positions as usual. Slot bookkeeping
//! records the original position, depth, and kind of every retained row so
//! segment masks and relative positions match the monolithic computation
//! exactly.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::maskgen::{
    apply_step, AttentionKind, MaskBundle, MaskMode, PositionScheme, StackEntry, StepKind, StepSeq,
};
use crate::model::Real;

/// Default segment length and memory capacity.
pub const DEFAULT_SEGMENT_LEN: usize = 256;
pub const DEFAULT_MEMORY_LEN: usize = 256;

/// A sequence split into `ceil(T/L)` segments, the last padded with an inert
/// pad token that is excluded from loss, attention, and memory.
#[derive(Clone, Debug)]
pub struct SegmentPlan {
    steps: StepSeq,
    seg_len: usize,
    mem_cap: usize,
    real_len: usize,
}

impl SegmentPlan {
    pub fn new(steps: StepSeq, seg_len: usize, mem_cap: usize, pad_id: u32) -> SegmentPlan {
        assert!(seg_len >= 1, "segment length must be at least 1");
        let real_len = steps.len();
        let padded = real_len.div_ceil(seg_len).max(1) * seg_len;
        let mut steps = steps;
        while steps.len() < padded {
            steps.ids.push(pad_id);
            steps.kinds.push(StepKind::Pad);
            if let Some(d) = steps.depths.as_mut() {
                d.push(0);
            }
        }
        SegmentPlan {
            steps,
            seg_len,
            mem_cap,
            real_len,
        }
    }

    pub fn seg_len(&self) -> usize {
        self.seg_len
    }

    pub fn mem_cap(&self) -> usize {
        self.mem_cap
    }

    /// Length before padding.
    pub fn real_len(&self) -> usize {
        self.real_len
    }

    pub fn n_segments(&self) -> usize {
        self.steps.len() / self.seg_len
    }

    /// Padded steps of segment `t`.
    pub fn segment(&self, t: usize) -> SegmentView<'_> {
        let start = t * self.seg_len;
        let end = start + self.seg_len;
        SegmentView {
            start,
            ids: &self.steps.ids[start..end],
            kinds: &self.steps.kinds[start..end],
        }
    }

    /// Number of non-pad positions in segment `t`.
    pub fn real_in_segment(&self, t: usize) -> usize {
        let start = t * self.seg_len;
        self.real_len.saturating_sub(start).min(self.seg_len)
    }

    pub fn steps(&self) -> &StepSeq {
        &self.steps
    }

    fn depth(&self, pos: usize) -> u32 {
        self.steps.depth(pos)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SegmentView<'a> {
    /// Original position of the first token.
    pub start: usize,
    pub ids: &'a [u32],
    pub kinds: &'a [StepKind],
}

/// One retained memory position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub origin: usize,
    pub depth: u32,
    pub kind: StepKind,
}

/// Slot bookkeeping shared by mask construction and the memory update;
/// origins are strictly increasing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MemorySlots {
    slots: Vec<Slot>,
}

impl MemorySlots {
    pub fn empty() -> MemorySlots {
        MemorySlots::default()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn origins(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.origin).collect()
    }

    fn to_stack(&self) -> Vec<StackEntry> {
        self.slots
            .iter()
            .enumerate()
            .map(|(col, s)| StackEntry {
                origin: s.origin,
                col,
                kind: s.kind,
                depth: s.depth,
            })
            .collect()
    }
}

/// The `L x (M+L)` mask of segment `t` given the carried memory slots.
///
/// Columns `0..M` address memory slots (left-aligned, dead columns never
/// set); columns `M..` address the current segment. Mask and relative
/// positions are computed against original positions, so every entry equals
/// the corresponding entry of the monolithic mask.
pub fn segment_mask(
    plan: &SegmentPlan,
    t: usize,
    memory: &MemorySlots,
    mode: &MaskMode,
    clamp: i32,
) -> Result<MaskBundle> {
    if memory.len() > plan.mem_cap {
        return Err(Error::data(format!(
            "memory holds {} slots but the plan allows {}",
            memory.len(),
            plan.mem_cap
        )));
    }
    if let Some(last) = memory.slots.last() {
        if last.origin >= t * plan.seg_len {
            return Err(Error::data(
                "memory slot origins overlap the current segment",
            ));
        }
    }
    if mode.positions == PositionScheme::TreeDepth && plan.steps.depths.is_none() {
        return Err(Error::data(
            "tree-depth positions requested but the sequence has no depths",
        ));
    }

    let seg = plan.segment(t);
    let l = plan.seg_len;
    let m = plan.mem_cap;
    let cols = m + l;

    let rel_of = |row: StackEntry, col: StackEntry| -> i32 {
        match mode.positions {
            PositionScheme::TreeDepth => {
                (row.depth as i64 - col.depth as i64).clamp(-(clamp as i64), clamp as i64) as i32
            }
            PositionScheme::Linear => {
                (row.origin as i64 - col.origin as i64).clamp(-(clamp as i64), clamp as i64) as i32
            }
            PositionScheme::None => 0,
        }
    };

    let mut rows: Vec<Vec<(usize, i32)>> = Vec::with_capacity(l);
    let mut col_origins = vec![usize::MAX; cols];
    for (i, s) in memory.slots.iter().enumerate() {
        col_origins[i] = s.origin;
    }
    for i in 0..l {
        col_origins[m + i] = seg.start + i;
    }

    match mode.attention {
        AttentionKind::StackCompose => {
            let mut stack = memory.to_stack();
            for i in 0..l {
                let origin = seg.start + i;
                let entry = StackEntry {
                    origin,
                    col: m + i,
                    kind: seg.kinds[i],
                    depth: plan.depth(origin),
                };
                let mut row = Vec::new();
                apply_step(&mut stack, entry, |e| {
                    row.push((e.col, rel_of(entry, e)));
                })?;
                rows.push(row);
            }
            let trace = stack.iter().map(|e| e.origin).collect();
            Ok(MaskBundle::from_rows(
                l,
                cols,
                rows,
                trace,
                (seg.start..seg.start + l).collect(),
                col_origins,
            ))
        }
        AttentionKind::Causal => {
            for i in 0..l {
                let origin = seg.start + i;
                let entry = StackEntry {
                    origin,
                    col: m + i,
                    kind: seg.kinds[i],
                    depth: plan.depth(origin),
                };
                let mut row = Vec::new();
                if seg.kinds[i] == StepKind::Pad {
                    row.push((m + i, 0));
                } else {
                    for (c, s) in memory.slots.iter().enumerate() {
                        let col = StackEntry {
                            origin: s.origin,
                            col: c,
                            kind: s.kind,
                            depth: s.depth,
                        };
                        row.push((c, rel_of(entry, col)));
                    }
                    for j in 0..=i {
                        if seg.kinds[j] == StepKind::Pad {
                            continue;
                        }
                        let jorigin = seg.start + j;
                        let col = StackEntry {
                            origin: jorigin,
                            col: m + j,
                            kind: seg.kinds[j],
                            depth: plan.depth(jorigin),
                        };
                        row.push((m + j, rel_of(entry, col)));
                    }
                }
                rows.push(row);
            }
            let trace = memory
                .origins()
                .into_iter()
                .chain(
                    (0..l)
                        .filter(|&i| seg.kinds[i] != StepKind::Pad)
                        .map(|i| seg.start + i),
                )
                .collect();
            Ok(MaskBundle::from_rows(
                l,
                cols,
                rows,
                trace,
                (seg.start..seg.start + l).collect(),
                col_origins,
            ))
        }
    }
}

/// Slot contents after processing segment `t`, given the slots before it.
/// Returns the new slots and the number of truncated (dropped) positions.
pub fn advance_slots(
    slots: &MemorySlots,
    plan: &SegmentPlan,
    t: usize,
    mode: &MaskMode,
) -> Result<(MemorySlots, usize)> {
    let seg = plan.segment(t);
    let m = plan.mem_cap;
    let next: Vec<Slot> = match mode.attention {
        AttentionKind::StackCompose => {
            let mut stack = slots.to_stack();
            for i in 0..plan.seg_len {
                let origin = seg.start + i;
                let entry = StackEntry {
                    origin,
                    col: m + i,
                    kind: seg.kinds[i],
                    depth: plan.depth(origin),
                };
                apply_step(&mut stack, entry, |_| {})?;
            }
            stack
                .iter()
                .map(|e| Slot {
                    origin: e.origin,
                    depth: e.depth,
                    kind: e.kind,
                })
                .collect()
        }
        AttentionKind::Causal => slots
            .slots
            .iter()
            .copied()
            .chain((0..plan.seg_len).filter_map(|i| {
                if seg.kinds[i] == StepKind::Pad {
                    None
                } else {
                    let origin = seg.start + i;
                    Some(Slot {
                        origin,
                        depth: plan.depth(origin),
                        kind: seg.kinds[i],
                    })
                }
            }))
            .collect(),
    };
    // keep the most recent M slots, dropping the deepest-in-past first
    let dropped = next.len().saturating_sub(m);
    let kept = next[dropped..].to_vec();
    Ok((MemorySlots { slots: kept }, dropped))
}

/// One-token streaming (ancestral decoding): the mask row for the next
/// token given the retained slots, as a `1 x (M+1)` bundle whose last
/// column addresses the token itself.
pub fn stream_mask(
    slots: &MemorySlots,
    mem_cap: usize,
    origin: usize,
    kind: StepKind,
    depth: u32,
    mode: &MaskMode,
    clamp: i32,
) -> Result<MaskBundle> {
    if slots.len() > mem_cap {
        return Err(Error::data("memory slots exceed the capacity"));
    }
    let rel_of = |row: StackEntry, col: StackEntry| -> i32 {
        match mode.positions {
            PositionScheme::TreeDepth => {
                (row.depth as i64 - col.depth as i64).clamp(-(clamp as i64), clamp as i64) as i32
            }
            PositionScheme::Linear => {
                (row.origin as i64 - col.origin as i64).clamp(-(clamp as i64), clamp as i64) as i32
            }
            PositionScheme::None => 0,
        }
    };
    let entry = StackEntry {
        origin,
        col: mem_cap,
        kind,
        depth,
    };
    let mut col_origins = vec![usize::MAX; mem_cap + 1];
    for (i, s) in slots.slots.iter().enumerate() {
        col_origins[i] = s.origin;
    }
    col_origins[mem_cap] = origin;

    let mut row = Vec::new();
    match mode.attention {
        AttentionKind::StackCompose => {
            let mut stack = slots.to_stack();
            apply_step(&mut stack, entry, |e| {
                row.push((e.col, rel_of(entry, e)));
            })?;
        }
        AttentionKind::Causal => {
            for (c, s) in slots.slots.iter().enumerate() {
                let col = StackEntry {
                    origin: s.origin,
                    col: c,
                    kind: s.kind,
                    depth: s.depth,
                };
                row.push((c, rel_of(entry, col)));
            }
            row.push((mem_cap, 0));
        }
    }
    Ok(MaskBundle::from_rows(
        1,
        mem_cap + 1,
        vec![row],
        Vec::new(),
        vec![origin],
        col_origins,
    ))
}

/// Slot contents after streaming one token, truncated to `mem_cap`.
pub fn stream_advance(
    slots: &MemorySlots,
    mem_cap: usize,
    origin: usize,
    kind: StepKind,
    depth: u32,
    mode: &MaskMode,
) -> Result<(MemorySlots, usize)> {
    let next: Vec<Slot> = match mode.attention {
        AttentionKind::StackCompose => {
            let mut stack = slots.to_stack();
            let entry = StackEntry {
                origin,
                col: mem_cap,
                kind,
                depth,
            };
            apply_step(&mut stack, entry, |_| {})?;
            stack
                .iter()
                .map(|e| Slot {
                    origin: e.origin,
                    depth: e.depth,
                    kind: e.kind,
                })
                .collect()
        }
        AttentionKind::Causal => {
            let mut v = slots.slots.clone();
            if kind != StepKind::Pad {
                v.push(Slot {
                    origin,
                    depth,
                    kind,
                });
            }
            v
        }
    };
    let dropped = next.len().saturating_sub(mem_cap);
    Ok((MemorySlots {
        slots: next[dropped..].to_vec(),
    }, dropped))
}

/// Per-layer retained hidden rows plus the slot bookkeeping.
#[derive(Clone, Debug)]
pub struct MemoryState<F> {
    pub slots: MemorySlots,
    /// One matrix per layer; row `i` is the retained hidden state (the input
    /// to that layer) for `slots[i]`.
    pub layers: Vec<Array2<F>>,
    /// Count of positions dropped because the attendable set exceeded `M`.
    pub truncated: u64,
}

impl<F: Real> MemoryState<F> {
    pub fn empty(n_layers: usize, d_model: usize) -> MemoryState<F> {
        MemoryState {
            slots: MemorySlots::empty(),
            layers: vec![Array2::zeros((0, d_model)); n_layers],
            truncated: 0,
        }
    }
}

/// Applies the memory update after segment `t`: the new slots are the
/// attendable set after the segment's last position (stack/compose) or the
/// trailing window (causal), with hidden rows gathered from the previous
/// memory or from this segment's per-layer inputs.
pub fn update_memory<F: Real>(
    memory: MemoryState<F>,
    segment_layer_inputs: &[Array2<F>],
    plan: &SegmentPlan,
    t: usize,
    mode: &MaskMode,
) -> Result<MemoryState<F>> {
    assert_eq!(memory.layers.len(), segment_layer_inputs.len());
    let (new_slots, dropped) = advance_slots(&memory.slots, plan, t, mode)?;
    let seg_start = t * plan.seg_len;
    let old_index: std::collections::HashMap<usize, usize> = memory
        .slots
        .slots()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.origin, i))
        .collect();

    let d = segment_layer_inputs.first().map(|a| a.ncols()).unwrap_or(0);
    let mut layers = Vec::with_capacity(memory.layers.len());
    for (old, seg_h) in memory.layers.iter().zip(segment_layer_inputs) {
        let mut rows = Array2::zeros((new_slots.len(), d));
        for (i, slot) in new_slots.slots().iter().enumerate() {
            if slot.origin >= seg_start {
                rows.row_mut(i).assign(&seg_h.row(slot.origin - seg_start));
            } else {
                let j = *old_index
                    .get(&slot.origin)
                    .ok_or_else(|| Error::data("memory slot origin not found"))?;
                rows.row_mut(i).assign(&old.row(j));
            }
        }
        layers.push(rows);
    }
    Ok(MemoryState {
        slots: new_slots,
        layers,
        truncated: memory.truncated + dropped as u64,
    })
}
