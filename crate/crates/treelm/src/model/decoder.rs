use std::collections::HashMap;

use ndarray::{Array1, Array2};

use crate::error::Result;
use crate::maskgen::StepKind;
use crate::model::forward::segment_forward;
use crate::model::{Model, Real};
use crate::segmenter::{stream_advance, stream_mask, MemoryState};

/// Incremental one-token decoding over the recurrent memory: each pushed
/// token runs a single-row forward against the retained slots, so a whole
/// sequence costs the same as one teacher-forced pass.
pub struct Decoder<'a, F: Real> {
    model: &'a Model<F>,
    mem: MemoryState<F>,
    pos: usize,
}

impl<'a, F: Real> Decoder<'a, F> {
    pub fn new(model: &'a Model<F>) -> Decoder<'a, F> {
        Decoder {
            mem: model.memory_state(),
            model,
            pos: 0,
        }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    /// Count of retained positions dropped because the attendable set
    /// exceeded the memory capacity.
    pub fn truncated(&self) -> u64 {
        self.mem.truncated
    }

    /// Feeds one token and returns its logits row (the distribution over
    /// the next token, for positions that predict).
    pub fn push(&mut self, id: u32, kind: StepKind, depth: u32) -> Result<Array1<F>> {
        let cfg = &self.model.cfg;
        let cap = cfg.mem_len;
        let bundle = stream_mask(
            &self.mem.slots,
            cap,
            self.pos,
            kind,
            depth,
            &cfg.mode,
            cfg.pos_clamp,
        )?;
        let run = segment_forward(
            cfg,
            &self.model.params,
            &[id],
            &bundle,
            &self.mem,
            None,
            false,
        )?;

        let (new_slots, dropped) =
            stream_advance(&self.mem.slots, cap, self.pos, kind, depth, &cfg.mode)?;
        let old_index: HashMap<usize, usize> = self
            .mem
            .slots
            .slots()
            .iter()
            .enumerate()
            .map(|(i, s)| (s.origin, i))
            .collect();
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for k in 0..cfg.n_layers {
            let mut rows = Array2::zeros((new_slots.len(), cfg.d_model));
            for (i, slot) in new_slots.slots().iter().enumerate() {
                if slot.origin == self.pos {
                    rows.row_mut(i).assign(&run.levels[k].row(0));
                } else {
                    rows.row_mut(i)
                        .assign(&self.mem.layers[k].row(old_index[&slot.origin]));
                }
            }
            layers.push(rows);
        }
        self.mem = MemoryState {
            slots: new_slots,
            layers,
            truncated: self.mem.truncated + dropped as u64,
        };
        self.pos += 1;
        Ok(run.logits.row(0).to_owned())
    }
}
