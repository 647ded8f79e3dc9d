//! A small autoregressive transformer over action sequences.
//!
//! The model follows the recurrent-segment scheme: token embeddings feed a
//! stack of layers, each a multi-head self-attention over the current
//! segment plus retained memory, followed by a position-wise feed-forward
//! network, with residual connections and post-norm layer normalization. The
//! attention score between positions `i` and `j` is
//! `(q_i + u)^T k_j + (q_i + v)^T r_ij`, where `r_ij` embeds the clamped
//! relative position. Output logits tie the embedding matrix.
//!
//! Compose positions (first closing copies) emit no prediction; a leading
//! beginning-of-sequence token makes the first real action a prediction
//! event, so the number of events equals the raw sequence length.

mod checkpoint;
mod decoder;
pub(crate) mod forward;
mod gradcheck;
mod params;
mod sample;
mod scorer;
mod train;


pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use decoder::Decoder;
pub use forward::Blackout;
pub use gradcheck::{grad_check, GradCheckReport};
pub use params::{init_params, ParamSet};
pub use sample::{sample_tree, SampleOutcome};
pub use scorer::TreeScorer;
pub use train::{train, MetricRecord, TrainConfig, TrainSummary};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskgen::{MaskBundle, MaskMode, StepKind, StepSeq};
use crate::segmenter::{advance_slots, segment_mask, MemorySlots, MemoryState, SegmentPlan};
use crate::treebank::vocab_ids;

/// Floating-point scalar for model math: f32 for training, f64 for
/// verification paths.
pub trait Real: ndarray::NdFloat {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> f32 {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> f64 {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub mode: MaskMode,
    pub seg_len: usize,
    pub mem_len: usize,
    /// Relative positions are clamped to `[-pos_clamp, pos_clamp]`.
    pub pos_clamp: i32,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::data("layer count must be at least 1"));
        }
        if self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::data(format!(
                "model width {} must be divisible by head count {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size < 4 {
            return Err(Error::data("vocabulary too small"));
        }
        if self.seg_len == 0 {
            return Err(Error::data("segment length must be at least 1"));
        }
        if self.pos_clamp < 0 {
            return Err(Error::data("position clamp must be nonnegative"));
        }
        self.mode.validate()
    }

    /// Rows of the relative-position embedding table.
    pub fn pos_rows(&self) -> usize {
        2 * self.pos_clamp as usize + 1
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Which positions predict and what they predict: position `i` predicts the
/// token at `i + 1` unless `i` is a compose position or a pad, and pads are
/// never targets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictionSchedule {
    pub predict: Vec<bool>,
    pub targets: Vec<u32>,
}

impl PredictionSchedule {
    pub fn for_steps(steps: &StepSeq) -> PredictionSchedule {
        let n = steps.len();
        let mut predict = vec![false; n];
        let mut targets = vec![0u32; n];
        for i in 0..n {
            if i + 1 >= n {
                break;
            }
            let emits = !matches!(steps.kinds[i], StepKind::CloseCompose | StepKind::Pad)
                && steps.kinds[i + 1] != StepKind::Pad;
            if emits {
                debug_assert_ne!(steps.kinds[i + 1], StepKind::CloseStack);
                predict[i] = true;
                targets[i] = steps.ids[i + 1];
            }
        }
        PredictionSchedule { predict, targets }
    }

    pub fn n_events(&self) -> usize {
        self.predict.iter().filter(|&&p| p).count()
    }
}

/// One prediction event: the emitting position, the position of the target
/// token, and its log probability.
#[derive(Clone, Copy, Debug)]
pub struct EventScore {
    pub pos: usize,
    pub target_pos: usize,
    pub target: u32,
    pub logprob: f64,
}

/// A sequence made ready for the model: beginning-of-sequence prepended,
/// segment plan and per-segment masks precomputed, prediction schedule
/// derived. Masks depend only on the token sequence, so they are reusable
/// across epochs.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub plan: SegmentPlan,
    pub bundles: Vec<MaskBundle>,
    pub slots: Vec<MemorySlots>,
    pub schedule: PredictionSchedule,
}

impl Prepared {
    /// `steps` is the encoded sequence without the leading
    /// beginning-of-sequence token.
    pub fn new(cfg: &ModelConfig, steps: &StepSeq) -> Result<Prepared> {
        Prepared::with_lengths(cfg, steps, cfg.seg_len, cfg.mem_len)
    }

    pub fn with_lengths(
        cfg: &ModelConfig,
        steps: &StepSeq,
        seg_len: usize,
        mem_len: usize,
    ) -> Result<Prepared> {
        cfg.mode.validate()?;
        let full = StepSeq {
            ids: {
                let mut v = vec![vocab_ids::BOS];
                v.extend_from_slice(&steps.ids);
                v
            },
            kinds: {
                let mut v = vec![StepKind::Bos];
                v.extend_from_slice(&steps.kinds);
                v
            },
            depths: steps.depths.as_ref().map(|d| {
                let mut v = vec![0];
                v.extend_from_slice(d);
                v
            }),
        };
        let plan = SegmentPlan::new(full, seg_len, mem_len, vocab_ids::PAD);
        let mut bundles = Vec::with_capacity(plan.n_segments());
        let mut slots = Vec::with_capacity(plan.n_segments());
        let mut current = MemorySlots::empty();
        for t in 0..plan.n_segments() {
            bundles.push(segment_mask(&plan, t, &current, &cfg.mode, cfg.pos_clamp)?);
            slots.push(current.clone());
            let (next, _) = advance_slots(&current, &plan, t, &cfg.mode)?;
            current = next;
        }
        let schedule = PredictionSchedule::for_steps(plan.steps());
        Ok(Prepared {
            plan,
            bundles,
            slots,
            schedule,
        })
    }

    /// Sequence length including the leading token, excluding pads.
    pub fn len_with_bos(&self) -> usize {
        self.plan.real_len()
    }
}

pub struct Model<F: Real> {
    pub cfg: ModelConfig,
    pub params: ParamSet<F>,
}

impl<F: Real> Model<F> {
    /// Fresh model with seeded initialization.
    pub fn new(cfg: ModelConfig) -> Result<Model<F>> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let params = init_params(&cfg, &mut rng);
        Ok(Model { cfg, params })
    }

    pub fn from_params(cfg: ModelConfig, params: ParamSet<F>) -> Result<Model<F>> {
        cfg.validate()?;
        Ok(Model { cfg, params })
    }

    pub fn cast<G: Real>(&self) -> Model<G> {
        Model {
            cfg: self.cfg.clone(),
            params: self.params.cast(),
        }
    }

    pub fn prepare(&self, steps: &StepSeq) -> Result<Prepared> {
        Prepared::new(&self.cfg, steps)
    }

    /// Full-sequence logits (real positions only, pads dropped), threading
    /// memory across segments.
    pub fn forward_logits(&self, prep: &Prepared) -> Result<Array2<F>> {
        forward::sequence_logits(&self.cfg, &self.params, prep, None)
    }

    /// Same, with the test-only key/value blackout applied.
    pub fn forward_logits_blackout(
        &self,
        prep: &Prepared,
        blackout: &Blackout,
    ) -> Result<Array2<F>> {
        forward::sequence_logits(&self.cfg, &self.params, prep, Some(blackout))
    }

    /// Final-layer hidden states for all real positions.
    pub fn hidden_states(&self, prep: &Prepared) -> Result<Array2<F>> {
        forward::sequence_hidden(&self.cfg, &self.params, prep)
    }

    /// Per-event log probabilities under the prediction schedule.
    pub fn event_logprobs(&self, prep: &Prepared) -> Result<Vec<EventScore>> {
        forward::sequence_events(&self.cfg, &self.params, prep)
    }

    /// Mean negative log likelihood over prediction events.
    pub fn loss(&self, prep: &Prepared) -> Result<f64> {
        let events = self.event_logprobs(prep)?;
        if events.is_empty() {
            return Err(Error::data("no prediction events in sequence"));
        }
        let total: f64 = events.iter().map(|e| e.logprob).sum();
        Ok(-total / events.len() as f64)
    }

    /// Sum of event log probabilities: the joint log probability of the
    /// sequence.
    pub fn sequence_logprob(&self, prep: &Prepared) -> Result<f64> {
        Ok(self.event_logprobs(prep)?.iter().map(|e| e.logprob).sum())
    }

    pub fn memory_state(&self) -> MemoryState<F> {
        MemoryState::empty(self.cfg.n_layers, self.cfg.d_model)
    }
}
