use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskgen::StepSeq;
use crate::model::forward::sequence_forward_backward;
use crate::model::{Model, ModelConfig, ParamSet, Prepared, Real};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub lr_min: f64,
    pub warmup_steps: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    /// Evaluate on the validation set every this many steps (and at the end).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            lr: 3e-4,
            lr_min: 1e-5,
            warmup_steps: 100,
            epochs: 3,
            batch_size: 16,
            clip_norm: 1.0,
            eval_every: 50,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    pub split: String,
    /// Mean negative log likelihood per prediction event.
    pub nll: f64,
    /// `exp(nll)`: per-event perplexity.
    pub ppl: f64,
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub steps: u64,
    pub best_val_nll: f64,
    pub best_step: u64,
    pub metrics: Vec<MetricRecord>,
}

struct Adam<F> {
    m: ParamSet<F>,
    v: ParamSet<F>,
    t: u64,
}

impl<F: Real> Adam<F> {
    fn new(params: &ParamSet<F>) -> Adam<F> {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ParamSet<F>, grads: &ParamSet<F>, lr: f64) {
        self.t += 1;
        let b1 = F::from_f64(0.9);
        let b2 = F::from_f64(0.999);
        let eps = F::from_f64(1e-8);
        let one = F::one();
        let c1 = F::from_f64(1.0 / (1.0 - 0.9f64.powi(self.t as i32)));
        let c2 = F::from_f64(1.0 / (1.0 - 0.999f64.powi(self.t as i32)));
        let lr = F::from_f64(lr);
        for (((_, p), (_, g)), ((_, m), (_, v))) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let mh = *m * c1;
                    let vh = *v * c2;
                    *p = *p - lr * mh / (vh.sqrt() + eps);
                });
        }
    }
}

fn lr_at(tcfg: &TrainConfig, step: usize, total_steps: usize) -> f64 {
    if tcfg.warmup_steps > 0 && step <= tcfg.warmup_steps {
        return tcfg.lr * step as f64 / tcfg.warmup_steps as f64;
    }
    let decay_span = total_steps.saturating_sub(tcfg.warmup_steps).max(1);
    let progress = (step - tcfg.warmup_steps.min(step)) as f64 / decay_span as f64;
    let progress = progress.clamp(0.0, 1.0);
    tcfg.lr_min + 0.5 * (tcfg.lr - tcfg.lr_min) * (1.0 + (std::f64::consts::PI * progress).cos())
}

fn mean_valid_nll<F: Real>(model: &Model<F>, preps: &[Prepared]) -> Result<f64> {
    let scored: Vec<(f64, usize)> = preps
        .par_iter()
        .map(|p| {
            let events = model.event_logprobs(p)?;
            Ok((
                events.iter().map(|e| -e.logprob).sum::<f64>(),
                events.len(),
            ))
        })
        .collect::<Result<_>>()?;
    let mut nll = 0.0;
    let mut n = 0usize;
    for (s, c) in scored {
        nll += s;
        n += c;
    }
    if n == 0 {
        return Err(Error::data("validation set yields no prediction events"));
    }
    Ok(nll / n as f64)
}

/// Trains a fresh model on encoded sequences, selecting the checkpoint with
/// the lowest validation loss. Deterministic for a fixed config: parameter
/// initialization and batch order derive from `cfg.seed`.
pub fn train<F: Real>(
    cfg: ModelConfig,
    tcfg: &TrainConfig,
    train_seqs: &[StepSeq],
    valid_seqs: &[StepSeq],
    mut on_metric: impl FnMut(&MetricRecord),
) -> Result<(Model<F>, TrainSummary)> {
    if train_seqs.is_empty() {
        return Err(Error::data("empty training corpus"));
    }
    cfg.validate()?;
    let mut model: Model<F> = Model::new(cfg.clone())?;

    let train_preps: Vec<Prepared> = train_seqs
        .par_iter()
        .map(|s| Prepared::new(&cfg, s))
        .collect::<Result<_>>()?;
    let valid_preps: Vec<Prepared> = valid_seqs
        .par_iter()
        .map(|s| Prepared::new(&cfg, s))
        .collect::<Result<_>>()?;

    let batches_per_epoch = train_preps.len().div_ceil(tcfg.batch_size);
    let total_steps = batches_per_epoch * tcfg.epochs;

    let mut adam = Adam::new(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..train_preps.len()).collect();

    let mut metrics = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_step = 0u64;
    let mut best_params = model.params.clone();
    let mut step = 0usize;
    let mut window_nll = 0.0;
    let mut window_events = 0usize;

    let evaluate = |model: &Model<F>,
                        step: usize,
                        window: (f64, usize),
                        metrics: &mut Vec<MetricRecord>,
                        on_metric: &mut dyn FnMut(&MetricRecord)|
     -> Result<f64> {
        if window.1 > 0 {
            let nll = window.0 / window.1 as f64;
            let rec = MetricRecord {
                step: step as u64,
                split: "train".into(),
                nll,
                ppl: nll.exp(),
            };
            on_metric(&rec);
            metrics.push(rec);
        }
        let val = if valid_preps.is_empty() {
            f64::INFINITY
        } else {
            let nll = mean_valid_nll(model, &valid_preps)?;
            let rec = MetricRecord {
                step: step as u64,
                split: "valid".into(),
                nll,
                ppl: nll.exp(),
            };
            on_metric(&rec);
            metrics.push(rec);
            nll
        };
        Ok(val)
    };

    for _epoch in 0..tcfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(tcfg.batch_size) {
            step += 1;
            let mut grads = model.params.zeros_like();
            let mut batch_nll = 0.0;
            let mut batch_events = 0usize;
            for &idx in chunk {
                let (s, n) =
                    sequence_forward_backward(&cfg, &model.params, &train_preps[idx], &mut grads)?;
                batch_nll += s;
                batch_events += n;
            }
            if batch_events == 0 {
                continue;
            }
            if !batch_nll.is_finite() {
                return Err(Error::numeric(format!(
                    "diverged at step {step}: loss is not finite"
                )));
            }
            grads.scale(1.0 / batch_events as f64);
            if tcfg.clip_norm > 0.0 {
                let norm = grads.global_norm();
                if norm > tcfg.clip_norm {
                    grads.scale(tcfg.clip_norm / norm);
                }
            }
            adam.step(&mut model.params, &grads, lr_at(tcfg, step, total_steps));
            if !model.params.all_finite() {
                return Err(Error::numeric(format!(
                    "diverged at step {step}: parameters are not finite"
                )));
            }

            window_nll += batch_nll;
            window_events += batch_events;
            if tcfg.eval_every > 0 && step % tcfg.eval_every == 0 {
                let val = evaluate(
                    &model,
                    step,
                    (window_nll, window_events),
                    &mut metrics,
                    &mut on_metric,
                )?;
                window_nll = 0.0;
                window_events = 0;
                if val < best_val {
                    best_val = val;
                    best_step = step as u64;
                    best_params = model.params.clone();
                }
            }
        }
    }

    // final evaluation, in case the last interval did not line up
    let val = evaluate(
        &model,
        step,
        (window_nll, window_events),
        &mut metrics,
        &mut on_metric,
    )?;
    if val < best_val {
        best_val = val;
        best_step = step as u64;
        best_params = model.params.clone();
    }

    let best = Model::from_params(cfg, best_params)?;
    Ok((
        best,
        TrainSummary {
            steps: step as u64,
            best_val_nll: best_val,
            best_step,
            metrics,
        },
    ))
}
