use crate::error::{Error, Result};
use crate::model::forward::sequence_forward_backward;
use crate::model::{Model, Prepared};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub n_checked: usize,
}

/// Analytic gradients against central finite differences, in 64-bit.
///
/// The loss is the mean negative log likelihood over all prediction events
/// of `preps`. The relative error of an entry uses `max(|analytic|,
/// |numeric|)` as denominator; entries where both sides are below `1e-6`
/// compare absolutely.
pub fn grad_check(model: &Model<f64>, preps: &[Prepared], eps: f64) -> Result<GradCheckReport> {
    if preps.is_empty() {
        return Err(Error::data("gradient check needs at least one sequence"));
    }
    // memory between segments is detached (truncated backpropagation), so
    // finite differences only match the analytic gradient when every
    // sequence fits a single segment
    if preps.iter().any(|p| p.plan.n_segments() > 1) {
        return Err(Error::data(
            "gradient check requires single-segment sequences (memory is detached)",
        ));
    }

    // forward-only loss for the finite differences
    let loss = |m: &Model<f64>| -> Result<f64> {
        let mut nll = 0.0;
        let mut events = 0usize;
        for p in preps {
            let scored = m.event_logprobs(p)?;
            nll -= scored.iter().map(|e| e.logprob).sum::<f64>();
            events += scored.len();
        }
        Ok(nll / events as f64)
    };

    // analytic gradient of the mean
    let mut grads = model.params.zeros_like();
    let mut events = 0usize;
    for p in preps {
        let (_, n) = sequence_forward_backward(&model.cfg, &model.params, p, &mut grads)?;
        events += n;
    }
    grads.scale(1.0 / events as f64);

    let mut probe = Model {
        cfg: model.cfg.clone(),
        params: model.params.clone(),
    };
    let n = probe.params.flat_len();
    let mut max_rel = 0.0f64;
    let mut worst = String::new();
    for i in 0..n {
        probe.params.flat_add(i, eps);
        let up = loss(&probe)?;
        probe.params.flat_add(i, -2.0 * eps);
        let down = loss(&probe)?;
        probe.params.flat_add(i, eps);

        let numeric = (up - down) / (2.0 * eps);
        let analytic = grads.flat_get(i);
        let denom = analytic.abs().max(numeric.abs());
        // below ~1e-6 the central difference sits at the f64 noise floor
        // (ulp(loss) / 2eps), so near-zero gradients compare absolutely
        let err = if denom < 1e-6 {
            (analytic - numeric).abs()
        } else {
            (analytic - numeric).abs() / denom
        };
        if err > max_rel {
            max_rel = err;
            let (name, off) = grads.flat_name(i);
            worst = format!("{name}[{off}]");
        }
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        worst_param: worst,
        n_checked: n,
    })
}
