use std::collections::HashSet;

use ndarray::{concatenate, s, Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::maskgen::MaskBundle;
use crate::model::{EventScore, ModelConfig, ParamSet, Prepared, Real};
use crate::segmenter::{update_memory, MemoryState, SegmentPlan};

const LN_EPS: f64 = 1e-5;

/// Test-only key/value blackout: for query rows with original position
/// strictly greater than `after`, the key/value contribution of any attended
/// position in `zeroed` is replaced by zeros. With a correct mask those
/// positions are never attended there, so logits must not change.
#[derive(Clone, Debug)]
pub struct Blackout {
    pub after: usize,
    pub zeroed: HashSet<usize>,
}

fn gelu<F: Real>(x: F) -> F {
    let c = F::from_f64(0.7978845608028654); // sqrt(2/pi)
    let a = F::from_f64(0.044715);
    let half = F::from_f64(0.5);
    let u = c * (x + a * x * x * x);
    half * x * (F::one() + u.tanh())
}

fn gelu_prime<F: Real>(x: F) -> F {
    let c = F::from_f64(0.7978845608028654);
    let a = F::from_f64(0.044715);
    let half = F::from_f64(0.5);
    let three = F::from_f64(3.0);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    half * (F::one() + t) + half * x * (F::one() - t * t) * c * (F::one() + three * a * x * x)
}

/// Row-wise layer norm; returns output, normalized rows, and 1/std per row.
fn ln_forward<F: Real>(
    x: &Array2<F>,
    g: ndarray::ArrayView1<F>,
    b: ndarray::ArrayView1<F>,
) -> (Array2<F>, Array2<F>, Vec<F>) {
    let (n, d) = x.dim();
    let fd = F::from_f64(d as f64);
    let eps = F::from_f64(LN_EPS);
    let mut out = Array2::zeros((n, d));
    let mut hat = Array2::zeros((n, d));
    let mut rstds = Vec::with_capacity(n);
    for i in 0..n {
        let row = x.row(i);
        let mu = row.sum() / fd;
        let mut var = F::zero();
        for &v in row.iter() {
            let c = v - mu;
            var += c * c;
        }
        var /= fd;
        let rstd = F::one() / (var + eps).sqrt();
        rstds.push(rstd);
        for j in 0..d {
            let h = (row[j] - mu) * rstd;
            hat[[i, j]] = h;
            out[[i, j]] = g[j] * h + b[j];
        }
    }
    (out, hat, rstds)
}

/// Gradient of `ln_forward` w.r.t. input, gain, and bias.
fn ln_backward<F: Real>(
    dy: &Array2<F>,
    hat: &Array2<F>,
    rstd: &[F],
    g: ndarray::ArrayView1<F>,
) -> (Array2<F>, Array1<F>, Array1<F>) {
    let (n, d) = dy.dim();
    let fd = F::from_f64(d as f64);
    let mut dx = Array2::zeros((n, d));
    let mut dg = Array1::zeros(d);
    let mut db = Array1::zeros(d);
    for i in 0..n {
        let mut m1 = F::zero();
        let mut m2 = F::zero();
        for j in 0..d {
            let dyg = dy[[i, j]] * g[j];
            m1 += dyg;
            m2 += dyg * hat[[i, j]];
            dg[j] += dy[[i, j]] * hat[[i, j]];
            db[j] += dy[[i, j]];
        }
        m1 /= fd;
        m2 /= fd;
        for j in 0..d {
            let dyg = dy[[i, j]] * g[j];
            dx[[i, j]] = rstd[i] * (dyg - m1 - hat[[i, j]] * m2);
        }
    }
    (dx, dg, db)
}

/// Key/value row and position-table row of each attended column, ascending.
type RowEntries = Vec<(u32, u32)>;

pub(crate) struct LayerCache<F> {
    x: Array2<F>,
    z: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    rk: Array2<F>,
    probs: Vec<Vec<F>>,
    o: Array2<F>,
    hat1: Array2<F>,
    rstd1: Vec<F>,
    x1: Array2<F>,
    ffn_pre: Array2<F>,
    ffn_act: Array2<F>,
    hat2: Array2<F>,
    rstd2: Vec<F>,
}

pub(crate) struct SegmentRun<F> {
    pub input_ids: Vec<u32>,
    pub logits: Array2<F>,
    /// Hidden levels 0..=K of this segment's rows: entry `k` is the input to
    /// layer `k`; the last entry is the final hidden state.
    pub levels: Vec<Array2<F>>,
    pub entries: Vec<RowEntries>,
    pub caches: Option<Vec<LayerCache<F>>>,
}

pub(crate) fn segment_forward<F: Real>(
    cfg: &ModelConfig,
    params: &ParamSet<F>,
    ids: &[u32],
    bundle: &MaskBundle,
    mem: &MemoryState<F>,
    blackout: Option<&Blackout>,
    with_cache: bool,
) -> Result<SegmentRun<F>> {
    let l = ids.len();
    let d = cfg.d_model;
    let heads = cfg.n_heads;
    let dh = cfg.head_dim();
    let inv = F::from_f64(1.0 / (dh as f64).sqrt());
    let clamp = cfg.pos_clamp;
    let km = mem.slots.len();
    let mem_cap = bundle.cols() - l;
    debug_assert!(!(with_cache && blackout.is_some()));

    let embed = params.mat("embed");
    let mut x: Array2<F> = Array2::zeros((l, d));
    for (i, &id) in ids.iter().enumerate() {
        x.row_mut(i).assign(&embed.row(id as usize));
    }

    // per-row addressing shared by all layers
    let entries: Vec<RowEntries> = (0..bundle.rows())
        .map(|i| {
            bundle
                .row(i)
                .map(|(c, rel)| {
                    let kvrow = if c < mem_cap {
                        debug_assert!(c < km);
                        c
                    } else {
                        km + (c - mem_cap)
                    };
                    (kvrow as u32, (rel + clamp) as u32)
                })
                .collect()
        })
        .collect();

    // blackout predicate parallel to each row's attended columns
    let blackout_row: Vec<Vec<bool>> = match blackout {
        None => Vec::new(),
        Some(b) => (0..bundle.rows())
            .map(|i| {
                let origin = bundle.row_origins()[i];
                bundle
                    .attended_cols(i)
                    .iter()
                    .map(|&c| origin > b.after && b.zeroed.contains(&bundle.col_origins()[c]))
                    .collect()
            })
            .collect(),
    };

    let pos = params.mat("pos");
    let mut levels = vec![x.clone()];
    let mut caches = Vec::new();

    for layer in 0..cfg.n_layers {
        let name = |s: &str| format!("layer{layer}.{s}");
        let wq = params.mat(&name("attn.wq"));
        let wke = params.mat(&name("attn.wke"));
        let wkr = params.mat(&name("attn.wkr"));
        let wv = params.mat(&name("attn.wv"));
        let wo = params.mat(&name("attn.wo"));
        let u = params.vec(&name("attn.u"));
        let vb = params.vec(&name("attn.v"));

        let z = if km == 0 {
            x.clone()
        } else {
            concatenate(Axis(0), &[mem.layers[layer].view(), x.view()]).unwrap()
        };
        let q = x.dot(&wq);
        let k = z.dot(&wke);
        let v = z.dot(&wv);
        let rk = pos.dot(&wkr);

        let mut o: Array2<F> = Array2::zeros((l, d));
        let mut probs: Vec<Vec<F>> = Vec::with_capacity(if with_cache { l } else { 0 });
        for i in 0..l {
            let row = &entries[i];
            let deg = row.len();
            let mut row_probs = Vec::with_capacity(if with_cache { heads * deg } else { 0 });
            for h in 0..heads {
                let hs = s![h * dh..(h + 1) * dh];
                let qi = q.row(i);
                let qih = qi.slice(hs);
                let qiu: Array1<F> = &qih + &u.slice(hs);
                let qiv: Array1<F> = &qih + &vb.slice(hs);

                let mut scores = Vec::with_capacity(deg);
                let mut maxs = F::from_f64(f64::NEG_INFINITY);
                for (a, &(kvrow, ridx)) in row.iter().enumerate() {
                    let blacked = blackout.is_some() && blackout_row[i][a];
                    let content = if blacked {
                        F::zero()
                    } else {
                        qiu.dot(&k.row(kvrow as usize).slice(hs))
                    };
                    let posterm = qiv.dot(&rk.row(ridx as usize).slice(hs));
                    let sc = (content + posterm) * inv;
                    if sc > maxs {
                        maxs = sc;
                    }
                    scores.push(sc);
                }
                let mut denom = F::zero();
                for sc in scores.iter_mut() {
                    *sc = (*sc - maxs).exp();
                    denom += *sc;
                }
                let mut oh = o.row_mut(i);
                let mut ohs = oh.slice_mut(hs);
                for (a, &(kvrow, _)) in row.iter().enumerate() {
                    let p = scores[a] / denom;
                    if with_cache {
                        row_probs.push(p);
                    }
                    let blacked = blackout.is_some() && blackout_row[i][a];
                    if !blacked {
                        ohs.scaled_add(p, &v.row(kvrow as usize).slice(hs));
                    }
                }
            }
            if with_cache {
                probs.push(row_probs);
            }
        }

        let attn = o.dot(&wo);
        let sum1 = &x + &attn;
        let (x1, hat1, rstd1) = ln_forward(
            &sum1,
            params.vec(&name("ln1.g")),
            params.vec(&name("ln1.b")),
        );

        let w1 = params.mat(&name("ffn.w1"));
        let w2 = params.mat(&name("ffn.w2"));
        let b1 = params.vec(&name("ffn.b1"));
        let b2 = params.vec(&name("ffn.b2"));
        let mut ffn_pre = x1.dot(&w1);
        ffn_pre += &b1;
        let ffn_act = ffn_pre.mapv(gelu);
        let mut proj = ffn_act.dot(&w2);
        proj += &b2;
        let sum2 = &x1 + &proj;
        let (y, hat2, rstd2) = ln_forward(
            &sum2,
            params.vec(&name("ln2.g")),
            params.vec(&name("ln2.b")),
        );

        if y.iter().any(|v| !v.as_f64().is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite activations in layer {layer}"
            )));
        }

        if with_cache {
            caches.push(LayerCache {
                x: x.clone(),
                z,
                q,
                k,
                v,
                rk,
                probs,
                o,
                hat1,
                rstd1,
                x1: x1.clone(),
                ffn_pre,
                ffn_act,
                hat2,
                rstd2,
            });
        }

        x = y;
        levels.push(x.clone());
    }

    let logits = x.dot(&embed.t());
    Ok(SegmentRun {
        input_ids: ids.to_vec(),
        logits,
        levels,
        entries,
        caches: if with_cache { Some(caches) } else { None },
    })
}

/// Backward through one segment given `dlogits`; accumulates into `grads`.
/// Memory rows are detached: no gradient flows to previous segments.
pub(crate) fn segment_backward<F: Real>(
    cfg: &ModelConfig,
    params: &ParamSet<F>,
    run: &SegmentRun<F>,
    dlogits: &Array2<F>,
    grads: &mut ParamSet<F>,
) {
    let caches = run.caches.as_ref().expect("segment run carries caches");
    let d = cfg.d_model;
    let heads = cfg.n_heads;
    let dh = cfg.head_dim();
    let inv = F::from_f64(1.0 / (dh as f64).sqrt());

    let embed = params.mat("embed");
    let y_final = run.levels.last().unwrap();

    // logits = y E^T with tied embeddings
    let mut dy = dlogits.dot(&embed);
    {
        let mut dembed = grads.mat_mut("embed");
        dembed += &dlogits.t().dot(y_final);
    }

    for layer in (0..cfg.n_layers).rev() {
        let cache = &caches[layer];
        let name = |s: &str| format!("layer{layer}.{s}");
        let l = cache.x.nrows();
        let km = cache.z.nrows() - l;

        // LN2
        let (dsum2, dg2, db2v) = ln_backward(&dy, &cache.hat2, &cache.rstd2, params.vec(&name("ln2.g")));
        {
            let mut g = grads.vec_mut(&name("ln2.g"));
            g += &dg2;
        }
        {
            let mut b = grads.vec_mut(&name("ln2.b"));
            b += &db2v;
        }

        // FFN with residual
        let mut dx1 = dsum2.clone();
        {
            let dproj = &dsum2;
            let w2 = params.mat(&name("ffn.w2"));
            let dact = dproj.dot(&w2.t());
            let dpre = &dact * &cache.ffn_pre.mapv(gelu_prime);
            {
                let mut dw2 = grads.mat_mut(&name("ffn.w2"));
                dw2 += &cache.ffn_act.t().dot(dproj);
            }
            {
                let mut db2 = grads.vec_mut(&name("ffn.b2"));
                db2 += &dproj.sum_axis(Axis(0));
            }
            {
                let mut dw1 = grads.mat_mut(&name("ffn.w1"));
                dw1 += &cache.x1.t().dot(&dpre);
            }
            {
                let mut db1 = grads.vec_mut(&name("ffn.b1"));
                db1 += &dpre.sum_axis(Axis(0));
            }
            let w1 = params.mat(&name("ffn.w1"));
            dx1 += &dpre.dot(&w1.t());
        }

        // LN1
        let (dsum1, dg1, db1v) = ln_backward(&dx1, &cache.hat1, &cache.rstd1, params.vec(&name("ln1.g")));
        {
            let mut g = grads.vec_mut(&name("ln1.g"));
            g += &dg1;
        }
        {
            let mut b = grads.vec_mut(&name("ln1.b"));
            b += &db1v;
        }

        // attention output projection; residual to the layer input
        let mut dx = dsum1.clone();
        let wo = params.mat(&name("attn.wo"));
        let do_ = dsum1.dot(&wo.t());
        {
            let mut dwo = grads.mat_mut(&name("attn.wo"));
            dwo += &cache.o.t().dot(&dsum1);
        }

        // attention core
        let u = params.vec(&name("attn.u"));
        let vb = params.vec(&name("attn.v"));
        let mut dq: Array2<F> = Array2::zeros((l, d));
        let mut dk: Array2<F> = Array2::zeros((km + l, d));
        let mut dvv: Array2<F> = Array2::zeros((km + l, d));
        let mut drk: Array2<F> = Array2::zeros(cache.rk.dim());
        let mut du: Array1<F> = Array1::zeros(d);
        let mut dvb: Array1<F> = Array1::zeros(d);

        for i in 0..l {
            let row = &run.entries[i];
            let deg = row.len();
            for h in 0..heads {
                let hs = s![h * dh..(h + 1) * dh];
                let probs = &cache.probs[i][h * deg..(h + 1) * deg];
                let doih = do_.row(i);
                let doh = doih.slice(hs);

                let mut dp = Vec::with_capacity(deg);
                for &(kvrow, _) in row.iter() {
                    dp.push(doh.dot(&cache.v.row(kvrow as usize).slice(hs)));
                }
                let mut sum_pd = F::zero();
                for a in 0..deg {
                    sum_pd += probs[a] * dp[a];
                }

                let qi = cache.q.row(i);
                let qih = qi.slice(hs);
                let qiu: Array1<F> = &qih + &u.slice(hs);
                let qiv: Array1<F> = &qih + &vb.slice(hs);

                let mut dqh: Array1<F> = Array1::zeros(dh);
                for (a, &(kvrow, ridx)) in row.iter().enumerate() {
                    let p = probs[a];
                    {
                        let mut dvrow = dvv.row_mut(kvrow as usize);
                        dvrow.slice_mut(hs).scaled_add(p, &doh);
                    }
                    let ds = p * (dp[a] - sum_pd) * inv;
                    let krow = cache.k.row(kvrow as usize);
                    let kh = krow.slice(hs);
                    let rrow = cache.rk.row(ridx as usize);
                    let rh = rrow.slice(hs);
                    dqh.scaled_add(ds, &kh);
                    dqh.scaled_add(ds, &rh);
                    du.slice_mut(hs).scaled_add(ds, &kh);
                    dvb.slice_mut(hs).scaled_add(ds, &rh);
                    dk.row_mut(kvrow as usize)
                        .slice_mut(hs)
                        .scaled_add(ds, &qiu);
                    drk.row_mut(ridx as usize)
                        .slice_mut(hs)
                        .scaled_add(ds, &qiv);
                }
                dq.row_mut(i).slice_mut(hs).scaled_add(F::one(), &dqh);
            }
        }

        {
            let mut dwq = grads.mat_mut(&name("attn.wq"));
            dwq += &cache.x.t().dot(&dq);
        }
        let wq = params.mat(&name("attn.wq"));
        dx += &dq.dot(&wq.t());

        {
            let mut dwke = grads.mat_mut(&name("attn.wke"));
            dwke += &cache.z.t().dot(&dk);
        }
        let wke = params.mat(&name("attn.wke"));
        let dzk = dk.dot(&wke.t());
        dx += &dzk.slice(s![km.., ..]);

        {
            let mut dwv = grads.mat_mut(&name("attn.wv"));
            dwv += &cache.z.t().dot(&dvv);
        }
        let wv = params.mat(&name("attn.wv"));
        let dzv = dvv.dot(&wv.t());
        dx += &dzv.slice(s![km.., ..]);

        {
            let mut duv = grads.vec_mut(&name("attn.u"));
            duv += &du;
        }
        {
            let mut dvvb = grads.vec_mut(&name("attn.v"));
            dvvb += &dvb;
        }

        // position table through the per-layer projection
        let pos = params.mat("pos");
        {
            let mut dwkr = grads.mat_mut(&name("attn.wkr"));
            dwkr += &pos.t().dot(&drk);
        }
        let wkr = params.mat(&name("attn.wkr"));
        {
            let mut dpos = grads.mat_mut("pos");
            dpos += &drk.dot(&wkr.t());
        }

        dy = dx;
    }

    // input embedding rows
    let mut dembed = grads.mat_mut("embed");
    for (i, row) in dy.rows().into_iter().enumerate() {
        let id = run.input_ids[i] as usize;
        let mut target = dembed.row_mut(id);
        target.scaled_add(F::one(), &row);
    }
}

/// Drives the per-segment forward across a whole prepared sequence,
/// threading the detached memory.
fn run_sequence<F: Real>(
    cfg: &ModelConfig,
    params: &ParamSet<F>,
    prep: &Prepared,
    blackout: Option<&Blackout>,
    mut sink: impl FnMut(usize, &SegmentRun<F>, &SegmentPlan),
) -> Result<()> {
    let mut mem = MemoryState::empty(cfg.n_layers, cfg.d_model);
    for t in 0..prep.plan.n_segments() {
        debug_assert_eq!(mem.slots, prep.slots[t]);
        let seg = prep.plan.segment(t);
        let run = segment_forward(cfg, params, seg.ids, &prep.bundles[t], &mem, blackout, false)?;
        sink(t, &run, &prep.plan);
        if t + 1 < prep.plan.n_segments() {
            mem = update_memory(mem, &run.levels[..cfg.n_layers], &prep.plan, t, &cfg.mode)?;
        }
    }
    Ok(())
}

/// Logits for all real positions (pads dropped).
pub(crate) fn sequence_logits<F: Real>(
    cfg: &ModelConfig,
    params: &ParamSet<F>,
    prep: &Prepared,
    blackout: Option<&Blackout>,
) -> Result<Array2<F>> {
    let mut out = Array2::zeros((prep.plan.real_len(), cfg.vocab_size));
    run_sequence(cfg, params, prep, blackout, |t, run, plan| {
        let start = t * plan.seg_len();
        let real = plan.real_in_segment(t);
        for i in 0..real {
            out.row_mut(start + i).assign(&run.logits.row(i));
        }
    })?;
    Ok(out)
}

/// Final-layer hidden states for all real positions.
pub(crate) fn sequence_hidden<F: Real>(
    cfg: &ModelConfig,
    params: &ParamSet<F>,
    prep: &Prepared,
) -> Result<Array2<F>> {
    let mut out = Array2::zeros((prep.plan.real_len(), cfg.d_model));
    run_sequence(cfg, params, prep, None, |t, run, plan| {
        let start = t * plan.seg_len();
        let real = plan.real_in_segment(t);
        let hidden = run.levels.last().unwrap();
        for i in 0..real {
            out.row_mut(start + i).assign(&hidden.row(i));
        }
    })?;
    Ok(out)
}

pub(crate) fn sequence_events<F: Real>(
    cfg: &ModelConfig,
    params: &ParamSet<F>,
    prep: &Prepared,
) -> Result<Vec<EventScore>> {
    let schedule = &prep.schedule;
    let mut events = Vec::new();
    run_sequence(cfg, params, prep, None, |t, run, plan| {
        let start = t * plan.seg_len();
        for i in 0..plan.seg_len() {
            let pos = start + i;
            if pos >= schedule.predict.len() || !schedule.predict[pos] {
                continue;
            }
            let target = schedule.targets[pos];
            let logprob = log_softmax_at(run.logits.row(i), target as usize);
            events.push(EventScore {
                pos,
                target_pos: pos + 1,
                target,
                logprob,
            });
        }
    })?;
    Ok(events)
}

fn log_softmax_at<F: Real>(row: ndarray::ArrayView1<F>, idx: usize) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &v in row.iter() {
        max = max.max(v.as_f64());
    }
    let mut lse = 0.0;
    for &v in row.iter() {
        lse += (v.as_f64() - max).exp();
    }
    row[idx].as_f64() - max - lse.ln()
}

/// Teacher-forced forward/backward over a whole sequence; accumulates the
/// gradient of the summed event negative log likelihood into `grads` and
/// returns `(nll_sum, n_events)`.
pub(crate) fn sequence_forward_backward<F: Real>(
    cfg: &ModelConfig,
    params: &ParamSet<F>,
    prep: &Prepared,
    grads: &mut ParamSet<F>,
) -> Result<(f64, usize)> {
    let schedule = &prep.schedule;
    let mut mem = MemoryState::empty(cfg.n_layers, cfg.d_model);
    let mut nll_sum = 0.0;
    let mut n_events = 0;
    for t in 0..prep.plan.n_segments() {
        let seg = prep.plan.segment(t);
        let run = segment_forward(cfg, params, seg.ids, &prep.bundles[t], &mem, None, true)?;

        let l = prep.plan.seg_len();
        let start = t * l;
        let mut dlogits: Array2<F> = Array2::zeros(run.logits.dim());
        for i in 0..l {
            let pos = start + i;
            if pos >= schedule.predict.len() || !schedule.predict[pos] {
                continue;
            }
            let target = schedule.targets[pos] as usize;
            let row = run.logits.row(i);
            let mut max = F::from_f64(f64::NEG_INFINITY);
            for &v in row.iter() {
                if v > max {
                    max = v;
                }
            }
            let mut denom = F::zero();
            for &v in row.iter() {
                denom += (v - max).exp();
            }
            let mut drow = dlogits.row_mut(i);
            for (j, &v) in row.iter().enumerate() {
                drow[j] = (v - max).exp() / denom;
            }
            nll_sum -= row[target].as_f64() - max.as_f64() - denom.as_f64().ln();
            drow[target] -= F::one();
            n_events += 1;
        }

        segment_backward(cfg, params, &run, &dlogits, grads);

        if t + 1 < prep.plan.n_segments() {
            mem = update_memory(mem, &run.levels[..cfg.n_layers], &prep.plan, t, &cfg.mode)?;
        }
    }
    if !nll_sum.is_finite() {
        return Err(Error::numeric("non-finite loss"));
    }
    Ok((nll_sum, n_events))
}
