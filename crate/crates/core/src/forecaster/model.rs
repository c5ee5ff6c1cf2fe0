//! Forward pass, caches, and hand-derived backward pass for the
//! multimodal forecaster.
//!
//! Reductions over patches and tokens (softmax denominators, attention
//! value sums, mean pooling) run in a canonical order, so single-query
//! attention is exactly invariant to KV-row permutation and pooling is
//! exactly invariant to token permutation and list duplication.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2};

use super::train::TrainExample;
use super::{ForecasterConfig, ForecasterGrads, ForecasterParams, TextMode};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::numerics::{canonical_sum, softmax};
use crate::textualize::tokenize;

const LN_EPS: f64 = 1e-5;

struct LnCache {
    xhat: Array2<f64>,
    sigma: Array1<f64>,
}

struct LayerCache {
    ln1: LnCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    o_concat: Array2<f64>,
    ln2: LnCache,
    b: Array2<f64>,
    ff_act: Array2<f64>,
}

enum TextCache {
    /// Numeric-only mode: the text path never ran.
    NotUsed,
    /// Empty text: the dedicated empty-text vector was used.
    Empty,
    /// Weighted token ids: (embedding row, count/n).
    Tokens(Vec<(usize, f64)>),
}

struct AttnCache {
    q: Array1<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    alphas: Vec<Array1<f64>>,
    u: Array1<f64>,
}

pub(crate) struct ForwardCache {
    patches: Array2<f64>,
    layers: Vec<LayerCache>,
    ln_f: LnCache,
    s_enc: Array2<f64>,
    e: Option<Array1<f64>>,
    text: TextCache,
    attn: Option<AttnCache>,
    z: Array1<f64>,
    h_act: Array1<f64>,
    pub yhat: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let (rows, cols) = x.dim();
    let mut out = Array2::zeros((rows, cols));
    let mut xhat = Array2::zeros((rows, cols));
    let mut sigma = Array1::zeros(rows);
    for i in 0..rows {
        let row = x.row(i);
        let mean = row.sum() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let sd = (var + LN_EPS).sqrt();
        sigma[i] = sd;
        for j in 0..cols {
            let h = (x[(i, j)] - mean) / sd;
            xhat[(i, j)] = h;
            out[(i, j)] = gain[j] * h + bias[j];
        }
    }
    (out, LnCache { xhat, sigma })
}

/// Backward through layer norm; accumulates gain/bias gradients and
/// returns the input gradient.
fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    gain: &Array1<f64>,
    dgain: &mut Array1<f64>,
    dbias: &mut Array1<f64>,
) -> Array2<f64> {
    let (rows, cols) = dy.dim();
    let mut dx = Array2::zeros((rows, cols));
    for i in 0..rows {
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for j in 0..cols {
            let h = cache.xhat[(i, j)];
            dgain[j] += dy[(i, j)] * h;
            dbias[j] += dy[(i, j)];
            let dxh = dy[(i, j)] * gain[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * h;
        }
        mean_dxhat /= cols as f64;
        mean_dxhat_xhat /= cols as f64;
        for j in 0..cols {
            let dxh = dy[(i, j)] * gain[j];
            dx[(i, j)] = (dxh - mean_dxhat - cache.xhat[(i, j)] * mean_dxhat_xhat) / cache.sigma[i];
        }
    }
    dx
}

fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = scores.dim();
    let mut out = Array2::zeros((rows, cols));
    for i in 0..rows {
        let w = softmax(scores.row(i).as_slice().unwrap());
        for j in 0..cols {
            out[(i, j)] = w[j];
        }
    }
    out
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.len(), b.len()));
    for i in 0..a.len() {
        for j in 0..b.len() {
            out[(i, j)] = a[i] * b[j];
        }
    }
    out
}

fn extract_patches(lookback: &[f64], cfg: &ForecasterConfig) -> Array2<f64> {
    let p = cfg.num_patches();
    let mut patches = Array2::zeros((p, cfg.patch_len));
    for i in 0..p {
        let start = i * cfg.stride;
        for j in 0..cfg.patch_len {
            patches[(i, j)] = lookback[start + j];
        }
    }
    patches
}

fn encoder_forward(
    patches: &Array2<f64>,
    cfg: &ForecasterConfig,
    params: &ForecasterParams,
) -> (Array2<f64>, Vec<LayerCache>, LnCache) {
    let nh = cfg.attention_heads;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut x = patches.dot(&params.patch_w) + &params.patch_b + &params.pos;
    let mut caches = Vec::with_capacity(cfg.encoder_layers);
    for layer in &params.layers {
        let (a, ln1) = layer_norm(&x, &layer.ln1_g, &layer.ln1_b);
        let q = a.dot(&layer.wq);
        let k = a.dot(&layer.wk);
        let v = a.dot(&layer.wv);
        let p = a.nrows();
        let mut o_concat = Array2::zeros((p, cfg.model_dim));
        let mut attn = Vec::with_capacity(nh);
        for h in 0..nh {
            let cols = s![.., h * dh..(h + 1) * dh];
            let qh = q.slice(cols);
            let kh = k.slice(cols);
            let vh = v.slice(cols);
            let scores = qh.dot(&kh.t()) * scale;
            let weights = softmax_rows(&scores);
            let oh = weights.dot(&vh);
            o_concat.slice_mut(cols).assign(&oh);
            attn.push(weights);
        }
        let attn_out = o_concat.dot(&layer.wo);
        let x1 = &x + &attn_out;
        let (b, ln2) = layer_norm(&x1, &layer.ln2_g, &layer.ln2_b);
        let ff_pre = b.dot(&layer.ff_w1) + &layer.ff_b1;
        let ff_act = ff_pre.mapv(f64::tanh);
        let ff_out = ff_act.dot(&layer.ff_w2) + &layer.ff_b2;
        let x2 = &x1 + &ff_out;
        caches.push(LayerCache {
            ln1,
            a,
            q,
            k,
            v,
            attn,
            o_concat,
            ln2,
            b,
            ff_act,
        });
        x = x2;
    }
    let (s_enc, ln_f) = layer_norm(&x, &params.ln_f_g, &params.ln_f_b);
    (s_enc, caches, ln_f)
}

fn pool_text(text: &str, params: &ForecasterParams) -> (Array1<f64>, TextCache) {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return (params.empty_text.clone(), TextCache::Empty);
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for t in &tokens {
        *counts.entry(params.vocab.id_of(t)).or_insert(0) += 1;
    }
    let n = tokens.len() as f64;
    let d = params.empty_text.len();
    let mut e = Array1::zeros(d);
    let weights: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(id, c)| (id, c as f64 / n))
        .collect();
    for &(id, w) in &weights {
        for j in 0..d {
            e[j] += w * params.token_emb[(id, j)];
        }
    }
    (e, TextCache::Tokens(weights))
}

fn cross_attention_forward(
    e: &Array1<f64>,
    s_enc: &Array2<f64>,
    cfg: &ForecasterConfig,
    params: &ForecasterParams,
) -> (Array1<f64>, AttnCache) {
    let nh = cfg.attention_heads;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let p = s_enc.nrows();
    let q = e.dot(&params.xq);
    let k = s_enc.dot(&params.xk);
    let v = s_enc.dot(&params.xv);
    let mut u = Array1::zeros(cfg.model_dim);
    let mut alphas = Vec::with_capacity(nh);
    for h in 0..nh {
        let h0 = h * dh;
        let qh = q.slice(s![h0..h0 + dh]);
        let scores: Vec<f64> = (0..p)
            .map(|i| k.slice(s![i, h0..h0 + dh]).dot(&qh) * scale)
            .collect();
        let alpha = Array1::from_vec(softmax(&scores));
        for j in 0..dh {
            let terms: Vec<f64> = (0..p).map(|i| alpha[i] * v[(i, h0 + j)]).collect();
            u[h0 + j] = canonical_sum(&terms);
        }
        alphas.push(alpha);
    }
    let z = u.dot(&params.xo);
    (
        z,
        AttnCache {
            q,
            k,
            v,
            alphas,
            u,
        },
    )
}

fn mean_pool_rows(s_enc: &Array2<f64>) -> Array1<f64> {
    let (p, d) = s_enc.dim();
    let mut z = Array1::zeros(d);
    for j in 0..d {
        let col: Vec<f64> = (0..p).map(|i| s_enc[(i, j)]).collect();
        z[j] = canonical_sum(&col) / p as f64;
    }
    z
}

pub(crate) fn forward(
    cfg: &ForecasterConfig,
    params: &ForecasterParams,
    lookback: &[f64],
    text: Option<&str>,
) -> Result<ForwardCache> {
    if lookback.len() != cfg.lookback_len {
        return Err(Error::data(format!(
            "lookback length {} does not match configured {}",
            lookback.len(),
            cfg.lookback_len
        )));
    }
    let patches = extract_patches(lookback, cfg);
    let (s_enc, layers, ln_f) = encoder_forward(&patches, cfg, params);

    let (z, e, text_cache, attn) = match cfg.text_mode {
        TextMode::None => (mean_pool_rows(&s_enc), None, TextCache::NotUsed, None),
        TextMode::Raw | TextMode::Reinforced => {
            let text = text.ok_or_else(|| {
                Error::data("text mode requires a text input (possibly empty)")
            })?;
            let (e, text_cache) = pool_text(text, params);
            let (z, attn) = cross_attention_forward(&e, &s_enc, cfg, params);
            (z, Some(e), text_cache, Some(attn))
        }
    };

    let h_pre = z.dot(&params.head_w1) + &params.head_b1;
    let h_act = h_pre.mapv(f64::tanh);
    let yhat = h_act.dot(&params.head_w2) + &params.head_b2;
    Ok(ForwardCache {
        patches,
        layers,
        ln_f,
        s_enc,
        e,
        text: text_cache,
        attn,
        z,
        h_act,
        yhat,
    })
}

/// Backward pass: accumulate parameter gradients for one sample given
/// `dyhat = dLoss/dyhat`.
pub(crate) fn backward(
    cfg: &ForecasterConfig,
    params: &ForecasterParams,
    cache: &ForwardCache,
    dyhat: &Array1<f64>,
    grads: &mut ForecasterGrads,
) {
    let nh = cfg.attention_heads;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let p = cache.s_enc.nrows();
    let d = cfg.model_dim;

    // Head.
    grads.head_b2 += dyhat;
    grads.head_w2 += &outer(&cache.h_act, dyhat);
    let dh_act = params.head_w2.dot(dyhat);
    let dh_pre = &dh_act * &cache.h_act.mapv(|t| 1.0 - t * t);
    grads.head_b1 += &dh_pre;
    grads.head_w1 += &outer(&cache.z, &dh_pre);
    let dz = params.head_w1.dot(&dh_pre);

    // Fusion.
    let mut ds_enc = Array2::zeros((p, d));
    match (&cache.attn, &cache.e) {
        (None, _) => {
            // Mean-pooled patch vector fed the head directly.
            for i in 0..p {
                for j in 0..d {
                    ds_enc[(i, j)] += dz[j] / p as f64;
                }
            }
        }
        (Some(attn), Some(e)) => {
            let du = params.xo.dot(&dz);
            grads.xo += &outer(&attn.u, &dz);
            let mut dq = Array1::zeros(d);
            let mut dk = Array2::zeros((p, d));
            let mut dv = Array2::zeros((p, d));
            for h in 0..nh {
                let h0 = h * dh;
                let alpha = &attn.alphas[h];
                let dz_h = du.slice(s![h0..h0 + dh]);
                // Through the weighted value sum.
                let mut dalpha = Array1::zeros(p);
                for i in 0..p {
                    for j in 0..dh {
                        dv[(i, h0 + j)] += alpha[i] * dz_h[j];
                        dalpha[i] += attn.v[(i, h0 + j)] * dz_h[j];
                    }
                }
                // Softmax backward.
                let dot = alpha.dot(&dalpha);
                let dscores: Array1<f64> =
                    Array1::from_shape_fn(p, |i| alpha[i] * (dalpha[i] - dot));
                // Through the scaled dot products.
                for i in 0..p {
                    for j in 0..dh {
                        dq[h0 + j] += dscores[i] * attn.k[(i, h0 + j)] * scale;
                        dk[(i, h0 + j)] += dscores[i] * attn.q[h0 + j] * scale;
                    }
                }
            }
            grads.xq += &outer(e, &dq);
            let de = params.xq.dot(&dq);
            grads.xk += &cache.s_enc.t().dot(&dk);
            ds_enc += &dk.dot(&params.xk.t());
            grads.xv += &cache.s_enc.t().dot(&dv);
            ds_enc += &dv.dot(&params.xv.t());
            // Into the pooled text representation.
            match &cache.text {
                TextCache::Empty => grads.empty_text += &de,
                TextCache::Tokens(weights) => {
                    for &(id, w) in weights {
                        for j in 0..d {
                            grads.token_emb[(id, j)] += w * de[j];
                        }
                    }
                }
                TextCache::NotUsed => unreachable!("attention cache without text cache"),
            }
        }
        (Some(_), None) => unreachable!("attention cache without pooled text"),
    }

    // Final layer norm, then the encoder stack in reverse.
    let mut dx = layer_norm_backward(
        &ds_enc,
        &cache.ln_f,
        &params.ln_f_g,
        &mut grads.ln_f_g,
        &mut grads.ln_f_b,
    );
    for idx in (0..params.layers.len()).rev() {
        let layer = &params.layers[idx];
        let lc = &cache.layers[idx];
        let gl = &mut grads.layers[idx];

        // Feedforward branch: x2 = x1 + ff(ln2(x1)).
        let dff_out = &dx;
        gl.ff_b2 += &dff_out.sum_axis(ndarray::Axis(0));
        gl.ff_w2 += &lc.ff_act.t().dot(dff_out);
        let dff_act = dff_out.dot(&layer.ff_w2.t());
        let dff_pre = &dff_act * &lc.ff_act.mapv(|t| 1.0 - t * t);
        gl.ff_b1 += &dff_pre.sum_axis(ndarray::Axis(0));
        gl.ff_w1 += &lc.b.t().dot(&dff_pre);
        let db = dff_pre.dot(&layer.ff_w1.t());
        let dx1_ln = layer_norm_backward(&db, &lc.ln2, &layer.ln2_g, &mut gl.ln2_g, &mut gl.ln2_b);
        let dx1 = &dx + &dx1_ln;

        // Attention branch: x1 = x + attn(ln1(x)).
        let dattn_out = &dx1;
        gl.wo += &lc.o_concat.t().dot(dattn_out);
        let dout = dattn_out.dot(&layer.wo.t());
        let mut dq = Array2::zeros((p, d));
        let mut dk = Array2::zeros((p, d));
        let mut dv = Array2::zeros((p, d));
        for h in 0..nh {
            let h0 = h * dh;
            let cols = s![.., h0..h0 + dh];
            let dout_h = dout.slice(cols);
            let attn_h = &lc.attn[h];
            {
                let delta = attn_h.t().dot(&dout_h);
                let mut view = dv.slice_mut(cols);
                view += &delta;
            }
            let dattn_w = dout_h.dot(&lc.v.slice(cols).t());
            let mut dscores = Array2::zeros((p, p));
            for i in 0..p {
                let arow = attn_h.row(i);
                let drow = dattn_w.row(i);
                let dot = arow.dot(&drow);
                for jj in 0..p {
                    dscores[(i, jj)] = arow[jj] * (drow[jj] - dot);
                }
            }
            {
                let delta = dscores.dot(&lc.k.slice(cols)) * scale;
                let mut view = dq.slice_mut(cols);
                view += &delta;
            }
            {
                let delta = dscores.t().dot(&lc.q.slice(cols)) * scale;
                let mut view = dk.slice_mut(cols);
                view += &delta;
            }
        }
        gl.wq += &lc.a.t().dot(&dq);
        gl.wk += &lc.a.t().dot(&dk);
        gl.wv += &lc.a.t().dot(&dv);
        let mut da = dq.dot(&layer.wq.t());
        da += &dk.dot(&layer.wk.t());
        da += &dv.dot(&layer.wv.t());
        let dx_ln = layer_norm_backward(&da, &lc.ln1, &layer.ln1_g, &mut gl.ln1_g, &mut gl.ln1_b);
        dx = &dx1 + &dx_ln;
    }

    // Patch embedding.
    grads.pos += &dx;
    grads.patch_b += &dx.sum_axis(ndarray::Axis(0));
    grads.patch_w += &cache.patches.t().dot(&dx);
}

/// Spec-level operation: embed the lookback into the encoded patch matrix.
pub fn patch_encode(
    lookback: &[f64],
    cfg: &ForecasterConfig,
    params: &ForecasterParams,
) -> Result<Array2<f64>> {
    cfg.validate()?;
    if lookback.len() != cfg.lookback_len {
        return Err(Error::data(format!(
            "lookback length {} does not match configured {}",
            lookback.len(),
            cfg.lookback_len
        )));
    }
    let patches = extract_patches(lookback, cfg);
    let (s_enc, _, _) = encoder_forward(&patches, cfg, params);
    Ok(s_enc)
}

/// Spec-level operation: tokenize, embed, and mean-pool a text into a
/// single vector; empty text maps to the dedicated empty-text vector.
pub fn embed_and_pool(text: &str, params: &ForecasterParams) -> Array1<f64> {
    pool_text(text, params).0
}

/// Spec-level operation: single-query multi-head cross-attention of the
/// pooled text vector over the encoded patch rows.
pub fn cross_attend(
    e: &Array1<f64>,
    s_enc: &Array2<f64>,
    cfg: &ForecasterConfig,
    params: &ForecasterParams,
) -> Result<Array1<f64>> {
    if e.len() != cfg.model_dim || s_enc.ncols() != cfg.model_dim || s_enc.nrows() == 0 {
        return Err(Error::data(format!(
            "cross_attend shape mismatch: e={} S={:?} d={}",
            e.len(),
            s_enc.dim(),
            cfg.model_dim
        )));
    }
    Ok(cross_attention_forward(e, s_enc, cfg, params).0)
}

/// Per-head attention weights of the fused query over the patch rows;
/// diagnostic used by tests.
pub fn cross_attention_weights(
    e: &Array1<f64>,
    s_enc: &Array2<f64>,
    cfg: &ForecasterConfig,
    params: &ForecasterParams,
) -> Vec<Array1<f64>> {
    cross_attention_forward(e, s_enc, cfg, params).1.alphas
}

/// Predict the horizon for a sample. The text source follows the
/// configured mode: numeric-only ignores text entirely, raw mode joins the
/// sample's own records, reinforced mode uses the supplied text.
pub fn predict(
    sample: &Sample,
    reinforced_text: &str,
    cfg: &ForecasterConfig,
    params: &ForecasterParams,
) -> Result<Vec<f64>> {
    let raw;
    let text: Option<&str> = match cfg.text_mode {
        TextMode::None => None,
        TextMode::Raw => {
            raw = sample.joined_text().unwrap_or_default();
            Some(raw.as_str())
        }
        TextMode::Reinforced => Some(reinforced_text),
    };
    predict_with_text(cfg, params, &sample.lookback, text)
}

/// Lower-level prediction entry taking an explicit text source.
pub fn predict_with_text(
    cfg: &ForecasterConfig,
    params: &ForecasterParams,
    lookback: &[f64],
    text: Option<&str>,
) -> Result<Vec<f64>> {
    Ok(forward(cfg, params, lookback, text)?.yhat.to_vec())
}

/// Mean squared error of the forecaster on one example.
pub fn forecast_loss(
    cfg: &ForecasterConfig,
    params: &ForecasterParams,
    example: &TrainExample,
) -> Result<f64> {
    let cache = forward(cfg, params, &example.lookback, example.text_as_deref())?;
    if cache.yhat.len() != example.truth.len() {
        return Err(Error::data(format!(
            "horizon mismatch: prediction {} vs truth {}",
            cache.yhat.len(),
            example.truth.len()
        )));
    }
    let h = example.truth.len() as f64;
    Ok(cache
        .yhat
        .iter()
        .zip(&example.truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / h)
}

/// Mean loss over a batch and the accumulated parameter gradients.
pub fn loss_and_grads(
    cfg: &ForecasterConfig,
    params: &ForecasterParams,
    batch: &[&TrainExample],
) -> Result<(f64, ForecasterGrads)> {
    if batch.is_empty() {
        return Err(Error::data("training batch must be non-empty"));
    }
    let mut grads = ForecasterGrads::zeros_like(params);
    let mut total = 0.0;
    let b = batch.len() as f64;
    for ex in batch {
        let cache = forward(cfg, params, &ex.lookback, ex.text_as_deref())?;
        if cache.yhat.len() != ex.truth.len() {
            return Err(Error::data(format!(
                "horizon mismatch: prediction {} vs truth {}",
                cache.yhat.len(),
                ex.truth.len()
            )));
        }
        let h = ex.truth.len() as f64;
        let mut mse = 0.0;
        let dyhat = Array1::from_shape_fn(ex.truth.len(), |i| {
            let diff = cache.yhat[i] - ex.truth[i];
            mse += diff * diff;
            2.0 * diff / (h * b)
        });
        total += mse / h;
        backward(cfg, params, &cache, &dyhat, &mut grads);
    }
    Ok((total / b, grads))
}
