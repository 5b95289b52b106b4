//! Forward pass, analytic backward pass, loss, embedding extraction and
//! input-gradient saliency.

use super::ops::{
    gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward, log_sum_exp,
    softmax_in_place, NormCache,
};
use super::params::{Block, ModelParams};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;
use crate::tokenizer::{detokenize_plane, TokenSequence};

/// Intermediates of one encoder block.
#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    norm1: NormCache<T>,
    normed1: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// `heads x seq x seq` attention probabilities.
    attn: Vec<T>,
    context: Vec<T>,
    norm2: NormCache<T>,
    normed2: Vec<T>,
    hidden_pre: Vec<T>,
    hidden: Vec<T>,
}

impl<T: Scalar> BlockCache<T> {
    /// Attention probabilities of head `h`, `seq x seq` row-major.
    pub fn attention(&self, head: usize, seq: usize) -> &[T] {
        &self.attn[head * seq * seq..(head + 1) * seq * seq]
    }

    pub fn norm1(&self) -> &NormCache<T> {
        &self.norm1
    }

    pub fn norm2(&self) -> &NormCache<T> {
        &self.norm2
    }
}

/// Everything [`backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    tokens: Vec<T>,
    blocks: Vec<BlockCache<T>>,
    final_norm: NormCache<T>,
    cls_normed: Vec<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn blocks(&self) -> &[BlockCache<T>] {
        &self.blocks
    }

    pub fn final_norm(&self) -> &NormCache<T> {
        &self.final_norm
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    /// Un-normalized embedding head output.
    pub embedding_raw: Vec<T>,
    pub logits: Vec<T>,
    pub cache: ForwardCache<T>,
}

fn check_tokens<T: Scalar>(params: &ModelParams<T>, tokens: &TokenSequence<T>) -> Result<()> {
    let cfg = &params.config;
    if tokens.token_dim() != cfg.in_dim_per_token || tokens.num_tokens() != cfg.num_tokens() {
        return Err(Error::Shape(format!(
            "model expects {} tokens of width {}, got {} tokens of width {}",
            cfg.num_tokens(),
            cfg.in_dim_per_token,
            tokens.num_tokens(),
            tokens.token_dim()
        )));
    }
    Ok(())
}

fn block_forward<T: Scalar>(
    blk: &Block<T>,
    x: Vec<T>,
    seq: usize,
    width: usize,
    heads: usize,
    hidden: usize,
) -> (Vec<T>, BlockCache<T>) {
    let dh = width / heads;
    let scale = T::one() / T::of_usize(dh).sqrt();
    let (normed1, norm1) = layer_norm(&x, &blk.norm1.scale.data, &blk.norm1.offset.data, width);
    let q = linear(&normed1, &blk.query.weight.data, &blk.query.bias.data, seq, width, width);
    let k = linear(&normed1, &blk.key.weight.data, &blk.key.bias.data, seq, width, width);
    let v = linear(&normed1, &blk.value.weight.data, &blk.value.bias.data, seq, width, width);

    let mut attn = vec![T::zero(); heads * seq * seq];
    let mut context = vec![T::zero(); seq * width];
    for h in 0..heads {
        let off = h * dh;
        let probs = &mut attn[h * seq * seq..(h + 1) * seq * seq];
        for i in 0..seq {
            let qi = &q[i * width + off..i * width + off + dh];
            let row = &mut probs[i * seq..(i + 1) * seq];
            for (j, s) in row.iter_mut().enumerate() {
                let kj = &k[j * width + off..j * width + off + dh];
                *s = qi.iter().zip(kj).map(|(&a, &b)| a * b).sum::<T>() * scale;
            }
            softmax_in_place(row);
            let ctx = &mut context[i * width + off..i * width + off + dh];
            for (j, &p) in row.iter().enumerate() {
                let vj = &v[j * width + off..j * width + off + dh];
                for (c, &vv) in ctx.iter_mut().zip(vj) {
                    *c += p * vv;
                }
            }
        }
    }
    let attn_out = linear(&context, &blk.out.weight.data, &blk.out.bias.data, seq, width, width);
    let mid: Vec<T> = x.iter().zip(&attn_out).map(|(&a, &b)| a + b).collect();

    let (normed2, norm2) = layer_norm(&mid, &blk.norm2.scale.data, &blk.norm2.offset.data, width);
    let hidden_pre = linear(&normed2, &blk.fc1.weight.data, &blk.fc1.bias.data, seq, width, hidden);
    let hidden_act: Vec<T> = hidden_pre.iter().map(|&z| gelu(z)).collect();
    let mlp_out = linear(&hidden_act, &blk.fc2.weight.data, &blk.fc2.bias.data, seq, hidden, width);
    let out: Vec<T> = mid.iter().zip(&mlp_out).map(|(&a, &b)| a + b).collect();

    let cache = BlockCache {
        norm1,
        normed1,
        q,
        k,
        v,
        attn,
        context,
        norm2,
        normed2,
        hidden_pre,
        hidden: hidden_act,
    };
    (out, cache)
}

/// Run the encoder on one token sequence.
pub fn forward<T: Scalar>(params: &ModelParams<T>, tokens: &TokenSequence<T>) -> Result<ForwardOutput<T>> {
    check_tokens(params, tokens)?;
    let cfg = &params.config;
    let (n, seq, width) = (cfg.num_tokens(), cfg.seq_len(), cfg.embed_width);
    let (heads, hidden) = (cfg.heads, cfg.mlp_hidden());

    let projected = linear(
        tokens.data(),
        &params.patch_embed.weight.data,
        &params.patch_embed.bias.data,
        n,
        cfg.in_dim_per_token,
        width,
    );
    let mut x = Vec::with_capacity(seq * width);
    x.extend_from_slice(&params.cls_token.data);
    x.extend_from_slice(&projected);
    for (xv, &p) in x.iter_mut().zip(&params.pos_embed.data) {
        *xv += p;
    }

    let mut blocks = Vec::with_capacity(params.blocks.len());
    for blk in &params.blocks {
        let (next, cache) = block_forward(blk, x, seq, width, heads, hidden);
        blocks.push(cache);
        x = next;
    }

    let (cls_normed, final_norm) = layer_norm(&x[..width], &params.norm.scale.data, &params.norm.offset.data, width);
    let embedding_raw = linear(
        &cls_normed,
        &params.embed_head.weight.data,
        &params.embed_head.bias.data,
        1,
        width,
        cfg.embedding_dim,
    );
    let logits = linear(
        &embedding_raw,
        &params.classifier.weight.data,
        &params.classifier.bias.data,
        1,
        cfg.embedding_dim,
        cfg.num_classes,
    );
    Ok(ForwardOutput {
        embedding_raw,
        logits,
        cache: ForwardCache {
            tokens: tokens.data().to_vec(),
            blocks,
            final_norm,
            cls_normed,
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn block_backward<T: Scalar>(
    blk: &Block<T>,
    grad: &mut Block<T>,
    cache: &BlockCache<T>,
    d_out: Vec<T>,
    seq: usize,
    width: usize,
    heads: usize,
    hidden: usize,
) -> Vec<T> {
    let dh = width / heads;
    let scale = T::one() / T::of_usize(dh).sqrt();

    // MLP sub-layer
    let d_hidden = linear_backward(
        &cache.hidden,
        &blk.fc2.weight.data,
        &d_out,
        &mut grad.fc2.weight.data,
        &mut grad.fc2.bias.data,
        seq,
        hidden,
        width,
        true,
    )
    .expect("dx requested");
    let d_pre: Vec<T> = d_hidden
        .iter()
        .zip(&cache.hidden_pre)
        .map(|(&d, &z)| d * gelu_grad(z))
        .collect();
    let d_normed2 = linear_backward(
        &cache.normed2,
        &blk.fc1.weight.data,
        &d_pre,
        &mut grad.fc1.weight.data,
        &mut grad.fc1.bias.data,
        seq,
        width,
        hidden,
        true,
    )
    .expect("dx requested");
    let d_mid_norm = layer_norm_backward(
        &d_normed2,
        &cache.norm2,
        &blk.norm2.scale.data,
        &mut grad.norm2.scale.data,
        &mut grad.norm2.offset.data,
        width,
    );
    let d_mid: Vec<T> = d_out.iter().zip(&d_mid_norm).map(|(&a, &b)| a + b).collect();

    // attention sub-layer
    let d_context = linear_backward(
        &cache.context,
        &blk.out.weight.data,
        &d_mid,
        &mut grad.out.weight.data,
        &mut grad.out.bias.data,
        seq,
        width,
        width,
        true,
    )
    .expect("dx requested");
    let mut dq = vec![T::zero(); seq * width];
    let mut dk = vec![T::zero(); seq * width];
    let mut dv = vec![T::zero(); seq * width];
    let mut d_scores = vec![T::zero(); seq];
    for h in 0..heads {
        let off = h * dh;
        let probs = cache.attention(h, seq);
        for i in 0..seq {
            let p_row = &probs[i * seq..(i + 1) * seq];
            let dctx = &d_context[i * width + off..i * width + off + dh];
            let mut dot = T::zero();
            for j in 0..seq {
                let vj = &cache.v[j * width + off..j * width + off + dh];
                let dp = dctx.iter().zip(vj).map(|(&a, &b)| a * b).sum::<T>();
                d_scores[j] = dp;
                dot += p_row[j] * dp;
                let dvj = &mut dv[j * width + off..j * width + off + dh];
                for (g, &c) in dvj.iter_mut().zip(dctx) {
                    *g += p_row[j] * c;
                }
            }
            for j in 0..seq {
                let ds = p_row[j] * (d_scores[j] - dot) * scale;
                if ds == T::zero() {
                    continue;
                }
                let kj = &cache.k[j * width + off..j * width + off + dh];
                let qi = &cache.q[i * width + off..i * width + off + dh];
                let dqi = &mut dq[i * width + off..i * width + off + dh];
                for (g, &kk) in dqi.iter_mut().zip(kj) {
                    *g += ds * kk;
                }
                let dkj = &mut dk[j * width + off..j * width + off + dh];
                for (g, &qq) in dkj.iter_mut().zip(qi) {
                    *g += ds * qq;
                }
            }
        }
    }
    let mut d_normed1 = vec![T::zero(); seq * width];
    for (lin, glin, d) in [
        (&blk.query, &mut grad.query, &dq),
        (&blk.key, &mut grad.key, &dk),
        (&blk.value, &mut grad.value, &dv),
    ] {
        let dx = linear_backward(
            &cache.normed1,
            &lin.weight.data,
            d,
            &mut glin.weight.data,
            &mut glin.bias.data,
            seq,
            width,
            width,
            true,
        )
        .expect("dx requested");
        for (acc, v) in d_normed1.iter_mut().zip(dx) {
            *acc += v;
        }
    }
    let d_in_norm = layer_norm_backward(
        &d_normed1,
        &cache.norm1,
        &blk.norm1.scale.data,
        &mut grad.norm1.scale.data,
        &mut grad.norm1.offset.data,
        width,
    );
    d_mid.iter().zip(&d_in_norm).map(|(&a, &b)| a + b).collect()
}

/// Gradients of a scalar objective given its partial derivatives with
/// respect to the raw embedding and the logits. The classifier path adds
/// its own contribution to `d_embedding`.
///
/// Returns parameter gradients and, when `input_grad` is set, the
/// gradient with respect to every token element.
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    output: &ForwardOutput<T>,
    d_embedding: &[T],
    d_logits: &[T],
    input_grad: bool,
) -> (ModelParams<T>, Option<Vec<T>>) {
    let cfg = &params.config;
    let (n, seq, width) = (cfg.num_tokens(), cfg.seq_len(), cfg.embed_width);
    let (e, k) = (cfg.embedding_dim, cfg.num_classes);
    let mut grads = ModelParams::zeros_like(cfg);
    let cache = &output.cache;

    let d_emb_cls = linear_backward(
        &output.embedding_raw,
        &params.classifier.weight.data,
        d_logits,
        &mut grads.classifier.weight.data,
        &mut grads.classifier.bias.data,
        1,
        e,
        k,
        true,
    )
    .expect("dx requested");
    let d_emb: Vec<T> = d_embedding.iter().zip(&d_emb_cls).map(|(&a, &b)| a + b).collect();
    let d_cls_normed = linear_backward(
        &cache.cls_normed,
        &params.embed_head.weight.data,
        &d_emb,
        &mut grads.embed_head.weight.data,
        &mut grads.embed_head.bias.data,
        1,
        width,
        e,
        true,
    )
    .expect("dx requested");
    let d_cls = layer_norm_backward(
        &d_cls_normed,
        &cache.final_norm,
        &params.norm.scale.data,
        &mut grads.norm.scale.data,
        &mut grads.norm.offset.data,
        width,
    );
    let mut dx = vec![T::zero(); seq * width];
    dx[..width].copy_from_slice(&d_cls);

    for ((blk, gblk), bcache) in params
        .blocks
        .iter()
        .zip(grads.blocks.iter_mut())
        .zip(&cache.blocks)
        .rev()
    {
        dx = block_backward(blk, gblk, bcache, dx, seq, width, cfg.heads, cfg.mlp_hidden());
    }

    grads.pos_embed.data.copy_from_slice(&dx);
    grads.cls_token.data.copy_from_slice(&dx[..width]);
    let d_tokens = linear_backward(
        &cache.tokens,
        &params.patch_embed.weight.data,
        &dx[width..],
        &mut grads.patch_embed.weight.data,
        &mut grads.patch_embed.bias.data,
        n,
        cfg.in_dim_per_token,
        width,
        input_grad,
    );
    (grads, d_tokens)
}

/// Softmax cross-entropy of `logits` against `label`, with its gradient.
pub fn cross_entropy<T: Scalar>(logits: &[T], label: usize) -> (T, Vec<T>) {
    let lse = log_sum_exp(logits);
    let loss = lse - logits[label];
    let mut d: Vec<T> = logits.iter().map(|&z| (z - lse).exp()).collect();
    d[label] -= T::one();
    (loss, d)
}

/// Cross-entropy loss for one sample and its gradients.
pub fn loss_and_backward<T: Scalar>(
    params: &ModelParams<T>,
    tokens: &TokenSequence<T>,
    label: usize,
) -> Result<(T, ModelParams<T>)> {
    let k = params.config.num_classes;
    if label >= k {
        return Err(Error::Validation(format!("label {label} outside [0, {k})")));
    }
    let out = forward(params, tokens)?;
    let (loss, d_logits) = cross_entropy(&out.logits, label);
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss {loss} for label {label}")));
    }
    let zeros = vec![T::zero(); params.config.embedding_dim];
    let (grads, _) = backward(params, &out, &zeros, &d_logits, false);
    Ok((loss, grads))
}

/// Unit-norm embeddings are rejected below this raw norm.
pub const EMBEDDING_NORM_EPS: f64 = 1e-12;

/// L2-normalize a raw embedding.
pub fn normalize_embedding<T: Scalar>(raw: &[T]) -> Result<Vec<T>> {
    let norm = raw.iter().map(|&v| v * v).sum::<T>().sqrt();
    if !(norm.to_f64_lossy() > EMBEDDING_NORM_EPS) {
        return Err(Error::Numerical(format!(
            "raw embedding norm {norm} is too small to normalize"
        )));
    }
    Ok(raw.iter().map(|&v| v / norm).collect())
}

/// Fixed-length unit-norm embedding; the classifier is not used.
pub fn extract_embedding<T: Scalar>(params: &ModelParams<T>, tokens: &TokenSequence<T>) -> Result<Vec<T>> {
    normalize_embedding(&forward(params, tokens)?.embedding_raw)
}

/// Scalar whose input gradient a saliency map visualizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaliencyTarget {
    /// L2 norm of the raw embedding.
    EmbeddingNorm,
    /// Logit of one class.
    ClassLogit(usize),
}

impl<T: Scalar> ForwardOutput<T> {
    pub fn target_value(&self, target: SaliencyTarget) -> T {
        match target {
            SaliencyTarget::EmbeddingNorm => self.embedding_raw.iter().map(|&v| v * v).sum::<T>().sqrt(),
            SaliencyTarget::ClassLogit(c) => self.logits[c],
        }
    }
}

/// Gradient of `target` with respect to every token element.
pub fn input_gradient<T: Scalar>(
    params: &ModelParams<T>,
    tokens: &TokenSequence<T>,
    target: SaliencyTarget,
) -> Result<Vec<T>> {
    let cfg = &params.config;
    let out = forward(params, tokens)?;
    let mut d_emb = vec![T::zero(); cfg.embedding_dim];
    let mut d_logits = vec![T::zero(); cfg.num_classes];
    match target {
        SaliencyTarget::EmbeddingNorm => {
            let norm = out.target_value(target);
            if norm > T::zero() {
                for (d, &v) in d_emb.iter_mut().zip(&out.embedding_raw) {
                    *d = v / norm;
                }
            }
        }
        SaliencyTarget::ClassLogit(c) => {
            if c >= cfg.num_classes {
                return Err(Error::Validation(format!(
                    "saliency class {c} outside [0, {})",
                    cfg.num_classes
                )));
            }
            d_logits[c] = T::one();
        }
    }
    let (_, d_tokens) = backward(params, &out, &d_emb, &d_logits, true);
    Ok(d_tokens.expect("input gradient requested"))
}

/// Absolute input gradient over the image plane, max-normalized to `[0, 1]`.
/// A zero gradient gives an all-zero map.
pub fn saliency<T: Scalar>(
    params: &ModelParams<T>,
    tokens: &TokenSequence<T>,
    target: SaliencyTarget,
) -> Result<Image<T>> {
    let grad = input_gradient(params, tokens, target)?;
    let mut map = detokenize_plane(&grad, tokens.num_tokens(), tokens.token_dim(), tokens.patch_size(), 0)?;
    let max = map.data().iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    for v in map.data_mut() {
        *v = if max > T::zero() { v.abs() / max } else { T::zero() };
    }
    Ok(map)
}
