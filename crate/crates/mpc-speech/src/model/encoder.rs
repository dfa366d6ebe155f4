//! Transformer encoder with mode-dependent downsampling.
//!
//! Pre-training feeds stacked frames and keeps the time axis intact;
//! fine-tuning feeds raw frames and halves the time axis after each
//! configured block by concatenating adjacent frame pairs and projecting
//! back to `d_model`. Blocks are pre-norm with residual connections, and a
//! final layer norm closes the stack.

use crate::numerics::{Graph, NodeId, Rng, Tensor, NEG_BIG};

use super::config::ModelConfig;
use super::params::BoundParams;
use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderMode {
    Pretrain,
    Finetune,
}

const LN_EPS: f64 = 1e-6;

/// Fixed sinusoidal position encoding, added after the input projection.
pub fn sinusoidal_positions(t: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; t * d];
    for pos in 0..t {
        for i in 0..d {
            let angle = pos as f64 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            data[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new([t, d], data)
}

/// Inverted dropout: zero with probability `rate`, scale survivors by
/// `1 / (1 - rate)`. `None` for the rng (or a zero rate) disables it.
pub fn dropout(g: &mut Graph, x: NodeId, rate: f64, rng: Option<&mut Rng>) -> NodeId {
    let Some(rng) = rng else { return x };
    if rate <= 0.0 {
        return x;
    }
    let shape = g.value(x).shape().to_vec();
    let n = g.value(x).numel();
    let keep = 1.0 / (1.0 - rate);
    let mask = Tensor::new(
        shape,
        (0..n).map(|_| if rng.bernoulli(rate) { 0.0 } else { keep }).collect(),
    );
    let m = g.constant(mask);
    g.mul(x, m)
}

/// Multi-head scaled dot-product attention. `mask`, when present, is added
/// to every head's logits (shape `[Tq, Tk]`, zeros and `NEG_BIG`).
pub fn multi_head_attention(
    g: &mut Graph,
    bp: &BoundParams,
    prefix: &str,
    queries: NodeId,
    keys_values: NodeId,
    num_heads: usize,
    mask: Option<&Tensor>,
) -> NodeId {
    let d = g.value(queries).cols();
    let dh = d / num_heads;
    let q = g.affine(queries, bp.n(&format!("{prefix}.wq")), bp.n(&format!("{prefix}.bq")));
    let k = g.matmul(keys_values, bp.n(&format!("{prefix}.wk")));
    let v = g.affine(keys_values, bp.n(&format!("{prefix}.wv")), bp.n(&format!("{prefix}.bv")));
    let mask_node = mask.map(|m| g.constant(m.clone()));
    let mut heads = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let qh = g.slice_cols(q, h * dh, dh);
        let kh = g.slice_cols(k, h * dh, dh);
        let vh = g.slice_cols(v, h * dh, dh);
        let kt = g.transpose(kh);
        let logits = g.matmul(qh, kt);
        let mut scaled = g.scale(logits, 1.0 / (dh as f64).sqrt());
        if let Some(m) = mask_node {
            scaled = g.add(scaled, m);
        }
        let weights = g.softmax_rows(scaled);
        heads.push(g.matmul(weights, vh));
    }
    let ctx = g.concat_cols(&heads);
    g.affine(ctx, bp.n(&format!("{prefix}.wo")), bp.n(&format!("{prefix}.bo")))
}

fn layer_norm_named(g: &mut Graph, bp: &BoundParams, prefix: &str, x: NodeId) -> NodeId {
    g.layer_norm(x, bp.n(&format!("{prefix}.g")), bp.n(&format!("{prefix}.b")), LN_EPS)
}

fn feed_forward(g: &mut Graph, bp: &BoundParams, prefix: &str, x: NodeId) -> NodeId {
    let h = g.affine(x, bp.n(&format!("{prefix}.w1")), bp.n(&format!("{prefix}.b1")));
    let r = g.relu(h);
    g.affine(r, bp.n(&format!("{prefix}.w2")), bp.n(&format!("{prefix}.b2")))
}

/// One pre-norm encoder block: self-attention and feed-forward, each behind
/// a residual connection.
fn encoder_block(
    g: &mut Graph,
    bp: &BoundParams,
    prefix: &str,
    x: NodeId,
    num_heads: usize,
    drop: f64,
    rng: &mut Option<&mut Rng>,
) -> NodeId {
    let a = layer_norm_named(g, bp, &format!("{prefix}.ln1"), x);
    let att = multi_head_attention(g, bp, &format!("{prefix}.att"), a, a, num_heads, None);
    let att = dropout(g, att, drop, rng.as_deref_mut());
    let x = g.add(x, att);
    let f = layer_norm_named(g, bp, &format!("{prefix}.ln2"), x);
    let ff = feed_forward(g, bp, &format!("{prefix}.ff"), f);
    let ff = dropout(g, ff, drop, rng.as_deref_mut());
    g.add(x, ff)
}

/// Run the encoder. Pre-training expects stacked frames
/// (`d_mel * stack_factor` wide) and returns one hidden state per input
/// position; fine-tuning expects raw frames (`d_mel` wide) and halves the
/// time axis after each block listed in `downsample_after`.
pub fn encoder_forward(
    g: &mut Graph,
    bp: &BoundParams,
    cfg: &ModelConfig,
    input: NodeId,
    mode: EncoderMode,
    mut dropout_rng: Option<&mut Rng>,
) -> Result<NodeId, ModelError> {
    let got = g.value(input).cols();
    let expected = match mode {
        EncoderMode::Pretrain => cfg.pretrain_input_dim(),
        EncoderMode::Finetune => cfg.d_mel,
    };
    if got != expected {
        return Err(ModelError::WrongInputDim { mode, expected, got });
    }

    let d = cfg.encoder.d_model;
    let mut x = g.affine(input, bp.n("enc.in_proj.w"), bp.n("enc.in_proj.b"));
    let t = g.value(x).rows();
    let pos = g.constant(sinusoidal_positions(t, d));
    x = g.add(x, pos);
    x = dropout(g, x, cfg.dropout, dropout_rng.as_deref_mut());

    for i in 1..=cfg.encoder.num_blocks {
        x = encoder_block(
            g,
            bp,
            &format!("enc.block{i}"),
            x,
            cfg.encoder.num_heads,
            cfg.dropout,
            &mut dropout_rng,
        );
        if mode == EncoderMode::Finetune && cfg.encoder.downsample_after.contains(&i) {
            let paired = g.pair_rows(x);
            x = g.affine(paired, bp.n(&format!("enc.ds{i}.w")), bp.n(&format!("enc.ds{i}.b")));
        }
    }
    Ok(layer_norm_named(g, bp, "enc.norm", x))
}

/// Project hidden states back to stacked-frame width for reconstruction.
pub fn reconstruction_head(g: &mut Graph, bp: &BoundParams, hidden: NodeId) -> NodeId {
    g.affine(hidden, bp.n("recon.w"), bp.n("recon.b"))
}

/// Causal mask: position `i` may attend to positions `<= i`.
pub fn causal_mask(t: usize) -> Tensor {
    let mut m = Tensor::zeros([t, t]);
    for i in 0..t {
        for j in i + 1..t {
            m.set(i, j, NEG_BIG);
        }
    }
    m
}
