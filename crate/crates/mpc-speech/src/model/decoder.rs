//! Transformer decoder over character tokens.

use crate::numerics::{Graph, NodeId, Rng};

use super::config::{ModelConfig, Vocab};
use super::encoder::{causal_mask, dropout, multi_head_attention, sinusoidal_positions};
use super::params::BoundParams;
use super::ModelError;

const LN_EPS: f64 = 1e-6;

/// Run the decoder over a token prefix and return next-token logits for every
/// prefix position (`[prefix_len, vocab]`). The prefix must begin with the
/// start symbol, self-attention is causal, and cross-attention reads the
/// encoder output.
pub fn decoder_forward(
    g: &mut Graph,
    bp: &BoundParams,
    cfg: &ModelConfig,
    encoder_out: NodeId,
    prefix: &[usize],
    vocab_size: usize,
    mut dropout_rng: Option<&mut Rng>,
) -> Result<NodeId, ModelError> {
    if prefix.first() != Some(&Vocab::SOS) {
        return Err(ModelError::PrefixMissingSos);
    }
    if let Some(&bad) = prefix.iter().find(|&&t| t >= vocab_size) {
        return Err(ModelError::OovToken { id: bad, vocab_size });
    }

    let d = cfg.encoder.d_model;
    let t = prefix.len();
    let emb = g.gather_rows(bp.n("dec.embed"), prefix);
    let pos = g.constant(sinusoidal_positions(t, d));
    let mut x = g.add(emb, pos);
    x = dropout(g, x, cfg.dropout, dropout_rng.as_deref_mut());
    let mask = causal_mask(t);

    for j in 1..=cfg.decoder_blocks {
        let p = format!("dec.block{j}");
        let a = g.layer_norm(x, bp.n(&format!("{p}.ln1.g")), bp.n(&format!("{p}.ln1.b")), LN_EPS);
        let self_att = multi_head_attention(
            g,
            bp,
            &format!("{p}.self"),
            a,
            a,
            cfg.encoder.num_heads,
            Some(&mask),
        );
        let self_att = dropout(g, self_att, cfg.dropout, dropout_rng.as_deref_mut());
        x = g.add(x, self_att);

        let c = g.layer_norm(x, bp.n(&format!("{p}.ln2.g")), bp.n(&format!("{p}.ln2.b")), LN_EPS);
        let cross = multi_head_attention(
            g,
            bp,
            &format!("{p}.cross"),
            c,
            encoder_out,
            cfg.encoder.num_heads,
            None,
        );
        let cross = dropout(g, cross, cfg.dropout, dropout_rng.as_deref_mut());
        x = g.add(x, cross);

        let f = g.layer_norm(x, bp.n(&format!("{p}.ln3.g")), bp.n(&format!("{p}.ln3.b")), LN_EPS);
        let h = g.affine(f, bp.n(&format!("{p}.ff.w1")), bp.n(&format!("{p}.ff.b1")));
        let r = g.relu(h);
        let ff = g.affine(r, bp.n(&format!("{p}.ff.w2")), bp.n(&format!("{p}.ff.b2")));
        let ff = dropout(g, ff, cfg.dropout, dropout_rng.as_deref_mut());
        x = g.add(x, ff);
    }

    let normed = g.layer_norm(x, bp.n("dec.norm.g"), bp.n("dec.norm.b"), LN_EPS);
    Ok(g.affine(normed, bp.n("dec.out.w"), bp.n("dec.out.b")))
}
