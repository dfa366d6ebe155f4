//! One-pass joint CTC/attention beam search.
//!
//! Partial hypotheses are ranked by
//! `ctc_weight * ctc_prefix_score + (1 - ctc_weight) * attention log-prob`;
//! a hypothesis finishing on the end symbol swaps the prefix score for the
//! complete-sequence score. Decoding stops at the end symbol or at the
//! maximum length (the encoder output length unless configured otherwise).

use crate::model::{
    bind_all, ctc_log_probs, decoder_forward, encoder_forward, EncoderMode, ModelConfig,
    ModelParams, Vocab,
};
use crate::numerics::{Graph, Tensor};

use super::ctc_prefix::{CtcScorer, PrefixState};
use super::EvalError;

/// A finished decode: character ids (no reserved symbols) and its scores.
#[derive(Clone, Debug)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub att_log_prob: f64,
    pub ctc_log_prob: f64,
    pub joint: f64,
}

impl Hypothesis {
    pub fn text(&self, vocab: &Vocab) -> String {
        vocab.decode(&self.tokens)
    }
}

#[derive(Clone, Debug)]
pub struct DecodeConfig {
    pub beam_width: usize,
    pub ctc_weight: f64,
    /// 0 means "encoder output length".
    pub max_len: usize,
}

struct BeamItem {
    tokens: Vec<usize>,
    att: f64,
    state: PrefixState,
}

/// Next-token log-probabilities after `prefix` (sos-prefixed internally).
fn next_token_log_probs(
    params: &ModelParams,
    cfg: &ModelConfig,
    enc_out: &Tensor,
    prefix: &[usize],
    vocab_size: usize,
) -> Result<Vec<f64>, EvalError> {
    let mut g = Graph::new();
    let bp = bind_all(&mut g, params);
    let enc = g.constant(enc_out.clone());
    let mut full = Vec::with_capacity(prefix.len() + 1);
    full.push(Vocab::SOS);
    full.extend_from_slice(prefix);
    let logits = decoder_forward(&mut g, &bp, cfg, enc, &full, vocab_size, None)?;
    let lsm = g.log_softmax_rows(logits);
    Ok(g.value(lsm).row_slice(full.len() - 1).to_vec())
}

/// Decode one utterance. Requires `beam_width >= 1` and a CTC weight in
/// `[0, 1]`; rejects both violations rather than guessing.
pub fn joint_beam_decode(
    params: &ModelParams,
    cfg: &ModelConfig,
    vocab: &Vocab,
    frames: &Tensor,
    decode: &DecodeConfig,
) -> Result<Hypothesis, EvalError> {
    if decode.beam_width == 0 {
        return Err(EvalError::BadConfig("beam width must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&decode.ctc_weight) {
        return Err(EvalError::BadConfig(format!(
            "ctc weight {} not in [0, 1]",
            decode.ctc_weight
        )));
    }
    let vocab_size = vocab.size();
    let lambda = decode.ctc_weight;

    // encoder + CTC distributions once per utterance
    let (enc_out, log_probs) = {
        let mut g = Graph::new();
        let bp = bind_all(&mut g, params);
        let input = g.constant(frames.clone());
        let enc = encoder_forward(&mut g, &bp, cfg, input, EncoderMode::Finetune, None)?;
        let lp = ctc_log_probs(&mut g, &bp, enc);
        (g.value(enc).clone(), g.value(lp).clone())
    };
    if enc_out.rows() == 0 {
        // nothing to attend to; the only decodable output is the empty string
        return Ok(Hypothesis { tokens: vec![], att_log_prob: 0.0, ctc_log_prob: 0.0, joint: 0.0 });
    }
    let max_len = if decode.max_len > 0 { decode.max_len } else { enc_out.rows() };

    let scorer = CtcScorer::new(&log_probs, Vocab::BLANK);
    let char_ids: Vec<usize> = vocab.chars().iter().map(|&c| vocab.char_to_id(c).unwrap()).collect();

    let mut beam = vec![BeamItem { tokens: vec![], att: 0.0, state: scorer.initial() }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _depth in 0..=max_len {
        let closing = _depth == max_len;
        let mut candidates: Vec<BeamItem> = Vec::new();
        for item in &beam {
            let next = next_token_log_probs(params, cfg, &enc_out, &item.tokens, vocab_size)?;
            // finish with the end symbol
            let att_eos = item.att + next[Vocab::EOS];
            let ctc_complete = scorer.sequence_score(&item.state);
            finished.push(Hypothesis {
                tokens: item.tokens.clone(),
                att_log_prob: att_eos,
                ctc_log_prob: ctc_complete,
                joint: lambda * ctc_complete + (1.0 - lambda) * att_eos,
            });
            if closing {
                continue;
            }
            for &c in &char_ids {
                let att = item.att + next[c];
                let state = scorer.extend(&item.state, c);
                let mut tokens = item.tokens.clone();
                tokens.push(c);
                candidates.push(BeamItem { tokens, att, state });
            }
        }
        if closing {
            break;
        }
        candidates.sort_by(|a, b| {
            let ja = lambda * a.state.prefix_score() + (1.0 - lambda) * a.att;
            let jb = lambda * b.state.prefix_score() + (1.0 - lambda) * b.att;
            jb.total_cmp(&ja).then_with(|| a.tokens.cmp(&b.tokens))
        });
        candidates.truncate(decode.beam_width);
        // drop impossible continuations so they cannot crowd the beam
        candidates.retain(|c| {
            lambda == 0.0 || c.state.prefix_score() > f64::NEG_INFINITY
        });
        if candidates.is_empty() {
            break;
        }
        beam = candidates;
    }

    let best = finished
        .into_iter()
        .filter(|h| h.joint.is_finite())
        .max_by(|a, b| a.joint.total_cmp(&b.joint).then_with(|| b.tokens.cmp(&a.tokens)))
        .ok_or_else(|| EvalError::BadConfig("no finite-scoring hypothesis".into()))?;
    Ok(best)
}
