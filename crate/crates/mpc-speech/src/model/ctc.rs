//! CTC: per-frame label distributions and the alignment-free sequence loss.
//!
//! The loss is the standard forward recursion over the blank-augmented label
//! sequence, built out of graph operations in log space so reverse-mode
//! differentiation covers it like any other objective.

use crate::numerics::{Graph, NodeId, Tensor, NEG_BIG};


use super::params::BoundParams;
use super::ModelError;

/// Per-frame log distribution over the vocabulary (blank included):
/// affine projection then log-softmax, so each row log-sum-exps to zero.
pub fn ctc_log_probs(g: &mut Graph, bp: &BoundParams, encoder_out: NodeId) -> NodeId {
    let logits = g.affine(encoder_out, bp.n("ctc.w"), bp.n("ctc.b"));
    g.log_softmax_rows(logits)
}

/// Shortest frame count that can emit `labels`: every label needs a frame,
/// plus a separating blank between adjacent repeats.
pub fn ctc_min_frames(labels: &[usize]) -> usize {
    let repeats = labels.windows(2).filter(|w| w[0] == w[1]).count();
    labels.len() + repeats
}

/// Build the CTC loss node over `[T, V]` log-probabilities. Labels must not
/// contain the blank. An infeasible pairing (too few frames for the label)
/// is an error the caller can treat as "skip", not a crash.
pub fn ctc_loss_node(
    g: &mut Graph,
    log_probs: NodeId,
    labels: &[usize],
    blank: usize,
) -> Result<NodeId, ModelError> {
    let (t, v) = {
        let lp = g.value(log_probs);
        (lp.rows(), lp.cols())
    };
    if labels.iter().any(|&l| l == blank) {
        return Err(ModelError::Config("labels may not contain the blank".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= v) {
        return Err(ModelError::OovToken { id: bad, vocab_size: v });
    }
    let min_t = ctc_min_frames(labels);
    if t < min_t {
        return Err(ModelError::CtcInfeasible { frames: t, min_frames: min_t, labels: labels.len() });
    }

    if labels.is_empty() {
        // the only path is all blanks
        if t == 0 {
            return Ok(g.constant(Tensor::scalar(0.0)));
        }
        let blanks = vec![blank; t];
        let picked = g.pick_per_row(log_probs, &blanks);
        let sum = g.sum_all(picked);
        return Ok(g.neg(sum));
    }

    // blank-augmented state sequence: blank, l1, blank, l2, ..., blank
    let s = 2 * labels.len() + 1;
    let ext: Vec<usize> = (0..s)
        .map(|i| if i % 2 == 0 { blank } else { labels[i / 2] })
        .collect();

    let emit_row = |g: &mut Graph, ti: usize| -> NodeId {
        let row = g.slice_rows(log_probs, ti, 1); // [1, V]
        let col = g.transpose(row); // [V, 1]
        let sel = g.gather_rows(col, &ext); // [S, 1]
        g.transpose(sel) // [1, S]
    };

    // states 0 and 1 may start a path
    let init_mask = Tensor::new(
        [1, s],
        (0..s).map(|i| if i <= 1 { 0.0 } else { NEG_BIG }).collect(),
    );
    // the skip transition s-2 -> s is illegal into blanks and repeated labels
    let skip_mask = Tensor::new(
        [1, s],
        (0..s)
            .map(|i| {
                if i >= 2 && ext[i] != blank && ext[i] != ext[i - 2] {
                    0.0
                } else {
                    NEG_BIG
                }
            })
            .collect(),
    );

    let e0 = emit_row(g, 0);
    let init = g.constant(init_mask);
    let mut alpha = g.add(e0, init);
    let neg_big_1 = g.constant(Tensor::full([1, 1], NEG_BIG));
    let neg_big_2 = g.constant(Tensor::full([1, 2], NEG_BIG));
    let skip = g.constant(skip_mask);

    for ti in 1..t {
        let stay = alpha;
        let prev_short = g.slice_cols(alpha, 0, s - 1);
        let step = g.concat_cols(&[neg_big_1, prev_short]);
        let mut reach = g.logaddexp(stay, step);
        if s >= 3 {
            let prev_skip = g.slice_cols(alpha, 0, s - 2);
            let jump_raw = g.concat_cols(&[neg_big_2, prev_skip]);
            let jump = g.add(jump_raw, skip);
            reach = g.logaddexp(reach, jump);
        }
        let e = emit_row(g, ti);
        alpha = g.add(reach, e);
    }

    let last_two = g.slice_cols(alpha, s - 2, 2);
    let a = g.slice_cols(last_two, 0, 1);
    let b = g.slice_cols(last_two, 1, 1);
    let total = g.logaddexp(a, b);
    let sum = g.sum_all(total);
    Ok(g.neg(sum))
}

/// Loss value without gradients. Infeasible label/frame pairings return
/// `+inf` after printing a diagnostic.
pub fn ctc_loss(log_probs: &Tensor, labels: &[usize], blank: usize) -> Result<f64, ModelError> {
    let mut g = Graph::new();
    let lp = g.constant(log_probs.clone());
    match ctc_loss_node(&mut g, lp, labels, blank) {
        Ok(node) => Ok(g.value(node).item()),
        Err(ModelError::CtcInfeasible { frames, min_frames, labels }) => {
            eprintln!(
                "ctc: {labels} labels need at least {min_frames} frames, got {frames}; loss is infinite"
            );
            Ok(f64::INFINITY)
        }
        Err(e) => Err(e),
    }
}

/// Uniform log-probabilities, handy for tests.
#[cfg(test)]
fn uniform_log_probs(t: usize, v: usize) -> Tensor {
    Tensor::full([t, v], (1.0 / v as f64).ln())
}
