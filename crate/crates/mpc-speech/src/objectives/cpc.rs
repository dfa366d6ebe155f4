//! Contrastive predictive loss: pick the true future latent out of a set of
//! candidates under a log-bilinear score.

use crate::numerics::{Graph, NodeId, Tensor};

use super::ObjectiveError;

/// Build the contrastive loss node for one anchor.
///
/// `context` is the `[1, H]` context vector, `candidates` is an `[N, Z]`
/// matrix of latent vectors with exactly one positive at row `positive`, and
/// `offset_weight` is the `[Z, H]` bilinear form for this prediction offset.
/// The score of candidate `z` is `z . W . c`, and the loss is the negative
/// log-softmax of the positive's score over all `N` candidates.
pub fn cpc_infonce_node(
    g: &mut Graph,
    context: NodeId,
    candidates: NodeId,
    positive: usize,
    offset_weight: NodeId,
) -> Result<NodeId, ObjectiveError> {
    let n = g.value(candidates).rows();
    if n < 2 {
        return Err(ObjectiveError::TooFewCandidates { n });
    }
    if positive >= n {
        return Err(ObjectiveError::BadPolicy(format!(
            "positive index {positive} out of range for {n} candidates"
        )));
    }
    let ct = g.transpose(context); // [H, 1]
    let projected = g.matmul(offset_weight, ct); // [Z, 1]
    let scores = g.matmul(candidates, projected); // [N, 1]
    let row = g.transpose(scores); // [1, N]
    let log_probs = g.log_softmax_rows(row);
    let pos = g.pick_per_row(log_probs, &[positive]);
    let sum = g.sum_all(pos);
    Ok(g.neg(sum))
}

/// Loss value without gradients.
pub fn cpc_infonce_loss(
    context: &Tensor,
    candidates: &Tensor,
    positive: usize,
    offset_weight: &Tensor,
) -> Result<f64, ObjectiveError> {
    let mut g = Graph::new();
    let c = g.constant(context.clone());
    let z = g.constant(candidates.clone());
    let w = g.constant(offset_weight.clone());
    let loss = cpc_infonce_node(&mut g, c, z, positive, w)?;
    Ok(g.value(loss).item())
}
