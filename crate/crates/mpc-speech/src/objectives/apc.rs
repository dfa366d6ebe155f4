//! Autoregressive predictive loss: summed L1 between the input shifted
//! `n` steps ahead and the prediction, over the overlapping range.

use crate::numerics::{Graph, NodeId, Tensor};

use super::ObjectiveError;

pub const DEFAULT_STEP_AHEAD: usize = 3;

/// Build the shifted L1 loss node: `sum_i |x[i + n] - y[i]|` for
/// `i = 0 .. T - n`. Requires `1 <= n < T`.
pub fn apc_loss_node(
    g: &mut Graph,
    input: &Tensor,
    prediction: NodeId,
    n: usize,
) -> Result<NodeId, ObjectiveError> {
    let t = input.rows();
    if n == 0 || n >= t {
        return Err(ObjectiveError::ShiftTooLarge { n, t });
    }
    let pred_shape = g.value(prediction).shape().to_vec();
    if pred_shape != input.shape() {
        return Err(ObjectiveError::ShapeMismatch {
            expected: input.shape().to_vec(),
            got: pred_shape,
        });
    }
    let d = input.cols();
    let future = Tensor::new(
        [t - n, d],
        input.data()[n * d..].to_vec(),
    );
    let future = g.constant(future);
    let head = g.slice_rows(prediction, 0, t - n);
    let diff = g.sub(future, head);
    let abs = g.abs(diff);
    Ok(g.sum_all(abs))
}

/// Loss value without gradients.
pub fn apc_loss(input: &Tensor, prediction: &Tensor, n: usize) -> Result<f64, ObjectiveError> {
    let mut g = Graph::new();
    let pred = g.constant(prediction.clone());
    let loss = apc_loss_node(&mut g, input, pred, n)?;
    Ok(g.value(loss).item())
}
