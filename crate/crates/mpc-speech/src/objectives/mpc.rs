//! Masked reconstruction loss: mean absolute error between the encoder's
//! prediction and the original frames, over masked positions only.

use crate::numerics::{Graph, NodeId, Tensor};

use super::mask::PredictiveTargets;
use super::ObjectiveError;

/// Build the masked L1 loss node. Unmasked positions carry zero weight, so
/// the loss is bit-invariant to whatever the model predicts there. A plan
/// that selected nothing yields a constant zero loss and a warning.
pub fn mpc_loss_node(
    g: &mut Graph,
    prediction: NodeId,
    targets: &PredictiveTargets,
) -> Result<NodeId, ObjectiveError> {
    let shape = g.value(prediction).shape().to_vec();
    if shape != targets.original.shape() {
        return Err(ObjectiveError::ShapeMismatch {
            expected: targets.original.shape().to_vec(),
            got: shape,
        });
    }
    let (t, d) = (targets.original.rows(), targets.original.cols());
    let masked_elems = targets.plan.selected.len() * d;
    if masked_elems == 0 {
        eprintln!(
            "warning: mask plan selected no positions (T'={t}); reconstruction loss is 0"
        );
        return Ok(g.constant(Tensor::scalar(0.0)));
    }

    let mut weights = Tensor::zeros([t, d]);
    for &(pos, _) in &targets.plan.selected {
        for j in 0..d {
            weights.set(pos, j, 1.0);
        }
    }
    let original = g.constant(targets.original.clone());
    let mask = g.constant(weights);
    let diff = g.sub(prediction, original);
    let abs = g.abs(diff);
    let picked = g.mul(abs, mask);
    let sum = g.sum_all(picked);
    Ok(g.scale(sum, 1.0 / masked_elems as f64))
}

/// Loss value without gradients, for tests and monitoring.
pub fn mpc_loss(prediction: &Tensor, targets: &PredictiveTargets) -> Result<f64, ObjectiveError> {
    let mut g = Graph::new();
    let pred = g.constant(prediction.clone());
    let loss = mpc_loss_node(&mut g, pred, targets)?;
    Ok(g.value(loss).item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_check, param_values, Rng};
    use crate::objectives::mask::{apply_mask, sample_mask_plan, MaskAction, MaskPlan, MaskPolicy};

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let frames = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let plan = MaskPlan { len: 2, selected: vec![(0, MaskAction::Zero)] };
        let targets = apply_mask(&frames, &plan).unwrap();
        assert_eq!(mpc_loss(&frames, &targets).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_single_masked_frame() {
        // target [1, 2], prediction [0, 0] -> (1 + 2) / 2 = 1.5
        let frames = Tensor::from_rows(&[vec![1.0, 2.0]]);
        let plan = MaskPlan { len: 1, selected: vec![(0, MaskAction::Zero)] };
        let targets = apply_mask(&frames, &plan).unwrap();
        let pred = Tensor::from_rows(&[vec![0.0, 0.0]]);
        assert_eq!(mpc_loss(&pred, &targets).unwrap(), 1.5);
    }

    #[test]
    fn matches_loop_oracle() {
        let mut rng = Rng::new(12);
        for _ in 0..20 {
            let (t, d) = (4 + rng.below(10), 2 + rng.below(5));
            let frames =
                Tensor::new([t, d], (0..t * d).map(|_| rng.uniform(-2.0, 2.0)).collect());
            let plan = sample_mask_plan(t, &MaskPolicy::default(), &mut rng);
            let targets = apply_mask(&frames, &plan).unwrap();
            let pred = Tensor::new([t, d], (0..t * d).map(|_| rng.uniform(-2.0, 2.0)).collect());

            // independent loop over masked elements
            let mut sum = 0.0;
            let mut count = 0usize;
            for &(pos, _) in &plan.selected {
                for j in 0..d {
                    sum += (pred.at(pos, j) - frames.at(pos, j)).abs();
                    count += 1;
                }
            }
            let oracle = sum / count as f64;
            let got = mpc_loss(&pred, &targets).unwrap();
            assert!((got - oracle).abs() <= 1e-12, "{got} vs {oracle}");
        }
    }

    #[test]
    fn invariant_to_unmasked_predictions() {
        let mut rng = Rng::new(13);
        for _ in 0..100 {
            let (t, d) = (5 + rng.below(8), 2 + rng.below(4));
            let frames =
                Tensor::new([t, d], (0..t * d).map(|_| rng.uniform(-2.0, 2.0)).collect());
            let plan = sample_mask_plan(t, &MaskPolicy::default(), &mut rng);
            let targets = apply_mask(&frames, &plan).unwrap();
            let pred = Tensor::new([t, d], (0..t * d).map(|_| rng.uniform(-2.0, 2.0)).collect());
            let base = mpc_loss(&pred, &targets).unwrap();

            let mut perturbed = pred.clone();
            for pos in 0..t {
                if !targets.plan.is_selected(pos) {
                    for j in 0..d {
                        perturbed.set(pos, j, rng.uniform(-100.0, 100.0));
                    }
                }
            }
            let after = mpc_loss(&perturbed, &targets).unwrap();
            assert_eq!(base.to_bits(), after.to_bits(), "loss must ignore unmasked positions");
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let frames = Tensor::zeros([3, 2]);
        let plan = MaskPlan { len: 3, selected: vec![(0, MaskAction::Zero)] };
        let targets = apply_mask(&frames, &plan).unwrap();
        let pred = Tensor::zeros([2, 2]);
        assert!(mpc_loss(&pred, &targets).is_err());
    }

    #[test]
    fn gradient_passes_finite_differences() {
        let mut rng = Rng::new(14);
        let (t, d) = (6, 3);
        let frames = Tensor::new([t, d], (0..t * d).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let plan = sample_mask_plan(t, &MaskPolicy::default(), &mut rng);
        let targets = apply_mask(&frames, &plan).unwrap();
        let pred = Tensor::new([t, d], (0..t * d).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let params = param_values([("pred", pred)]);
        let err = finite_diff_check(
            |g, p| {
                let pred = g.param("pred", p["pred"].clone());
                mpc_loss_node(g, pred, &targets).unwrap()
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "fd error {err}");
    }
}
