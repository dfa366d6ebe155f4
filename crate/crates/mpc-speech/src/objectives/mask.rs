//! Masking policy and per-sequence mask plans.
//!
//! A "token" here is one stacked frame: masking runs on the eight-fold
//! downsampled sequence the encoder sees during pre-training, so the zero
//! vector spans a whole stacked frame and random replacements come from the
//! same utterance's stacked frames.

use crate::numerics::{Rng, Tensor};

use super::ObjectiveError;

/// Fraction of positions to mask and how selected positions are replaced.
#[derive(Clone, Debug)]
pub struct MaskPolicy {
    pub select_ratio: f64,
    pub p_zero: f64,
    pub p_random: f64,
    pub p_keep: f64,
}

impl Default for MaskPolicy {
    fn default() -> Self {
        MaskPolicy { select_ratio: 0.15, p_zero: 0.8, p_random: 0.1, p_keep: 0.1 }
    }
}

impl MaskPolicy {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if !(self.select_ratio > 0.0 && self.select_ratio < 1.0) {
            return Err(ObjectiveError::BadPolicy(format!(
                "select_ratio must be in (0, 1), got {}",
                self.select_ratio
            )));
        }
        let sum = self.p_zero + self.p_random + self.p_keep;
        if (sum - 1.0).abs() > 1e-12 || self.p_zero < 0.0 || self.p_random < 0.0 || self.p_keep < 0.0 {
            return Err(ObjectiveError::BadPolicy(format!(
                "action probabilities ({}, {}, {}) must be non-negative and sum to 1",
                self.p_zero, self.p_random, self.p_keep
            )));
        }
        Ok(())
    }

    /// Selected-position count: `max(1, floor(ratio * t))` for non-empty
    /// sequences, zero otherwise.
    pub fn selected_count(&self, t: usize) -> usize {
        if t == 0 {
            0
        } else {
            ((self.select_ratio * t as f64).floor() as usize).max(1)
        }
    }
}

/// What happens to one selected position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskAction {
    /// Replace with the zero vector.
    Zero,
    /// Replace with the sequence's own frame at this index.
    Random(usize),
    /// Leave the frame unchanged (still part of the loss).
    Keep,
}

/// Per-position mask decisions for one sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskPlan {
    pub len: usize,
    /// Selected positions in increasing order with their actions.
    pub selected: Vec<(usize, MaskAction)>,
}

impl MaskPlan {
    pub fn is_selected(&self, pos: usize) -> bool {
        self.selected.binary_search_by_key(&pos, |(p, _)| *p).is_ok()
    }
}

/// Draw a fresh mask plan. Positions are sampled uniformly without
/// replacement; each selected position gets an independent categorical
/// action draw. Every call consumes fresh randomness, so feeding the same
/// sequence twice masks it differently.
pub fn sample_mask_plan(t: usize, policy: &MaskPolicy, rng: &mut Rng) -> MaskPlan {
    let count = policy.selected_count(t);
    let positions = rng.choose_indices(t, count);
    let selected = positions
        .into_iter()
        .map(|pos| {
            let u = rng.next_f64();
            let action = if u < policy.p_zero {
                MaskAction::Zero
            } else if u < policy.p_zero + policy.p_random {
                let source = if t > 1 {
                    // a frame from another position of the same sequence
                    loop {
                        let j = rng.below(t);
                        if j != pos {
                            break j;
                        }
                    }
                } else {
                    pos
                };
                MaskAction::Random(source)
            } else {
                MaskAction::Keep
            };
            (pos, action)
        })
        .collect();
    MaskPlan { len: t, selected }
}

/// Reconstruction targets: the untouched frames, the masked input the
/// encoder sees, and the plan that produced it.
#[derive(Clone, Debug)]
pub struct PredictiveTargets {
    pub original: Tensor,
    pub masked: Tensor,
    pub plan: MaskPlan,
}

/// Apply a mask plan to a stacked-frame matrix.
pub fn apply_mask(frames: &Tensor, plan: &MaskPlan) -> Result<PredictiveTargets, ObjectiveError> {
    if frames.rows() != plan.len {
        return Err(ObjectiveError::PlanLengthMismatch {
            plan: plan.len,
            frames: frames.rows(),
        });
    }
    let d = frames.cols();
    let mut masked = frames.clone();
    for &(pos, action) in &plan.selected {
        match action {
            MaskAction::Zero => {
                for j in 0..d {
                    masked.set(pos, j, 0.0);
                }
            }
            MaskAction::Random(src) => {
                let row = frames.row_slice(src).to_vec();
                for (j, v) in row.into_iter().enumerate() {
                    masked.set(pos, j, v);
                }
            }
            MaskAction::Keep => {}
        }
    }
    Ok(PredictiveTargets { original: frames.clone(), masked, plan: plan.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_positions_select_exactly_three() {
        let mut rng = Rng::new(1);
        let plan = sample_mask_plan(20, &MaskPolicy::default(), &mut rng);
        assert_eq!(plan.selected.len(), 3); // floor(0.15 * 20)
    }

    #[test]
    fn single_position_is_always_selected() {
        let mut rng = Rng::new(2);
        let plan = sample_mask_plan(1, &MaskPolicy::default(), &mut rng);
        assert_eq!(plan.selected.len(), 1);
        assert_eq!(plan.selected[0].0, 0);
    }

    #[test]
    fn empty_sequence_selects_nothing() {
        let mut rng = Rng::new(3);
        let plan = sample_mask_plan(0, &MaskPolicy::default(), &mut rng);
        assert!(plan.selected.is_empty());
    }

    #[test]
    fn action_fractions_match_the_policy() {
        let mut rng = Rng::new(4);
        let policy = MaskPolicy::default();
        let (mut zero, mut random, mut keep) = (0usize, 0usize, 0usize);
        let mut total = 0usize;
        while total < 10_000 {
            let plan = sample_mask_plan(40, &policy, &mut rng);
            for &(_, action) in &plan.selected {
                match action {
                    MaskAction::Zero => zero += 1,
                    MaskAction::Random(_) => random += 1,
                    MaskAction::Keep => keep += 1,
                }
                total += 1;
            }
        }
        let t = total as f64;
        assert!((zero as f64 / t - 0.8).abs() <= 0.02);
        assert!((random as f64 / t - 0.1).abs() <= 0.02);
        assert!((keep as f64 / t - 0.1).abs() <= 0.02);
    }

    #[test]
    fn random_source_avoids_own_position() {
        let mut rng = Rng::new(5);
        for _ in 0..2000 {
            let plan = sample_mask_plan(8, &MaskPolicy::default(), &mut rng);
            for &(pos, action) in &plan.selected {
                if let MaskAction::Random(src) = action {
                    assert_ne!(src, pos);
                    assert!(src < 8);
                }
            }
        }
    }

    #[test]
    fn identical_seeds_reproduce_identical_plans() {
        let mut a = Rng::new(9);
        let mut b = Rng::new(9);
        for _ in 0..50 {
            assert_eq!(
                sample_mask_plan(30, &MaskPolicy::default(), &mut a),
                sample_mask_plan(30, &MaskPolicy::default(), &mut b)
            );
        }
    }

    #[test]
    fn consecutive_draws_differ() {
        let mut rng = Rng::new(10);
        for _ in 0..200 {
            let a = sample_mask_plan(20, &MaskPolicy::default(), &mut rng);
            let b = sample_mask_plan(20, &MaskPolicy::default(), &mut rng);
            assert_ne!(a, b, "dynamic masking must redraw the pattern");
        }
    }

    #[test]
    fn apply_mask_follows_the_plan() {
        let frames = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let plan = MaskPlan { len: 3, selected: vec![(1, MaskAction::Zero)] };
        let t = apply_mask(&frames, &plan).unwrap();
        assert_eq!(t.masked.row_slice(0), &[1.0, 2.0]);
        assert_eq!(t.masked.row_slice(1), &[0.0, 0.0]);
        assert_eq!(t.masked.row_slice(2), &[5.0, 6.0]);
        assert_eq!(t.original, frames);
    }

    #[test]
    fn random_action_copies_the_source_frame() {
        let frames = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let plan = MaskPlan { len: 3, selected: vec![(0, MaskAction::Random(2))] };
        let t = apply_mask(&frames, &plan).unwrap();
        assert_eq!(t.masked.row_slice(0), &[5.0, 6.0]);
    }

    #[test]
    fn empty_plan_leaves_input_untouched() {
        let frames = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let plan = MaskPlan { len: 2, selected: vec![] };
        let t = apply_mask(&frames, &plan).unwrap();
        assert_eq!(t.masked, frames);
    }

    #[test]
    fn plan_length_mismatch_is_rejected() {
        let frames = Tensor::zeros([3, 2]);
        let plan = MaskPlan { len: 5, selected: vec![] };
        assert!(apply_mask(&frames, &plan).is_err());
    }

    #[test]
    fn selected_count_rule_holds_for_all_lengths() {
        let policy = MaskPolicy::default();
        for t in 1..=500 {
            let expected = (((0.15 * t as f64).floor() as usize).max(1)).min(t);
            assert_eq!(policy.selected_count(t), expected, "t = {t}");
        }
        assert_eq!(policy.selected_count(0), 0);
    }
}
