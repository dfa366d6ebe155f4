//! Scheduled sampling: occasionally feed the decoder its own prediction.

use crate::numerics::Rng;

/// Return the model's token with probability `rate`, the gold token
/// otherwise. Applied independently at each decoder input position.
pub fn scheduled_sample(gold: usize, model: usize, rate: f64, rng: &mut Rng) -> usize {
    assert!((0.0..=1.0).contains(&rate), "sample rate {rate} not in [0, 1]");
    if rng.bernoulli(rate) {
        model
    } else {
        gold
    }
}
