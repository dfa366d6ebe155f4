//! Plateau rule: divide the learning rate by 10, at most once, after the
//! validation loss fails to improve for a fixed number of epochs.

use super::schedule::ScheduleConfig;

#[derive(Clone, Debug, Default)]
pub struct PlateauState {
    pub best: Option<f64>,
    pub epochs_since_improvement: usize,
    pub applications_used: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlateauDecision {
    NoAction,
    DivideLr,
}

/// Feed one epoch's validation loss. Emits [`PlateauDecision::DivideLr`]
/// exactly when the non-improvement streak reaches the patience and no
/// division has been spent yet; after that it never fires again.
pub fn plateau_update(
    state: &mut PlateauState,
    cfg: &ScheduleConfig,
    epoch_val_loss: f64,
) -> PlateauDecision {
    let improved = match state.best {
        None => true,
        Some(best) => epoch_val_loss < best,
    };
    if improved {
        state.best = Some(epoch_val_loss);
        state.epochs_since_improvement = 0;
        return PlateauDecision::NoAction;
    }
    state.epochs_since_improvement += 1;
    if state.epochs_since_improvement >= cfg.plateau_patience_epochs
        && state.applications_used < cfg.plateau_max_applications
    {
        state.applications_used += 1;
        state.epochs_since_improvement = 0;
        return PlateauDecision::DivideLr;
    }
    PlateauDecision::NoAction
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(losses: &[f64]) -> Vec<PlateauDecision> {
        let cfg = ScheduleConfig::default();
        let mut state = PlateauState::default();
        losses.iter().map(|&l| plateau_update(&mut state, &cfg, l)).collect()
    }

    #[test]
    fn strictly_decreasing_never_divides() {
        let decisions = run(&[1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4]);
        assert!(decisions.iter().all(|&d| d == PlateauDecision::NoAction));
    }

    #[test]
    fn divides_at_the_sixth_epoch_of_the_paper_trace() {
        let decisions = run(&[1.0, 1.1, 1.1, 1.1, 1.1, 1.1]);
        assert_eq!(decisions[4], PlateauDecision::NoAction);
        assert_eq!(decisions[5], PlateauDecision::DivideLr);
    }

    #[test]
    fn a_second_stagnation_never_divides_again() {
        let mut losses = vec![1.0, 1.1, 1.1, 1.1, 1.1, 1.1]; // divide here
        losses.extend([0.5]); // improvement
        losses.extend([0.6; 20]); // long stagnation
        let decisions = run(&losses);
        assert_eq!(decisions.iter().filter(|&&d| d == PlateauDecision::DivideLr).count(), 1);
        assert_eq!(decisions[5], PlateauDecision::DivideLr);
    }

    #[test]
    fn equal_loss_counts_as_non_improvement() {
        let decisions = run(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(decisions[5], PlateauDecision::DivideLr);
    }

    #[test]
    fn randomized_traces_fire_iff_streak_reaches_patience() {
        use crate::numerics::Rng;
        let cfg = ScheduleConfig::default();
        for seed in 0..1000 {
            let mut rng = Rng::new(seed);
            let len = 8 + rng.below(25);
            let losses: Vec<f64> = (0..len).map(|_| rng.uniform(0.1, 2.0)).collect();

            let mut state = PlateauState::default();
            let decisions: Vec<PlateauDecision> =
                losses.iter().map(|&l| plateau_update(&mut state, &cfg, l)).collect();

            // reference: scan for the first 5-epoch non-improving streak
            let mut best = f64::INFINITY;
            let mut streak = 0usize;
            let mut fired = false;
            for (i, &l) in losses.iter().enumerate() {
                if l < best {
                    best = l;
                    streak = 0;
                } else {
                    streak += 1;
                }
                let should_fire = !fired && streak == cfg.plateau_patience_epochs;
                if should_fire {
                    fired = true;
                    streak = 0;
                }
                assert_eq!(
                    decisions[i] == PlateauDecision::DivideLr,
                    should_fire,
                    "seed {seed} epoch {i}: {losses:?}"
                );
            }
            assert!(state.applications_used <= 1);
        }
    }
}
