//! CTC prefix scoring for one-pass joint decoding.
//!
//! For a partial hypothesis `h`, the prefix score is the log-probability that
//! the CTC output *begins with* `h`; for a finished hypothesis the complete
//! score is the log-probability that the output *is exactly* `h`. Both come
//! from one forward recursion over per-frame quantities that hypothesis
//! extension updates in O(T).

use crate::numerics::Tensor;

fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Scorer over one utterance's `[T, V]` log-probabilities.
pub struct CtcScorer<'a> {
    log_probs: &'a Tensor,
    blank: usize,
}

/// Per-hypothesis recursion state.
///
/// `gamma_n[t]` / `gamma_b[t]`: log-probability that the first `t` frames
/// collapse to exactly this prefix with the path ending in a non-blank /
/// blank frame. `prefix_score` is the begins-with mass described above.
#[derive(Clone, Debug)]
pub struct PrefixState {
    gamma_n: Vec<f64>,
    gamma_b: Vec<f64>,
    last: Option<usize>,
    prefix_score: f64,
    len: usize,
}

impl PrefixState {
    pub fn prefix_score(&self) -> f64 {
        self.prefix_score
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl<'a> CtcScorer<'a> {
    pub fn new(log_probs: &'a Tensor, blank: usize) -> Self {
        assert!(blank < log_probs.cols(), "blank id out of range");
        CtcScorer { log_probs, blank }
    }

    fn frames(&self) -> usize {
        self.log_probs.rows()
    }

    /// State for the empty prefix: every string begins with it, so its
    /// prefix score is log 1.
    pub fn initial(&self) -> PrefixState {
        let t = self.frames();
        let mut gamma_b = Vec::with_capacity(t + 1);
        gamma_b.push(0.0);
        for ti in 0..t {
            gamma_b.push(gamma_b[ti] + self.log_probs.at(ti, self.blank));
        }
        PrefixState {
            gamma_n: vec![f64::NEG_INFINITY; t + 1],
            gamma_b,
            last: None,
            prefix_score: 0.0,
            len: 0,
        }
    }

    /// Extend a prefix by one non-blank character.
    pub fn extend(&self, state: &PrefixState, c: usize) -> PrefixState {
        assert!(c < self.log_probs.cols() && c != self.blank, "bad extension token {c}");
        let t = self.frames();
        let mut gamma_n = vec![f64::NEG_INFINITY; t + 1];
        let gamma_b_init = f64::NEG_INFINITY;
        let mut gamma_b = vec![gamma_b_init; t + 1];
        let mut prefix_score = f64::NEG_INFINITY;
        for ti in 1..=t {
            let lp_c = self.log_probs.at(ti - 1, c);
            let lp_blank = self.log_probs.at(ti - 1, self.blank);
            // mass of the parent prefix that a fresh `c` emission may follow:
            // after the same character, only blank-terminated paths qualify
            let phi = if state.last == Some(c) {
                state.gamma_b[ti - 1]
            } else {
                lse2(state.gamma_b[ti - 1], state.gamma_n[ti - 1])
            };
            gamma_n[ti] = lp_c + lse2(phi, gamma_n[ti - 1]);
            gamma_b[ti] = lp_blank + lse2(gamma_b[ti - 1], gamma_n[ti - 1]);
            prefix_score = lse2(prefix_score, lp_c + phi);
        }
        PrefixState {
            gamma_n,
            gamma_b,
            last: Some(c),
            prefix_score,
            len: state.len + 1,
        }
    }

    /// Log-probability that the output is exactly this prefix.
    pub fn sequence_score(&self, state: &PrefixState) -> f64 {
        let t = self.frames();
        lse2(state.gamma_n[t], state.gamma_b[t])
    }
}

/// Begins-with score of `prefix`, computed from scratch.
pub fn ctc_prefix_score(log_probs: &Tensor, prefix: &[usize], blank: usize) -> f64 {
    let scorer = CtcScorer::new(log_probs, blank);
    let mut state = scorer.initial();
    for &c in prefix {
        state = scorer.extend(&state, c);
    }
    state.prefix_score()
}

/// Exact-match score of `sequence`.
pub fn ctc_sequence_score(log_probs: &Tensor, sequence: &[usize], blank: usize) -> f64 {
    let scorer = CtcScorer::new(log_probs, blank);
    let mut state = scorer.initial();
    for &c in sequence {
        state = scorer.extend(&state, c);
    }
    scorer.sequence_score(&state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ctc_loss;
    use crate::numerics::Rng;

    fn uniform(t: usize, v: usize) -> Tensor {
        Tensor::full([t, v], (1.0 / v as f64).ln())
    }

    fn random_log_probs(t: usize, v: usize, rng: &mut Rng) -> Tensor {
        let mut lp = Tensor::zeros([t, v]);
        for i in 0..t {
            let row: Vec<f64> = (0..v).map(|_| rng.uniform(-3.0, 1.0)).collect();
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
            for j in 0..v {
                lp.set(i, j, row[j] - lse);
            }
        }
        lp
    }

    #[test]
    fn empty_prefix_scores_log_one() {
        let lp = uniform(3, 3);
        let s = ctc_prefix_score(&lp, &[], 0);
        assert_eq!(s, 0.0);
        assert!(s <= 0.0);
    }

    #[test]
    fn empty_sequence_score_is_the_all_blank_mass() {
        let lp = uniform(2, 3);
        let s = ctc_sequence_score(&lp, &[], 0);
        assert!((s - (1.0f64 / 9.0).ln()).abs() <= 1e-12);
    }

    #[test]
    fn prefix_a_matches_enumeration_on_the_uniform_example() {
        // T=2, uniform over {blank, a, b}: paths whose collapse starts with
        // 'a' are aa, a-, -a, ab -> 4/9
        let lp = uniform(2, 3);
        let s = ctc_prefix_score(&lp, &[1], 0);
        assert!((s - (4.0f64 / 9.0).ln()).abs() <= 1e-12, "{s}");
    }

    #[test]
    fn complete_score_agrees_with_ctc_loss() {
        let mut rng = Rng::new(51);
        for _ in 0..40 {
            let t = 1 + rng.below(6);
            let v = 2 + rng.below(3);
            let lp = random_log_probs(t, v, &mut rng);
            let l = rng.below(3.min(t) + 1);
            let labels: Vec<usize> = (0..l).map(|_| 1 + rng.below(v - 1)).collect();
            let direct = ctc_sequence_score(&lp, &labels, 0);
            let via_loss = -ctc_loss(&lp, &labels, 0).unwrap();
            if via_loss.is_infinite() {
                assert_eq!(direct, f64::NEG_INFINITY);
            } else {
                assert!((direct - via_loss).abs() <= 1e-10, "{direct} vs {via_loss}");
            }
        }
    }

    #[test]
    fn prefix_mass_shrinks_as_the_prefix_grows() {
        let mut rng = Rng::new(52);
        let lp = random_log_probs(6, 4, &mut rng);
        let scorer = CtcScorer::new(&lp, 0);
        let mut state = scorer.initial();
        let mut prev = state.prefix_score();
        for &c in &[1usize, 2, 3] {
            state = scorer.extend(&state, c);
            assert!(state.prefix_score() <= prev + 1e-12);
            prev = state.prefix_score();
        }
    }

    #[test]
    fn prefix_score_sums_first_emission_events() {
        // independent check against direct path enumeration
        let mut rng = Rng::new(53);
        for _ in 0..20 {
            let t = 1 + rng.below(4);
            let v = 2 + rng.below(2);
            let lp = random_log_probs(t, v, &mut rng);
            let prefix: Vec<usize> = (0..1 + rng.below(2)).map(|_| 1 + rng.below(v - 1)).collect();

            // enumerate all v^t paths, count those whose collapse starts with prefix
            let mut total = 0.0f64;
            let mut path = vec![0usize; t];
            'outer: loop {
                let mut collapsed = Vec::new();
                let mut prev = None;
                for &p in &path {
                    if Some(p) != prev && p != 0 {
                        collapsed.push(p);
                    }
                    prev = Some(p);
                }
                if collapsed.len() >= prefix.len() && collapsed[..prefix.len()] == prefix[..] {
                    total += path
                        .iter()
                        .enumerate()
                        .map(|(i, &s)| lp.at(i, s))
                        .sum::<f64>()
                        .exp();
                }
                let mut i = 0;
                loop {
                    if i == t {
                        break 'outer;
                    }
                    path[i] += 1;
                    if path[i] < v {
                        break;
                    }
                    path[i] = 0;
                    i += 1;
                }
            }
            let got = ctc_prefix_score(&lp, &prefix, 0);
            if total == 0.0 {
                assert_eq!(got, f64::NEG_INFINITY);
            } else {
                assert!((got - total.ln()).abs() <= 1e-10, "{got} vs {}", total.ln());
            }
        }
    }
}
