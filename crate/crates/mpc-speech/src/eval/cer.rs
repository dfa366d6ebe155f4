//! Character error rate: unit-cost Levenshtein distance over Unicode scalar
//! values, divided by the reference length.

/// Edit operation counts from an optimal alignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl EditCounts {
    pub fn distance(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// Optimal edit counts turning `reference` into `hypothesis`. Deletions drop
/// reference characters, insertions add hypothesis characters.
pub fn edit_counts(reference: &str, hypothesis: &str) -> EditCounts {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    let (n, m) = (r.len(), h.len());

    // full DP matrix with backtrace, counting each operation
    let mut dist = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dist.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        dist[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub_cost = if r[i - 1] == h[j - 1] { 0 } else { 1 };
            dist[i][j] = (dist[i - 1][j - 1] + sub_cost)
                .min(dist[i - 1][j] + 1)
                .min(dist[i][j - 1] + 1);
        }
    }

    let mut counts = EditCounts::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let sub_cost = if r[i - 1] == h[j - 1] { 0 } else { 1 };
            if dist[i][j] == dist[i - 1][j - 1] + sub_cost {
                if sub_cost == 1 {
                    counts.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dist[i][j] == dist[i - 1][j] + 1 {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    counts
}

/// Rate plus counts. The empty-vs-empty case is 0 by convention (noted on
/// stderr); an empty reference against a non-empty hypothesis counts every
/// inserted character against a length-1 floor.
pub fn cer(reference: &str, hypothesis: &str) -> (f64, EditCounts) {
    let counts = edit_counts(reference, hypothesis);
    let ref_len = reference.chars().count();
    let rate = if ref_len == 0 {
        if hypothesis.is_empty() {
            eprintln!("cer: empty reference and hypothesis, scoring 0 by convention");
            0.0
        } else {
            counts.distance() as f64
        }
    } else {
        counts.distance() as f64 / ref_len as f64
    };
    (rate, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_strings_score_zero() {
        let (rate, counts) = cer("abc", "abc");
        assert_eq!(rate, 0.0);
        assert_eq!(counts.distance(), 0);
    }

    #[test]
    fn one_substitution_in_three() {
        let (rate, counts) = cer("abc", "axc");
        assert!((rate - 1.0 / 3.0).abs() <= 1e-15);
        assert_eq!(counts, EditCounts { substitutions: 1, deletions: 0, insertions: 0 });
    }

    #[test]
    fn transposition_costs_two() {
        // the unit-cost DP has no swap operation
        let (rate, counts) = cer("ab", "ba");
        assert_eq!(counts.distance(), 2);
        assert_eq!(rate, 1.0);
    }

    #[test]
    fn both_empty_is_zero() {
        assert_eq!(cer("", "").0, 0.0);
    }

    #[test]
    fn unicode_characters_count_as_single_units() {
        let (rate, _) = cer("中文字", "中问字");
        assert!((rate - 1.0 / 3.0).abs() <= 1e-15);
    }

    /// Independent full-DP distance without backtrace.
    fn dp_oracle(a: &str, b: &str) -> usize {
        let x: Vec<char> = a.chars().collect();
        let y: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; y.len() + 1]; x.len() + 1];
        for i in 0..=x.len() {
            for j in 0..=y.len() {
                d[i][j] = if i == 0 {
                    j
                } else if j == 0 {
                    i
                } else {
                    let c = usize::from(x[i - 1] != y[j - 1]);
                    (d[i - 1][j - 1] + c).min(d[i - 1][j] + 1).min(d[i][j - 1] + 1)
                };
            }
        }
        d[x.len()][y.len()]
    }

    proptest! {
        #[test]
        fn counts_sum_to_the_dp_distance(a in "[abcd]{0,12}", b in "[abcd]{0,12}") {
            let counts = edit_counts(&a, &b);
            prop_assert_eq!(counts.distance(), dp_oracle(&a, &b));
        }

        #[test]
        fn distance_is_symmetric(a in "[abc]{0,10}", b in "[abc]{0,10}") {
            prop_assert_eq!(
                edit_counts(&a, &b).distance(),
                edit_counts(&b, &a).distance()
            );
        }

        #[test]
        fn triangle_inequality(
            a in "[ab]{0,8}",
            b in "[ab]{0,8}",
            c in "[ab]{0,8}",
        ) {
            let ab = edit_counts(&a, &b).distance();
            let bc = edit_counts(&b, &c).distance();
            let ac = edit_counts(&a, &c).distance();
            prop_assert!(ac <= ab + bc);
        }
    }
}
