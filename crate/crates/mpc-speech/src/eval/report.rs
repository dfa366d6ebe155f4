//! Corpus-level evaluation reports.

use std::fmt::Write as _;

use super::cer::EditCounts;

#[derive(Clone, Debug)]
pub struct UtteranceResult {
    pub id: String,
    pub reference: String,
    pub hypothesis: String,
    pub rate: f64,
    pub counts: EditCounts,
}

/// Per-utterance results plus corpus aggregates. The corpus rate is total
/// edits over total reference length, not a mean of per-utterance rates.
#[derive(Clone, Debug, Default)]
pub struct EvalReport {
    pub utterances: Vec<UtteranceResult>,
}

impl EvalReport {
    pub fn push(&mut self, result: UtteranceResult) {
        self.utterances.push(result);
    }

    pub fn totals(&self) -> EditCounts {
        let mut t = EditCounts::default();
        for u in &self.utterances {
            t.substitutions += u.counts.substitutions;
            t.deletions += u.counts.deletions;
            t.insertions += u.counts.insertions;
        }
        t
    }

    pub fn corpus_cer(&self) -> f64 {
        let edits: usize = self.utterances.iter().map(|u| u.counts.distance()).sum();
        let ref_len: usize = self.utterances.iter().map(|u| u.reference.chars().count()).sum();
        if ref_len == 0 {
            if edits == 0 {
                0.0
            } else {
                edits as f64
            }
        } else {
            edits as f64 / ref_len as f64
        }
    }

    /// Machine-readable lines: `id<TAB>cer<TAB>ref<TAB>hyp`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for u in &self.utterances {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", u.id, u.rate, u.reference, u.hypothesis);
        }
        out
    }

    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for u in &self.utterances {
            let _ = writeln!(
                out,
                "{}: cer={:.4} ref={:?} hyp={:?} (S={} D={} I={})",
                u.id,
                u.rate,
                u.reference,
                u.hypothesis,
                u.counts.substitutions,
                u.counts.deletions,
                u.counts.insertions
            );
        }
        let t = self.totals();
        let _ = writeln!(
            out,
            "corpus: cer={:.4} over {} utterances (S={} D={} I={})",
            self.corpus_cer(),
            self.utterances.len(),
            t.substitutions,
            t.deletions,
            t.insertions
        );
        out
    }
}
