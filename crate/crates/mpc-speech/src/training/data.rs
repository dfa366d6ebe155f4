//! Dataset assembly: joining feature archives with manifests, the
//! deterministic validation split, and length-bucketed batching.

use crate::model::Vocab;
use crate::numerics::{Rng, Tensor};

use super::TrainError;

/// One training utterance: features plus (for fine-tuning) encoded labels.
#[derive(Clone, Debug)]
pub struct Utterance {
    pub id: String,
    pub frames: Tensor, // [T, d_mel]
    pub labels: Option<Vec<usize>>,
    pub text: Option<String>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Deterministic pre-training split: utterances whose id hashes to
/// `0 mod denominator` go to validation.
pub fn is_validation_utterance(id: &str, denominator: u64) -> bool {
    denominator > 0 && fnv1a(id.as_bytes()) % denominator == 0
}

pub fn split_train_val(
    records: Vec<(String, Tensor)>,
    denominator: u64,
) -> (Vec<Utterance>, Vec<Utterance>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (id, frames) in records {
        let utt = Utterance { id: id.clone(), frames, labels: None, text: None };
        if is_validation_utterance(&id, denominator) {
            val.push(utt);
        } else {
            train.push(utt);
        }
    }
    (train, val)
}

/// Join features with manifest transcripts and encode them. Utterances with
/// characters outside the vocabulary are rejected with a report, not a crash.
pub fn join_labeled(
    records: Vec<(String, Tensor)>,
    transcripts: &std::collections::BTreeMap<String, String>,
    vocab: &Vocab,
) -> Result<Vec<Utterance>, TrainError> {
    let mut out = Vec::new();
    let mut rejected = 0usize;
    for (id, frames) in records {
        let Some(text) = transcripts.get(&id) else {
            return Err(TrainError::Data(format!("utterance {id} has no manifest transcript")));
        };
        if text.is_empty() {
            return Err(TrainError::Data(format!("utterance {id} has an empty transcript")));
        }
        match vocab.encode(text) {
            Ok(labels) => out.push(Utterance {
                id,
                frames,
                labels: Some(labels),
                text: Some(text.clone()),
            }),
            Err(e) => {
                eprintln!("rejecting utterance {id}: {e}");
                rejected += 1;
            }
        }
    }
    if rejected > 0 {
        eprintln!("rejected {rejected} utterance(s) with out-of-vocabulary transcripts");
    }
    if out.is_empty() {
        return Err(TrainError::Data("no usable labeled utterances".into()));
    }
    Ok(out)
}

/// Length-bucketed batches in a deterministic epoch order: utterances are
/// sorted by (length, id), chunked, and the chunk order is shuffled by the
/// epoch's stream.
pub fn make_batches(utts: &[Utterance], batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    assert!(batch_size > 0);
    let mut order: Vec<usize> = (0..utts.len()).collect();
    order.sort_by(|&a, &b| {
        (utts[a].frames.rows(), &utts[a].id).cmp(&(utts[b].frames.rows(), &utts[b].id))
    });
    let mut batches: Vec<Vec<usize>> =
        order.chunks(batch_size).map(|c| c.to_vec()).collect();
    rng.shuffle(&mut batches);
    batches
}
