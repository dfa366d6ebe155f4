//! Per-speaker mean/variance normalization of FBANK features.

use std::collections::BTreeMap;

use super::fbank::FeatureSequence;
use super::AudioError;

/// Per-dimension mean and standard deviation, per speaker plus a global
/// fallback for speakers unseen at stats time.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerStats {
    pub dim: usize,
    pub per_speaker: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
    pub global: (Vec<f64>, Vec<f64>),
}

const STD_FLOOR: f64 = 1e-8;

/// Accumulate per-speaker and global statistics over training frames.
/// Every sequence must carry a speaker id, and every speaker must contribute
/// at least one frame.
pub fn compute_speaker_stats(seqs: &[FeatureSequence]) -> Result<SpeakerStats, AudioError> {
    let dim = seqs
        .iter()
        .find(|s| !s.is_empty())
        .map(|s| s.dim())
        .ok_or_else(|| AudioError::Config("no frames to normalize".into()))?;

    struct Acc {
        n: f64,
        sum: Vec<f64>,
        sum_sq: Vec<f64>,
    }
    let mut by_speaker: BTreeMap<String, Acc> = BTreeMap::new();
    let mut global = Acc { n: 0.0, sum: vec![0.0; dim], sum_sq: vec![0.0; dim] };

    for seq in seqs {
        if seq.speaker_id.is_empty() {
            return Err(AudioError::Config(format!(
                "utterance {} has no speaker id",
                seq.utterance_id
            )));
        }
        let acc = by_speaker.entry(seq.speaker_id.clone()).or_insert_with(|| Acc {
            n: 0.0,
            sum: vec![0.0; dim],
            sum_sq: vec![0.0; dim],
        });
        for i in 0..seq.len() {
            let row = seq.frames.row_slice(i);
            for (j, &v) in row.iter().enumerate() {
                acc.sum[j] += v;
                acc.sum_sq[j] += v * v;
                global.sum[j] += v;
                global.sum_sq[j] += v * v;
            }
            acc.n += 1.0;
            global.n += 1.0;
        }
    }

    let finish = |acc: &Acc| -> Result<(Vec<f64>, Vec<f64>), AudioError> {
        if acc.n == 0.0 {
            return Err(AudioError::Config("speaker has no frames".into()));
        }
        let mean: Vec<f64> = acc.sum.iter().map(|s| s / acc.n).collect();
        let std = acc
            .sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| ((sq / acc.n - m * m).max(0.0)).sqrt().max(STD_FLOOR))
            .collect();
        Ok((mean, std))
    };

    let mut per_speaker = BTreeMap::new();
    for (spk, acc) in &by_speaker {
        per_speaker.insert(spk.clone(), finish(acc)?);
    }
    Ok(SpeakerStats { dim, per_speaker, global: finish(&global)? })
}

/// Standardize one sequence in place with the given stats. Falls back to the
/// global statistics (and says so on stderr) when the speaker is unknown.
pub fn apply_stats(seq: &mut FeatureSequence, stats: &SpeakerStats) {
    let (mean, std) = match stats.per_speaker.get(&seq.speaker_id) {
        Some(ms) => ms,
        None => {
            eprintln!(
                "warning: speaker {:?} not in normalization stats, using global stats (utterance {})",
                seq.speaker_id, seq.utterance_id
            );
            &stats.global
        }
    };
    let dim = seq.dim();
    for i in 0..seq.len() {
        for j in 0..dim {
            let v = seq.frames.at(i, j);
            seq.frames.set(i, j, (v - mean[j]) / std[j]);
        }
    }
}

/// Compute stats over the collection and normalize every sequence with them.
pub fn per_speaker_normalize(
    mut seqs: Vec<FeatureSequence>,
) -> Result<(Vec<FeatureSequence>, SpeakerStats), AudioError> {
    let stats = compute_speaker_stats(&seqs)?;
    for seq in seqs.iter_mut() {
        apply_stats(seq, &stats);
    }
    Ok((seqs, stats))
}
