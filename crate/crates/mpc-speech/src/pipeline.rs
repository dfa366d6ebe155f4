//! End-to-end plumbing shared by the command-line tool and the experiment
//! suite: manifest-to-archive featurization and corpus evaluation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::eval::{cer, joint_beam_decode, DecodeConfig, EvalReport, UtteranceResult};
use crate::features::{
    apply_stats, compute_speaker_stats, fbank, load_wav, read_manifest, read_records,
    read_speaker_stats, resample, write_records, write_speaker_stats, FeatureConfig,
    FeatureSequence, SpeakerStats, PIPELINE_RATE,
};
use crate::model::{ModelConfig, ModelParams, Vocab};
use crate::training::{join_labeled, TrainError, Utterance};

pub struct FeaturizeOutcome {
    pub utterances: usize,
    pub total_frames: usize,
    pub archive: PathBuf,
    pub stats: PathBuf,
}

/// Derived location of the speaker-statistics archive for a feature archive.
pub fn stats_path_for(archive: &Path) -> PathBuf {
    let mut name = archive.file_name().unwrap_or_default().to_os_string();
    name.push(".stats");
    archive.with_file_name(name)
}

/// Turn a manifest of WAV files into a normalized feature archive.
///
/// Every waveform is brought to the pipeline-internal 8 kHz first. With
/// `stats_in` the given statistics are applied (the dev/test path); without
/// it, statistics are computed from this manifest's speakers, applied, and
/// written next to the archive.
pub fn featurize(
    manifest_path: &Path,
    cfg: &FeatureConfig,
    out: &Path,
    stats_in: Option<&Path>,
) -> Result<FeaturizeOutcome, TrainError> {
    let entries = read_manifest(manifest_path)?;
    if entries.is_empty() {
        return Err(TrainError::Data(format!(
            "manifest {} has no utterances",
            manifest_path.display()
        )));
    }
    let mut seqs: Vec<FeatureSequence> = Vec::with_capacity(entries.len());
    for e in &entries {
        let mut wave = load_wav(&e.wav_path)?;
        wave.utterance_id = e.utterance_id.clone();
        wave.speaker_id = e.speaker_id.clone();
        let wave = resample(&wave, PIPELINE_RATE)?;
        seqs.push(fbank(&wave, cfg)?);
    }

    let (stats, stats_out): (SpeakerStats, PathBuf) = match stats_in {
        Some(p) => (read_speaker_stats(p)?, p.to_path_buf()),
        None => {
            let mut stats = compute_speaker_stats(&seqs)?;
            // quantize to the archive's f32 so the stored stats describe the
            // applied normalization exactly
            let squash = |v: &mut Vec<f64>| {
                for x in v.iter_mut() {
                    *x = *x as f32 as f64;
                }
            };
            for (mean, std) in stats.per_speaker.values_mut() {
                squash(mean);
                squash(std);
            }
            squash(&mut stats.global.0);
            squash(&mut stats.global.1);
            let p = stats_path_for(out);
            write_speaker_stats(&p, &stats)?;
            (stats, p)
        }
    };
    for seq in seqs.iter_mut() {
        apply_stats(seq, &stats);
    }

    let total_frames = seqs.iter().map(FeatureSequence::len).sum();
    write_records(out, seqs.iter().map(|s| (s.utterance_id.as_str(), &s.frames)))?;
    Ok(FeaturizeOutcome {
        utterances: seqs.len(),
        total_frames,
        archive: out.to_path_buf(),
        stats: stats_out,
    })
}

/// Load a labeled data set: archive records joined with manifest transcripts.
/// Builds the vocabulary from the transcripts unless one is supplied.
pub fn load_labeled(
    archive: &Path,
    manifest_path: &Path,
    vocab: Option<Vocab>,
) -> Result<(Vec<Utterance>, Vocab), TrainError> {
    let records = read_records(archive)?;
    let entries = read_manifest(manifest_path)?;
    let transcripts: BTreeMap<String, String> = entries
        .into_iter()
        .map(|e| (e.utterance_id, e.transcript))
        .collect();
    let vocab = vocab.unwrap_or_else(|| {
        Vocab::from_transcripts(transcripts.values().filter(|t| !t.is_empty()))
    });
    let utts = join_labeled(records, &transcripts, &vocab)?;
    Ok((utts, vocab))
}

/// Beam-decode a labeled set and score it.
pub fn evaluate_corpus(
    params: &ModelParams,
    cfg: &ModelConfig,
    vocab: &Vocab,
    test: &[Utterance],
    decode: &DecodeConfig,
) -> Result<EvalReport, TrainError> {
    let mut report = EvalReport::default();
    for utt in test {
        let reference = utt
            .text
            .clone()
            .ok_or_else(|| TrainError::Data(format!("utterance {} has no reference text", utt.id)))?;
        let hyp = joint_beam_decode(params, cfg, vocab, &utt.frames, decode)
            .map_err(|e| TrainError::Data(format!("decoding {}: {e}", utt.id)))?;
        let hypothesis = hyp.text(vocab);
        let (rate, counts) = cer(&reference, &hypothesis);
        report.push(UtteranceResult { id: utt.id.clone(), reference, hypothesis, rate, counts });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{write_corpus, SynthSpec};

    #[test]
    fn featurize_writes_archive_and_stats() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec { num_utterances: 6, seed: 3, ..SynthSpec::default() };
        let manifest = write_corpus(dir.path(), &spec, true).unwrap();
        let out = dir.path().join("feats.mpcf");
        let cfg = FeatureConfig::default();
        let summary = featurize(&manifest, &cfg, &out, None).unwrap();
        assert_eq!(summary.utterances, 6);
        assert!(summary.total_frames > 0);
        let records = read_records(&out).unwrap();
        assert_eq!(records.len(), 6);
        assert_eq!(records[0].1.cols(), 40);
        assert!(summary.stats.exists());

        // reusing the stats reproduces identical features
        let out2 = dir.path().join("feats2.mpcf");
        featurize(&manifest, &cfg, &out2, Some(&summary.stats)).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&out2).unwrap());
    }

    #[test]
    fn load_labeled_builds_a_vocab_from_transcripts() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec { num_utterances: 5, seed: 4, ..SynthSpec::default() };
        let manifest = write_corpus(dir.path(), &spec, true).unwrap();
        let out = dir.path().join("feats.mpcf");
        featurize(&manifest, &FeatureConfig::default(), &out, None).unwrap();
        let (utts, vocab) = load_labeled(&out, &manifest, None).unwrap();
        assert_eq!(utts.len(), 5);
        assert!(vocab.size() > 3);
        for u in &utts {
            assert!(u.labels.as_ref().is_some_and(|l| !l.is_empty()));
        }
    }
}
