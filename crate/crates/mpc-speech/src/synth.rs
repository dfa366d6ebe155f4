//! Synthetic speech-like corpora: multi-tone character "syllables" over
//! noise, with deterministic labels. Used by the convergence experiments and
//! as a self-contained way to exercise the whole pipeline without real audio.

use std::path::Path;

use crate::features::{write_manifest, write_wav, AudioError, ManifestEntry, Waveform};
use crate::numerics::Rng;

/// Corpus shape. Each character maps to a fixed pair of tones; an utterance
/// is a sequence of tone segments between stretches of noise, and its
/// transcript is exactly that character sequence.
#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub num_utterances: usize,
    pub chars: Vec<char>,
    pub num_speakers: usize,
    pub min_chars: usize,
    pub max_chars: usize,
    pub segment_ms: f64,
    pub gap_ms: f64,
    pub sample_rate: u32,
    pub noise_level: f64,
    /// Probability that each character is followed by its cyclic successor
    /// rather than a uniform draw. Sequential structure is what makes masked
    /// segments inferable from their neighbors.
    pub transition_bias: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_utterances: 2000,
            chars: "abcdefghijkl".chars().collect(),
            num_speakers: 10,
            min_chars: 4,
            max_chars: 6,
            segment_ms: 120.0,
            gap_ms: 40.0,
            sample_rate: 8000,
            noise_level: 0.06,
            transition_bias: 0.85,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthUtterance {
    pub id: String,
    pub speaker_id: String,
    pub transcript: String,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl SynthUtterance {
    pub fn waveform(&self) -> Waveform {
        Waveform {
            samples: self.samples.clone(),
            sample_rate: self.sample_rate,
            utterance_id: self.id.clone(),
            speaker_id: self.speaker_id.clone(),
        }
    }
}

/// The two tone frequencies of character index `i`. Components are shared
/// between characters (a grid of low bands crossed with high bands), so one
/// tone alone is ambiguous and identity requires the conjunction.
fn tone_pair(i: usize) -> (f64, f64) {
    let low = 350.0 + 260.0 * (i % 4) as f64;
    let high = 1800.0 + 350.0 * ((i / 4) % 3) as f64;
    (low, high)
}

/// Generate utterance `index` of the corpus. Fully determined by
/// `(spec.seed, index)`.
pub fn synth_utterance(spec: &SynthSpec, index: usize) -> SynthUtterance {
    assert!(!spec.chars.is_empty() && spec.min_chars >= 1 && spec.min_chars <= spec.max_chars);
    let mut rng = Rng::new(spec.seed).substream("synth").substream_u64(index as u64);
    let speaker = rng.below(spec.num_speakers);
    let gain = 0.35 + 0.05 * speaker as f64;

    let n_chars = spec.min_chars + rng.below(spec.max_chars - spec.min_chars + 1);
    let mut transcript = String::new();
    let seg_len = (spec.segment_ms * spec.sample_rate as f64 / 1000.0).round() as usize;
    let gap_len = (spec.gap_ms * spec.sample_rate as f64 / 1000.0).round() as usize;
    let ramp = (seg_len / 8).max(1);

    let mut samples = Vec::with_capacity(gap_len * 2 + n_chars * seg_len);
    let noise = |rng: &mut Rng| spec.noise_level * rng.uniform(-1.0, 1.0);
    for _ in 0..gap_len {
        samples.push(noise(&mut rng));
    }
    let mut ci = rng.below(spec.chars.len());
    for pos in 0..n_chars {
        if pos > 0 {
            ci = if rng.bernoulli(spec.transition_bias) {
                (ci + 1) % spec.chars.len()
            } else {
                rng.below(spec.chars.len())
            };
        }
        transcript.push(spec.chars[ci]);
        let (f1, f2) = tone_pair(ci);
        // surface variation: per-segment frequency jitter and amplitude
        // balance, so identity is not readable off a single clean frame
        let jitter = |f: f64, rng: &mut Rng| f * rng.uniform(0.98, 1.02);
        let (f1, f2) = (jitter(f1, &mut rng), jitter(f2, &mut rng));
        let a1 = rng.uniform(0.35, 0.6);
        let a2 = rng.uniform(0.25, 0.5);
        let phase = rng.uniform(0.0, std::f64::consts::TAU);
        for s in 0..seg_len {
            let t = s as f64 / spec.sample_rate as f64;
            let envelope = if s < ramp {
                s as f64 / ramp as f64
            } else if s + ramp >= seg_len {
                (seg_len - s) as f64 / ramp as f64
            } else {
                1.0
            };
            let tone = a1 * (std::f64::consts::TAU * f1 * t + phase).sin()
                + a2 * (std::f64::consts::TAU * f2 * t).sin();
            samples.push(gain * envelope * tone + noise(&mut rng));
        }
    }
    for _ in 0..gap_len {
        samples.push(noise(&mut rng));
    }

    SynthUtterance {
        id: format!("synth-{index:05}"),
        speaker_id: format!("spk{speaker:02}"),
        transcript,
        samples,
        sample_rate: spec.sample_rate,
    }
}

pub fn generate_corpus(spec: &SynthSpec) -> Vec<SynthUtterance> {
    (0..spec.num_utterances).map(|i| synth_utterance(spec, i)).collect()
}

/// Write WAV files plus a manifest under `dir`. Pass `labeled = false` to
/// blank the transcripts (the pre-training view of the same audio).
pub fn write_corpus(
    dir: impl AsRef<Path>,
    spec: &SynthSpec,
    labeled: bool,
) -> Result<std::path::PathBuf, AudioError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| AudioError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let mut entries = Vec::new();
    for i in 0..spec.num_utterances {
        let utt = synth_utterance(spec, i);
        let wav_path = dir.join(format!("{}.wav", utt.id));
        write_wav(&wav_path, &utt.samples, utt.sample_rate)?;
        entries.push(ManifestEntry {
            utterance_id: utt.id,
            wav_path,
            speaker_id: utt.speaker_id,
            transcript: if labeled { utt.transcript } else { String::new() },
        });
    }
    let manifest = dir.join("manifest.tsv");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{fbank, mel_center_freqs, FeatureConfig};

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec { num_utterances: 3, ..SynthSpec::default() };
        let a = synth_utterance(&spec, 1);
        let b = synth_utterance(&spec, 1);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.transcript, b.transcript);
        let c = synth_utterance(&spec, 2);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn transcripts_are_within_the_character_set() {
        let spec = SynthSpec { num_utterances: 50, ..SynthSpec::default() };
        for utt in generate_corpus(&spec) {
            assert!(!utt.transcript.is_empty());
            assert!(utt.transcript.len() >= spec.min_chars && utt.transcript.len() <= spec.max_chars);
            assert!(utt.transcript.chars().all(|c| spec.chars.contains(&c)));
        }
    }

    #[test]
    fn tones_land_where_fbank_can_see_them() {
        // the dominant mel bin during a segment must track the character
        let spec = SynthSpec { noise_level: 0.0, num_utterances: 1, ..SynthSpec::default() };
        let utt = synth_utterance(&spec, 0);
        let cfg = FeatureConfig::default();
        let feats = fbank(&utt.waveform(), &cfg).unwrap();
        assert!(feats.len() > 10);
        let centers = mel_center_freqs(&cfg);
        // a mid-segment frame: its argmax bin should be near one of the two
        // tone frequencies of some character
        let probe = feats.len() / 2;
        let row = feats.frames.row_slice(probe);
        let argmax = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let freq = centers[argmax];
        let near_any_tone = (0..spec.chars.len()).any(|i| {
            let (f1, f2) = tone_pair(i);
            (freq - f1).abs() < 150.0 || (freq - f2).abs() < 150.0
        });
        assert!(near_any_tone, "argmax bin at {freq:.0} Hz matches no character tone");
    }

    #[test]
    fn corpus_files_round_trip_through_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec { num_utterances: 4, ..SynthSpec::default() };
        let manifest = write_corpus(dir.path(), &spec, true).unwrap();
        let entries = crate::features::read_manifest(&manifest).unwrap();
        assert_eq!(entries.len(), 4);
        for e in &entries {
            let w = crate::features::load_wav(&e.wav_path).unwrap();
            assert_eq!(w.sample_rate, 8000);
            assert!(!e.transcript.is_empty());
        }
    }
}
