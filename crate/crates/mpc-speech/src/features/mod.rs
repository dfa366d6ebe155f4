//! Audio ingestion and FBANK feature extraction: WAV loading, 2:1 resampling
//! to the pipeline-internal 8 kHz, log-mel extraction, per-speaker
//! normalization, frame stacking, and the binary feature archive.

mod archive;
mod fbank;
mod fft;
mod manifest;
mod normalize;
mod resample;
mod stack;
mod wav;

pub use archive::{read_records, read_speaker_stats, write_records, write_speaker_stats};
pub use fbank::{fbank, mel_center_freqs, FeatureConfig, FeatureSequence};
pub use fft::{fft_pow2, power_spectrum};
pub use manifest::{read_manifest, write_manifest, ManifestEntry};
pub use normalize::{apply_stats, compute_speaker_stats, per_speaker_normalize, SpeakerStats};
pub use resample::resample;
pub use stack::{stack_frames, stack_rows};
pub use wav::{load_wav, write_wav, Waveform};

/// The rate every waveform is brought to before feature extraction.
pub const PIPELINE_RATE: u32 = 8000;

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: not a usable wav file: {detail}")]
    Wav { path: String, detail: String },
    #[error("unsupported resample {from} Hz -> {to} Hz (only 2:1 decimation)")]
    UnsupportedRate { from: u32, to: u32 },
    #[error("invalid feature configuration: {0}")]
    Config(String),
    #[error("{path}:{line}: bad manifest record: {detail}")]
    Manifest { path: String, line: usize, detail: String },
    #[error("feature archive {path}: {detail}")]
    Archive { path: String, detail: String },
}

#[cfg(test)]
mod property_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        /// Frame count is 1 + floor((N - L) / S) whenever N >= L.
        #[test]
        fn frame_count_formula(
            l_samples in 80usize..400,
            s_samples in 20usize..200,
            extra in 0usize..2000,
        ) {
            let n = l_samples + extra;
            let cfg = FeatureConfig {
                frame_length_ms: l_samples as f64 / 8.0,
                frame_shift_ms: s_samples as f64 / 8.0,
                fft_size: 512,
                ..FeatureConfig::default()
            };
            let w = Waveform {
                samples: vec![0.01; n],
                sample_rate: 8000,
                utterance_id: "u".into(),
                speaker_id: "s".into(),
            };
            let f = fbank(&w, &cfg).unwrap();
            prop_assert_eq!(f.len(), 1 + (n - l_samples) / s_samples);
        }

        /// Stacking then flattening recovers the first factor * T' frames.
        #[test]
        fn stack_unstack_recovers_prefix(t in 0usize..40, d in 1usize..6, factor in 1usize..9) {
            let seq = FeatureSequence {
                frames: crate::numerics::Tensor::new(
                    [t, d],
                    (0..t * d).map(|i| i as f64 * 0.5).collect(),
                ),
                frame_length_ms: 25.0,
                frame_shift_ms: 10.0,
                utterance_id: "u".into(),
                speaker_id: "s".into(),
            };
            let stacked = stack_frames(&seq, factor);
            prop_assert_eq!(stacked.frames.rows(), t / factor);
            let kept = stacked.frames.rows() * factor * d;
            prop_assert_eq!(&stacked.frames.data()[..], &seq.frames.data()[..kept]);
        }
    }
}
