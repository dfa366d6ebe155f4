//! Frame stacking: the pre-training downsampler.

use crate::numerics::Tensor;

use super::fbank::FeatureSequence;

/// Concatenate every `factor` consecutive rows of a matrix:
/// `[T, d] -> [floor(T / factor), d * factor]`. Trailing remainder rows are
/// dropped.
pub fn stack_rows(frames: &Tensor, factor: usize) -> Tensor {
    assert!(factor >= 1, "stack factor must be at least 1");
    let (t, d) = (frames.rows(), frames.cols());
    let t_out = t / factor;
    let mut data = Vec::with_capacity(t_out * d * factor);
    for i in 0..t_out {
        data.extend_from_slice(&frames.data()[i * factor * d..(i + 1) * factor * d]);
    }
    Tensor::new([t_out, d * factor], data)
}

/// [`stack_rows`] over a feature sequence, with the framing metadata scaled
/// to the widened frames.
pub fn stack_frames(seq: &FeatureSequence, factor: usize) -> FeatureSequence {
    FeatureSequence {
        frames: stack_rows(&seq.frames, factor),
        frame_length_ms: seq.frame_length_ms + seq.frame_shift_ms * (factor - 1) as f64,
        frame_shift_ms: seq.frame_shift_ms * factor as f64,
        utterance_id: seq.utterance_id.clone(),
        speaker_id: seq.speaker_id.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(t: usize, d: usize) -> FeatureSequence {
        FeatureSequence {
            frames: Tensor::new([t, d], (0..t * d).map(|i| i as f64).collect()),
            frame_length_ms: 25.0,
            frame_shift_ms: 10.0,
            utterance_id: "u".into(),
            speaker_id: "s".into(),
        }
    }

    #[test]
    fn shape_rule() {
        let out = stack_frames(&seq(16, 2), 8);
        assert_eq!(out.frames.shape(), &[2, 16]);
    }

    #[test]
    fn remainder_frames_are_dropped() {
        let out = stack_frames(&seq(17, 2), 8);
        assert_eq!(out.frames.shape(), &[2, 16]);
    }

    #[test]
    fn stacked_frame_is_the_concatenation() {
        let s = seq(16, 2);
        let out = stack_frames(&s, 8);
        let expected: Vec<f64> = s.frames.data()[0..16].to_vec();
        assert_eq!(out.frames.row_slice(0), &expected[..]);
    }

    #[test]
    fn unstacking_recovers_the_kept_prefix() {
        let s = seq(21, 3);
        let factor = 4;
        let out = stack_frames(&s, factor);
        let kept = out.frames.rows() * factor;
        let flat: Vec<f64> = out.frames.data().to_vec();
        assert_eq!(&flat[..], &s.frames.data()[..kept * 3]);
    }

    #[test]
    fn factor_one_is_identity() {
        let s = seq(5, 3);
        let out = stack_frames(&s, 1);
        assert_eq!(out.frames, s.frames);
    }
}
