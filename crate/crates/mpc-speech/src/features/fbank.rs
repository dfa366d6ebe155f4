//! Log-mel filterbank (FBANK) extraction.

use crate::numerics::Tensor;

use super::fft::power_spectrum;
use super::wav::Waveform;
use super::AudioError;

/// FBANK extraction parameters. The paper-facing pipeline uses the defaults;
/// every field is overridable through the run configuration.
#[derive(Clone, Debug)]
pub struct FeatureConfig {
    pub d_mel: usize,
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
    pub fft_size: usize,
    pub mel_low_hz: f64,
    pub mel_high_hz: f64,
    pub log_floor: f64,
    pub pre_emphasis: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            d_mel: 40,
            frame_length_ms: 25.0,
            frame_shift_ms: 10.0,
            fft_size: 256,
            mel_low_hz: 20.0,
            mel_high_hz: 4000.0,
            log_floor: 1e-10,
            pre_emphasis: 0.97,
        }
    }
}

impl FeatureConfig {
    pub fn frame_length_samples(&self, rate: u32) -> usize {
        (self.frame_length_ms * rate as f64 / 1000.0).round() as usize
    }

    pub fn frame_shift_samples(&self, rate: u32) -> usize {
        (self.frame_shift_ms * rate as f64 / 1000.0).round() as usize
    }

    fn validate(&self, rate: u32) -> Result<(), AudioError> {
        let bad = |d: String| Err(AudioError::Config(d));
        if self.d_mel == 0 {
            return bad("d_mel must be positive".into());
        }
        if !(self.mel_low_hz < self.mel_high_hz && self.mel_high_hz <= rate as f64 / 2.0) {
            return bad(format!(
                "mel band [{}, {}] invalid for sample rate {rate}",
                self.mel_low_hz, self.mel_high_hz
            ));
        }
        if !self.fft_size.is_power_of_two() {
            return bad(format!("fft_size {} is not a power of two", self.fft_size));
        }
        if self.frame_length_samples(rate) > self.fft_size {
            return bad(format!(
                "frame of {} samples exceeds fft_size {}",
                self.frame_length_samples(rate),
                self.fft_size
            ));
        }
        if self.frame_shift_samples(rate) == 0 || self.frame_length_samples(rate) == 0 {
            return bad("frame length and shift must be positive".into());
        }
        if self.log_floor <= 0.0 {
            return bad("log_floor must be positive".into());
        }
        Ok(())
    }
}

/// A time-major matrix of log-mel frames with its framing metadata.
#[derive(Clone, Debug)]
pub struct FeatureSequence {
    pub frames: Tensor, // [T, d_mel]
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
    pub utterance_id: String,
    pub speaker_id: String,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of the triangular mel filters.
pub fn mel_center_freqs(cfg: &FeatureConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.mel_low_hz);
    let hi = hz_to_mel(cfg.mel_high_hz);
    (1..=cfg.d_mel)
        .map(|m| mel_to_hz(lo + (hi - lo) * m as f64 / (cfg.d_mel + 1) as f64))
        .collect()
}

/// Triangular filter weights over FFT bins, one row per mel filter.
fn mel_filterbank(cfg: &FeatureConfig, rate: u32) -> Vec<Vec<f64>> {
    let n_bins = cfg.fft_size / 2 + 1;
    let lo = hz_to_mel(cfg.mel_low_hz);
    let hi = hz_to_mel(cfg.mel_high_hz);
    let edges: Vec<f64> = (0..cfg.d_mel + 2)
        .map(|m| mel_to_hz(lo + (hi - lo) * m as f64 / (cfg.d_mel + 1) as f64))
        .collect();
    let bin_hz = rate as f64 / cfg.fft_size as f64;
    (0..cfg.d_mel)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= l || f >= r {
                        0.0
                    } else if f <= c {
                        (f - l) / (c - l)
                    } else {
                        (r - f) / (r - c)
                    }
                })
                .collect()
        })
        .collect()
}

/// Extract log-mel features. Frame count is `1 + floor((N - L) / S)` for `N`
/// samples, window `L`, and hop `S`; audio shorter than one window yields an
/// empty sequence. Frames are Hamming-windowed after pre-emphasis, and
/// energies are floored before the log.
pub fn fbank(w: &Waveform, cfg: &FeatureConfig) -> Result<FeatureSequence, AudioError> {
    cfg.validate(w.sample_rate)?;
    let l = cfg.frame_length_samples(w.sample_rate);
    let s = cfg.frame_shift_samples(w.sample_rate);
    let n = w.samples.len();
    let t = if n < l { 0 } else { 1 + (n - l) / s };

    // whole-signal pre-emphasis; the first sample keeps (1 - c) of itself
    let mut emphasized = Vec::with_capacity(n);
    for (i, &x) in w.samples.iter().enumerate() {
        let prev = if i == 0 { x } else { w.samples[i - 1] };
        emphasized.push(x - cfg.pre_emphasis * prev);
    }

    let window: Vec<f64> = (0..l)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (l - 1) as f64).cos())
        .collect();
    let filters = mel_filterbank(cfg, w.sample_rate);

    let mut data = Vec::with_capacity(t * cfg.d_mel);
    let mut frame = vec![0.0; l];
    for fi in 0..t {
        let start = fi * s;
        for i in 0..l {
            frame[i] = emphasized[start + i] * window[i];
        }
        let power = power_spectrum(&frame, cfg.fft_size);
        for weights in &filters {
            let energy: f64 = weights.iter().zip(power.iter()).map(|(w, p)| w * p).sum();
            data.push(energy.max(cfg.log_floor).ln());
        }
    }

    Ok(FeatureSequence {
        frames: Tensor::new([t, cfg.d_mel], data),
        frame_length_ms: cfg.frame_length_ms,
        frame_shift_ms: cfg.frame_shift_ms,
        utterance_id: w.utterance_id.clone(),
        speaker_id: w.speaker_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(samples: Vec<f64>, rate: u32) -> Waveform {
        Waveform { samples, sample_rate: rate, utterance_id: "u".into(), speaker_id: "s".into() }
    }

    #[test]
    fn zero_signal_hits_the_log_floor() {
        let cfg = FeatureConfig::default();
        let f = fbank(&wave(vec![0.0; 8000], 8000), &cfg).unwrap();
        let expected = cfg.log_floor.ln();
        assert!(f.frames.data().iter().all(|&v| v == expected));
    }

    #[test]
    fn one_second_at_8khz_yields_98_frames() {
        let cfg = FeatureConfig::default();
        let f = fbank(&wave(vec![0.01; 8000], 8000), &cfg).unwrap();
        // 1 + floor((8000 - 200) / 80)
        assert_eq!(f.len(), 98);
        assert_eq!(f.dim(), 40);
    }

    #[test]
    fn too_short_audio_gives_empty_sequence() {
        let cfg = FeatureConfig::default();
        let f = fbank(&wave(vec![0.1; 100], 8000), &cfg).unwrap();
        assert_eq!(f.len(), 0);
    }

    #[test]
    fn tone_peaks_at_nearest_mel_center() {
        let cfg = FeatureConfig::default();
        let tone: Vec<f64> = (0..4000)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 8000.0).sin())
            .collect();
        let f = fbank(&wave(tone, 8000), &cfg).unwrap();
        let centers = mel_center_freqs(&cfg);
        let nearest = centers
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 1000.0).abs().total_cmp(&(b.1 - 1000.0).abs()))
            .unwrap()
            .0;
        // interior frame, away from onset transients
        let row = f.frames.row_slice(f.len() / 2);
        let argmax = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, nearest);
    }

    #[test]
    fn invalid_mel_band_is_rejected() {
        let cfg = FeatureConfig { mel_high_hz: 6000.0, ..FeatureConfig::default() };
        assert!(matches!(fbank(&wave(vec![0.0; 8000], 8000), &cfg), Err(AudioError::Config(_))));
    }
}
