//! 2:1 decimation with a windowed-sinc anti-aliasing filter.

use super::wav::Waveform;
use super::AudioError;

const TAPS: usize = 191; // odd, so the group delay is an integer sample count
const CUTOFF_HZ: f64 = 3800.0;

fn lowpass_taps(input_rate: f64) -> Vec<f64> {
    let m = (TAPS - 1) / 2;
    let fc = CUTOFF_HZ / input_rate; // cycles per input sample
    let mut h: Vec<f64> = (0..TAPS)
        .map(|k| {
            let t = k as f64 - m as f64;
            let sinc = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * std::f64::consts::PI * fc * t).sin() / (std::f64::consts::PI * t)
            };
            // Blackman window
            let w = 0.42 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (TAPS - 1) as f64).cos()
                + 0.08 * (4.0 * std::f64::consts::PI * k as f64 / (TAPS - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    for v in h.iter_mut() {
        *v /= sum; // unit DC gain
    }
    h
}

/// Halve the sample rate: low-pass filter, then keep every second sample.
/// Output length is `ceil(len / 2)`. The filter's group delay is compensated
/// and edges are handled by replicating the first and last samples.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform, AudioError> {
    if w.sample_rate == target_rate {
        return Ok(w.clone());
    }
    if w.sample_rate != 2 * target_rate {
        return Err(AudioError::UnsupportedRate { from: w.sample_rate, to: target_rate });
    }

    let h = lowpass_taps(w.sample_rate as f64);
    let m = (TAPS - 1) / 2;
    let n = w.samples.len();
    let edge = |i: isize| -> f64 {
        if n == 0 {
            0.0
        } else {
            w.samples[i.clamp(0, n as isize - 1) as usize]
        }
    };

    let out_len = n.div_ceil(2);
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let center = 2 * i;
        let mut acc = 0.0;
        for (k, &hk) in h.iter().enumerate() {
            acc += hk * edge(center as isize + m as isize - k as isize);
        }
        out.push(acc);
    }

    Ok(Waveform {
        samples: out,
        sample_rate: target_rate,
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

    fn rms(xs: &[f64]) -> f64 {
        (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
    }

    #[test]
    fn dc_is_preserved() {
        let w = wave(vec![0.5; 4000], 16000);
        let out = resample(&w, 8000).unwrap();
        assert_eq!(out.samples.len(), 2000);
        for &s in &out.samples {
            assert!((s - 0.5).abs() <= 1e-9, "{s}");
        }
    }

    #[test]
    fn length_halves() {
        let w = wave(vec![0.0; 16000], 16000);
        let out = resample(&w, 8000).unwrap();
        assert_eq!(out.samples.len(), 8000);
        assert_eq!(out.sample_rate, 8000);

        let odd = wave(vec![0.0; 16001], 16000);
        assert_eq!(resample(&odd, 8000).unwrap().samples.len(), 8001);
    }

    #[test]
    fn tone_above_target_nyquist_is_suppressed() {
        // 6 kHz exceeds the post-decimation Nyquist of 4 kHz and must vanish.
        let n = 16000;
        let tone: Vec<f64> = (0..n)
            .map(|i| 0.8 * (2.0 * std::f64::consts::PI * 6000.0 * i as f64 / 16000.0).sin())
            .collect();
        let in_rms = rms(&tone);
        let out = resample(&wave(tone, 16000), 8000).unwrap();
        assert!(rms(&out.samples) <= 0.01 * in_rms, "rms {}", rms(&out.samples));
    }

    #[test]
    fn band_limited_signal_passes_within_two_percent_rms() {
        // Sum of tones below 3.5 kHz, compared against the analytic signal at
        // the decimated instants (group delay already compensated).
        let n = 16000;
        let freqs = [300.0, 1100.0, 2250.0, 3400.0];
        let sig = |t: f64| -> f64 {
            freqs.iter().enumerate().map(|(j, f)| {
                0.2 * (2.0 * std::f64::consts::PI * f * t + j as f64).sin()
            }).sum()
        };
        let xs: Vec<f64> = (0..n).map(|i| sig(i as f64 / 16000.0)).collect();
        let out = resample(&wave(xs, 16000), 8000).unwrap();
        // skip the filter half-length at each edge
        let skip = 100;
        let mut err = Vec::new();
        let mut reference = Vec::new();
        for i in skip..out.samples.len() - skip {
            let r = sig(2.0 * i as f64 / 16000.0);
            err.push(out.samples[i] - r);
            reference.push(r);
        }
        assert!(rms(&err) <= 0.02 * rms(&reference), "rms err {} vs {}", rms(&err), rms(&reference));
    }

    #[test]
    fn unsupported_ratio_is_rejected() {
        let w = wave(vec![0.0; 100], 16000);
        assert!(matches!(
            resample(&w, 11025),
            Err(AudioError::UnsupportedRate { from: 16000, to: 11025 })
        ));
    }

    #[test]
    fn same_rate_is_identity() {
        let w = wave(vec![0.25; 50], 8000);
        let out = resample(&w, 8000).unwrap();
        assert_eq!(out.samples, w.samples);
    }
}
