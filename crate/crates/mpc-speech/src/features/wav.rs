//! 16-bit PCM mono WAV reading and writing.

use std::io::{Read, Write};
use std::path::Path;

use super::AudioError;

/// Audio samples scaled to `[-1, 1]`, plus the identifiers the pipeline
/// carries around. `load_wav` leaves the identifiers empty; manifest ingestion
/// fills them in.
#[derive(Clone, Debug)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub utterance_id: String,
    pub speaker_id: String,
}

fn wav_err(path: &Path, detail: impl Into<String>) -> AudioError {
    AudioError::Wav { path: path.display().to_string(), detail: detail.into() }
}

fn io_err(path: &Path, source: std::io::Error) -> AudioError {
    AudioError::Io { path: path.display().to_string(), source }
}

/// Load a 16-bit PCM mono WAV file. Samples are scaled by `1/32768`.
/// Only 8 kHz and 16 kHz files are accepted at ingestion.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform, AudioError> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;

    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(wav_err(path, "missing RIFF/WAVE header"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = pos + 8 + size;
        if body_end > bytes.len() {
            return Err(wav_err(path, format!("chunk {:?} overruns file", String::from_utf8_lossy(id))));
        }
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(wav_err(path, "fmt chunk too short"));
                }
                fmt = Some((
                    u16::from_le_bytes(body[0..2].try_into().unwrap()),
                    u16::from_le_bytes(body[2..4].try_into().unwrap()),
                    u32::from_le_bytes(body[4..8].try_into().unwrap()),
                    u16::from_le_bytes(body[14..16].try_into().unwrap()),
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos = body_end + (size & 1); // chunks are word-aligned
    }

    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| wav_err(path, "no fmt chunk"))?;
    if format != 1 {
        return Err(wav_err(path, format!("not linear PCM (format tag {format})")));
    }
    if channels != 1 {
        return Err(wav_err(path, format!("expected mono, got {channels} channels")));
    }
    if bits != 16 {
        return Err(wav_err(path, format!("expected 16-bit samples, got {bits}")));
    }
    if rate != 8000 && rate != 16000 {
        return Err(wav_err(path, format!("unsupported sample rate {rate} Hz (want 8000 or 16000)")));
    }
    let data = data.ok_or_else(|| wav_err(path, "no data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(wav_err(path, "data chunk has odd byte length"));
    }

    let samples = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: rate,
        utterance_id: String::new(),
        speaker_id: String::new(),
    })
}

/// Write samples as 16-bit PCM mono. Values are clamped to `[-1, 1]` and
/// quantized by rounding `x * 32768`.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<(), AudioError> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(44 + samples.len() * 2);
    let data_len = (samples.len() * 2) as u32;
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| io_err(path, e))
}
