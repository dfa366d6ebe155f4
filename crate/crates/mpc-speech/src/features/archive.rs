//! Binary feature archives.
//!
//! Little-endian, one record per utterance:
//! magic `MPCF`, format version `u32`, id length `u32`, id bytes, `T u32`,
//! `d u32`, then `T * d` 32-bit floats row-major. Speaker statistics use the
//! same container with the speaker id in place of the utterance id and `T = 2`
//! (mean row, std row); the global fallback is stored under the reserved id
//! `__global__`.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::numerics::Tensor;

use super::normalize::SpeakerStats;
use super::AudioError;

const MAGIC: &[u8; 4] = b"MPCF";
const VERSION: u32 = 1;
const GLOBAL_ID: &str = "__global__";

fn arch_err(path: &Path, detail: impl Into<String>) -> AudioError {
    AudioError::Archive { path: path.display().to_string(), detail: detail.into() }
}

fn io_err(path: &Path, source: std::io::Error) -> AudioError {
    AudioError::Io { path: path.display().to_string(), source }
}

/// Write `(id, [T, d] matrix)` records.
pub fn write_records<'a>(
    path: impl AsRef<Path>,
    records: impl Iterator<Item = (&'a str, &'a Tensor)>,
) -> Result<(), AudioError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let write = || -> std::io::Result<()> {
        for (id, frames) in records {
            w.write_all(MAGIC)?;
            w.write_all(&VERSION.to_le_bytes())?;
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
            w.write_all(&(frames.rows() as u32).to_le_bytes())?;
            w.write_all(&(frames.cols() as u32).to_le_bytes())?;
            for &v in frames.data() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        w.flush()
    };
    write().map_err(|e| io_err(path, e))
}

/// Read all records as `(id, [T, d] matrix)` pairs, in file order.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor)>, AudioError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let mut out = Vec::new();
    loop {
        let mut magic = [0u8; 4];
        match r.read_exact(&mut magic) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(io_err(path, e)),
        }
        if &magic != MAGIC {
            return Err(arch_err(path, format!("bad magic {magic:?}")));
        }
        let version = read_u32(&mut r, path)?;
        if version != VERSION {
            return Err(arch_err(path, format!("unsupported version {version}")));
        }
        let id_len = read_u32(&mut r, path)? as usize;
        let mut id_bytes = vec![0u8; id_len];
        r.read_exact(&mut id_bytes).map_err(|e| io_err(path, e))?;
        let id = String::from_utf8(id_bytes)
            .map_err(|_| arch_err(path, "record id is not utf-8"))?;
        let t = read_u32(&mut r, path)? as usize;
        let d = read_u32(&mut r, path)? as usize;
        let mut data = Vec::with_capacity(t * d);
        let mut buf = [0u8; 4];
        for _ in 0..t * d {
            r.read_exact(&mut buf).map_err(|e| io_err(path, e))?;
            data.push(f32::from_le_bytes(buf) as f64);
        }
        out.push((id, Tensor::new([t, d], data)));
    }
    Ok(out)
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32, AudioError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| io_err(path, e))?;
    Ok(u32::from_le_bytes(buf))
}

/// Store speaker statistics in the archive container.
pub fn write_speaker_stats(path: impl AsRef<Path>, stats: &SpeakerStats) -> Result<(), AudioError> {
    let mut records: Vec<(String, Tensor)> = Vec::new();
    let to_tensor = |(mean, std): &(Vec<f64>, Vec<f64>)| {
        let mut data = mean.clone();
        data.extend_from_slice(std);
        Tensor::new([2, mean.len()], data)
    };
    records.push((GLOBAL_ID.to_string(), to_tensor(&stats.global)));
    for (spk, ms) in &stats.per_speaker {
        records.push((spk.clone(), to_tensor(ms)));
    }
    write_records(path, records.iter().map(|(id, t)| (id.as_str(), t)))
}

/// Load speaker statistics written by [`write_speaker_stats`].
pub fn read_speaker_stats(path: impl AsRef<Path>) -> Result<SpeakerStats, AudioError> {
    let path = path.as_ref();
    let records = read_records(path)?;
    let mut per_speaker = BTreeMap::new();
    let mut global = None;
    let mut dim = 0;
    for (id, t) in records {
        if t.rows() != 2 {
            return Err(arch_err(path, format!("stats record {id:?} must have T=2, got {}", t.rows())));
        }
        dim = t.cols();
        let mean = t.row_slice(0).to_vec();
        let std = t.row_slice(1).to_vec();
        if id == GLOBAL_ID {
            global = Some((mean, std));
        } else {
            per_speaker.insert(id, (mean, std));
        }
    }
    let global = global.ok_or_else(|| arch_err(path, "missing global stats record"))?;
    Ok(SpeakerStats { dim, per_speaker, global })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_round_trip_preserves_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.mpcf");
        let mut rng = crate::numerics::Rng::new(77);
        let records: Vec<(String, Tensor)> = (0..5)
            .map(|i| {
                let t = 1 + rng.below(6);
                let m = Tensor::new(
                    [t, 3],
                    // values on the f32 grid survive the round trip exactly
                    (0..t * 3).map(|_| rng.uniform(-4.0, 4.0) as f32 as f64).collect(),
                );
                (format!("utt-{i}"), m)
            })
            .collect();
        write_records(&p, records.iter().map(|(id, t)| (id.as_str(), t))).unwrap();
        let back = read_records(&p).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn empty_record_is_legal() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.mpcf");
        let records = vec![("empty".to_string(), Tensor::zeros([0, 40]))];
        write_records(&p, records.iter().map(|(id, t)| (id.as_str(), t))).unwrap();
        let back = read_records(&p).unwrap();
        assert_eq!(back[0].1.shape(), &[0, 40]);
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.mpcf");
        std::fs::write(&p, b"JUNKxxxxxxxxxxxxxxxx").unwrap();
        let err = read_records(&p).unwrap_err().to_string();
        assert!(err.contains("bad magic"), "{err}");
    }

    #[test]
    fn speaker_stats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stats.mpcf");
        let mut per_speaker = BTreeMap::new();
        per_speaker.insert("alice".to_string(), (vec![1.0, 2.0], vec![0.5, 0.25]));
        per_speaker.insert("bob".to_string(), (vec![-1.0, 0.0], vec![1.0, 2.0]));
        let stats = SpeakerStats {
            dim: 2,
            per_speaker,
            global: (vec![0.0, 1.0], vec![1.0, 1.0]),
        };
        write_speaker_stats(&p, &stats).unwrap();
        let back = read_speaker_stats(&p).unwrap();
        assert_eq!(back, stats);
    }
}
