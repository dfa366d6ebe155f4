//! Manifest files: one utterance per line,
//! `utterance_id<TAB>wav_path<TAB>speaker_id<TAB>transcript`.
//! The transcript field is empty for unlabeled pre-training data.

use std::path::{Path, PathBuf};

use super::AudioError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub wav_path: PathBuf,
    pub speaker_id: String,
    pub transcript: String,
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, AudioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| AudioError::Io { path: path.display().to_string(), source: e })?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(AudioError::Manifest {
                path: path.display().to_string(),
                line: lineno + 1,
                detail: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        if fields[0].is_empty() || fields[1].is_empty() || fields[2].is_empty() {
            return Err(AudioError::Manifest {
                path: path.display().to_string(),
                line: lineno + 1,
                detail: "utterance id, wav path, and speaker id must be non-empty".into(),
            });
        }
        entries.push(ManifestEntry {
            utterance_id: fields[0].to_string(),
            wav_path: PathBuf::from(fields[1]),
            speaker_id: fields[2].to_string(),
            transcript: fields[3].to_string(),
        });
    }
    Ok(entries)
}

/// Write a manifest in the same format `read_manifest` accepts.
pub fn write_manifest(
    path: impl AsRef<Path>,
    entries: &[ManifestEntry],
) -> Result<(), AudioError> {
    let path = path.as_ref();
    let mut text = String::new();
    for e in entries {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            e.utterance_id,
            e.wav_path.display(),
            e.speaker_id,
            e.transcript
        ));
    }
    std::fs::write(path, text)
        .map_err(|e| AudioError::Io { path: path.display().to_string(), source: e })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.tsv");
        let entries = vec![
            ManifestEntry {
                utterance_id: "u1".into(),
                wav_path: "/data/u1.wav".into(),
                speaker_id: "spk1".into(),
                transcript: "abc".into(),
            },
            ManifestEntry {
                utterance_id: "u2".into(),
                wav_path: "/data/u2.wav".into(),
                speaker_id: "spk2".into(),
                transcript: String::new(), // unlabeled
            },
        ];
        write_manifest(&p, &entries).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), entries);
    }

    #[test]
    fn wrong_field_count_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.tsv");
        std::fs::write(&p, "u1\t/a.wav\tspk\tok\nu2\tonly-two\n").unwrap();
        let err = read_manifest(&p).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }
}
