//! Checkpoint files.
//!
//! Little-endian layout: magic `MPCK`, version `u32`, a length-prefixed
//! `key=value` text config block, then per tensor (in sorted name order):
//! name length and bytes, rank `u32`, extents `u32` each, and the raw 64-bit
//! float data. Round-trips are bit-exact.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::numerics::Tensor;

use super::params::ModelParams;
use super::ModelError;

const MAGIC: &[u8; 4] = b"MPCK";
const VERSION: u32 = 1;

fn io_err(path: &Path, source: std::io::Error) -> ModelError {
    ModelError::Io { path: path.display().to_string(), source }
}

fn fmt_err(path: &Path, detail: impl Into<String>) -> ModelError {
    ModelError::CheckpointFormat { path: path.display().to_string(), detail: detail.into() }
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &ModelParams,
    config: &BTreeMap<String, String>,
) -> Result<(), ModelError> {
    let path = path.as_ref();
    for (k, v) in config {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(fmt_err(path, format!("config key/value {k:?} contains '=' or newline")));
        }
    }
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let mut block = String::new();
        for (k, v) in config {
            block.push_str(k);
            block.push('=');
            block.push_str(v);
            block.push('\n');
        }
        w.write_all(&(block.len() as u32).to_le_bytes())?;
        w.write_all(block.as_bytes())?;
        for (name, t) in &params.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &e in t.shape() {
                w.write_all(&(e as u32).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    };
    write().map_err(|e| io_err(path, e))
}

pub fn load_checkpoint(
    path: impl AsRef<Path>,
) -> Result<(ModelParams, BTreeMap<String, String>), ModelError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if &magic != MAGIC {
        return Err(fmt_err(path, format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r, path)?;
    if version != VERSION {
        return Err(fmt_err(path, format!("unsupported version {version}")));
    }
    let block_len = read_u32(&mut r, path)? as usize;
    let mut block = vec![0u8; block_len];
    r.read_exact(&mut block).map_err(|e| io_err(path, e))?;
    let block =
        String::from_utf8(block).map_err(|_| fmt_err(path, "config block is not utf-8"))?;
    let mut config = BTreeMap::new();
    for line in block.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| fmt_err(path, format!("config line {line:?} has no '='")))?;
        config.insert(k.to_string(), v.to_string());
    }

    let mut params = ModelParams::default();
    loop {
        let mut len_buf = [0u8; 4];
        match r.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(io_err(path, e)),
        }
        let name_len = u32::from_le_bytes(len_buf) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(|e| io_err(path, e))?;
        let name =
            String::from_utf8(name).map_err(|_| fmt_err(path, "tensor name is not utf-8"))?;
        let rank = read_u32(&mut r, path)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r, path)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; 8];
        for _ in 0..numel {
            r.read_exact(&mut buf).map_err(|e| io_err(path, e))?;
            data.push(f64::from_le_bytes(buf));
        }
        params.insert(name, Tensor::new(shape, data));
    }
    Ok((params, config))
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32, ModelError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| io_err(path, e))?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ModelConfig;
    use crate::model::params::init_mpc_pretrain;
    use crate::numerics::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.mpck");
        let cfg = ModelConfig::toy();
        let params = init_mpc_pretrain(&cfg, &mut Rng::new(41));
        let mut kv = cfg.to_kv();
        kv.insert("objective".into(), "mpc".into());
        save_checkpoint(&p, &params, &kv).unwrap();
        let (back, kv_back) = load_checkpoint(&p).unwrap();
        assert_eq!(kv_back, kv);
        assert_eq!(back.tensors.len(), params.tensors.len());
        for (name, t) in &params.tensors {
            let b = back.get(name);
            assert_eq!(b.shape(), t.shape());
            for (x, y) in t.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits(), "{name}");
            }
        }
    }

    #[test]
    fn double_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig::toy();
        let params = init_mpc_pretrain(&cfg, &mut Rng::new(42));
        let kv = cfg.to_kv();
        let p1 = dir.path().join("a.mpck");
        let p2 = dir.path().join("b.mpck");
        save_checkpoint(&p1, &params, &kv).unwrap();
        save_checkpoint(&p2, &params, &kv).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.mpck");
        std::fs::write(&p, b"NOPE0000").unwrap();
        assert!(matches!(load_checkpoint(&p), Err(ModelError::CheckpointFormat { .. })));
    }
}
