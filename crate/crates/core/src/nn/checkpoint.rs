//! Single-file checkpoints: a magic tag, a JSON header carrying the model
//! configuration and tensor layout, then raw little-endian `f64` payloads.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::{ParamGroup, ParamStore};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ECGRPTCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header<C> {
    version: u32,
    kind: String,
    config: C,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    group: ParamGroup,
    rows: usize,
    cols: usize,
}

pub fn save<C: Serialize>(path: &Path, kind: &str, config: &C, store: &ParamStore) -> Result<()> {
    let header = Header {
        version: CHECKPOINT_VERSION,
        kind: kind.to_string(),
        config,
        tensors: store
            .iter()
            .map(|(_, p)| TensorEntry { name: p.name.clone(), group: p.group, rows: p.value.rows(), cols: p.value.cols() })
            .collect(),
    };
    let header = serde_json::to_vec(&header)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for (_, p) in store.iter() {
        for v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads a checkpoint written by [`save`], checking its kind tag.
pub fn load<C: DeserializeOwned>(path: &Path, expected_kind: &str) -> Result<(C, ParamStore)> {
    let bad = |msg: String| Error::Checkpoint { path: path.to_path_buf(), message: msg };
    let mut r = BufReader::new(File::open(path).map_err(|e| bad(e.to_string()))?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| bad(e.to_string()))?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut header).map_err(|e| bad(e.to_string()))?;
    let header: Header<C> = serde_json::from_slice(&header).map_err(|e| bad(format!("header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {}", header.version)));
    }
    if header.kind != expected_kind {
        return Err(bad(format!("expected a {expected_kind} checkpoint, found {}", header.kind)));
    }
    let mut store = ParamStore::new();
    let mut buf = [0u8; 8];
    for t in header.tensors {
        let mut data = Vec::with_capacity(t.rows * t.cols);
        for _ in 0..t.rows * t.cols {
            r.read_exact(&mut buf).map_err(|_| bad("truncated payload".into()))?;
            data.push(f64::from_le_bytes(buf));
        }
        store.add(t.name, t.group, Matrix::from_vec(t.rows, t.cols, data));
    }
    Ok((header.config, store))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_values_and_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut store = ParamStore::new();
        store.add("a", ParamGroup::Encoder, Matrix::from_vec(2, 2, vec![1.0, -2.5, 1e-300, f64::MAX]));
        store.add("b", ParamGroup::Decoder, Matrix::row_vector(vec![0.125]));
        save(&path, "toy", &vec![7u32, 8], &store).unwrap();
        let (cfg, loaded): (Vec<u32>, _) = load(&path, "toy").unwrap();
        assert_eq!(cfg, vec![7, 8]);
        assert_eq!(loaded, store);
        assert!(load::<Vec<u32>>(&path, "other").is_err());
    }
}
