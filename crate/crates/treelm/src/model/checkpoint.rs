use std::fs;
use std::io::{Read as _, Write as _};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ParamSet, Real};

const MAGIC: &[u8; 4] = b"TLMC";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    manifest: Vec<TensorInfo>,
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
    /// Offset into the parameter blob, in f32 elements.
    offset: usize,
    len: usize,
}

/// Versioned binary checkpoint: magic, header length, JSON header (config
/// plus a manifest of named shapes), then one contiguous little-endian f32
/// parameter blob.
pub fn save_checkpoint<F: Real>(
    path: impl AsRef<Path>,
    cfg: &ModelConfig,
    params: &ParamSet<F>,
) -> Result<()> {
    let mut manifest = Vec::new();
    let mut offset = 0usize;
    for (name, arr) in params.iter() {
        manifest.push(TensorInfo {
            name: name.to_string(),
            shape: arr.shape().to_vec(),
            offset,
            len: arr.len(),
        });
        offset += arr.len();
    }
    let header = Header {
        version: VERSION,
        config: cfg.clone(),
        manifest,
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut out = fs::File::create(path)?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(header_json.len() as u64).to_le_bytes())?;
    out.write_all(&header_json)?;
    let mut blob = Vec::with_capacity(offset * 4);
    for (_, arr) in params.iter() {
        for &v in arr.iter() {
            blob.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out.write_all(&blob)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelConfig, ParamSet<f32>)> {
    let mut file = fs::File::open(&path)?;
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::data("not a checkpoint file"));
    }
    let mut word = [0u8; 4];
    file.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::data(format!("unsupported checkpoint version {version}")));
    }
    let mut len8 = [0u8; 8];
    file.read_exact(&mut len8)?;
    let header_len = u64::from_le_bytes(len8) as usize;
    let mut header_json = vec![0u8; header_len];
    file.read_exact(&mut header_json)?;
    let header: Header = serde_json::from_slice(&header_json)?;

    let mut blob = Vec::new();
    file.read_to_end(&mut blob)?;
    let total: usize = header.manifest.iter().map(|t| t.len).sum();
    if blob.len() != total * 4 {
        return Err(Error::data(format!(
            "parameter blob holds {} bytes, expected {}",
            blob.len(),
            total * 4
        )));
    }

    let mut params = ParamSet::new();
    for info in &header.manifest {
        let mut values = Vec::with_capacity(info.len);
        for i in 0..info.len {
            let at = (info.offset + i) * 4;
            values.push(f32::from_le_bytes(blob[at..at + 4].try_into().unwrap()));
        }
        let arr = ArrayD::from_shape_vec(IxDyn(&info.shape), values)
            .map_err(|e| Error::data(format!("bad tensor shape for {}: {e}", info.name)))?;
        params.insert(info.name.clone(), arr);
    }
    header.config.validate()?;
    Ok((header.config, params))
}
