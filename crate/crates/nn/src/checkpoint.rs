//! CMDL model checkpoints.
//!
//! Layout: magic `CMDL`, version 1, dtype 1 (f32 LE), two zero bytes, u32 LE
//! length of a JSON header (network config and standardizer), the header,
//! u32 LE tensor count, then per tensor a u32 LE rank, its u32 LE dims and
//! the values.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Network, NetworkConfig};
use crate::train::{Model, Standardizer};
use crate::NnError;

pub const CMDL_MAGIC: &[u8; 4] = b"CMDL";
const VERSION: u8 = 1;
const DTYPE_F32_LE: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Network(#[from] NnError),
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: NetworkConfig,
    standardizer: Option<Standardizer>,
}

fn u32_of(v: usize) -> Result<[u8; 4], CheckpointError> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| CheckpointError::Format(format!("{v} exceeds u32")))
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CMDL_MAGIC)?;
    w.write_all(&[VERSION, DTYPE_F32_LE, 0, 0])?;
    let header = serde_json::to_vec(&Header {
        config: model.network.config.clone(),
        standardizer: model.standardizer.clone(),
    })
    .map_err(|e| CheckpointError::Format(e.to_string()))?;
    w.write_all(&u32_of(header.len())?)?;
    w.write_all(&header)?;
    let params = model.network.params();
    w.write_all(&u32_of(params.len())?)?;
    for p in params {
        w.write_all(&u32_of(p.shape.len())?)?;
        for &d in &p.shape {
            w.write_all(&u32_of(d)?)?;
        }
        for v in &p.value {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<usize, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| CheckpointError::Format(format!("truncated {what}")))?;
    Ok(u32::from_le_bytes(b) as usize)
}

/// Rebuild the network from the stored config, then overwrite every tensor.
pub fn load_model(path: impl AsRef<Path>) -> Result<Model, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut fixed = [0u8; 8];
    r.read_exact(&mut fixed)
        .map_err(|_| CheckpointError::Format("truncated header".into()))?;
    if &fixed[0..4] != CMDL_MAGIC {
        return Err(CheckpointError::Format(format!("bad magic {:?}", &fixed[0..4])));
    }
    if fixed[4] != VERSION || fixed[5] != DTYPE_F32_LE || fixed[6..8] != [0, 0] {
        return Err(CheckpointError::Format(format!("unsupported version/dtype {:?}", &fixed[4..8])));
    }
    let len = read_u32(&mut r, "header length")?;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)
        .map_err(|_| CheckpointError::Format("truncated config".into()))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| CheckpointError::Format(e.to_string()))?;
    let mut network = Network::<f32>::build(&header.config)?;
    let count = read_u32(&mut r, "tensor count")?;
    let mut params = network.params_mut();
    if count != params.len() {
        return Err(CheckpointError::Format(format!(
            "{count} tensors stored, architecture has {}",
            params.len()
        )));
    }
    for (i, p) in params.iter_mut().enumerate() {
        let rank = read_u32(&mut r, "rank")?;
        let dims = (0..rank).map(|_| read_u32(&mut r, "dims")).collect::<Result<Vec<_>, _>>()?;
        if dims != p.shape {
            return Err(CheckpointError::Format(format!("tensor {i} has shape {dims:?}, expected {:?}", p.shape)));
        }
        let mut bytes = vec![0u8; p.len() * 4];
        r.read_exact(&mut bytes)
            .map_err(|_| CheckpointError::Format(format!("truncated tensor {i}")))?;
        for (v, b) in p.value.iter_mut().zip(bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().unwrap());
        }
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(CheckpointError::Format("trailing bytes".into()));
    }
    Ok(Model {
        network,
        standardizer: header.standardizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Arch, Head};

    fn model() -> Model {
        let mut cfg = NetworkConfig::new("T1_F4".parse::<Arch>().unwrap(), 4, 3, Head::Sigmoid);
        cfg.seed = 5;
        let mut m = Model::new(&cfg).unwrap();
        m.standardizer = Some(Standardizer {
            mean: vec![1.0, 0.5, 0.0, 2.0],
            std: vec![3.0, 1.0, 0.1, 1.5],
        });
        m
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.cmdl");
        let m = model();
        save_model(&m, &p).unwrap();
        let back = load_model(&p).unwrap();
        assert_eq!(back.network.config, m.network.config);
        assert_eq!(back.standardizer, m.standardizer);
        assert_eq!(back.network.snapshot(), m.network.snapshot());
        assert_eq!(&std::fs::read(&p).unwrap()[0..8], b"CMDL\x01\x01\x00\x00");
    }

    #[test]
    fn corrupt_checkpoints_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.cmdl");
        save_model(&model(), &p).unwrap();
        let good = std::fs::read(&p).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(load_model(&p), Err(CheckpointError::Format(_))));
        std::fs::write(&p, &good[..good.len() - 2]).unwrap();
        assert!(matches!(load_model(&p), Err(CheckpointError::Format(_))));
        let mut long = good.clone();
        long.push(0);
        std::fs::write(&p, &long).unwrap();
        assert!(matches!(load_model(&p), Err(CheckpointError::Format(_))));
    }
}
