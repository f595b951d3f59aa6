//! CIMG tensor container.
//!
//! Layout: magic `CIMG`, version 1, dtype 1 (f32 LE), layout 1 (N,H,W,C with
//! C fastest), a zero byte, u32 LE rank = 4, four u32 LE dims, then the payload.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::ChemImage;

pub const CIMG_MAGIC: &[u8; 4] = b"CIMG";
const VERSION: u8 = 1;
const DTYPE_F32_LE: u8 = 1;
const LAYOUT_NHWC: u8 = 1;
const RANK: u32 = 4;
/// Bytes before the payload: fixed header plus the four dims.
pub const CIMG_HEADER_LEN: usize = 12 + 16;

#[derive(Debug, Error)]
pub enum TensorFileError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad tensor file: {0}")]
    Format(String),
    #[error("image {index} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        index: usize,
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
}

pub fn write_tensor_file(images: &[ChemImage], path: impl AsRef<Path>) -> Result<(), TensorFileError> {
    let shape = images.first().map(ChemImage::shape).unwrap_or((0, 0, 0));
    for (index, img) in images.iter().enumerate() {
        if img.shape() != shape {
            return Err(TensorFileError::ShapeMismatch {
                index,
                expected: shape,
                found: img.shape(),
            });
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CIMG_MAGIC)?;
    w.write_all(&[VERSION, DTYPE_F32_LE, LAYOUT_NHWC, 0])?;
    w.write_all(&RANK.to_le_bytes())?;
    for d in [images.len(), shape.0, shape.1, shape.2] {
        let d = u32::try_from(d).map_err(|_| TensorFileError::Format(format!("dimension {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    for img in images {
        for v in &img.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<Vec<ChemImage>, TensorFileError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 12];
    r.read_exact(&mut header)
        .map_err(|_| TensorFileError::Format("truncated header".into()))?;
    if &header[0..4] != CIMG_MAGIC {
        return Err(TensorFileError::Format(format!("bad magic {:?}", &header[0..4])));
    }
    if header[4] != VERSION {
        return Err(TensorFileError::Format(format!("unsupported version {}", header[4])));
    }
    if header[5] != DTYPE_F32_LE || header[6] != LAYOUT_NHWC || header[7] != 0 {
        return Err(TensorFileError::Format(format!(
            "unsupported dtype/layout bytes {:?}",
            &header[5..8]
        )));
    }
    let rank = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if rank != RANK {
        return Err(TensorFileError::Format(format!("rank {rank}, expected {RANK}")));
    }
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)
            .map_err(|_| TensorFileError::Format("truncated dims".into()))?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let [n, h, w, c] = dims;
    let per_image = h
        .checked_mul(w)
        .and_then(|x| x.checked_mul(c))
        .ok_or_else(|| TensorFileError::Format("dims overflow".into()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let expected = n
        .checked_mul(per_image)
        .and_then(|x| x.checked_mul(4))
        .ok_or_else(|| TensorFileError::Format("dims overflow".into()))?;
    if payload.len() != expected {
        return Err(TensorFileError::Format(format!(
            "payload has {} bytes, dims imply {expected}",
            payload.len()
        )));
    }
    let mut out = Vec::with_capacity(n);
    if per_image == 0 {
        // zero-sized images carry no payload
        out.resize(n, ChemImage::zeros(h, w, c));
        return Ok(out);
    }
    for chunk in payload.chunks_exact(per_image * 4).take(n) {
        let data = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        out.push(ChemImage {
            height: h,
            width: w,
            channels: c,
            data,
        });
    }
    Ok(out)
}
