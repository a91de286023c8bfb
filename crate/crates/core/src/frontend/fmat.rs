//! FMAT feature files: `"FMAT"`, u32 version (1), u32 rows, u32 cols, then
//! rows x cols little-endian f32 values in row-major order.

use std::path::Path;

use super::FeatureMatrix;
use crate::codec::{put_f32s, put_u32, u32_len, ByteReader};
use crate::error::{KwsError, Result};

const MAGIC: &[u8; 4] = b"FMAT";
const VERSION: u32 = 1;

pub fn fmat_to_bytes(fm: &FeatureMatrix) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + fm.values.len() * 4);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, u32_len(fm.n_mels, "rows")?);
    put_u32(&mut out, u32_len(fm.n_frames, "cols")?);
    put_f32s(&mut out, fm.values.iter().copied());
    Ok(out)
}

pub fn fmat_from_bytes(bytes: &[u8]) -> Result<FeatureMatrix> {
    let mut r = ByteReader::new(bytes);
    r.header(MAGIC, VERSION)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let values = r.f32_vec(rows * cols)?;
    if r.remaining() != 0 {
        return Err(KwsError::Corruption(format!(
            "{} trailing bytes after payload",
            r.remaining()
        )));
    }
    Ok(FeatureMatrix {
        values,
        n_mels: rows,
        n_frames: cols,
        hop_ms: 10.0,
        origin_time_s: 0.0,
    })
}

pub fn write_fmat(path: impl AsRef<Path>, fm: &FeatureMatrix) -> Result<()> {
    std::fs::write(path, fmat_to_bytes(fm)?)?;
    Ok(())
}

pub fn read_fmat(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    fmat_from_bytes(&std::fs::read(path)?)
}
