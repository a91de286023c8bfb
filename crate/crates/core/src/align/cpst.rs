//! CPST posterior files: `"CPST"`, u32 version (1), u32 K, u32 T, f32 frame
//! rate, f32 origin seconds, u32 byte length + UTF-8 characters, then K x T
//! little-endian f32 scores in row-major order.

use std::path::Path;

use super::CharPosteriorMatrix;
use crate::codec::{put_f32s, put_u32, u32_len, ByteReader};
use crate::error::{KwsError, Result};
use crate::frontend::Matrix;

const MAGIC: &[u8; 4] = b"CPST";
const VERSION: u32 = 1;

pub fn cpst_to_bytes(p: &CharPosteriorMatrix) -> Result<Vec<u8>> {
    let chars = p.chars.as_bytes();
    let mut out = Vec::with_capacity(28 + chars.len() + p.scores.data.len() * 4);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, u32_len(p.scores.rows, "K")?);
    put_u32(&mut out, u32_len(p.scores.cols, "T")?);
    put_f32s(&mut out, [p.frame_rate as f32, p.origin_time_s as f32]);
    put_u32(&mut out, u32_len(chars.len(), "character bytes")?);
    out.extend_from_slice(chars);
    put_f32s(&mut out, p.scores.data.iter().map(|&v| v as f32));
    Ok(out)
}

pub fn cpst_from_bytes(bytes: &[u8]) -> Result<CharPosteriorMatrix> {
    let mut r = ByteReader::new(bytes);
    r.header(MAGIC, VERSION)?;
    let k = r.u32()? as usize;
    let t = r.u32()? as usize;
    let frame_rate = r.f32()? as f64;
    let origin_time_s = r.f32()? as f64;
    let n_chars = r.u32()? as usize;
    let chars = std::str::from_utf8(r.take(n_chars)?)
        .map_err(|e| KwsError::Corruption(format!("characters are not UTF-8: {e}")))?
        .to_string();
    let scores = r.f32_vec(
        k.checked_mul(t)
            .ok_or_else(|| KwsError::Corruption(format!("{k} x {t} overflows")))?,
    )?;
    if r.remaining() != 0 {
        return Err(KwsError::Corruption(format!(
            "{} trailing bytes after payload",
            r.remaining()
        )));
    }
    let p = CharPosteriorMatrix {
        chars,
        scores: Matrix {
            rows: k,
            cols: t,
            data: scores.into_iter().map(f64::from).collect(),
        },
        frame_rate,
        origin_time_s,
    };
    p.validate()?;
    Ok(p)
}

pub fn write_cpst(path: impl AsRef<Path>, p: &CharPosteriorMatrix) -> Result<()> {
    std::fs::write(path, cpst_to_bytes(p)?)?;
    Ok(())
}

pub fn read_cpst(path: impl AsRef<Path>) -> Result<CharPosteriorMatrix> {
    cpst_from_bytes(&std::fs::read(path)?)
}
