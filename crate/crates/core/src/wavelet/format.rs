//! Flat binary latent files.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "LTNT"
//! 4       4     dtype code (1 = f32, 2 = f64)
//! 8       4     channels C
//! 12      4     height H
//! 16      4     width W
//! 20      ...   C·H·W little-endian values, row-major (c, h, w)
//! ```

use std::io::{Read, Write};

use super::{LatentTensor, Result, WaveletError};

pub const LATENT_MAGIC: [u8; 4] = *b"LTNT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentDtype {
    F32 = 1,
    F64 = 2,
}

impl LatentDtype {
    fn from_code(code: u32) -> Result<Self> {
        match code {
            1 => Ok(LatentDtype::F32),
            2 => Ok(LatentDtype::F64),
            other => Err(WaveletError::Format(format!("unknown dtype code {other}"))),
        }
    }

    fn width(self) -> usize {
        match self {
            LatentDtype::F32 => 4,
            LatentDtype::F64 => 8,
        }
    }
}

pub fn write_latent<W: Write>(mut out: W, latent: &LatentTensor, dtype: LatentDtype) -> Result<()> {
    let dims = [latent.channels(), latent.height(), latent.width()];
    let mut header = Vec::with_capacity(20);
    header.extend_from_slice(&LATENT_MAGIC);
    header.extend_from_slice(&(dtype as u32).to_le_bytes());
    for d in dims {
        let d = u32::try_from(d)
            .map_err(|_| WaveletError::Format(format!("dimension {d} exceeds u32")))?;
        header.extend_from_slice(&d.to_le_bytes());
    }
    out.write_all(&header)?;
    let mut body = Vec::with_capacity(latent.len() * dtype.width());
    match dtype {
        LatentDtype::F32 => {
            for &x in latent.data() {
                body.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        LatentDtype::F64 => {
            for &x in latent.data() {
                body.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    out.write_all(&body)?;
    Ok(())
}

pub fn read_latent<R: Read>(mut input: R) -> Result<LatentTensor> {
    let mut header = [0u8; 20];
    input
        .read_exact(&mut header)
        .map_err(|_| WaveletError::Format("truncated header".into()))?;
    if header[..4] != LATENT_MAGIC {
        return Err(WaveletError::Format("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    let dtype = LatentDtype::from_code(word(4))?;
    let (c, h, w) = (word(8) as usize, word(12) as usize, word(16) as usize);
    let n = c
        .checked_mul(h)
        .and_then(|x| x.checked_mul(w))
        .ok_or_else(|| WaveletError::Format("shape overflows".into()))?;
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() != n * dtype.width() {
        return Err(WaveletError::Format(format!(
            "expected {} data bytes for {c}x{h}x{w}, found {}",
            n * dtype.width(),
            body.len()
        )));
    }
    let data = match dtype {
        LatentDtype::F32 => body
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
            .collect(),
        LatentDtype::F64 => body
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect(),
    };
    LatentTensor::new(c, h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = LatentTensor::new(1, 2, 2, vec![1.0, -2.0, 0.5, 3.25]).unwrap();
        let mut buf = Vec::new();
        write_latent(&mut buf, &t, LatentDtype::F32).unwrap();
        assert_eq!(&buf[..4], b"LTNT");
        assert_eq!(&buf[4..8], &[1, 0, 0, 0]);
        assert_eq!(&buf[8..20], &[1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(buf.len(), 20 + 16);
        assert_eq!(read_latent(&buf[..]).unwrap(), t);
    }

    #[test]
    fn f64_round_trip_is_exact() {
        let t = LatentTensor::from_fn(2, 3, 4, |c, h, w| (c as f64 + 0.1) * (h as f64 - w as f64 / 3.0))
            .unwrap();
        let mut buf = Vec::new();
        write_latent(&mut buf, &t, LatentDtype::F64).unwrap();
        assert_eq!(read_latent(&buf[..]).unwrap(), t);
    }

    #[test]
    fn rejects_corrupt_files() {
        assert!(read_latent(&b"LTN"[..]).is_err());
        let mut buf = Vec::new();
        write_latent(&mut buf, &LatentTensor::zeros(1, 2, 2).unwrap(), LatentDtype::F32).unwrap();
        buf.pop();
        assert!(matches!(read_latent(&buf[..]), Err(WaveletError::Format(_))));
        buf[0] = b'X';
        assert!(read_latent(&buf[..]).is_err());
    }
}
