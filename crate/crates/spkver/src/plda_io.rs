//! PLDA model file: "PLDA", version u32, dim u32, flags u8 (bit 0: length
//! normalization), then mean, offset, transform (`dim x dim`) and psi as
//! f64 LE.

use std::path::Path;

use spkver_core::backend::PldaModel;

use crate::archive::Reader;
use crate::{read_file, write_atomic, Error, Result};

pub const PLDA_MAGIC: &[u8; 4] = b"PLDA";
pub const PLDA_VERSION: u32 = 1;

pub fn encode_plda(m: &PldaModel) -> Vec<u8> {
    let mut out = PLDA_MAGIC.to_vec();
    out.extend_from_slice(&PLDA_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.dim as u32).to_le_bytes());
    out.push(m.length_norm as u8);
    for v in m.mean.iter().chain(&m.offset).chain(&m.transform).chain(&m.psi) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_plda(buf: &[u8], ctx: &str) -> Result<PldaModel> {
    let mut r = Reader::new(buf, ctx);
    r.magic(PLDA_MAGIC)?;
    let version = r.u32()?;
    if version != PLDA_VERSION {
        return Err(Error::format(ctx, format!("unsupported PLDA version {version}")));
    }
    let dim = r.u32()? as usize;
    if dim == 0 || dim > 1 << 14 {
        return Err(Error::format(ctx, format!("implausible dimension {dim}")));
    }
    let length_norm = r.u8()? & 1 == 1;
    let mut vec = |n: usize| (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>();
    let mean = vec(dim)?;
    let offset = vec(dim)?;
    let transform = vec(dim * dim)?;
    let psi = vec(dim)?;
    if !r.at_end() {
        return Err(Error::format(ctx, "trailing bytes"));
    }
    if psi.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
        return Err(Error::format(ctx, "psi must be finite and non-negative"));
    }
    Ok(PldaModel { dim, mean, offset, transform, psi, length_norm })
}

pub fn write_plda(path: &Path, m: &PldaModel) -> Result<()> {
    write_atomic(path, &encode_plda(m))
}

pub fn read_plda(path: &Path) -> Result<PldaModel> {
    decode_plda(&read_file(path)?, &path.display().to_string())
}
