//! LF5 container and PGM slice export.
//!
//! LF5 layout (little-endian, no padding, no compression):
//!
//! | bytes  | field                                   |
//! |--------|-----------------------------------------|
//! | 0..4   | magic `LF5D`                            |
//! | 4..8   | version, u32 = 1                        |
//! | 8      | dtype, u8 (1 = f32, 2 = f64)            |
//! | 9..12  | reserved, zero                          |
//! | 12..32 | dims, 5 x u32: n_s, n_t, n_x, n_y, n_z  |
//! | 32..   | payload, s fastest, z slowest           |

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::array::{Dims5, Plane};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LF5D";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Dtype {
    F32 = 1,
    F64 = 2,
}

impl Dtype {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Dtype::F32),
            2 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// Accept dims that violate the PSF invariants (even cell dims, zero
    /// dims, n_s < n_x). Useful for inspecting files from other tools.
    pub allow_foreign_dims: bool,
}

/// Raw contents of an LF5 file. Values are held as f64 whatever the stored dtype.
#[derive(Clone, Debug, PartialEq)]
pub struct Lf5 {
    pub dtype: Dtype,
    pub shape: [usize; 5],
    pub data: Vec<f64>,
}

pub fn encode_lf5(file: &Lf5) -> Result<Vec<u8>> {
    let count: usize = file.shape.iter().product();
    if count != file.data.len() {
        return Err(Error::DimMismatch(format!(
            "shape {:?} needs {count} elements, have {}",
            file.shape,
            file.data.len()
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + count * file.dtype.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(file.dtype as u8);
    out.extend_from_slice(&[0; 3]);
    for &d in &file.shape {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    match file.dtype {
        Dtype::F32 => file.data.iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        Dtype::F64 => file.data.iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
    Ok(out)
}

pub fn decode_lf5(bytes: &[u8], opts: LoadOptions) -> Result<Lf5> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("file too short for LF5 header ({} bytes)", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &bytes[0..4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dtype = Dtype::from_code(bytes[8]).ok_or_else(|| Error::Format(format!("unknown dtype code {}", bytes[8])))?;
    if bytes[9..12] != [0, 0, 0] {
        return Err(Error::Format("reserved header bytes are not zero".into()));
    }
    let mut shape = [0usize; 5];
    for (i, d) in shape.iter_mut().enumerate() {
        *d = u32_at(12 + 4 * i) as usize;
    }
    if !opts.allow_foreign_dims {
        if let Some(reason) = Dims5::violation(shape) {
            return Err(Error::Dims { dims: shape, reason });
        }
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("dims {shape:?} overflow")))?;
    let payload = &bytes[HEADER_LEN..];
    let expected = count
        .checked_mul(dtype.size())
        .ok_or_else(|| Error::Format(format!("dims {shape:?} overflow")))?;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload is {} bytes, dims {shape:?} need {expected}",
            payload.len()
        )));
    }
    let data = match dtype {
        Dtype::F32 => payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
        Dtype::F64 => payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
    };
    Ok(Lf5 { dtype, shape, data })
}

pub fn write_lf5(path: impl AsRef<Path>, file: &Lf5) -> Result<()> {
    let bytes = encode_lf5(file)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_lf5(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Lf5> {
    decode_lf5(&fs::read(path)?, opts)
}

/// Encodes a plane as a 16-bit binary PGM, linearly scaled so the maximum
/// maps to 65535 (round half up). Row `i` of the plane is image row `i`.
pub fn encode_pgm(plane: &Plane) -> Result<Vec<u8>> {
    if let Some((o, &v)) = plane.data().iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidValue { offset: o, value: v });
    }
    let (rows, cols) = (plane.rows(), plane.cols());
    let max = plane.max();
    let header = format!("P5\n{cols} {rows}\n65535\n");
    let mut out = Vec::with_capacity(header.len() + 2 * rows * cols);
    out.extend_from_slice(header.as_bytes());
    for i in 1..=rows {
        for j in 1..=cols {
            let level = if max > 0.0 { (plane.get(i, j) / max * 65535.0 + 0.5).floor().min(65535.0) as u16 } else { 0 };
            out.extend_from_slice(&level.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn export_pgm(plane: &Plane, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_pgm(plane)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}
