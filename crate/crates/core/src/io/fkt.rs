//! FKT tensor container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size       field
//! 0       4          magic "FKT1"
//! 4       2          version (u16) = 1
//! 6       1          dtype (u8): 1 = f32, 2 = f64
//! 7       1          rank (u8), 1..=4
//! 8       4 * rank   dims (u32 each)
//! ...     n * size   row-major payload
//! ```
//!
//! Anything else (unknown magic, version, dtype or rank, short or long
//! payload) is rejected before any value is decoded.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::{Mat, Tensor4};
use crate::tokenizer::ImageCHW;

use super::sidecar::{sidecar_path, SidecarMeta};

pub const MAGIC: [u8; 4] = *b"FKT1";
pub const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(DType::F32),
            2 => Ok(DType::F64),
            other => Err(Error::Format(format!("unknown dtype code {other}"))),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

impl std::str::FromStr for DType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(DType::F32),
            "f64" => Ok(DType::F64),
            other => Err(Error::Config(format!("unknown dtype {other:?}"))),
        }
    }
}

/// A decoded tensor. Values are held as `f64` regardless of on-disk dtype.
#[derive(Clone, Debug, PartialEq)]
pub struct FktTensor {
    pub dims: Vec<usize>,
    pub dtype: DType,
    pub data: Vec<f64>,
}

impl FktTensor {
    pub fn new(dims: Vec<usize>, dtype: DType, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(Error::Format(format!(
                "rank must be 1..=4, got {}",
                dims.len()
            )));
        }
        if let Some(&d) = dims.iter().find(|&&d| d > u32::MAX as usize) {
            return Err(Error::Format(format!("dimension {d} does not fit in u32")));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::dims(format!(
                "{} values for dims {dims:?}",
                data.len()
            )));
        }
        Ok(Self { dims, dtype, data })
    }

    pub fn from_mat(m: &Mat, dtype: DType) -> Self {
        Self {
            dims: vec![m.rows(), m.cols()],
            dtype,
            data: m.as_slice().to_vec(),
        }
    }

    pub fn from_tensor4(t: &Tensor4, dtype: DType) -> Self {
        Self {
            dims: t.dims().to_vec(),
            dtype,
            data: t.as_slice().to_vec(),
        }
    }

    pub fn from_vec(v: &[f64], dtype: DType) -> Self {
        Self {
            dims: vec![v.len()],
            dtype,
            data: v.to_vec(),
        }
    }

    pub fn from_image(img: &ImageCHW, dtype: DType) -> Self {
        let (c, h, w) = img.dims();
        Self {
            dims: vec![c, h, w],
            dtype,
            data: img.as_slice().to_vec(),
        }
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn to_mat(&self) -> Result<Mat> {
        match self.dims[..] {
            [r, c] => Mat::new(r, c, self.data.clone()),
            _ => Err(Error::dims(format!(
                "expected a rank-2 tensor, got dims {:?}",
                self.dims
            ))),
        }
    }

    pub fn to_tensor4(&self) -> Result<Tensor4> {
        match self.dims[..] {
            [a, b, c, d] => Tensor4::new([a, b, c, d], self.data.clone()),
            _ => Err(Error::dims(format!(
                "expected a rank-4 tensor, got dims {:?}",
                self.dims
            ))),
        }
    }

    /// Rank 3 is read as `[C, H, W]`, rank 2 as a single-channel `[H, W]`.
    pub fn to_image(&self) -> Result<ImageCHW> {
        match self.dims[..] {
            [c, h, w] => ImageCHW::new(c, h, w, self.data.clone()),
            [h, w] => ImageCHW::new(1, h, w, self.data.clone()),
            _ => Err(Error::dims(format!(
                "expected an image of rank 2 or 3, got dims {:?}",
                self.dims
            ))),
        }
    }
}

pub fn encode(t: &FktTensor) -> Result<Vec<u8>> {
    // Re-validate: fields are public.
    let t = FktTensor::new(t.dims.clone(), t.dtype, t.data.clone())?;
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + t.data.len() * t.dtype.size());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(t.dtype.code());
    out.push(t.rank() as u8);
    for &d in &t.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match t.dtype {
        DType::F64 => t
            .data
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        DType::F32 => t
            .data
            .iter()
            .for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes())),
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<FktTensor> {
    if bytes.len() < 8 {
        return Err(Error::Format(format!(
            "header truncated at {} bytes",
            bytes.len()
        )));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dtype = DType::from_code(bytes[6])?;
    let rank = bytes[7] as usize;
    if !(1..=4).contains(&rank) {
        return Err(Error::Format(format!("rank must be 1..=4, got {rank}")));
    }
    let header = 8 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::Format(format!(
            "header needs {header} bytes, file has {}",
            bytes.len()
        )));
    }
    let dims: Vec<usize> = bytes[8..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
    let expected = count
        .checked_mul(dtype.size())
        .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(Error::Corruption {
            expected,
            actual: payload.len(),
        });
    }
    let data = match dtype {
        DType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
            .collect(),
    };
    Ok(FktTensor { dims, dtype, data })
}

/// Writes the tensor and, if given, its JSON sidecar at `<path>.json`.
pub fn fkt_write(
    path: impl AsRef<Path>,
    tensor: &FktTensor,
    meta: Option<&SidecarMeta>,
) -> Result<()> {
    let path = path.as_ref();
    if let Some(meta) = meta {
        meta.check_against(&tensor.dims)?;
    }
    fs::write(path, encode(tensor)?)?;
    if let Some(meta) = meta {
        meta.write(sidecar_path(path))?;
    }
    Ok(())
}

/// Reads a tensor and its sidecar, if one exists.
pub fn fkt_read(path: impl AsRef<Path>) -> Result<(FktTensor, Option<SidecarMeta>)> {
    let path = path.as_ref();
    let tensor = decode(&fs::read(path)?)?;
    let side = sidecar_path(path);
    let meta = if side.exists() {
        let meta = SidecarMeta::read(&side)?;
        meta.check_against(&tensor.dims)?;
        Some(meta)
    } else {
        None
    };
    Ok((tensor, meta))
}
