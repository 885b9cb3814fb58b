//! Dense tensors and the RAWT container.
//!
//! Layout (little-endian): `b"RAWT"`, `u16` version (= 1), `u16` dtype code
//! (1 = float32, 2 = float64, 3 = uint8), `u32` ndim, `ndim` extents as `u64`,
//! then the row-major payload. A tensor with `ndim` axes therefore has a
//! header of `12 + 8 * ndim` bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RAWT";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
    U8,
}

impl Dtype {
    pub fn code(self) -> u16 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
            Dtype::U8 => 3,
        }
    }

    pub fn from_code(code: u16) -> Result<Self> {
        match code {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            3 => Ok(Dtype::U8),
            other => Err(Error::Format(format!("unknown dtype code {other}"))),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
            TensorData::U8(_) => Dtype::U8,
        }
    }
}

/// Element types a [`Tensor`] can hold.
pub trait RawtElement: Copy {
    fn wrap(data: Vec<Self>) -> TensorData;
}

impl RawtElement for f32 {
    fn wrap(data: Vec<Self>) -> TensorData {
        TensorData::F32(data)
    }
}

impl RawtElement for f64 {
    fn wrap(data: Vec<Self>) -> TensorData {
        TensorData::F64(data)
    }
}

impl RawtElement for u8 {
    fn wrap(data: Vec<Self>) -> TensorData {
        TensorData::U8(data)
    }
}

/// Row-major dense tensor.
#[derive(Debug, Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::arg("tensor needs at least one axis"));
        }
        if shape.contains(&0) {
            return Err(Error::arg(format!(
                "tensor extents must be >= 1, got {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::arg(format!(
                "shape {shape:?} holds {n} elements but data has {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_vec<T: RawtElement>(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        Tensor::new(shape, T::wrap(data))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> Dtype {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn into_data(self) -> TensorData {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Element values widened to f64, whatever the stored dtype.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::F64(v) => v.clone(),
            TensorData::U8(v) => v.iter().map(|&x| f64::from(x)).collect(),
        }
    }

    /// Bitwise comparison (distinguishes NaN payloads and signed zeros).
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        if self.shape != other.shape {
            return false;
        }
        match (&self.data, &other.data) {
            (TensorData::F32(a), TensorData::F32(b)) => a
                .iter()
                .map(|x| x.to_bits())
                .eq(b.iter().map(|x| x.to_bits())),
            (TensorData::F64(a), TensorData::F64(b)) => a
                .iter()
                .map(|x| x.to_bits())
                .eq(b.iter().map(|x| x.to_bits())),
            (TensorData::U8(a), TensorData::U8(b)) => a == b,
            _ => false,
        }
    }

    pub fn header_len(ndim: usize) -> usize {
        12 + 8 * ndim
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dtype = self.dtype();
        let mut out =
            Vec::with_capacity(Self::header_len(self.shape.len()) + self.len() * dtype.size());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&dtype.code().to_le_bytes());
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &e in &self.shape {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Format(format!(
                "{} bytes is shorter than a RAWT header",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(&bytes[0..4])
            )));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported RAWT version {version}")));
        }
        let dtype = Dtype::from_code(u16::from_le_bytes([bytes[6], bytes[7]]))?;
        let ndim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if ndim == 0 {
            return Err(Error::Format("ndim is 0".into()));
        }
        let header = Self::header_len(ndim);
        if bytes.len() < header {
            return Err(Error::Format(format!(
                "header declares {ndim} axes but file ends early"
            )));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut count: usize = 1;
        for k in 0..ndim {
            let off = 12 + 8 * k;
            let e = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            let e =
                usize::try_from(e).map_err(|_| Error::Format(format!("extent {e} overflows")))?;
            if e == 0 {
                return Err(Error::Format(format!("axis {k} has extent 0")));
            }
            count = count
                .checked_mul(e)
                .ok_or_else(|| Error::Format("element count overflows".into()))?;
            shape.push(e);
        }
        let payload = &bytes[header..];
        let expected = count
            .checked_mul(dtype.size())
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        if payload.len() != expected {
            return Err(Error::Length {
                expected,
                found: payload.len(),
            });
        }
        let data = match dtype {
            Dtype::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::U8 => TensorData::U8(payload.to_vec()),
        };
        Tensor::new(shape, data)
    }
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes)
}

pub fn save_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, t.to_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_size_for_single_axis() {
        let t = Tensor::from_vec(vec![1], vec![0.0f32]).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(Tensor::header_len(1), 20);
        assert_eq!(bytes.len(), 24);
        assert_eq!(&bytes[..4], b"RAWT");
    }

    #[test]
    fn decodes_known_layout() {
        let mut bytes = b"RAWT".to_vec();
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        for x in [1.0f32, 2.0, 3.0, 4.0] {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        let t = Tensor::from_bytes(&bytes).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.to_f64_vec(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(t.dtype(), Dtype::F32);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = Tensor::from_vec(vec![2], vec![1u8, 2]).unwrap().to_bytes();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(Tensor::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_truncated_payload() {
        let bytes = Tensor::from_vec(vec![3], vec![1.0f64, 2.0, 3.0])
            .unwrap()
            .to_bytes();
        let err = Tensor::from_bytes(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(
            err,
            Error::Length {
                expected: 24,
                found: 23
            }
        ));
    }

    #[test]
    fn rejects_zero_extent_and_bad_dtype() {
        assert!(Tensor::from_vec::<f32>(vec![0], vec![]).is_err());
        let mut bytes = Tensor::from_vec(vec![1], vec![7u8]).unwrap().to_bytes();
        bytes[6] = 9;
        assert!(matches!(Tensor::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn float64_roundtrip_keeps_every_bit() {
        let vals = vec![
            f64::MIN_POSITIVE,
            -0.0,
            1.0 / 3.0,
            f64::NAN,
            f64::INFINITY,
            5e-324,
        ];
        let t = Tensor::from_vec(vec![2, 3], vals).unwrap();
        let back = Tensor::from_bytes(&t.to_bytes()).unwrap();
        assert!(t.bit_eq(&back));
    }
}
