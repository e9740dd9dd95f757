//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "LCST" | version u32 | config length u32 | config JSON
//! repeated until end of file:
//!   name length u32 | name | rank u32 | dims u64 × rank | dtype u8 | payload
//! ```

use std::path::Path;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::{DType, Scalar};

pub const MAGIC: &[u8; 4] = b"LCST";
pub const FORMAT_VERSION: u32 = 1;

/// A configuration plus an ordered list of named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub config: ModelConfig,
    pub tensors: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let config = serde_json::to_vec(&self.config)?;
        out.extend_from_slice(&len_u32(config.len())?.to_le_bytes());
        out.extend_from_slice(&config);
        for (name, tensor) in &self.tensors {
            out.extend_from_slice(&len_u32(name.len())?.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&len_u32(tensor.shape().len())?.to_le_bytes());
            for &d in tensor.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.push(T::DTYPE.tag());
            for &v in tensor.values() {
                v.write_le(&mut out);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("missing LCST magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let n = r.u32()? as usize;
        let config: ModelConfig = serde_json::from_slice(r.take(n)?)?;
        let mut tensors = Vec::new();
        while r.pos < bytes.len() {
            let n = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(n)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                shape.push(usize::try_from(r.u64()?).map_err(|_| Error::Format("dimension overflows".into()))?);
            }
            let tag = r.take(1)?[0];
            let dtype = DType::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown dtype tag {tag}")))?;
            if dtype != T::DTYPE {
                return Err(Error::Format(format!("tensor {name} stored as {dtype:?}, reading as {:?}", T::DTYPE)));
            }
            let count = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Format("element count overflows".into()))?;
            let width = dtype.width();
            let payload = r.take(count.checked_mul(width).ok_or_else(|| Error::Format("payload overflows".into()))?)?;
            let values = payload.chunks_exact(width).map(T::read_le).collect();
            tensors.push((name, Tensor::new(shape, values)?));
        }
        Ok(Self { config, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("length {n} does not fit in u32")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint<f64> {
        Checkpoint {
            config: ModelConfig::tiny(16),
            tensors: vec![
                ("a".into(), Tensor::new(vec![2, 3], vec![1.0, -0.0, f64::MIN_POSITIVE, 3.5, 1e300, -7.25]).unwrap()),
                ("scalar".into(), Tensor::scalar(0.1)),
            ],
        }
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"LCST");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), FORMAT_VERSION);
        let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let cfg: ModelConfig = serde_json::from_slice(&bytes[12..12 + n]).unwrap();
        assert_eq!(cfg, ModelConfig::tiny(16));
        let t = &bytes[12 + n..];
        assert_eq!(u32::from_le_bytes(t[..4].try_into().unwrap()), 1);
        assert_eq!(t[4], b'a');
        assert_eq!(u32::from_le_bytes(t[5..9].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(t[9..17].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(t[17..25].try_into().unwrap()), 3);
        assert_eq!(t[25], 1);
        assert_eq!(f64::from_le_bytes(t[26..34].try_into().unwrap()), 1.0);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.tensors[0].1.values()[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes().unwrap();
        assert!(matches!(Checkpoint::<f64>::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::<f64>::from_bytes(&bad), Err(Error::Format(_))));
        assert!(matches!(Checkpoint::<f32>::from_bytes(&bytes), Err(Error::Format(_))));
    }
}
