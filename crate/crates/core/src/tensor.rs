//! Dense `f32` tensors and the `TSR1` raw tensor file format.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "TSR1"
//! 4       1           dtype (0 = f32)
//! 5       1           rank
//! 6       2           reserved, zero
//! 8       8 * rank    dims, u64 little-endian
//! ..      4 * numel   values, f32 little-endian, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const TSR_MAGIC: [u8; 4] = *b"TSR1";
pub const DTYPE_F32: u8 = 0;

/// Row-major tensor of finite `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

/// Checks that `dims` describes a non-empty layout and returns its element count.
pub(crate) fn checked_numel(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(Error::format("tensor rank must be at least 1"));
    }
    if dims.len() > u8::MAX as usize {
        return Err(Error::format(format!("rank {} exceeds 255", dims.len())));
    }
    let mut numel: usize = 1;
    for &d in dims {
        if d == 0 {
            return Err(Error::format(format!("zero-sized dimension in {dims:?}")));
        }
        numel = numel
            .checked_mul(d)
            .ok_or_else(|| Error::format(format!("element count of {dims:?} overflows")))?;
    }
    Ok(numel)
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let numel = checked_numel(&dims)?;
        if numel != data.len() {
            return Err(Error::format(format!(
                "dims {dims:?} describe {numel} elements but {} values were given",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::value(format!("non-finite value {} at index {i}", data[i])));
        }
        Ok(Self { dims, data })
    }

    /// One-dimensional tensor over `data`.
    pub fn from_vec(data: Vec<f32>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let numel = checked_numel(&dims)?;
        Ok(Self {
            dims,
            data: vec![0.0; numel],
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Largest absolute value, `0.0` for an all-zero tensor.
    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |acc, v| acc.max(v.abs()))
    }

    pub(crate) fn check_same_shape(&self, other: &DenseTensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Shape {
                expected: self.dims.clone(),
                actual: other.dims.clone(),
            });
        }
        Ok(())
    }

    /// Builds a tensor without re-validating values. Callers guarantee the
    /// invariants (shape already checked, values derived from finite inputs).
    pub(crate) fn from_parts(dims: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { dims, data }
    }

    pub fn to_tsr_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(&TSR_MAGIC);
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        out.extend_from_slice(&[0, 0]);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_tsr_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::format("TSR1 header truncated"));
        }
        if bytes[0..4] != TSR_MAGIC {
            return Err(Error::format(format!("bad magic {:?}", &bytes[0..4])));
        }
        if bytes[4] != DTYPE_F32 {
            return Err(Error::format(format!("unsupported dtype {}", bytes[4])));
        }
        let rank = bytes[5] as usize;
        if bytes[6] != 0 || bytes[7] != 0 {
            return Err(Error::format("reserved header bytes must be zero"));
        }
        let dims_end = 8 + 8 * rank;
        if bytes.len() < dims_end {
            return Err(Error::format("TSR1 dims truncated"));
        }
        let dims = bytes[8..dims_end]
            .chunks_exact(8)
            .map(|c| {
                let d = u64::from_le_bytes(c.try_into().expect("8-byte chunk"));
                usize::try_from(d).map_err(|_| Error::format(format!("dim {d} too large")))
            })
            .collect::<Result<Vec<_>>>()?;
        let numel = checked_numel(&dims)?;
        let payload = &bytes[dims_end..];
        let expected = numel
            .checked_mul(4)
            .ok_or_else(|| Error::format("payload size overflows"))?;
        if payload.len() != expected {
            return Err(Error::format(format!(
                "payload is {} bytes, dims {dims:?} require {expected}",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect();
        Self::new(dims, data)
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    DenseTensor::from_tsr_bytes(&fs::read(path)?)
}

pub fn write_tensor(t: &DenseTensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, t.to_tsr_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_back_2x2() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.tsr");
        let t = DenseTensor::new(vec![2, 2], vec![1.0, 0.0, -1.0, 0.5]).unwrap();
        write_tensor(&t, &path).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back.dims(), &[2, 2]);
        assert_eq!(back.data(), &[1.0, 0.0, -1.0, 0.5]);
    }

    #[test]
    fn minimal_tensor() {
        let t = DenseTensor::new(vec![1], vec![0.0]).unwrap();
        assert_eq!(DenseTensor::from_tsr_bytes(&t.to_tsr_bytes()).unwrap(), t);
    }

    #[test]
    fn file_size_matches_header_arithmetic() {
        let t = DenseTensor::zeros(vec![3]).unwrap();
        assert_eq!(t.to_tsr_bytes().len(), 4 + 1 + 1 + 2 + 8 + 12);
    }

    #[test]
    fn payload_length_mismatch() {
        let mut bytes = DenseTensor::zeros(vec![4]).unwrap().to_tsr_bytes();
        bytes.truncate(bytes.len() - 4);
        assert!(matches!(DenseTensor::from_tsr_bytes(&bytes), Err(Error::Format(_))));
        let mut bytes = DenseTensor::zeros(vec![4]).unwrap().to_tsr_bytes();
        bytes.extend_from_slice(&[0; 4]);
        assert!(matches!(DenseTensor::from_tsr_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = DenseTensor::zeros(vec![1]).unwrap().to_tsr_bytes();
        bytes[0] = b'X';
        assert!(matches!(DenseTensor::from_tsr_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn non_finite_payload_is_value_error() {
        let mut bytes = DenseTensor::zeros(vec![2]).unwrap().to_tsr_bytes();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(DenseTensor::from_tsr_bytes(&bytes), Err(Error::Value(_))));
    }

    #[test]
    fn rank_zero_rejected() {
        assert!(matches!(DenseTensor::new(vec![], vec![]), Err(Error::Format(_))));
        assert!(matches!(DenseTensor::new(vec![2, 0], vec![]), Err(Error::Format(_))));
        // rank byte of zero on disk
        let bytes = [b'T', b'S', b'R', b'1', 0, 0, 0, 0];
        assert!(matches!(DenseTensor::from_tsr_bytes(&bytes), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn tsr_round_trip(
            dims in prop::collection::vec(1usize..6, 1..4),
            seed in any::<u64>(),
        ) {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = (0..n)
                .map(|i| (((seed.wrapping_add(i as u64)).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 40) as f32) / 1e3 - 8000.0)
                .collect();
            let t = DenseTensor::new(dims, data).unwrap();
            let bytes = t.to_tsr_bytes();
            let back = DenseTensor::from_tsr_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_tsr_bytes(), bytes);
            prop_assert_eq!(back, t);
        }
    }
}
