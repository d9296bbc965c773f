//! The `3LC1` compressed-tensor container and the end-to-end
//! compress/decompress pipeline.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "3LC1"
//! 4       1           version (1)
//! 5       1           codec id
//! 6       1           flags (bit 0: ZRE applied)
//! 7       1           rank
//! 8       8 * rank    dims, u64 little-endian
//! ..      4           m, f32 little-endian
//! ..      8           payload length, u64 little-endian
//! ..      n           payload
//! ```
//!
//! Element counts and pre-ZRE lengths are not stored; both follow from the
//! dims.

use std::fs;
use std::path::Path;

use crate::baselines;
use crate::encode::{self, QuarticBytes, ZreBytes};
use crate::error::{Error, Result};
use crate::quant3::{self, ErrorContext, TernaryTensor};
use crate::tensor::{checked_numel, DenseTensor};

pub const BLOB_MAGIC: [u8; 4] = *b"3LC1";
pub const BLOB_VERSION: u8 = 1;
pub const FLAG_ZRE: u8 = 0b0000_0001;

/// Codec identifiers carried in the container header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum CodecId {
    /// 3-value quantization + quartic encoding (+ optional ZRE).
    ThreeLc = 0,
    /// Symmetric 8-bit: f32 scale then one i8 per value.
    Int8 = 1,
    /// Stochastic 3-value quantization + quartic encoding.
    Stoch3 = 2,
    /// 1-bit with per-sign means: f32 m_neg, f32 m_pos, bitmap.
    Mqe1 = 3,
    /// Top-k sparsification: bitmap then selected f32 values.
    TopK = 4,
    /// Uncompressed f32 values (passthrough, local-step emissions, small tensors).
    Raw = 5,
}

impl TryFrom<u8> for CodecId {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Ok(match v {
            0 => CodecId::ThreeLc,
            1 => CodecId::Int8,
            2 => CodecId::Stoch3,
            3 => CodecId::Mqe1,
            4 => CodecId::TopK,
            5 => CodecId::Raw,
            other => return Err(Error::format(format!("unknown codec id {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedBlob {
    pub codec: CodecId,
    pub flags: u8,
    pub dims: Vec<usize>,
    pub m: f32,
    pub payload: Vec<u8>,
}

impl CompressedBlob {
    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn payload_len(&self) -> usize {
        self.payload.len()
    }

    pub fn zre_applied(&self) -> bool {
        self.flags & FLAG_ZRE != 0
    }

    pub fn header_len(&self) -> usize {
        8 + 8 * self.dims.len() + 4 + 8
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.header_len() + self.payload.len());
        out.extend_from_slice(&BLOB_MAGIC);
        out.push(BLOB_VERSION);
        out.push(self.codec as u8);
        out.push(self.flags);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.m.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != BLOB_MAGIC {
            return Err(Error::format("bad 3LC1 magic"));
        }
        let version = r.u8()?;
        if version != BLOB_VERSION {
            return Err(Error::format(format!("unsupported container version {version}")));
        }
        let codec = CodecId::try_from(r.u8()?)?;
        let flags = r.u8()?;
        if flags & !FLAG_ZRE != 0 {
            return Err(Error::format(format!("unknown flag bits {flags:#010b}")));
        }
        let rank = r.u8()? as usize;
        let dims = (0..rank)
            .map(|_| {
                let d = r.u64()?;
                usize::try_from(d).map_err(|_| Error::format(format!("dim {d} too large")))
            })
            .collect::<Result<Vec<_>>>()?;
        checked_numel(&dims)?;
        let m = f32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if !m.is_finite() || m < 0.0 {
            return Err(Error::format(format!("invalid magnitude {m}")));
        }
        let payload_len = r.u64()?;
        let rest = &bytes[r.pos..];
        if rest.len() as u64 != payload_len {
            return Err(Error::format(format!(
                "header declares {payload_len} payload bytes, found {}",
                rest.len()
            )));
        }
        Ok(Self {
            codec,
            flags,
            dims,
            m,
            payload: rest.to_vec(),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::format("3LC1 header truncated"));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Packs a ternary tensor into a container: quartic bytes, then ZRE when
/// requested and not larger.
pub(crate) fn pack_ternary(codec: CodecId, q: &TernaryTensor, use_zre: bool) -> Result<CompressedBlob> {
    let quartic = encode::quartic_encode(q.values())?;
    let (payload, flags) = if use_zre {
        let z = encode::zre_encode(&quartic.bytes)?;
        if z.bytes.len() <= quartic.bytes.len() {
            (z.bytes, FLAG_ZRE)
        } else {
            (quartic.bytes, 0)
        }
    } else {
        (quartic.bytes, 0)
    };
    Ok(CompressedBlob {
        codec,
        flags,
        dims: q.dims().to_vec(),
        m: q.m(),
        payload,
    })
}

pub(crate) fn unpack_ternary(b: &CompressedBlob) -> Result<TernaryTensor> {
    let n = b.numel();
    let quartic = if b.zre_applied() {
        encode::zre_decode(&ZreBytes {
            bytes: b.payload.clone(),
            decoded_len: encode::quartic_len(n),
        })?
    } else {
        b.payload.clone()
    };
    let values = encode::quartic_decode(&QuarticBytes {
        bytes: quartic,
        original_len: n,
    })?;
    TernaryTensor::new(b.dims.clone(), values, b.m).map_err(|e| match e {
        Error::Value(msg) => Error::Format(msg),
        other => other,
    })
}

/// Full 3LC path: error-accumulated 3-value quantization, quartic encoding,
/// then ZRE if `use_zre`.
pub fn compress(ctx: &mut ErrorContext, t: &DenseTensor, use_zre: bool) -> Result<CompressedBlob> {
    let q = quant3::context_compress(ctx, t)?;
    pack_ternary(CodecId::ThreeLc, &q, use_zre)
}

/// Decodes any container regardless of codec.
pub fn decompress(b: &CompressedBlob) -> Result<DenseTensor> {
    if b.zre_applied() && !matches!(b.codec, CodecId::ThreeLc | CodecId::Stoch3) {
        return Err(Error::format(format!("ZRE flag set on {:?} payload", b.codec)));
    }
    match b.codec {
        CodecId::ThreeLc | CodecId::Stoch3 => Ok(quant3::dequantize3(&unpack_ternary(b)?)),
        CodecId::Int8 => baselines::decode_int8(&b.dims, &b.payload),
        CodecId::Mqe1 => baselines::decode_mqe(&b.dims, &b.payload),
        CodecId::TopK => baselines::decode_topk(&b.dims, &b.payload),
        CodecId::Raw => baselines::decode_raw(&b.dims, &b.payload),
    }
}

/// Payload-only compression ratio against 32-bit values.
pub fn blob_ratio(b: &CompressedBlob) -> f64 {
    (4 * b.numel()) as f64 / b.payload_len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant3::QuantConfig;
    use proptest::prelude::*;

    fn ctx(dims: Vec<usize>, s: f32) -> ErrorContext {
        ErrorContext::new(dims, QuantConfig::new(s).unwrap()).unwrap()
    }

    #[test]
    fn seventy_zeros() {
        let mut c = ctx(vec![70], 1.0);
        let t = DenseTensor::zeros(vec![70]).unwrap();
        let b = compress(&mut c, &t, true).unwrap();
        assert_eq!(b.payload, vec![255]);
        assert_eq!(b.m, 0.0);
        assert!(b.zre_applied());
        assert_eq!(blob_ratio(&b), 280.0);
        // 28 header bytes dominate at this size
        assert_eq!(b.to_bytes().len(), 29);
        assert_eq!(decompress(&b).unwrap(), t);
    }

    #[test]
    fn five_element_pipeline() {
        let mut c = ctx(vec![5], 1.0);
        let t = DenseTensor::from_vec(vec![0.4, -0.2, 0.1, 0.0, 0.0]).unwrap();
        let b = compress(&mut c, &t, true).unwrap();
        assert_eq!(b.payload, vec![175]);
        assert_eq!(b.m, 0.4);
        assert_eq!(blob_ratio(&b), 20.0);
    }

    #[test]
    fn decompress_hand_built() {
        let b = CompressedBlob {
            codec: CodecId::ThreeLc,
            flags: 0,
            dims: vec![5],
            m: 0.4,
            payload: vec![175],
        };
        let out = decompress(&CompressedBlob::from_bytes(&b.to_bytes()).unwrap()).unwrap();
        assert_eq!(out.data(), &[0.4, -0.4, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn header_errors() {
        let b = CompressedBlob {
            codec: CodecId::ThreeLc,
            flags: 0,
            dims: vec![5],
            m: 0.4,
            payload: vec![175],
        };
        let good = b.to_bytes();

        let mut bad = good.clone();
        bad[1] = b'X';
        assert!(matches!(CompressedBlob::from_bytes(&bad), Err(Error::Format(_))));

        let mut bad = good.clone();
        bad[5] = 9;
        assert!(matches!(CompressedBlob::from_bytes(&bad), Err(Error::Format(_))));

        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(CompressedBlob::from_bytes(&bad), Err(Error::Format(_))));

        assert!(matches!(CompressedBlob::from_bytes(&good[..10]), Err(Error::Format(_))));
    }

    #[test]
    fn payload_errors() {
        // m = 0 with non-zero values
        let b = CompressedBlob {
            codec: CodecId::ThreeLc,
            flags: 0,
            dims: vec![5],
            m: 0.0,
            payload: vec![175],
        };
        assert!(matches!(decompress(&b), Err(Error::Format(_))));
        // wrong payload length for dims
        let b = CompressedBlob {
            codec: CodecId::ThreeLc,
            flags: 0,
            dims: vec![11],
            m: 1.0,
            payload: vec![121, 121],
        };
        assert!(matches!(decompress(&b), Err(Error::Format(_))));
        let b = CompressedBlob {
            codec: CodecId::ThreeLc,
            flags: FLAG_ZRE,
            dims: vec![70],
            m: 1.0,
            payload: vec![254],
        };
        assert!(matches!(decompress(&b), Err(Error::Format(_))));
    }

    #[test]
    fn no_zre_is_twenty_x() {
        let mut c = ctx(vec![5, 20], 1.0);
        let t = DenseTensor::new(vec![5, 20], (0..100).map(|i| i as f32 - 50.0).collect()).unwrap();
        let b = compress(&mut c, &t, false).unwrap();
        assert!(!b.zre_applied());
        assert_eq!(b.payload_len(), 20);
        assert_eq!(blob_ratio(&b), 20.0);
    }

    proptest! {
        #[test]
        fn pipeline_matches_quantized_sum(
            data in prop::collection::vec(-10.0f32..10.0, 1..300),
            prior in prop::collection::vec(-1.0f32..1.0, 300),
            s in 1.0f32..1.99,
            use_zre in any::<bool>(),
        ) {
            let n = data.len();
            let mut c = ctx(vec![n], s);
            // give the context a non-trivial buffer first
            let warm = DenseTensor::from_vec(prior[..n].to_vec()).unwrap();
            compress(&mut c, &warm, use_zre).unwrap();
            let mut shadow = c.clone();

            let t = DenseTensor::from_vec(data).unwrap();
            let b = compress(&mut c, &t, use_zre).unwrap();
            let bytes = b.to_bytes();
            prop_assert_eq!(&CompressedBlob::from_bytes(&bytes).unwrap(), &b);
            let out = decompress(&b).unwrap();
            let expected = quant3::dequantize3(&quant3::context_compress(&mut shadow, &t).unwrap());
            prop_assert_eq!(out, expected);
            prop_assert_eq!(c.buffer(), shadow.buffer());
        }
    }
}
