//! Comparison codecs that share the error-context and container framework:
//! symmetric 8-bit, stochastic 3-value (+ quartic), 1-bit with per-sign
//! means and error feedback, top-k sparsification with residuals, and
//! local-step accumulation.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blob::{self, CodecId, CompressedBlob};
use crate::error::{Error, Result};
use crate::quant3::{ErrorContext, QuantConfig, TernaryTensor};
use crate::tensor::DenseTensor;

/// Codec selection for one traffic direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CodecKind {
    /// 3-value quantization with multiplier `s`, quartic encoding, and
    /// optionally zero-run encoding.
    ThreeLc { s: f32, zre: bool },
    /// Uncompressed 32-bit values.
    Float32,
    EightBitInt,
    StochThree,
    MqeOneBit,
    TopK { fraction: f32 },
    LocalSteps { n: u32 },
}

impl CodecKind {
    pub fn three_lc(s: f32) -> Self {
        CodecKind::ThreeLc { s, zre: true }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CodecKind::ThreeLc { s, .. } => QuantConfig::new(s).map(|_| ()),
            CodecKind::TopK { fraction } if !(fraction > 0.0 && fraction <= 1.0) => Err(
                Error::Config(format!("top-k fraction must be in (0, 1], got {fraction}")),
            ),
            CodecKind::LocalSteps { n: 0 } => {
                Err(Error::Config("local step count must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Whether decoding this codec always reproduces its input exactly.
    pub fn is_lossless(&self) -> bool {
        matches!(self, CodecKind::Float32)
    }
}

impl fmt::Display for CodecKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodecKind::ThreeLc { s, zre: true } => write!(f, "3lc:{s}"),
            CodecKind::ThreeLc { s, zre: false } => write!(f, "3lc-nozre:{s}"),
            CodecKind::Float32 => f.write_str("float32"),
            CodecKind::EightBitInt => f.write_str("int8"),
            CodecKind::StochThree => f.write_str("stoch3"),
            CodecKind::MqeOneBit => f.write_str("mqe1"),
            CodecKind::TopK { fraction } => write!(f, "topk:{fraction}"),
            CodecKind::LocalSteps { n } => write!(f, "local:{n}"),
        }
    }
}

impl FromStr for CodecKind {
    type Err = Error;

    /// Accepts `3lc[:s]`, `3lc-nozre[:s]`, `float32`, `int8`, `stoch3`,
    /// `mqe1`, `topk:fraction`, `local:n`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let bad = |what: &str| Error::Config(format!("bad {what} in codec spec {s:?}"));
        let kind = match (name.trim().to_ascii_lowercase().as_str(), arg) {
            ("3lc", a) | ("3lc-nozre", a) => {
                let s_val = match a {
                    Some(a) => a.trim().parse().map_err(|_| bad("multiplier"))?,
                    None => 1.0,
                };
                CodecKind::ThreeLc {
                    s: s_val,
                    zre: name.trim() == "3lc",
                }
            }
            ("float32" | "none" | "passthrough", None) => CodecKind::Float32,
            ("int8", None) => CodecKind::EightBitInt,
            ("stoch3", None) => CodecKind::StochThree,
            ("mqe1" | "mqe", None) => CodecKind::MqeOneBit,
            ("topk", Some(a)) => CodecKind::TopK {
                fraction: a.trim().parse().map_err(|_| bad("fraction"))?,
            },
            ("local", Some(a)) => CodecKind::LocalSteps {
                n: a.trim().parse().map_err(|_| bad("step count"))?,
            },
            _ => return Err(Error::Config(format!("unknown codec {s:?}"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// Symmetric 8-bit quantization onto `[-127, 127]`.
pub fn quantize8(t: &DenseTensor) -> (f32, Vec<i8>) {
    let max = t.max_abs();
    if max == 0.0 {
        return (0.0, vec![0; t.len()]);
    }
    let scale = max / 127.0;
    let codes = t
        .data()
        .iter()
        .map(|&x| (x / scale).round().clamp(-127.0, 127.0) as i8)
        .collect();
    (scale, codes)
}

pub fn dequantize8(dims: &[usize], scale: f32, codes: &[i8]) -> DenseTensor {
    let data = codes.iter().map(|&c| scale * f32::from(c)).collect();
    DenseTensor::from_parts(dims.to_vec(), data)
}

/// TernGrad-style stochastic ternarization: `x` becomes `sign(x)` with
/// probability `|x| / max(|t|)`, else 0, so the dequantized value is
/// unbiased. No gradient clipping.
pub fn stoch_quantize3<R: Rng + ?Sized>(t: &DenseTensor, rng: &mut R) -> TernaryTensor {
    let m = t.max_abs();
    let values = if m == 0.0 {
        vec![0; t.len()]
    } else {
        t.data()
            .iter()
            .map(|&x| {
                let p = x.abs() / m;
                // one draw per element keeps the stream position independent of the data
                let u: f32 = rng.random();
                if u < p {
                    x.signum() as i8
                } else {
                    0
                }
            })
            .collect()
    };
    TernaryTensor::new(t.dims().to_vec(), values, m).expect("stochastic ternary invariants")
}

#[derive(Debug, Clone, PartialEq)]
pub struct MqeOutput {
    pub m_neg: f32,
    pub m_pos: f32,
    /// `true` for entries that were non-negative.
    pub bits: Vec<bool>,
}

impl MqeOutput {
    pub fn dequantize(&self, dims: &[usize]) -> DenseTensor {
        let data = self
            .bits
            .iter()
            .map(|&b| if b { self.m_pos } else { self.m_neg })
            .collect();
        DenseTensor::from_parts(dims.to_vec(), data)
    }
}

/// 1-bit quantization with the squared-error-minimizing value per sign
/// class, and error feedback through `ctx`.
pub fn mqe_quantize1(ctx: &mut ErrorContext, t: &DenseTensor) -> Result<MqeOutput> {
    let u = ctx.accumulate(t)?;
    let (mut pos_sum, mut pos_n, mut neg_sum, mut neg_n) = (0.0f64, 0usize, 0.0f64, 0usize);
    let bits: Vec<bool> = u
        .iter()
        .map(|&x| {
            if x >= 0.0 {
                pos_sum += f64::from(x);
                pos_n += 1;
                true
            } else {
                neg_sum += f64::from(x);
                neg_n += 1;
                false
            }
        })
        .collect();
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { (sum / n as f64) as f32 };
    let out = MqeOutput {
        m_neg: mean(neg_sum, neg_n),
        m_pos: mean(pos_sum, pos_n),
        bits,
    };
    let residual = u
        .iter()
        .zip(&out.bits)
        .map(|(&x, &b)| x - if b { out.m_pos } else { out.m_neg })
        .collect();
    ctx.set_buffer(residual);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopKOutput {
    pub bitmap: Vec<bool>,
    /// Selected entries in position order.
    pub values: Vec<f32>,
}

impl TopKOutput {
    pub fn densify(&self, dims: &[usize]) -> Result<DenseTensor> {
        let selected = self.bitmap.iter().filter(|&&b| b).count();
        if selected != self.values.len() {
            return Err(Error::format(format!(
                "bitmap selects {selected} entries but {} values present",
                self.values.len()
            )));
        }
        let mut vals = self.values.iter();
        let data = self
            .bitmap
            .iter()
            .map(|&b| if b { *vals.next().expect("counted") } else { 0.0 })
            .collect();
        DenseTensor::new(dims.to_vec(), data)
    }
}

/// `ceil(fraction * n)`, clamped to `1..=n`. The product is shrunk by one
/// part in 10^6 first so that an `f32` fraction such as `0.05` (stored as
/// 0.050000001) does not round 80.000001 up to 81.
pub fn topk_count(n: usize, fraction: f32) -> usize {
    let exact = f64::from(fraction) * n as f64;
    ((exact * (1.0 - 1e-6)).ceil() as usize).clamp(1, n)
}

/// Sends the `ceil(fraction * n)` largest-magnitude entries of
/// `buffer + t` and keeps everything else in the buffer. Ties on magnitude
/// go to the lower index.
pub fn topk_sparsify(ctx: &mut ErrorContext, t: &DenseTensor, fraction: f32) -> Result<TopKOutput> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("top-k fraction must be in (0, 1], got {fraction}")));
    }
    let mut u = ctx.accumulate(t)?;
    let n = u.len();
    let k = topk_count(n, fraction);
    let mut order: Vec<usize> = (0..n).collect();
    let by_magnitude = |&a: &usize, &b: &usize| {
        u[b].abs()
            .total_cmp(&u[a].abs())
            .then_with(|| a.cmp(&b))
    };
    if k < n {
        order.select_nth_unstable_by(k - 1, by_magnitude);
    }
    let mut bitmap = vec![false; n];
    for &i in &order[..k] {
        bitmap[i] = true;
    }
    let mut values = Vec::with_capacity(k);
    for (x, &sel) in u.iter_mut().zip(&bitmap) {
        if sel {
            values.push(*x);
            *x = 0.0;
        }
    }
    ctx.set_buffer(u);
    Ok(TopKOutput { bitmap, values })
}

/// Accumulates `t` and releases the accumulated sum on the last step of
/// every `n`-step period.
pub fn local_step_gate(
    ctx: &mut ErrorContext,
    t: &DenseTensor,
    step: u64,
    n: u32,
) -> Result<Option<DenseTensor>> {
    if n == 0 {
        return Err(Error::Config("local step count must be at least 1".into()));
    }
    let u = ctx.accumulate(t)?;
    if step % u64::from(n) == u64::from(n) - 1 {
        let out = DenseTensor::from_parts(ctx.dims().to_vec(), u);
        ctx.set_buffer(vec![0.0; out.len()]);
        Ok(Some(out))
    } else {
        ctx.set_buffer(u);
        Ok(None)
    }
}

// Bitmaps are LSB-first: entry i lives in bit (i % 8) of byte i / 8.

pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
        out[i / 8] |= 1 << (i % 8);
    }
    out
}

pub fn unpack_bits(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n).map(|i| bytes[i / 8] & (1 << (i % 8)) != 0).collect()
}

fn read_f32(bytes: &[u8]) -> f32 {
    f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
}

fn expect_len(payload: &[u8], want: usize, what: &str) -> Result<()> {
    if payload.len() != want {
        return Err(Error::format(format!(
            "{what} payload is {} bytes, expected {want}",
            payload.len()
        )));
    }
    Ok(())
}

fn finite_scalar(v: f32, what: &str) -> Result<f32> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::format(format!("non-finite {what} {v}")))
    }
}

fn container(codec: CodecId, dims: &[usize], payload: Vec<u8>) -> CompressedBlob {
    CompressedBlob {
        codec,
        flags: 0,
        dims: dims.to_vec(),
        m: 0.0,
        payload,
    }
}

pub fn encode_int8(dims: &[usize], scale: f32, codes: &[i8]) -> CompressedBlob {
    let mut payload = Vec::with_capacity(4 + codes.len());
    payload.extend_from_slice(&scale.to_le_bytes());
    payload.extend(codes.iter().map(|&c| c as u8));
    container(CodecId::Int8, dims, payload)
}

pub(crate) fn decode_int8(dims: &[usize], payload: &[u8]) -> Result<DenseTensor> {
    let n: usize = dims.iter().product();
    expect_len(payload, 4 + n, "int8")?;
    let scale = finite_scalar(read_f32(&payload[..4]), "scale")?;
    let codes: Vec<i8> = payload[4..].iter().map(|&b| b as i8).collect();
    if codes.contains(&i8::MIN) {
        return Err(Error::format("int8 code -128 is unused"));
    }
    Ok(dequantize8(dims, scale, &codes))
}

pub fn encode_mqe(dims: &[usize], out: &MqeOutput) -> CompressedBlob {
    let mut payload = Vec::with_capacity(8 + out.bits.len().div_ceil(8));
    payload.extend_from_slice(&out.m_neg.to_le_bytes());
    payload.extend_from_slice(&out.m_pos.to_le_bytes());
    payload.extend(pack_bits(&out.bits));
    container(CodecId::Mqe1, dims, payload)
}

pub(crate) fn decode_mqe(dims: &[usize], payload: &[u8]) -> Result<DenseTensor> {
    let n: usize = dims.iter().product();
    expect_len(payload, 8 + n.div_ceil(8), "mqe")?;
    let out = MqeOutput {
        m_neg: finite_scalar(read_f32(&payload[..4]), "m_neg")?,
        m_pos: finite_scalar(read_f32(&payload[4..8]), "m_pos")?,
        bits: unpack_bits(&payload[8..], n),
    };
    Ok(out.dequantize(dims))
}

pub fn encode_topk(dims: &[usize], out: &TopKOutput) -> CompressedBlob {
    let mut payload = pack_bits(&out.bitmap);
    for v in &out.values {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    container(CodecId::TopK, dims, payload)
}

pub(crate) fn decode_topk(dims: &[usize], payload: &[u8]) -> Result<DenseTensor> {
    let n: usize = dims.iter().product();
    let map_len = n.div_ceil(8);
    if payload.len() < map_len || !(payload.len() - map_len).is_multiple_of(4) {
        return Err(Error::format(format!("top-k payload of {} bytes is malformed", payload.len())));
    }
    let bitmap = unpack_bits(&payload[..map_len], n);
    let values = payload[map_len..].chunks_exact(4).map(read_f32).collect();
    TopKOutput { bitmap, values }.densify(dims).map_err(|e| match e {
        Error::Value(msg) => Error::Format(msg),
        other => other,
    })
}

pub fn encode_raw(t: &DenseTensor) -> CompressedBlob {
    let payload = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    container(CodecId::Raw, t.dims(), payload)
}

pub(crate) fn decode_raw(dims: &[usize], payload: &[u8]) -> Result<DenseTensor> {
    let n: usize = dims.iter().product();
    expect_len(payload, 4 * n, "raw")?;
    DenseTensor::new(dims.to_vec(), payload.chunks_exact(4).map(read_f32).collect()).map_err(
        |e| match e {
            Error::Value(msg) => Error::Format(msg),
            other => other,
        },
    )
}

/// Stateful per-tensor codec: owns the error context (and RNG, for the
/// stochastic codec) for one tensor stream in one direction.
#[derive(Debug, Clone)]
pub struct TensorCodec {
    kind: CodecKind,
    ctx: ErrorContext,
    rng: ChaCha8Rng,
    step: u64,
    compressions: u64,
}

impl TensorCodec {
    /// `seed` feeds the stochastic codec only; other codecs ignore it.
    pub fn new(kind: CodecKind, dims: Vec<usize>, seed: u64) -> Result<Self> {
        kind.validate()?;
        let cfg = match kind {
            CodecKind::ThreeLc { s, .. } => QuantConfig::new(s)?,
            _ => QuantConfig::default(),
        };
        Ok(Self {
            kind,
            ctx: ErrorContext::new(dims, cfg)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
            step: 0,
            compressions: 0,
        })
    }

    pub fn kind(&self) -> CodecKind {
        self.kind
    }

    pub fn context(&self) -> &ErrorContext {
        &self.ctx
    }

    /// Number of `encode` calls that ran a compressor.
    pub fn compressions(&self) -> u64 {
        self.compressions
    }

    /// Encodes one state change. `None` means nothing is transmitted this
    /// step (local-step accumulation).
    pub fn encode(&mut self, t: &DenseTensor) -> Result<Option<CompressedBlob>> {
        let step = self.step;
        self.step += 1;
        self.compressions += 1;
        let dims = self.ctx.dims().to_vec();
        let blob = match self.kind {
            CodecKind::ThreeLc { zre, .. } => blob::compress(&mut self.ctx, t, zre)?,
            CodecKind::Float32 => {
                self.ctx.accumulate(t)?;
                encode_raw(t)
            }
            CodecKind::EightBitInt => {
                self.ctx.accumulate(t)?;
                let (scale, codes) = quantize8(t);
                encode_int8(&dims, scale, &codes)
            }
            CodecKind::StochThree => {
                self.ctx.accumulate(t)?;
                let q = stoch_quantize3(t, &mut self.rng);
                blob::pack_ternary(CodecId::Stoch3, &q, false)?
            }
            CodecKind::MqeOneBit => encode_mqe(&dims, &mqe_quantize1(&mut self.ctx, t)?),
            CodecKind::TopK { fraction } => {
                encode_topk(&dims, &topk_sparsify(&mut self.ctx, t, fraction)?)
            }
            CodecKind::LocalSteps { n } => {
                match local_step_gate(&mut self.ctx, t, step, n)? {
                    Some(out) => encode_raw(&out),
                    None => return Ok(None),
                }
            }
        };
        Ok(Some(blob))
    }
}
