//! 3-value quantization with a sparsity multiplier, and the per-tensor
//! error-accumulation context that feeds it.
//!
//! A tensor `t` is quantized to `values = round(t / m)` with
//! `m = max(|t|) * s`. Rounding is half-away-from-zero (`f32::round`) on
//! every platform. Because `1 <= s < 2`, every `|t / m| <= 1`, so the
//! values are always in `{-1, 0, 1}` and the reconstruction error per
//! element is at most `m / 2 < max(|t|)`.

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Sparsity multiplier, `1 <= s < 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantConfig {
    s: f32,
}

impl QuantConfig {
    pub fn new(s: f32) -> Result<Self> {
        if !(1.0..2.0).contains(&s) {
            return Err(Error::Config(format!(
                "sparsity multiplier must satisfy 1 <= s < 2, got {s}"
            )));
        }
        Ok(Self { s })
    }

    pub fn s(&self) -> f32 {
        self.s
    }
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self { s: 1.0 }
    }
}

/// Ternary values plus the shared magnitude `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct TernaryTensor {
    dims: Vec<usize>,
    values: Vec<i8>,
    m: f32,
}

impl TernaryTensor {
    pub fn new(dims: Vec<usize>, values: Vec<i8>, m: f32) -> Result<Self> {
        let numel = crate::tensor::checked_numel(&dims)?;
        if values.len() != numel {
            return Err(Error::format(format!(
                "dims {dims:?} describe {numel} elements but {} values were given",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(-1..=1).contains(*v)) {
            return Err(Error::value(format!("ternary value {v} outside {{-1, 0, 1}}")));
        }
        if !m.is_finite() || m < 0.0 {
            return Err(Error::value(format!("magnitude must be finite and >= 0, got {m}")));
        }
        if m == 0.0 && values.iter().any(|&v| v != 0) {
            return Err(Error::value("m = 0 requires all-zero values"));
        }
        Ok(Self { dims, values, m })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn m(&self) -> f32 {
        self.m
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn quantize3(t: &DenseTensor, cfg: QuantConfig) -> Result<TernaryTensor> {
    if let Some(v) = t.data().iter().find(|v| !v.is_finite()) {
        return Err(Error::value(format!("cannot quantize non-finite value {v}")));
    }
    let max = t.max_abs();
    if max == 0.0 {
        return Ok(TernaryTensor {
            dims: t.dims().to_vec(),
            values: vec![0; t.len()],
            m: 0.0,
        });
    }
    let m = max * cfg.s();
    if !m.is_finite() {
        return Err(Error::value(format!("magnitude {max} * {} overflows f32", cfg.s())));
    }
    let values = t.data().iter().map(|&x| (x / m).round() as i8).collect();
    Ok(TernaryTensor {
        dims: t.dims().to_vec(),
        values,
        m,
    })
}

pub fn dequantize3(q: &TernaryTensor) -> DenseTensor {
    let data = q.values.iter().map(|&v| q.m * f32::from(v)).collect();
    DenseTensor::from_parts(q.dims.clone(), data)
}

pub fn zero_count(q: &TernaryTensor) -> usize {
    q.values.iter().filter(|&&v| v == 0).count()
}

/// Error-accumulation state for one tensor stream.
///
/// Single writer: one context serves exactly one tensor and callers must
/// serialize access to it.
#[derive(Debug, Clone)]
pub struct ErrorContext {
    buffer: DenseTensor,
    config: QuantConfig,
}

impl ErrorContext {
    pub fn new(dims: Vec<usize>, config: QuantConfig) -> Result<Self> {
        Ok(Self {
            buffer: DenseTensor::zeros(dims)?,
            config,
        })
    }

    pub fn buffer(&self) -> &DenseTensor {
        &self.buffer
    }

    pub fn config(&self) -> QuantConfig {
        self.config
    }

    pub fn dims(&self) -> &[usize] {
        self.buffer.dims()
    }

    /// `buffer + t`, checked against the context shape.
    pub(crate) fn accumulate(&self, t: &DenseTensor) -> Result<Vec<f32>> {
        self.buffer.check_same_shape(t)?;
        Ok(self
            .buffer
            .data()
            .iter()
            .zip(t.data())
            .map(|(b, x)| b + x)
            .collect())
    }

    pub(crate) fn set_buffer(&mut self, data: Vec<f32>) {
        self.buffer = DenseTensor::from_parts(self.buffer.dims().to_vec(), data);
    }
}

/// Quantizes `buffer + t` and keeps the residual in the buffer.
pub fn context_compress(ctx: &mut ErrorContext, t: &DenseTensor) -> Result<TernaryTensor> {
    let sum = ctx.accumulate(t)?;
    let sum = DenseTensor::new(ctx.dims().to_vec(), sum)?;
    let q = quantize3(&sum, ctx.config)?;
    let residual = sum
        .data()
        .iter()
        .zip(&q.values)
        .map(|(&u, &v)| u - q.m * f32::from(v))
        .collect();
    ctx.set_buffer(residual);
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t1(v: &[f32]) -> DenseTensor {
        DenseTensor::from_vec(v.to_vec()).unwrap()
    }

    fn cfg(s: f32) -> QuantConfig {
        QuantConfig::new(s).unwrap()
    }

    #[test]
    fn quantize_half_rounds_away_from_zero() {
        let q = quantize3(&t1(&[0.4, -0.2, 0.1, 0.0]), cfg(1.0)).unwrap();
        assert_eq!(q.m(), 0.4);
        assert_eq!(q.values(), &[1, -1, 0, 0]);
    }

    #[test]
    fn quantize_zero_tensor() {
        for s in [1.0, 1.5, 1.99] {
            let q = quantize3(&t1(&[0.0, 0.0, 0.0]), cfg(s)).unwrap();
            assert_eq!(q.m(), 0.0);
            assert_eq!(q.values(), &[0, 0, 0]);
        }
    }

    #[test]
    fn quantize_with_large_multiplier() {
        let q = quantize3(&t1(&[1.0, 0.5, -0.9]), cfg(1.9)).unwrap();
        assert_eq!(q.m(), 1.9);
        assert_eq!(q.values(), &[1, 0, 0]);
    }

    #[test]
    fn config_range() {
        assert!(QuantConfig::new(1.0).is_ok());
        assert!(QuantConfig::new(1.999).is_ok());
        assert!(matches!(QuantConfig::new(2.0), Err(Error::Config(_))));
        assert!(matches!(QuantConfig::new(0.99), Err(Error::Config(_))));
        assert!(QuantConfig::new(f32::NAN).is_err());
    }

    #[test]
    fn dequantize_scales() {
        let q = TernaryTensor::new(vec![3], vec![1, -1, 0], 0.4).unwrap();
        assert_eq!(dequantize3(&q).data(), &[0.4, -0.4, 0.0]);
        let z = TernaryTensor::new(vec![2], vec![0, 0], 0.0).unwrap();
        assert_eq!(dequantize3(&z).data(), &[0.0, 0.0]);
    }

    #[test]
    fn ternary_invariants() {
        assert!(TernaryTensor::new(vec![2], vec![2, 0], 1.0).is_err());
        assert!(TernaryTensor::new(vec![2], vec![1, 0], 0.0).is_err());
        assert!(TernaryTensor::new(vec![2], vec![1, 0], -1.0).is_err());
        assert!(TernaryTensor::new(vec![3], vec![1, 0], 1.0).is_err());
    }

    #[test]
    fn context_keeps_residual() {
        let mut ctx = ErrorContext::new(vec![2], cfg(1.0)).unwrap();
        let q = context_compress(&mut ctx, &t1(&[0.4, -0.2])).unwrap();
        assert_eq!(q.values(), &[1, -1]);
        assert_eq!(q.m(), 0.4);
        let buf = ctx.buffer().data();
        assert_eq!(buf[0], 0.0);
        assert!((buf[1] - 0.2).abs() < 1e-7);
    }

    #[test]
    fn context_zero_fixpoint() {
        let mut ctx = ErrorContext::new(vec![2], cfg(1.0)).unwrap();
        let q = context_compress(&mut ctx, &t1(&[0.0, 0.0])).unwrap();
        assert_eq!(q.m(), 0.0);
        assert_eq!(zero_count(&q), 2);
        assert_eq!(ctx.buffer().data(), &[0.0, 0.0]);
    }

    #[test]
    fn context_telescopes_over_two_calls() {
        let mut ctx = ErrorContext::new(vec![2], cfg(1.0)).unwrap();
        let mut sent = [0.0f32; 2];
        for _ in 0..2 {
            let q = context_compress(&mut ctx, &t1(&[0.3, 0.0])).unwrap();
            for (s, v) in sent.iter_mut().zip(dequantize3(&q).data()) {
                *s += v;
            }
        }
        let total: Vec<f32> = sent.iter().zip(ctx.buffer().data()).map(|(a, b)| a + b).collect();
        assert!((total[0] - 0.6).abs() < 1e-6);
        assert_eq!(total[1], 0.0);
    }

    #[test]
    fn context_shape_mismatch() {
        let mut ctx = ErrorContext::new(vec![2], cfg(1.0)).unwrap();
        assert!(matches!(
            context_compress(&mut ctx, &t1(&[1.0, 2.0, 3.0])),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn zero_count_counts() {
        let q = TernaryTensor::new(vec![4], vec![1, -1, 0, 0], 1.0).unwrap();
        assert_eq!(zero_count(&q), 2);
        let z = TernaryTensor::new(vec![7], vec![0; 7], 0.0).unwrap();
        assert_eq!(zero_count(&z), 7);
    }

    fn finite_vec() -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(-100.0f32..100.0, 1..200)
    }

    proptest! {
        #[test]
        fn error_bounded_by_half_m(data in finite_vec(), s in prop::sample::select(vec![1.0f32, 1.5, 1.75, 1.9])) {
            let t = t1(&data);
            let q = quantize3(&t, cfg(s)).unwrap();
            let out = dequantize3(&q);
            for (a, b) in t.data().iter().zip(out.data()) {
                prop_assert!((a - b).abs() <= q.m() / 2.0 + 1e-6);
            }
            if t.max_abs() > 0.0 {
                prop_assert!(q.m() / 2.0 < t.max_abs());
            }
        }

        #[test]
        fn zeros_monotone_in_s(data in finite_vec(), s1 in 1.0f32..1.99, ds in 0.0f32..0.99) {
            let s2 = (s1 + ds).min(1.999);
            let t = t1(&data);
            let z1 = zero_count(&quantize3(&t, cfg(s1)).unwrap());
            let z2 = zero_count(&quantize3(&t, cfg(s2)).unwrap());
            prop_assert!(z2 >= z1);
        }

        #[test]
        fn quantize_is_deterministic(data in finite_vec(), s in 1.0f32..1.99) {
            let t = t1(&data);
            prop_assert_eq!(quantize3(&t, cfg(s)).unwrap(), quantize3(&t, cfg(s)).unwrap());
        }
    }
}
