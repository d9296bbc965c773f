//! Lossless byte transforms for ternary data: quartic encoding and
//! zero-run encoding (ZRE).
//!
//! Quartic encoding shifts ternary values to digits `{0, 1, 2}`, pads the
//! flat digit array to a multiple of five, and splits it into five
//! contiguous partitions `p0..p4` of length `k = ceil(n / 5)`. Byte `j` is
//! `p0[j]*81 + p1[j]*27 + p2[j]*9 + p3[j]*3 + p4[j]`, so byte `j` holds the
//! strided elements `j, j + k, j + 2k, j + 3k, j + 4k`, not five
//! consecutive ones. A byte is `121` exactly when all five of its strided
//! elements are zero.
//!
//! ZRE replaces each run of `k` consecutive `121` bytes (`2 <= k <= 14`)
//! with the single byte `243 + (k - 2)`. Longer runs are chunked greedily
//! into codes of 14; a lone `121` stays literal.

use crate::error::{Error, Result};

/// Largest byte quartic encoding can produce (`3^5 - 1`).
pub const QUARTIC_MAX: u8 = 242;
/// Quartic byte for five zero ternary values.
pub const ZERO_GROUP: u8 = 121;
pub const RUN_CODE_MIN: u8 = 243;
pub const MIN_RUN: usize = 2;
pub const MAX_RUN: usize = 14;

const WEIGHTS: [u8; 5] = [81, 27, 9, 3, 1];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuarticBytes {
    pub bytes: Vec<u8>,
    pub original_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZreBytes {
    pub bytes: Vec<u8>,
    pub decoded_len: usize,
}

/// Number of quartic bytes for `n` ternary values.
pub fn quartic_len(n: usize) -> usize {
    n.div_ceil(5)
}

pub fn quartic_encode(values: &[i8]) -> Result<QuarticBytes> {
    if let Some(v) = values.iter().find(|v| !(-1..=1).contains(*v)) {
        return Err(Error::value(format!("ternary value {v} outside {{-1, 0, 1}}")));
    }
    let n = values.len();
    let k = quartic_len(n);
    let mut bytes = vec![0u8; k];
    for (part, &w) in WEIGHTS.iter().enumerate() {
        let start = part * k;
        if start >= n {
            break;
        }
        let end = (start + k).min(n);
        // padded positions carry digit 0 and contribute nothing
        for (b, &v) in bytes.iter_mut().zip(&values[start..end]) {
            *b += (v + 1) as u8 * w;
        }
    }
    Ok(QuarticBytes {
        bytes,
        original_len: n,
    })
}

pub fn quartic_decode(q: &QuarticBytes) -> Result<Vec<i8>> {
    let k = q.bytes.len();
    if q.original_len > 5 * k {
        return Err(Error::format(format!(
            "{} values cannot fit in {k} quartic bytes",
            q.original_len
        )));
    }
    if k != quartic_len(q.original_len) {
        return Err(Error::format(format!(
            "{} values need {} quartic bytes, found {k}",
            q.original_len,
            quartic_len(q.original_len)
        )));
    }
    if let Some(b) = q.bytes.iter().find(|&&b| b > QUARTIC_MAX) {
        return Err(Error::format(format!("byte {b} is not a quartic code")));
    }
    let mut out = vec![0i8; 5 * k];
    for (part, &w) in WEIGHTS.iter().enumerate() {
        let dst = &mut out[part * k..(part + 1) * k];
        for (d, &b) in dst.iter_mut().zip(&q.bytes) {
            *d = ((b / w) % 3) as i8 - 1;
        }
    }
    out.truncate(q.original_len);
    Ok(out)
}

pub fn zre_encode(bytes: &[u8]) -> Result<ZreBytes> {
    if let Some(b) = bytes.iter().find(|&&b| b > QUARTIC_MAX) {
        return Err(Error::value(format!("byte {b} exceeds quartic range")));
    }
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != ZERO_GROUP {
            out.push(bytes[i]);
            i += 1;
            continue;
        }
        let run = bytes[i..].iter().take_while(|&&b| b == ZERO_GROUP).count();
        let mut left = run;
        while left > 0 {
            let chunk = left.min(MAX_RUN);
            if chunk >= MIN_RUN {
                out.push(RUN_CODE_MIN + (chunk - MIN_RUN) as u8);
            } else {
                out.push(ZERO_GROUP);
            }
            left -= chunk;
        }
        i += run;
    }
    Ok(ZreBytes {
        bytes: out,
        decoded_len: bytes.len(),
    })
}

pub fn zre_decode(z: &ZreBytes) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(z.decoded_len);
    for &b in &z.bytes {
        if b >= RUN_CODE_MIN {
            let run = (b - RUN_CODE_MIN) as usize + MIN_RUN;
            out.extend(std::iter::repeat_n(ZERO_GROUP, run));
        } else {
            out.push(b);
        }
        if out.len() > z.decoded_len {
            break;
        }
    }
    if out.len() != z.decoded_len {
        return Err(Error::format(format!(
            "ZRE stream decodes to {}+ bytes, header says {}",
            out.len(),
            z.decoded_len
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn five_zeros_is_121() {
        assert_eq!(quartic_encode(&[0; 5]).unwrap().bytes, vec![121]);
    }

    #[test]
    fn extremes() {
        assert_eq!(quartic_encode(&[1; 5]).unwrap().bytes, vec![242]);
        assert_eq!(quartic_encode(&[-1; 5]).unwrap().bytes, vec![0]);
    }

    #[test]
    fn length_seven_uses_strided_partitions() {
        let q = quartic_encode(&[1; 7]).unwrap();
        assert_eq!(q.bytes, vec![240, 234]);
        assert_eq!(q.original_len, 7);
        assert_eq!(quartic_decode(&q).unwrap(), vec![1; 7]);
    }

    #[test]
    fn mixed_group() {
        assert_eq!(quartic_encode(&[1, -1, 0, 0, 0]).unwrap().bytes, vec![175]);
    }

    #[test]
    fn decode_121() {
        let q = QuarticBytes { bytes: vec![121], original_len: 5 };
        assert_eq!(quartic_decode(&q).unwrap(), vec![0; 5]);
    }

    #[test]
    fn empty_sequence() {
        let q = quartic_encode(&[]).unwrap();
        assert!(q.bytes.is_empty());
        assert_eq!(quartic_decode(&q).unwrap(), Vec::<i8>::new());
    }

    #[test]
    fn quartic_rejects_bad_input() {
        assert!(matches!(quartic_encode(&[0, 2]), Err(Error::Value(_))));
        let q = QuarticBytes { bytes: vec![243], original_len: 5 };
        assert!(matches!(quartic_decode(&q), Err(Error::Format(_))));
        let q = QuarticBytes { bytes: vec![0], original_len: 6 };
        assert!(matches!(quartic_decode(&q), Err(Error::Format(_))));
        let q = QuarticBytes { bytes: vec![0, 0], original_len: 5 };
        assert!(matches!(quartic_decode(&q), Err(Error::Format(_))));
    }

    #[test]
    fn zre_examples() {
        assert_eq!(zre_encode(&[121, 121]).unwrap().bytes, vec![243]);
        assert_eq!(zre_encode(&[121; 14]).unwrap().bytes, vec![255]);
        assert_eq!(zre_encode(&[121; 15]).unwrap().bytes, vec![255, 121]);
        assert_eq!(zre_encode(&[5, 121, 7]).unwrap().bytes, vec![5, 121, 7]);
        assert_eq!(zre_encode(&[121; 28]).unwrap().bytes, vec![255, 255]);
        assert_eq!(zre_encode(&[121; 16]).unwrap().bytes, vec![255, 243]);
    }

    #[test]
    fn zre_decode_examples() {
        let z = ZreBytes { bytes: vec![243], decoded_len: 2 };
        assert_eq!(zre_decode(&z).unwrap(), vec![121, 121]);
        let z = ZreBytes { bytes: vec![255, 121], decoded_len: 15 };
        assert_eq!(zre_decode(&z).unwrap(), vec![121; 15]);
    }

    #[test]
    fn zre_errors() {
        assert!(matches!(zre_encode(&[243]), Err(Error::Value(_))));
        let z = ZreBytes { bytes: vec![243], decoded_len: 3 };
        assert!(matches!(zre_decode(&z), Err(Error::Format(_))));
        let z = ZreBytes { bytes: vec![255], decoded_len: 2 };
        assert!(matches!(zre_decode(&z), Err(Error::Format(_))));
    }

    #[test]
    fn seventy_zeros_compose_to_one_byte() {
        for r in 1..20 {
            let q = quartic_encode(&vec![0; 70 * r]).unwrap();
            let z = zre_encode(&q.bytes).unwrap();
            assert_eq!(z.bytes.len(), r);
            assert!(z.bytes.iter().all(|&b| b == 255));
        }
    }

    fn ternary_vec() -> impl Strategy<Value = Vec<i8>> {
        prop::collection::vec(prop::sample::select(vec![-1i8, 0, 0, 0, 1]), 0..300)
    }

    fn quartic_stream() -> impl Strategy<Value = Vec<u8>> {
        // bias toward 121 so long runs show up
        prop::collection::vec(
            prop_oneof![3 => Just(ZERO_GROUP), 1 => 0u8..=QUARTIC_MAX],
            0..400,
        )
    }

    proptest! {
        #[test]
        fn quartic_round_trip(v in ternary_vec()) {
            let q = quartic_encode(&v).unwrap();
            prop_assert_eq!(q.bytes.len(), quartic_len(v.len()));
            prop_assert!(q.bytes.iter().all(|&b| b <= QUARTIC_MAX));
            prop_assert_eq!(quartic_decode(&q).unwrap(), v);
        }

        #[test]
        fn zre_round_trip_canonical(b in quartic_stream()) {
            let z = zre_encode(&b).unwrap();
            prop_assert!(z.bytes.len() <= b.len());
            prop_assert!(!z.bytes.windows(2).any(|w| w == [ZERO_GROUP, ZERO_GROUP]));
            prop_assert_eq!(zre_decode(&z).unwrap(), b);
        }
    }
}
