//! Binary signal format codecs.
//!
//! Format 212 packs two signed 12-bit samples into each 3-byte group:
//! `s1 = ((b1 & 0x0F) << 8) | b0`, `s2 = ((b1 & 0xF0) << 4) | b2`, with
//! values >= 0x800 sign-extended. Format 16 is little-endian signed 16-bit.
//! Multi-signal files interleave samples round-robin across signals.

use crate::error::{Error, Result};

const F212_MIN: i32 = -2048;
const F212_MAX: i32 = 2047;

/// Decode `n_samples_total` 12-bit samples from a format-212 byte stream.
pub fn decode_format212(bytes: &[u8], n_samples_total: usize) -> Result<Vec<i32>> {
    let needed = (3 * n_samples_total).div_ceil(2);
    if bytes.len() < needed {
        return Err(Error::TruncatedData {
            needed,
            have: bytes.len(),
        });
    }
    let mut out = Vec::with_capacity(n_samples_total);
    for group in bytes.chunks(3) {
        if out.len() >= n_samples_total {
            break;
        }
        let b0 = i32::from(group[0]);
        let b1 = i32::from(group[1]);
        out.push(sign_extend_12(((b1 & 0x0F) << 8) | b0));
        if out.len() < n_samples_total {
            let b2 = i32::from(group[2]);
            out.push(sign_extend_12(((b1 & 0xF0) << 4) | b2));
        }
    }
    Ok(out)
}

fn sign_extend_12(v: i32) -> i32 {
    if v >= 0x800 {
        v - 4096
    } else {
        v
    }
}

/// Pack signed 12-bit samples into format 212 (used to write test fixtures).
pub fn encode_format212(samples: &[i32]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity((3 * samples.len()).div_ceil(2));
    for pair in samples.chunks(2) {
        let s1 = to_u12(pair[0])?;
        let s2 = if pair.len() == 2 { to_u12(pair[1])? } else { 0 };
        out.push((s1 & 0xFF) as u8);
        out.push((((s1 >> 8) & 0x0F) | ((s2 >> 4) & 0xF0)) as u8);
        out.push((s2 & 0xFF) as u8);
    }
    Ok(out)
}

fn to_u12(v: i32) -> Result<u32> {
    if !(F212_MIN..=F212_MAX).contains(&v) {
        return Err(Error::InvalidConfig(format!(
            "sample {v} outside the signed 12-bit range"
        )));
    }
    Ok((v & 0xFFF) as u32)
}

/// Decode little-endian signed 16-bit samples.
pub fn decode_format16(bytes: &[u8]) -> Result<Vec<i32>> {
    if bytes.len() % 2 != 0 {
        return Err(Error::TruncatedData {
            needed: bytes.len() + 1,
            have: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|p| i32::from(i16::from_le_bytes([p[0], p[1]])))
        .collect())
}

/// Pack samples as little-endian signed 16-bit.
pub fn encode_format16(samples: &[i32]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(samples.len() * 2);
    for &v in samples {
        let v = i16::try_from(v).map_err(|_| {
            Error::InvalidConfig(format!("sample {v} outside the signed 16-bit range"))
        })?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// ADC counts to millivolts: `(adc - baseline) / gain`.
pub fn adc_to_physical(adc: i32, gain: f64, baseline: i32) -> Result<f64> {
    if gain <= 0.0 {
        return Err(Error::InvalidGain(gain));
    }
    Ok(f64::from(adc - baseline) / gain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_the_documented_byte_triple() {
        let v = decode_format212(&[0x34, 0x12, 0xAB], 2).unwrap();
        assert_eq!(v, vec![0x234, 0x1AB]);
        assert_eq!(v, vec![564, 427]);
    }

    #[test]
    fn sign_extension_cases() {
        assert_eq!(decode_format212(&[0xFF, 0xFF, 0xFF], 2).unwrap(), vec![-1, -1]);
        assert_eq!(decode_format212(&[0x00, 0x00, 0x00], 2).unwrap(), vec![0, 0]);
        // 0x800 is the most negative value.
        assert_eq!(decode_format212(&[0x00, 0x08, 0x00], 2).unwrap(), vec![-2048, 0]);
    }

    #[test]
    fn odd_sample_count_uses_half_group() {
        assert_eq!(decode_format212(&[0x34, 0x12, 0xAB], 1).unwrap(), vec![0x234]);
        let bytes = encode_format212(&[5, -3, 7]).unwrap();
        assert_eq!(bytes.len(), 6);
        assert_eq!(decode_format212(&bytes, 3).unwrap(), vec![5, -3, 7]);
    }

    #[test]
    fn truncated_212_is_typed() {
        assert!(matches!(
            decode_format212(&[0x00, 0x00], 2),
            Err(Error::TruncatedData { needed: 3, have: 2 })
        ));
    }

    #[test]
    fn format16_basics() {
        assert_eq!(decode_format16(&[0x01, 0x00]).unwrap(), vec![1]);
        assert_eq!(decode_format16(&[0xFF, 0xFF]).unwrap(), vec![-1]);
        assert_eq!(decode_format16(&[0x00, 0x80]).unwrap(), vec![-32768]);
        assert!(decode_format16(&[0x01]).is_err());
        let enc = encode_format16(&[1, -1, -32768, 32767]).unwrap();
        assert_eq!(decode_format16(&enc).unwrap(), vec![1, -1, -32768, 32767]);
    }

    #[test]
    fn adc_conversion() {
        assert_eq!(adc_to_physical(1024, 200.0, 1024).unwrap(), 0.0);
        assert_eq!(adc_to_physical(1224, 200.0, 1024).unwrap(), 1.0);
        assert!(matches!(
            adc_to_physical(1, 0.0, 0),
            Err(Error::InvalidGain(_))
        ));
        assert!(matches!(
            adc_to_physical(1, -5.0, 0),
            Err(Error::InvalidGain(_))
        ));
    }

    proptest! {
        #[test]
        fn format212_round_trip(samples in prop::collection::vec(-2048i32..=2047, 0..300)) {
            let bytes = encode_format212(&samples).unwrap();
            let back = decode_format212(&bytes, samples.len()).unwrap();
            prop_assert_eq!(back, samples);
        }

        #[test]
        fn format212_range(bytes in prop::collection::vec(any::<u8>(), 0..300)) {
            let n = 2 * bytes.len() / 3;
            let vals = decode_format212(&bytes, n).unwrap();
            prop_assert!(vals.iter().all(|&v| (-2048..=2047).contains(&v)));
        }

        #[test]
        fn adc_to_physical_is_affine(
            adc in -2048i32..=2047,
            k in -50i32..=50,
            gain in 1u32..=500,
            baseline in -1024i32..=1024,
        ) {
            let g = f64::from(gain);
            let lhs = adc_to_physical(adc + g as i32 * k, g, baseline).unwrap();
            let rhs = adc_to_physical(adc, g, baseline).unwrap() + f64::from(k);
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
