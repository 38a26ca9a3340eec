//! MIT annotation stream decoding.
//!
//! The stream is a sequence of little-endian 16-bit pairs. Bits 15-10 hold
//! the annotation code, bits 9-0 the operand. Code 0 with operand 0 ends the
//! stream. Pseudo-codes: 59 (SKIP, the next two pairs form a 32-bit time
//! increment, high word first), 60/61/62 (NUM/SUB/CHN, modifier state, no
//! time advance), 63 (AUX, operand counts the following text bytes, padded
//! to even). Every other code emits a beat/event annotation at the
//! accumulated time plus its operand.

use crate::error::{Error, Result};

/// One decoded annotation: an absolute sample index plus the MIT mnemonic.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub sample_index: usize,
    /// MIT annotation mnemonic ('N', 'V', 'A', '/', '+', ...).
    pub symbol: char,
    pub aux: Option<String>,
}

const SKIP: u16 = 59;
const NUM: u16 = 60;
const SUB: u16 = 61;
const CHN: u16 = 62;
const AUX: u16 = 63;

/// Code-to-mnemonic table (codes 1..=41; unused codes map to '?').
const SYMBOLS: [char; 42] = [
    ' ', 'N', 'L', 'R', 'a', 'V', 'F', 'J', 'A', 'S', 'E', 'j', '/', 'Q', '~', '?', '|', '?', 's',
    'T', '*', 'D', '"', '=', 'p', 'B', '^', 't', '+', 'u', '?', '!', '[', ']', 'e', 'n', '@', 'x',
    'f', '(', ')', 'r',
];

pub fn symbol_for_code(code: u16) -> char {
    SYMBOLS.get(code as usize).copied().unwrap_or('?')
}

pub fn parse_annotations(bytes: &[u8]) -> Result<Vec<Annotation>> {
    let mut out: Vec<Annotation> = Vec::new();
    let mut pairs = bytes.chunks_exact(2);
    let mut time: i64 = 0;

    while let Some(p) = pairs.next() {
        let word = u16::from_le_bytes([p[0], p[1]]);
        let code = word >> 10;
        let operand = word & 0x03FF;
        match code {
            0 if operand == 0 => return Ok(out),
            SKIP => {
                let high = pairs.next();
                let low = pairs.next();
                let (Some(high), Some(low)) = (high, low) else {
                    return Err(Error::MalformedAnnotation(
                        "dangling SKIP operand".into(),
                    ));
                };
                let hi = u32::from(u16::from_le_bytes([high[0], high[1]]));
                let lo = u32::from(u16::from_le_bytes([low[0], low[1]]));
                time += i64::from(((hi << 16) | lo) as i32);
            }
            NUM | SUB | CHN => {}
            AUX => {
                let len = operand as usize;
                let padded = len + (len & 1);
                let rest = pairs.as_slice();
                if padded > rest.len() {
                    return Err(Error::MalformedAnnotation(format!(
                        "AUX length {len} exceeds remaining {} bytes",
                        rest.len()
                    )));
                }
                let text = String::from_utf8_lossy(&rest[..len])
                    .trim_end_matches('\0')
                    .to_string();
                if let Some(last) = out.last_mut() {
                    last.aux = Some(text);
                }
                pairs = rest[padded..].chunks_exact(2);
            }
            _ => {
                time += i64::from(operand);
                if time < 0 {
                    return Err(Error::MalformedAnnotation(format!(
                        "negative annotation time {time}"
                    )));
                }
                out.push(Annotation {
                    sample_index: time as usize,
                    symbol: symbol_for_code(code),
                    aux: None,
                });
            }
        }
    }
    // Streams are expected to end with the EOF pair; running off the end is
    // tolerated to match lenient reference readers.
    Ok(out)
}

/// Encode annotations back into the byte-pair stream (test fixtures and the
/// synthetic record writer). Only beat codes and SKIP are emitted.
pub fn encode_annotations(annotations: &[(usize, u16)]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut time = 0usize;
    for &(sample, code) in annotations {
        let delta = sample - time;
        if delta > 1023 {
            out.extend_from_slice(&((SKIP << 10) as u16).to_le_bytes());
            let d = delta as u32;
            out.extend_from_slice(&((d >> 16) as u16).to_le_bytes());
            out.extend_from_slice(&((d & 0xFFFF) as u16).to_le_bytes());
            out.extend_from_slice(&(code << 10).to_le_bytes());
        } else {
            out.extend_from_slice(&((code << 10) | delta as u16).to_le_bytes());
        }
        time = sample;
    }
    out.extend_from_slice(&0u16.to_le_bytes());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(code: u16, operand: u16) -> [u8; 2] {
        ((code << 10) | operand).to_le_bytes()
    }

    #[test]
    fn empty_stream_after_eof() {
        assert_eq!(parse_annotations(&pair(0, 0)).unwrap(), vec![]);
        assert_eq!(parse_annotations(&[]).unwrap(), vec![]);
    }

    #[test]
    fn single_beat_at_increment_100() {
        let mut bytes = pair(1, 100).to_vec();
        bytes.extend_from_slice(&pair(0, 0));
        let anns = parse_annotations(&bytes).unwrap();
        assert_eq!(anns.len(), 1);
        assert_eq!(anns[0].sample_index, 100);
        assert_eq!(anns[0].symbol, 'N');
    }

    #[test]
    fn increments_accumulate_and_symbols_map() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&pair(1, 100)); // N at 100
        bytes.extend_from_slice(&pair(5, 50)); // V at 150
        bytes.extend_from_slice(&pair(8, 7)); // A at 157
        bytes.extend_from_slice(&pair(12, 3)); // '/' at 160
        bytes.extend_from_slice(&pair(0, 0));
        let anns = parse_annotations(&bytes).unwrap();
        let got: Vec<(usize, char)> = anns.iter().map(|a| (a.sample_index, a.symbol)).collect();
        assert_eq!(got, vec![(100, 'N'), (150, 'V'), (157, 'A'), (160, '/')]);
    }

    #[test]
    fn skip_extends_the_time_base() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&pair(SKIP, 0));
        bytes.extend_from_slice(&1u16.to_le_bytes()); // high word
        bytes.extend_from_slice(&2u16.to_le_bytes()); // low word -> 65538
        bytes.extend_from_slice(&pair(1, 10));
        bytes.extend_from_slice(&pair(0, 0));
        let anns = parse_annotations(&bytes).unwrap();
        assert_eq!(anns[0].sample_index, 65538 + 10);
    }

    #[test]
    fn dangling_skip_is_malformed() {
        let mut bytes = pair(SKIP, 0).to_vec();
        bytes.extend_from_slice(&1u16.to_le_bytes());
        assert!(matches!(
            parse_annotations(&bytes),
            Err(Error::MalformedAnnotation(_))
        ));
    }

    #[test]
    fn aux_attaches_to_previous_annotation() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&pair(28, 40)); // '+' rhythm change
        bytes.extend_from_slice(&pair(AUX, 3));
        bytes.extend_from_slice(b"(N\0 "); // 3 bytes + 1 pad
        bytes.extend_from_slice(&pair(1, 10));
        bytes.extend_from_slice(&pair(0, 0));
        let anns = parse_annotations(&bytes).unwrap();
        assert_eq!(anns[0].symbol, '+');
        assert_eq!(anns[0].aux.as_deref(), Some("(N"));
        assert_eq!(anns[1].sample_index, 50);
        assert_eq!(anns[1].aux, None);
    }

    #[test]
    fn oversized_aux_is_malformed() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&pair(1, 10));
        bytes.extend_from_slice(&pair(AUX, 900));
        bytes.extend_from_slice(b"short");
        assert!(matches!(
            parse_annotations(&bytes),
            Err(Error::MalformedAnnotation(_))
        ));
    }

    #[test]
    fn modifier_codes_do_not_advance_time_or_emit() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&pair(1, 100));
        bytes.extend_from_slice(&pair(SUB, 1));
        bytes.extend_from_slice(&pair(CHN, 1));
        bytes.extend_from_slice(&pair(NUM, 9));
        bytes.extend_from_slice(&pair(1, 100));
        bytes.extend_from_slice(&pair(0, 0));
        let anns = parse_annotations(&bytes).unwrap();
        let got: Vec<usize> = anns.iter().map(|a| a.sample_index).collect();
        assert_eq!(got, vec![100, 200]);
    }

    proptest! {
        #[test]
        fn strictly_increasing_for_positive_increments(
            increments in prop::collection::vec(1u16..=1023, 1..50)
        ) {
            let mut bytes = Vec::new();
            for &inc in &increments {
                bytes.extend_from_slice(&pair(1, inc));
            }
            bytes.extend_from_slice(&pair(0, 0));
            let anns = parse_annotations(&bytes).unwrap();
            prop_assert_eq!(anns.len(), increments.len());
            prop_assert!(anns.windows(2).all(|w| w[0].sample_index < w[1].sample_index));
        }

        #[test]
        fn encode_decode_round_trip(
            gaps in prop::collection::vec(1usize..200_000, 1..40)
        ) {
            let mut sample = 0usize;
            let spec: Vec<(usize, u16)> = gaps
                .iter()
                .enumerate()
                .map(|(i, &g)| {
                    sample += g;
                    (sample, if i % 3 == 0 { 1 } else { 5 })
                })
                .collect();
            let bytes = encode_annotations(&spec);
            let anns = parse_annotations(&bytes).unwrap();
            let got: Vec<usize> = anns.iter().map(|a| a.sample_index).collect();
            let want: Vec<usize> = spec.iter().map(|&(s, _)| s).collect();
            prop_assert_eq!(got, want);
        }
    }
}
