//! WFDB text header parsing.
//!
//! Grammar (single-segment records only): the first non-comment line is
//! `record_name n_signals sampling_frequency n_samples`; each following line
//! describes one signal as `file_name format gain(baseline)/units adc_res
//! adc_zero initial_value checksum block_size description`. Fields from
//! `adc_res` on are optional. `#` starts a comment.

use crate::error::{Error, Result};

/// Per-signal descriptor from a header line.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub file_name: String,
    /// Supported: 212 (packed 12-bit pairs) and 16 (little-endian i16).
    pub format_code: u32,
    /// ADC units per millivolt.
    pub gain: f64,
    /// ADC value corresponding to 0 mV. When the header does not give an
    /// explicit `(baseline)`, WFDB falls back to the adc_zero field, then 0.
    pub baseline: i32,
    pub initial_value: i32,
    pub lead_name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordHeader {
    pub record_name: String,
    pub sampling_frequency: f64,
    /// Samples per signal.
    pub n_samples: usize,
    pub signals: Vec<SignalSpec>,
}

impl RecordHeader {
    pub fn n_signals(&self) -> usize {
        self.signals.len()
    }
}

const DEFAULT_GAIN: f64 = 200.0;

pub fn parse_header(text: &str) -> Result<RecordHeader> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));

    let first = lines
        .next()
        .ok_or_else(|| Error::MalformedHeader("empty header".into()))?;
    let fields: Vec<&str> = first.split_whitespace().collect();
    if fields.len() < 4 {
        return Err(Error::MalformedHeader(format!(
            "record line needs `name n_signals fs n_samples`, got {first:?}"
        )));
    }
    let record_name = fields[0]
        .split('/')
        .next()
        .unwrap_or(fields[0])
        .to_string();
    let n_signals: usize = parse_num(fields[1], "n_signals")?;
    if n_signals == 0 {
        return Err(Error::MalformedHeader("n_signals must be >= 1".into()));
    }
    // The frequency field may carry a counter spec (`360/360(0)`).
    let fs_text = fields[2].split('/').next().unwrap_or(fields[2]);
    let sampling_frequency: f64 = parse_num(fs_text, "sampling_frequency")?;
    if !(sampling_frequency > 0.0) {
        return Err(Error::MalformedHeader(format!(
            "sampling frequency must be positive, got {sampling_frequency}"
        )));
    }
    let n_samples: usize = parse_num(fields[3], "n_samples")?;

    let mut signals = Vec::with_capacity(n_signals);
    for _ in 0..n_signals {
        let line = lines
            .next()
            .ok_or_else(|| Error::MalformedHeader("missing signal line".into()))?;
        signals.push(parse_signal_line(line)?);
    }

    Ok(RecordHeader {
        record_name,
        sampling_frequency,
        n_samples,
        signals,
    })
}

fn parse_signal_line(line: &str) -> Result<SignalSpec> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() < 2 {
        return Err(Error::MalformedHeader(format!(
            "signal line needs `file_name format ...`, got {line:?}"
        )));
    }
    let file_name = fields[0].to_string();
    let format_code: u32 = parse_num(fields[1], "format")?;
    if format_code != 212 && format_code != 16 {
        return Err(Error::UnsupportedFormat(format_code));
    }

    // gain(baseline)/units, all parts optional.
    let (mut gain, mut explicit_baseline) = (DEFAULT_GAIN, None);
    if let Some(&gfield) = fields.get(2) {
        let no_units = gfield.split('/').next().unwrap_or(gfield);
        let (gain_text, baseline_text) = match no_units.split_once('(') {
            Some((g, rest)) => (g, Some(rest.trim_end_matches(')'))),
            None => (no_units, None),
        };
        if !gain_text.is_empty() {
            gain = parse_num(gain_text, "gain")?;
        }
        if let Some(b) = baseline_text {
            explicit_baseline = Some(parse_num::<i32>(b, "baseline")?);
        }
        if gain == 0.0 {
            gain = DEFAULT_GAIN;
        }
        if gain < 0.0 {
            return Err(Error::MalformedHeader(format!("negative gain {gain}")));
        }
    }

    let adc_zero: i32 = match fields.get(4) {
        Some(t) => parse_num(t, "adc_zero")?,
        None => 0,
    };
    let baseline = explicit_baseline.unwrap_or(adc_zero);
    let initial_value: i32 = match fields.get(5) {
        Some(t) => parse_num(t, "initial_value")?,
        None => 0,
    };
    let lead_name = if fields.len() > 8 {
        fields[8..].join(" ")
    } else {
        String::new()
    };

    Ok(SignalSpec {
        file_name,
        format_code,
        gain,
        baseline,
        initial_value,
        lead_name,
    })
}

fn parse_num<T: std::str::FromStr>(text: &str, what: &str) -> Result<T> {
    text.parse()
        .map_err(|_| Error::MalformedHeader(format!("non-numeric {what}: {text:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MITDB_100: &str = "\
100 2 360 650000
100.dat 212 200 11 1024 995 -22131 0 MLII
100.dat 212 200 11 1024 1011 20052 0 V5
# comment line
";

    #[test]
    fn parses_a_mitdb_style_header() {
        let h = parse_header(MITDB_100).unwrap();
        assert_eq!(h.record_name, "100");
        assert_eq!(h.n_signals(), 2);
        assert_eq!(h.sampling_frequency, 360.0);
        assert_eq!(h.n_samples, 650000);
        let s = &h.signals[0];
        assert_eq!(s.format_code, 212);
        assert_eq!(s.gain, 200.0);
        // No explicit "(baseline)": falls back to adc_zero.
        assert_eq!(s.baseline, 1024);
        assert_eq!(s.initial_value, 995);
        assert_eq!(s.lead_name, "MLII");
    }

    #[test]
    fn parses_minimal_fields_with_defaults() {
        let h = parse_header("x 1 250 10\nx.dat 16\n").unwrap();
        assert_eq!(h.n_signals(), 1);
        assert_eq!(h.sampling_frequency, 250.0);
        assert_eq!(h.n_samples, 10);
        assert_eq!(h.signals[0].gain, 200.0);
        assert_eq!(h.signals[0].baseline, 0);
    }

    #[test]
    fn explicit_baseline_and_units() {
        let h = parse_header("y 1 500 4\ny.dat 212 100(37)/mV 12 0 0 0 0 chest\n").unwrap();
        assert_eq!(h.signals[0].gain, 100.0);
        assert_eq!(h.signals[0].baseline, 37);
        assert_eq!(h.signals[0].lead_name, "chest");
    }

    #[test]
    fn missing_sample_count_is_malformed() {
        assert!(matches!(
            parse_header("100 2 360\n"),
            Err(Error::MalformedHeader(_))
        ));
    }

    #[test]
    fn unsupported_format_is_typed() {
        assert!(matches!(
            parse_header("z 1 360 10\nz.dat 310 200\n"),
            Err(Error::UnsupportedFormat(310))
        ));
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let h = parse_header("# top comment\n\nx 1 250 10\n\nx.dat 16 200\n").unwrap();
        assert_eq!(h.record_name, "x");
    }

    #[test]
    fn non_numeric_counts_are_malformed() {
        assert!(matches!(
            parse_header("x abc 250 10\nx.dat 16\n"),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_header("x 0 250 10\n"),
            Err(Error::MalformedHeader(_))
        ));
    }
}
