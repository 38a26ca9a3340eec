//! WFDB record ingestion: text headers, packed binary signal files
//! (formats 212 and 16) and MIT annotation streams.
//!
//! Parsing is bit-exact and pure over byte buffers; records are immutable
//! once built, so many can be loaded in parallel.

mod annot;
mod header;
mod signal;

pub use annot::{parse_annotations, Annotation};
pub use header::{parse_header, RecordHeader, SignalSpec};
pub use signal::{
    adc_to_physical, decode_format16, decode_format212, encode_format16, encode_format212,
};

use std::path::Path;

use crate::error::{Error, Result};

/// A fully parsed record: physical-unit leads plus annotations.
#[derive(Debug, Clone)]
pub struct EcgRecord {
    pub header: RecordHeader,
    /// One `Vec<f64>` of millivolt samples per lead, each `n_samples` long.
    pub signals: Vec<Vec<f64>>,
    pub annotations: Vec<Annotation>,
}

impl EcgRecord {
    pub fn sampling_frequency(&self) -> f64 {
        self.header.sampling_frequency
    }

    pub fn name(&self) -> &str {
        &self.header.record_name
    }
}

/// Load a record from its header, signal and (optional) annotation files.
///
/// All leads are converted to physical millivolts. The signal file must hold
/// exactly the sample count the header declares, interleaved across leads.
pub fn load_record(
    signal_path: &Path,
    header_path: &Path,
    annotation_path: Option<&Path>,
) -> Result<EcgRecord> {
    let header_text = std::fs::read_to_string(header_path)?;
    let header = parse_header(&header_text)?;
    let bytes = std::fs::read(signal_path)?;

    let n_total = header.n_samples * header.signals.len();
    let fmt = header.signals[0].format_code;
    if header.signals.iter().any(|s| s.format_code != fmt) {
        return Err(Error::MalformedHeader(
            "mixed signal formats in one signal file are not supported".into(),
        ));
    }
    let needed = match fmt {
        212 => (3 * n_total).div_ceil(2),
        16 => 2 * n_total,
        other => return Err(Error::UnsupportedFormat(other)),
    };
    if bytes.len() < needed {
        let decodable = match fmt {
            212 => 2 * bytes.len() / 3,
            _ => bytes.len() / 2,
        };
        return Err(Error::LengthMismatch {
            expected: n_total,
            decoded: decodable,
        });
    }

    let adc = match fmt {
        212 => decode_format212(&bytes, n_total)?,
        16 => decode_format16(&bytes[..needed])?,
        _ => unreachable!(),
    };

    let n_sig = header.signals.len();
    let mut signals = vec![Vec::with_capacity(header.n_samples); n_sig];
    for (i, &v) in adc.iter().enumerate() {
        let spec = &header.signals[i % n_sig];
        signals[i % n_sig].push(adc_to_physical(v, spec.gain, spec.baseline)?);
    }

    let annotations = match annotation_path {
        Some(p) => {
            let ann = parse_annotations(&std::fs::read(p)?)?;
            if let Some(bad) = ann.iter().find(|a| a.sample_index >= header.n_samples) {
                return Err(Error::MalformedAnnotation(format!(
                    "annotation at sample {} beyond record end {}",
                    bad.sample_index, header.n_samples
                )));
            }
            ann
        }
        None => Vec::new(),
    };

    Ok(EcgRecord {
        header,
        signals,
        annotations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_fixture(
        dir: &Path,
        name: &str,
        header: &str,
        dat: &[u8],
        atr: Option<&[u8]>,
    ) -> (std::path::PathBuf, std::path::PathBuf, Option<std::path::PathBuf>) {
        let hea = dir.join(format!("{name}.hea"));
        let datp = dir.join(format!("{name}.dat"));
        std::fs::File::create(&hea)
            .unwrap()
            .write_all(header.as_bytes())
            .unwrap();
        std::fs::File::create(&datp).unwrap().write_all(dat).unwrap();
        let atrp = atr.map(|bytes| {
            let p = dir.join(format!("{name}.atr"));
            std::fs::File::create(&p).unwrap().write_all(bytes).unwrap();
            p
        });
        (datp, hea, atrp)
    }

    #[test]
    fn round_trips_a_two_lead_format212_fixture() {
        let dir = tempfile::tempdir().unwrap();
        // Interleaved lead0, lead1 ADC values.
        let adc = vec![10, -10, 512, -512, 0, 2047, -2048, 7];
        let dat = encode_format212(&adc).unwrap();
        let header = "fix 2 360 4\nfix.dat 212 200(0)/mV 12 0 10 0 0 lead0\nfix.dat 212 100(5)/mV 12 0 -10 0 0 lead1\n";
        let (datp, heap, _) = write_fixture(dir.path(), "fix", header, &dat, None);

        let rec = load_record(&datp, &heap, None).unwrap();
        assert_eq!(rec.signals.len(), 2);
        assert_eq!(rec.signals[0].len(), 4);
        // lead0: (adc - 0) / 200
        assert_eq!(rec.signals[0], vec![0.05, 2.56, 0.0, -10.24]);
        // lead1: (adc - 5) / 100
        assert_eq!(rec.signals[1], vec![-0.15, -5.17, 20.42, 0.02]);
        assert!(rec.annotations.is_empty());
    }

    #[test]
    fn short_signal_file_is_a_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let header = "fix 1 360 10\nfix.dat 212 200(0)/mV 12 0 0 0 0 lead0\n";
        let (datp, heap, _) = write_fixture(dir.path(), "fix", header, &[0, 0, 0], None);
        assert!(matches!(
            load_record(&datp, &heap, None),
            Err(Error::LengthMismatch { expected: 10, .. })
        ));
    }

    #[test]
    fn annotations_are_attached_and_bounds_checked() {
        let dir = tempfile::tempdir().unwrap();
        let adc: Vec<i32> = (0..200).collect();
        let dat = encode_format212(&adc).unwrap();
        let header = "fix 1 360 200\nfix.dat 212 200(0)/mV 12 0 0 0 0 lead0\n";

        // One NORMAL (code 1) at sample 100, then EOF.
        let atr: Vec<u8> = vec![100, 0x04, 0, 0];
        let (datp, heap, atrp) =
            write_fixture(dir.path(), "fix", header, &dat, Some(&atr));
        let rec = load_record(&datp, &heap, atrp.as_deref()).unwrap();
        assert_eq!(rec.annotations.len(), 1);
        assert_eq!(rec.annotations[0].sample_index, 100);
        assert_eq!(rec.annotations[0].symbol, 'N');

        // Same annotation but the record is only 50 samples long.
        let adc50: Vec<i32> = (0..50).collect();
        let dat50 = encode_format212(&adc50).unwrap();
        let header50 = "fix2 1 360 50\nfix2.dat 212 200(0)/mV 12 0 0 0 0 lead0\n";
        let (datp2, heap2, atrp2) =
            write_fixture(dir.path(), "fix2", header50, &dat50, Some(&atr));
        assert!(matches!(
            load_record(&datp2, &heap2, atrp2.as_deref()),
            Err(Error::MalformedAnnotation(_))
        ));
    }
}
