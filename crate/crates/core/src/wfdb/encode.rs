//! Writers for format-212 signal files, MIT annotation streams and headers.

use std::fmt::Write as _;
use std::path::Path;

use super::annotation::{Annotation, AUX, CHN, NUM, SKIP, SUB};
use super::{channel_checksum, RecordHeader, Result, WfdbError};

/// Packs adu samples (already interleaved across signals) into format 212.
/// Values are truncated to 12 bits.
pub fn encode_fmt212(samples: &[i32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len().div_ceil(2) * 3);
    for pair in samples.chunks(2) {
        let a = (pair[0] & 0xFFF) as u16;
        match pair.get(1) {
            Some(&b) => {
                let b = (b & 0xFFF) as u16;
                out.push((a & 0xFF) as u8);
                out.push(((a >> 8) | ((b >> 8) << 4)) as u8);
                out.push((b & 0xFF) as u8);
            }
            None => {
                out.push((a & 0xFF) as u8);
                out.push((a >> 8) as u8);
            }
        }
    }
    out
}

fn word(out: &mut Vec<u8>, code: u8, data: u16) {
    out.extend_from_slice(&(((code as u16) << 10) | (data & 0x3FF)).to_le_bytes());
}

/// Writes annotations as an MIT stream, emitting `SKIP` for long intervals
/// and `NUM`/`SUB`/`CHN`/`AUX` words where the fields require them.
pub fn encode_annotations(annotations: &[Annotation]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut time = 0u64;
    let mut chan = 0u8;
    let mut num = 0i8;
    for a in annotations {
        let delta = a.sample - time;
        if delta > 0x3FF {
            word(&mut out, SKIP, 0);
            let d = delta as u32;
            out.extend_from_slice(&((d >> 16) as u16).to_le_bytes());
            out.extend_from_slice(&(d as u16).to_le_bytes());
            word(&mut out, a.code, 0);
        } else {
            word(&mut out, a.code, delta as u16);
        }
        time = a.sample;
        if a.num != num {
            word(&mut out, NUM, a.num as u8 as u16);
            num = a.num;
        }
        if a.subtype != 0 {
            word(&mut out, SUB, a.subtype as u8 as u16);
        }
        if a.chan != chan {
            word(&mut out, CHN, a.chan as u16);
            chan = a.chan;
        }
        if let Some(text) = &a.aux {
            let bytes = text.as_bytes();
            word(&mut out, AUX, bytes.len() as u16);
            out.extend_from_slice(bytes);
            if bytes.len() % 2 == 1 {
                out.push(0);
            }
        }
    }
    out.extend_from_slice(&[0, 0]);
    out
}

/// Renders a header in the form `parse_header` reads back.
pub fn format_header(header: &RecordHeader) -> String {
    let mut out = format!("{} {} {}", header.record_name, header.n_signals(), header.sampling_rate);
    if let Some(n) = header.n_samples {
        let _ = write!(out, " {n}");
    }
    out.push('\n');
    for s in &header.signals {
        let _ = write!(
            out,
            "{} {} {:?}({})/{} {} {} {} {} {} {}",
            s.file_name,
            s.format_code,
            s.gain,
            s.baseline,
            s.units,
            s.adc_resolution,
            s.adc_zero,
            s.initial_value,
            s.checksum.unwrap_or(0),
            s.block_size,
            s.description
        );
        out.push('\n');
    }
    out
}

/// Writes `<name>.hea`, `<name>.dat` and, when `annotator` is given,
/// `<name>.<annotator>` into `dir`. Initial values and checksums in the
/// header are filled from `signals`.
pub fn write_record(
    dir: &Path,
    header: &RecordHeader,
    signals: &[Vec<i32>],
    annotations: Option<(&str, &[Annotation])>,
) -> Result<()> {
    let mut header = header.clone();
    let n = signals.first().map_or(0, Vec::len);
    header.n_samples = Some(n);
    for (spec, data) in header.signals.iter_mut().zip(signals) {
        spec.initial_value = data.first().copied().unwrap_or(0);
        spec.checksum = Some(channel_checksum(data));
    }
    let interleaved: Vec<i32> = (0..n).flat_map(|i| signals.iter().map(move |ch| ch[i])).collect();

    let put = |file: String, bytes: &[u8]| {
        let path = dir.join(file);
        std::fs::write(&path, bytes).map_err(|source| WfdbError::Io { path, source })
    };
    put(format!("{}.hea", header.record_name), format_header(&header).as_bytes())?;
    put(header.signals[0].file_name.clone(), &encode_fmt212(&interleaved))?;
    if let Some((annotator, anns)) = annotations {
        put(format!("{}.{annotator}", header.record_name), &encode_annotations(anns))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wfdb::{parse_header, EcgRecord, SignalSpec};

    fn spec(desc: &str) -> SignalSpec {
        SignalSpec {
            file_name: "t1.dat".into(),
            format_code: 212,
            byte_offset: 0,
            gain: 200.0,
            baseline: 0,
            units: "mV".into(),
            adc_resolution: 12,
            adc_zero: 0,
            initial_value: 0,
            checksum: None,
            block_size: 0,
            description: desc.into(),
        }
    }

    #[test]
    fn header_text_parses_back() {
        let header = RecordHeader {
            record_name: "t1".into(),
            sampling_rate: 360.0,
            n_samples: Some(3),
            signals: vec![spec("MLII"), spec("V1")],
        };
        let mut header = header;
        header.signals[1].checksum = Some(54321);
        header.signals[0].checksum = Some(7);
        assert_eq!(parse_header(&format_header(&header)).unwrap(), header);
    }

    #[test]
    fn written_record_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let header = RecordHeader {
            record_name: "t1".into(),
            sampling_rate: 360.0,
            n_samples: None,
            signals: vec![spec("MLII"), spec("V1")],
        };
        let signals = vec![vec![5, -7, 2047, -2048, 0], vec![-1, 1, 100, -100, 3]];
        let anns = vec![Annotation {
            sample: 2000,
            code: 1,
            symbol: 'N',
            subtype: 0,
            chan: 0,
            num: 0,
            aux: None,
        }];
        write_record(dir.path(), &header, &signals, Some(("atr", &anns))).unwrap();
        let rec = EcgRecord::read(dir.path(), "t1", "atr").unwrap();
        assert_eq!(rec.signals, signals);
        assert_eq!(rec.annotations, anns);
        assert!(rec.consistency_failures().is_empty());
        assert_eq!(rec.header.signals[0].initial_value, 5);
    }
}
