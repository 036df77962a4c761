use serde::{Deserialize, Serialize};

use super::{Result, WfdbError, DEFAULT_GAIN};

/// One signal line of a `.hea` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub file_name: String,
    pub format_code: u16,
    /// Bytes to skip at the start of the signal file.
    pub byte_offset: usize,
    /// adu per physical unit.
    pub gain: f64,
    pub baseline: i32,
    pub units: String,
    pub adc_resolution: u8,
    pub adc_zero: i32,
    pub initial_value: i32,
    /// Sum of all samples mod 2^16, if the header records it.
    pub checksum: Option<u16>,
    pub block_size: usize,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub record_name: String,
    pub sampling_rate: f64,
    pub n_samples: Option<usize>,
    pub signals: Vec<SignalSpec>,
}

impl RecordHeader {
    pub fn n_signals(&self) -> usize {
        self.signals.len()
    }
}

const SUPPORTED_FORMATS: [u16; 1] = [212];

fn malformed(msg: impl Into<String>) -> WfdbError {
    WfdbError::MalformedHeader(msg.into())
}

fn number<T: std::str::FromStr>(token: &str, what: &str) -> Result<T> {
    token
        .parse()
        .map_err(|_| malformed(format!("{what}: non-numeric token {token:?}")))
}

/// Parses the text of a WFDB `.hea` file (single-segment records only).
pub fn parse_header(text: &str) -> Result<RecordHeader> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));

    let record_line = lines.next().ok_or_else(|| malformed("empty header"))?;
    let mut tokens = record_line.split_whitespace();
    let record_name = tokens
        .next()
        .ok_or_else(|| malformed("missing record name"))?
        .to_string();
    if record_name.contains('/') {
        return Err(malformed("multi-segment records are not supported"));
    }
    let n_signals: usize = number(
        tokens
            .next()
            .ok_or_else(|| malformed("missing signal count"))?,
        "signal count",
    )?;
    if n_signals == 0 {
        return Err(malformed("record declares zero signals"));
    }
    let sampling_rate = match tokens.next() {
        // "360/360(0)": sampling frequency, counter frequency, base counter
        Some(tok) => {
            let freq = tok.split('/').next().unwrap_or(tok);
            number::<f64>(freq, "sampling rate")?
        }
        None => 250.0,
    };
    if !(sampling_rate > 0.0 && sampling_rate.is_finite()) {
        return Err(malformed(format!("sampling rate {sampling_rate} must be positive")));
    }
    let n_samples = tokens
        .next()
        .map(|t| number::<usize>(t, "sample count"))
        .transpose()?;

    let signals = (0..n_signals)
        .map(|i| {
            let line = lines
                .next()
                .ok_or_else(|| malformed(format!("expected {n_signals} signal lines, found {i}")))?;
            parse_signal_line(line)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RecordHeader {
        record_name,
        sampling_rate,
        n_samples,
        signals,
    })
}

fn parse_signal_line(line: &str) -> Result<SignalSpec> {
    let mut tokens = line.split_whitespace();
    let file_name = tokens
        .next()
        .ok_or_else(|| malformed("empty signal line"))?
        .to_string();
    let format_token = tokens
        .next()
        .ok_or_else(|| malformed(format!("signal line {line:?} has no format")))?;
    let (format_code, byte_offset) = parse_format(format_token)?;

    let (gain, explicit_baseline, units) = match tokens.next() {
        Some(tok) => parse_gain(tok)?,
        None => (DEFAULT_GAIN, None, "mV".to_string()),
    };
    let adc_resolution = match tokens.next() {
        Some(t) => number::<u8>(t, "ADC resolution")?,
        None => 12,
    };
    let adc_zero = tokens
        .next()
        .map(|t| number::<i32>(t, "ADC zero"))
        .transpose()?
        .unwrap_or(0);
    let initial_value = tokens
        .next()
        .map(|t| number::<i32>(t, "initial value"))
        .transpose()?
        .unwrap_or(adc_zero);
    // Checksums are written either signed or unsigned; keep the low 16 bits.
    let checksum = tokens
        .next()
        .map(|t| number::<i64>(t, "checksum").map(|c| c.rem_euclid(1 << 16) as u16))
        .transpose()?;
    let block_size = tokens
        .next()
        .map(|t| number::<usize>(t, "block size"))
        .transpose()?
        .unwrap_or(0);
    let description = tokens.collect::<Vec<_>>().join(" ");

    Ok(SignalSpec {
        file_name,
        format_code,
        byte_offset,
        gain,
        baseline: explicit_baseline.unwrap_or(adc_zero),
        units,
        adc_resolution: if adc_resolution == 0 { 12 } else { adc_resolution },
        adc_zero,
        initial_value,
        checksum,
        block_size,
        description,
    })
}

/// `212`, `212+16` (byte offset). Sample multipliers (`x`) and skew (`:`) are rejected.
fn parse_format(token: &str) -> Result<(u16, usize)> {
    if token.contains('x') || token.contains(':') {
        return Err(WfdbError::UnsupportedFormat(token.to_string()));
    }
    let (code, offset) = match token.split_once('+') {
        Some((c, o)) => (c, number::<usize>(o, "byte offset")?),
        None => (token, 0),
    };
    let code: u16 = number(code, "format")?;
    if !SUPPORTED_FORMATS.contains(&code) {
        return Err(WfdbError::UnsupportedFormat(code.to_string()));
    }
    Ok((code, offset))
}

/// `200`, `200/mV`, `200.0(1024)/mV`, `200(0)`.
fn parse_gain(token: &str) -> Result<(f64, Option<i32>, String)> {
    let (value, units) = match token.split_once('/') {
        Some((v, u)) => (v, u.to_string()),
        None => (token, "mV".to_string()),
    };
    let (gain_str, baseline) = match value.split_once('(') {
        Some((g, rest)) => {
            let b = rest
                .strip_suffix(')')
                .ok_or_else(|| malformed(format!("unbalanced baseline in {token:?}")))?;
            (g, Some(number::<i32>(b, "baseline")?))
        }
        None => (value, None),
    };
    let gain: f64 = number(gain_str, "gain")?;
    if gain < 0.0 || !gain.is_finite() {
        return Err(malformed(format!("gain {gain} must be positive")));
    }
    // A zero gain means "uncalibrated"; WFDB substitutes the default.
    let gain = if gain == 0.0 { DEFAULT_GAIN } else { gain };
    Ok((gain, baseline, units))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MITDB_100: &str = "100 2 360 650000\n\
        100.dat 212 200 11 1024 995 -22131 0 MLII\n\
        100.dat 212 200 11 1024 1011 20052 0 V5\n\
        # 69 M 1085 1629 x1\n";

    #[test]
    fn mitdb_style_header() {
        let h = parse_header(MITDB_100).unwrap();
        assert_eq!(h.record_name, "100");
        assert_eq!(h.n_signals(), 2);
        assert_eq!(h.sampling_rate, 360.0);
        assert_eq!(h.n_samples, Some(650000));
        let s = &h.signals[0];
        assert_eq!(s.format_code, 212);
        assert_eq!(s.gain, 200.0);
        assert_eq!(s.baseline, 1024);
        assert_eq!(s.adc_resolution, 11);
        assert_eq!(s.initial_value, 995);
        assert_eq!(s.checksum, Some((-22131i64).rem_euclid(65536) as u16));
        assert_eq!(s.description, "MLII");
        assert_eq!(h.signals[1].description, "V5");
    }

    #[test]
    fn missing_gain_defaults() {
        let h = parse_header("rec 1 250 100\nrec.dat 212\n").unwrap();
        let s = &h.signals[0];
        assert_eq!(s.gain, 200.0);
        assert_eq!(s.baseline, 0);
        assert_eq!(s.checksum, None);
        assert_eq!(s.initial_value, 0);
    }

    #[test]
    fn baseline_in_parentheses_and_units() {
        let h = parse_header("r 1 360 10\nr.dat 212 200.0(1024)/mV 12 0 1064 51921 0 MLII\n").unwrap();
        let s = &h.signals[0];
        assert_eq!(s.baseline, 1024);
        assert_eq!(s.adc_zero, 0);
        assert_eq!(s.units, "mV");
        assert_eq!(s.checksum, Some(51921));
    }

    #[test]
    fn baseline_falls_back_to_adc_zero() {
        let h = parse_header("r 1 360 10\nr.dat 212 100 12 512\n").unwrap();
        assert_eq!(h.signals[0].baseline, 512);
        assert_eq!(h.signals[0].initial_value, 512);
    }

    #[test]
    fn multiword_description_and_comments() {
        let h = parse_header("# leading\nr 1 257 5\n\nr.dat 212 200 16 0 -1 0 0 lead II\n").unwrap();
        assert_eq!(h.signals[0].description, "lead II");
        assert_eq!(h.sampling_rate, 257.0);
    }

    #[test]
    fn zero_signals_rejected() {
        assert!(matches!(
            parse_header("100 0 360 100"),
            Err(WfdbError::MalformedHeader(_))
        ));
    }

    #[test]
    fn malformed_inputs() {
        for text in [
            "",
            "100",
            "100 two 360",
            "100 1 abc 10\nr.dat 212\n",
            "100 2 360 10\nr.dat 212\n",
            "100 1 360 10\nr.dat 212 20x0\n",
            "100 1 360 10\nr.dat\n",
            "100/2 2 360 10\n",
        ] {
            assert!(
                matches!(parse_header(text), Err(WfdbError::MalformedHeader(_))),
                "accepted {text:?}"
            );
        }
    }

    #[test]
    fn unsupported_formats() {
        for fmt in ["16", "80", "310", "212x2", "212:1"] {
            let text = format!("r 1 360 10\nr.dat {fmt} 200\n");
            assert!(
                matches!(parse_header(&text), Err(WfdbError::UnsupportedFormat(_))),
                "accepted format {fmt}"
            );
        }
    }

    #[test]
    fn byte_offset_suffix() {
        let h = parse_header("r 1 360 10\nr.dat 212+24 200\n").unwrap();
        assert_eq!(h.signals[0].byte_offset, 24);
    }
}
