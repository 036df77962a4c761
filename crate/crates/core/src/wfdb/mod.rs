//! Reader for WFDB records: text headers, format-212 signal files and MIT
//! annotation streams, plus the AAMI beat-class mapping and a CSV fallback
//! for preprocessed beat datasets.

mod annotation;
mod csv_beats;
pub mod encode;
mod header;
mod signal;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use annotation::{code_to_symbol, parse_annotations, symbol_to_code, Annotation};
pub use csv_beats::{load_beat_csv, write_beat_csv, BeatRow};
pub use header::{parse_header, RecordHeader, SignalSpec};
pub use signal::{adu_to_mv, channel_checksum, decode_fmt212};

/// WFDB default gain when a header leaves it out (adu per mV).
pub const DEFAULT_GAIN: f64 = 200.0;

#[derive(Debug, Error)]
pub enum WfdbError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported signal format {0} (only 212 is supported)")]
    UnsupportedFormat(String),
    #[error("truncated stream: needed {needed} bytes, found {found}")]
    TruncatedStream { needed: usize, found: usize },
    #[error("unknown annotation code {0}")]
    UnknownCode(u8),
    #[error("ragged CSV: row {row} has {found} columns, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("label {label} in row {row} is outside 0..{classes}")]
    LabelOutOfRange {
        row: usize,
        label: String,
        classes: usize,
    },
    #[error("no lead named II/MLII among {0:?}")]
    LeadNotFound(Vec<String>),
    #[error("lead index {index} out of range for {n_signals} signals")]
    LeadOutOfRange { index: usize, n_signals: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, WfdbError>;

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| WfdbError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// AAMI EC57 heartbeat superclass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AamiClass {
    N,
    S,
    V,
    F,
    Q,
}

impl AamiClass {
    pub const ALL: [AamiClass; 5] = [
        AamiClass::N,
        AamiClass::S,
        AamiClass::V,
        AamiClass::F,
        AamiClass::Q,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn letter(self) -> char {
        match self {
            AamiClass::N => 'N',
            AamiClass::S => 'S',
            AamiClass::V => 'V',
            AamiClass::F => 'F',
            AamiClass::Q => 'Q',
        }
    }
}

impl std::fmt::Display for AamiClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Result of mapping an MIT annotation symbol onto the AAMI classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeatLabel {
    Beat(AamiClass),
    NonBeat,
}

/// Standard EC57 grouping of MIT beat symbols.
pub fn map_to_aami(symbol: char) -> BeatLabel {
    use AamiClass::*;
    match symbol {
        'N' | 'L' | 'R' | 'e' | 'j' => BeatLabel::Beat(N),
        'A' | 'a' | 'J' | 'S' => BeatLabel::Beat(S),
        'V' | 'E' => BeatLabel::Beat(V),
        'F' => BeatLabel::Beat(F),
        '/' | 'f' | 'Q' => BeatLabel::Beat(Q),
        _ => BeatLabel::NonBeat,
    }
}

/// Which class vocabulary a dataset uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClassSet {
    /// N, S, V, F, Q
    #[default]
    Aami5,
    /// N, S, V only; F and Q beats are dropped.
    Nsv3,
}

impl ClassSet {
    pub fn n_classes(self) -> usize {
        match self {
            ClassSet::Aami5 => 5,
            ClassSet::Nsv3 => 3,
        }
    }

    pub fn contains(self, class: AamiClass) -> bool {
        class.index() < self.n_classes()
    }
}

/// A decoded record: header, per-channel adu samples and (optionally) the
/// reference annotations.
#[derive(Debug, Clone)]
pub struct EcgRecord {
    pub header: RecordHeader,
    /// `signals[channel][sample]`, raw adu.
    pub signals: Vec<Vec<i32>>,
    pub annotations: Vec<Annotation>,
}

impl EcgRecord {
    /// Reads `<dir>/<name>.hea`, the signal file it names and, when present,
    /// `<dir>/<name>.<annotator>`.
    pub fn read(dir: &Path, name: &str, annotator: &str) -> Result<Self> {
        let hea_path = dir.join(format!("{name}.hea"));
        let text = String::from_utf8_lossy(&read_file(&hea_path)?).into_owned();
        let header = parse_header(&text)?;

        let file_name = &header.signals[0].file_name;
        if header.signals.iter().any(|s| &s.file_name != file_name) {
            return Err(WfdbError::MalformedHeader(
                "signals spread over several files are not supported".into(),
            ));
        }
        let bytes = read_file(&dir.join(file_name))?;
        let offset = header.signals[0].byte_offset;
        let body = bytes.get(offset..).ok_or(WfdbError::TruncatedStream {
            needed: offset,
            found: bytes.len(),
        })?;
        let n_samples = header.n_samples.unwrap_or_else(|| {
            let frames = body.len() * 2 / 3;
            frames / header.n_signals()
        });
        let frames = decode_fmt212(body, n_samples, header.n_signals())?;
        let signals = (0..header.n_signals())
            .map(|ch| frames.iter().map(|f| f[ch]).collect())
            .collect();

        let atr_path = dir.join(format!("{name}.{annotator}"));
        let annotations = if atr_path.exists() {
            parse_annotations(&read_file(&atr_path)?)?
        } else {
            Vec::new()
        };

        Ok(Self {
            header,
            signals,
            annotations,
        })
    }

    /// Channel in physical units (mV).
    pub fn physical(&self, channel: usize) -> Vec<f64> {
        let spec = &self.header.signals[channel];
        adu_to_mv(&self.signals[channel], spec.gain, spec.baseline)
    }

    /// Checks first-sample and checksum fields of every channel against the
    /// decoded data. Returns the offending channel indices.
    pub fn consistency_failures(&self) -> Vec<usize> {
        self.header
            .signals
            .iter()
            .zip(&self.signals)
            .enumerate()
            .filter(|(_, (spec, data))| {
                let first_ok = data.first().is_none_or(|&v| v == spec.initial_value);
                let sum_ok = spec
                    .checksum
                    .is_none_or(|c| channel_checksum(data) == c);
                !(first_ok && sum_ok)
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// Picks the lead-II channel by description, unless an explicit index is given.
pub fn select_lead(header: &RecordHeader, override_index: Option<usize>) -> Result<usize> {
    if let Some(index) = override_index {
        if index >= header.n_signals() {
            return Err(WfdbError::LeadOutOfRange {
                index,
                n_signals: header.n_signals(),
            });
        }
        return Ok(index);
    }
    header
        .signals
        .iter()
        .position(|s| {
            let d = s.description.trim();
            d.eq_ignore_ascii_case("II") || d.eq_ignore_ascii_case("MLII")
        })
        .ok_or_else(|| {
            WfdbError::LeadNotFound(header.signals.iter().map(|s| s.description.clone()).collect())
        })
}
