use std::path::Path;

use super::{Result, WfdbError};

/// A preprocessed beat: samples followed by an integer class label.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatRow {
    pub samples: Vec<f64>,
    pub label: usize,
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> WfdbError + '_ {
    move |source| WfdbError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads a headerless beat CSV: each row is `L` reals then a label in
/// `0..n_classes`. Labels written as floats (`2.0`) are accepted.
pub fn load_beat_csv(path: &Path, n_classes: usize) -> Result<Vec<BeatRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;

    let mut rows = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected || expected < 2 {
            return Err(WfdbError::RaggedRows {
                row: i,
                expected,
                found: record.len(),
            });
        }
        let mut values = record.iter();
        let label_token = values.next_back().unwrap_or_default();
        let label = label_token
            .parse::<f64>()
            .ok()
            .filter(|l| l.fract() == 0.0 && *l >= 0.0 && (*l as usize) < n_classes)
            .ok_or_else(|| WfdbError::LabelOutOfRange {
                row: i,
                label: label_token.to_string(),
                classes: n_classes,
            })? as usize;
        let samples = values
            .map(|v| {
                v.parse::<f64>().map_err(|_| WfdbError::RaggedRows {
                    row: i,
                    expected,
                    found: record.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(BeatRow { samples, label });
    }
    Ok(rows)
}

pub fn write_beat_csv(path: &Path, rows: &[BeatRow]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err(path))?;
    for row in rows {
        let mut fields: Vec<String> = row.samples.iter().map(|v| format!("{v:.9e}")).collect();
        fields.push(row.label.to_string());
        writer.write_record(&fields).map_err(csv_err(path))?;
    }
    writer.flush().map_err(|source| WfdbError::Io {
        path: path.to_path_buf(),
        source,
    })
}
