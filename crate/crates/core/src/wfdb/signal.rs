use super::{Result, WfdbError};

#[inline]
fn sign_extend_12(v: u16) -> i32 {
    ((v as i32) << 20) >> 20
}

/// Decodes a format-212 stream into `n_samples` frames of `n_signals` adu values.
///
/// Consecutive samples (interleaved across signals) are packed in pairs into
/// three bytes: the first sample takes byte 0 and the low nibble of byte 1,
/// the second takes byte 2 and the high nibble of byte 1.
pub fn decode_fmt212(bytes: &[u8], n_samples: usize, n_signals: usize) -> Result<Vec<Vec<i32>>> {
    let total = n_samples * n_signals;
    let needed = (3 * total).div_ceil(2);
    if bytes.len() < needed {
        return Err(WfdbError::TruncatedStream {
            needed,
            found: bytes.len(),
        });
    }

    let mut flat = Vec::with_capacity(total);
    for chunk in bytes[..needed].chunks(3) {
        let b0 = chunk[0] as u16;
        let b1 = chunk[1] as u16;
        flat.push(sign_extend_12(b0 | ((b1 & 0x0F) << 8)));
        if flat.len() < total {
            let b2 = chunk[2] as u16;
            flat.push(sign_extend_12(b2 | ((b1 & 0xF0) << 4)));
        }
    }
    Ok(flat.chunks(n_signals).map(<[i32]>::to_vec).collect())
}

/// Sum of samples modulo 2^16, as stored in WFDB headers.
pub fn channel_checksum(samples: &[i32]) -> u16 {
    samples
        .iter()
        .fold(0u16, |acc, &s| acc.wrapping_add(s as u16))
}

/// `(adu - baseline) / gain` per sample.
pub fn adu_to_mv(samples: &[i32], gain: f64, baseline: i32) -> Vec<f64> {
    samples
        .iter()
        .map(|&s| (s - baseline) as f64 / gain)
        .collect()
}
