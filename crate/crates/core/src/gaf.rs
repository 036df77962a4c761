//! Gramian Angular (summation) Field encoding of normalized beats.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Inputs this close outside the valid range are clamped instead of rejected.
pub const DOMAIN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GafError {
    #[error("value {value} at index {index} is outside [{lo}, 1]")]
    DomainError {
        index: usize,
        value: f64,
        lo: f64,
    },
    #[error("resolution {res} is invalid for a {n}x{n} field")]
    BadResolution { res: usize, n: usize },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GafError>;

/// Range the beat is scaled to before the arccos.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum GafRange {
    #[default]
    #[serde(rename = "unit")]
    Unit,
    #[serde(rename = "symmetric")]
    Symmetric,
}

impl GafRange {
    fn lower(self) -> f64 {
        match self {
            GafRange::Unit => 0.0,
            GafRange::Symmetric => -1.0,
        }
    }

    /// Maps a [0, 1]-normalized beat into this range.
    pub fn rescale(self, unit: &[f64]) -> Vec<f64> {
        match self {
            GafRange::Unit => unit.to_vec(),
            GafRange::Symmetric => unit.iter().map(|v| 2.0 * v - 1.0).collect(),
        }
    }
}

/// Polar view of a normalized series.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarSeries {
    pub angles: Vec<f64>,
    /// `i / t` with `t = len`; not used by the Gramian itself.
    pub radii: Vec<f64>,
    pub span: f64,
}

fn check_domain(x: &[f64], range: GafRange) -> Result<Vec<f64>> {
    let lo = range.lower();
    x.iter()
        .enumerate()
        .map(|(index, &value)| {
            if value >= lo - DOMAIN_TOLERANCE && value <= 1.0 + DOMAIN_TOLERANCE {
                Ok(value.clamp(lo, 1.0))
            } else {
                Err(GafError::DomainError { index, value, lo })
            }
        })
        .collect()
}

pub fn to_polar(x: &[f64], range: GafRange) -> Result<PolarSeries> {
    let x = check_domain(x, range)?;
    let span = x.len() as f64;
    Ok(PolarSeries {
        angles: x.iter().map(|v| v.acos()).collect(),
        radii: (1..=x.len()).map(|i| i as f64 / span).collect(),
        span,
    })
}

/// Symmetric `n x n` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GafMatrix {
    n: usize,
    values: Vec<f64>,
}

impl GafMatrix {
    pub fn from_values(n: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n * n, "GAF matrix needs n*n values");
        Self { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// `G[i][j] = cos(phi_i + phi_j)` with `phi = arccos(x)`.
pub fn gaf_encode(x: &[f64], range: GafRange) -> Result<GafMatrix> {
    let polar = to_polar(x, range)?;
    let n = polar.angles.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = (polar.angles[i] + polar.angles[j]).cos();
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(GafMatrix { n, values })
}

/// Area-average pooling onto `res x res`. Output cell `(a, b)` averages the
/// input cells whose index range `[a*n/res, (a+1)*n/res)` overlaps it,
/// weighted by the overlap length, so blocks align exactly when `res`
/// divides `n`.
pub fn downsample(g: &GafMatrix, res: usize) -> Result<GafMatrix> {
    let n = g.n;
    if res == 0 || res > n {
        return Err(GafError::BadResolution { res, n });
    }
    if res == n {
        return Ok(g.clone());
    }
    // weights[a] = [(input index, overlap)] for output bin a
    let scale = n as f64 / res as f64;
    let weights: Vec<Vec<(usize, f64)>> = (0..res)
        .map(|a| {
            let lo = a as f64 * scale;
            let hi = (a + 1) as f64 * scale;
            (lo.floor() as usize..(hi.ceil() as usize).min(n))
                .filter_map(|i| {
                    let w = hi.min(i as f64 + 1.0) - lo.max(i as f64);
                    (w > 0.0).then_some((i, w / scale))
                })
                .collect()
        })
        .collect();

    let mut values = vec![0.0; res * res];
    for a in 0..res {
        for b in a..res {
            let mut acc = 0.0;
            for &(i, wi) in &weights[a] {
                for &(j, wj) in &weights[b] {
                    acc += wi * wj * g.get(i, j);
                }
            }
            let v = acc.clamp(-1.0, 1.0);
            values[a * res + b] = v;
            values[b * res + a] = v;
        }
    }
    Ok(GafMatrix { n: res, values })
}

/// Bilinear resampling, for target sizes above `n`.
pub fn upsample_bilinear(g: &GafMatrix, res: usize) -> Result<GafMatrix> {
    let n = g.n;
    if res < n || n == 0 {
        return Err(GafError::BadResolution { res, n });
    }
    let coord = |a: usize| -> (usize, f64) {
        if res == 1 || n == 1 {
            return (0, 0.0);
        }
        let pos = a as f64 * (n - 1) as f64 / (res - 1) as f64;
        let i = (pos.floor() as usize).min(n.saturating_sub(2));
        (i, pos - i as f64)
    };
    let mut values = vec![0.0; res * res];
    for a in 0..res {
        let (i, fi) = coord(a);
        let i1 = (i + 1).min(n - 1);
        for b in a..res {
            let (j, fj) = coord(b);
            let j1 = (j + 1).min(n - 1);
            let v = (1.0 - fi) * ((1.0 - fj) * g.get(i, j) + fj * g.get(i, j1))
                + fi * ((1.0 - fj) * g.get(i1, j) + fj * g.get(i1, j1));
            values[a * res + b] = v;
            values[b * res + a] = v;
        }
    }
    Ok(GafMatrix { n: res, values })
}

/// `round((v + 1) / 2 * 255)`.
pub fn to_pixel(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) / 2.0 * 255.0).round() as u8
}

/// Binary (P5) PGM, 8-bit, row-major.
pub fn write_pgm<W: Write>(g: &GafMatrix, mut out: W) -> std::io::Result<()> {
    write!(out, "P5\n{} {}\n255\n", g.n, g.n)?;
    let pixels: Vec<u8> = g.values.iter().map(|&v| to_pixel(v)).collect();
    out.write_all(&pixels)?;
    out.flush()
}

pub fn export_pgm(g: &GafMatrix, path: &Path) -> Result<()> {
    write_pgm(g, BufWriter::new(File::create(path)?))?;
    Ok(())
}

/// Row-major CSV with 9 significant digits.
pub fn write_csv<W: Write>(g: &GafMatrix, mut out: W) -> std::io::Result<()> {
    for row in g.values.chunks(g.n) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()
}

/// Encodes a [0, 1]-normalized beat and pools it to `res x res`, flattened.
pub fn image_features(unit_beat: &[f64], range: GafRange, res: usize) -> Result<Vec<f64>> {
    let g = gaf_encode(&range.rescale(unit_beat), range)?;
    let g = if res <= g.n {
        downsample(&g, res)?
    } else {
        upsample_bilinear(&g, res)?
    };
    Ok(g.into_values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    /// Closed form of cos(a + b) with a = arccos(x), b = arccos(y).
    fn product_form(x: f64, y: f64) -> f64 {
        x * y - (1.0 - x * x).sqrt() * (1.0 - y * y).sqrt()
    }

    #[test]
    fn polar_examples() {
        let p = to_polar(&[1.0, 0.0, 0.5], GafRange::Unit).unwrap();
        assert_abs_diff_eq!(p.angles[0], 0.0);
        assert_abs_diff_eq!(p.angles[1], FRAC_PI_2);
        assert_abs_diff_eq!(p.angles[2], FRAC_PI_3, epsilon = 1e-15);
        assert_eq!(p.radii, vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert_eq!(p.span, 3.0);
    }

    #[test]
    fn domain_handling() {
        assert!(to_polar(&[1.0 + 5e-13, -5e-13], GafRange::Unit).is_ok());
        assert!(matches!(
            to_polar(&[0.2, 1.01], GafRange::Unit),
            Err(GafError::DomainError { index: 1, .. })
        ));
        assert!(to_polar(&[-0.5], GafRange::Unit).is_err());
        assert!(to_polar(&[-0.5], GafRange::Symmetric).is_ok());
    }

    #[test]
    fn two_point_field() {
        let g = gaf_encode(&[1.0, 0.0], GafRange::Unit).unwrap();
        let want = [1.0, 0.0, 0.0, -1.0];
        for (a, b) in g.values().iter().zip(want) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn constant_field() {
        let g = gaf_encode(&[0.5; 6], GafRange::Unit).unwrap();
        assert!(g.values().iter().all(|v| (v + 0.5).abs() < 1e-12));
    }

    #[test]
    fn downsample_examples() {
        let x: Vec<f64> = (0..12).map(|i| (i as f64 / 11.0).powi(2)).collect();
        let g = gaf_encode(&x, GafRange::Unit).unwrap();
        assert_eq!(downsample(&g, 12).unwrap(), g);
        let one = downsample(&g, 1).unwrap();
        assert_abs_diff_eq!(one.get(0, 0), g.mean(), epsilon = 1e-12);
        assert!(matches!(downsample(&g, 0), Err(GafError::BadResolution { .. })));
        assert!(matches!(downsample(&g, 13), Err(GafError::BadResolution { .. })));
        let c = GafMatrix::from_values(5, vec![0.25; 25]);
        assert!(downsample(&c, 3).unwrap().values().iter().all(|v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn upsample_keeps_corners() {
        let g = gaf_encode(&[0.0, 0.4, 1.0], GafRange::Unit).unwrap();
        let up = upsample_bilinear(&g, 7).unwrap();
        assert_abs_diff_eq!(up.get(0, 0), g.get(0, 0), epsilon = 1e-12);
        assert_abs_diff_eq!(up.get(6, 6), g.get(2, 2), epsilon = 1e-12);
        assert_abs_diff_eq!(up.get(0, 6), up.get(6, 0));
    }

    #[test]
    fn pixel_mapping() {
        assert_eq!(to_pixel(-1.0), 0);
        assert_eq!(to_pixel(1.0), 255);
        assert_eq!(to_pixel(0.0), 128);
    }

    #[test]
    fn pgm_bytes() {
        let g = GafMatrix::from_values(2, vec![-1.0, 0.0, 0.0, 1.0]);
        let mut buf = Vec::new();
        write_pgm(&g, &mut buf).unwrap();
        assert_eq!(buf, b"P5\n2 2\n255\n\x00\x80\x80\xff".to_vec());
    }

    #[test]
    fn csv_dump() {
        let g = GafMatrix::from_values(2, vec![-1.0, 0.123456789123, 0.123456789123, 1.0]);
        let mut buf = Vec::new();
        write_csv(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("-1.00000000e0,1.23456789e-1"));
    }

    #[test]
    fn symmetric_range_features() {
        let f = image_features(&[0.0, 0.5, 1.0, 0.25], GafRange::Symmetric, 2).unwrap();
        assert_eq!(f.len(), 4);
        assert!(f.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    proptest! {
        #[test]
        fn field_identities(x in proptest::collection::vec(0.0f64..=1.0, 1..40)) {
            let g = gaf_encode(&x, GafRange::Unit).unwrap();
            let n = x.len();
            for i in 0..n {
                prop_assert!((g.get(i, i) - (2.0 * x[i] * x[i] - 1.0)).abs() < 1e-12);
                for j in 0..n {
                    prop_assert_eq!(g.get(i, j), g.get(j, i));
                    prop_assert!((-1.0..=1.0).contains(&g.get(i, j)));
                    prop_assert!((g.get(i, j) - product_form(x[i], x[j])).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn downsample_symmetry_range_mean(x in proptest::collection::vec(0.0f64..=1.0, 4..40), res in 1usize..8) {
            let g = gaf_encode(&x, GafRange::Unit).unwrap();
            let res = res.min(x.len());
            let d = downsample(&g, res).unwrap();
            for a in 0..res {
                for b in 0..res {
                    prop_assert_eq!(d.get(a, b), d.get(b, a));
                    prop_assert!((-1.0..=1.0).contains(&d.get(a, b)));
                }
            }
            // area weighting preserves the mean for any res
            prop_assert!((d.mean() - g.mean()).abs() < 1e-12);
        }
    }
}
