//! Per-vertex feature matrices (rows = mesh vertices, columns = subjects)
//! and their two on-disk encodings.
//!
//! CSV: a header row of subject identifiers followed by one row per vertex.
//! Values are written with the shortest representation that parses back to
//! the same `f64`, so a CSV round trip is bit-exact.
//!
//! Binary: `UMIFMAT1` magic, `m` and `n` as little-endian `u64`, then the
//! `m * n` values as little-endian `f64` in column-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 8] = b"UMIFMAT1";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: DMatrix<f64>,
    pub subject_ids: Vec<String>,
}

/// Storage format selector for feature matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixFormat {
    #[serde(rename = "csv")]
    Csv,
    #[serde(rename = "bin")]
    Binary,
}

impl std::str::FromStr for MatrixFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "bin" | "binary" => Ok(MatrixFormat::Binary),
            other => Err(format!("unknown matrix format `{other}` (expected csv or bin)")),
        }
    }
}

impl MatrixFormat {
    /// Picks a format from a file extension: `.bin` is binary, anything else CSV.
    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::Csv => "csv",
            MatrixFormat::Binary => "bin",
        }
    }

    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => MatrixFormat::Binary,
            _ => MatrixFormat::Csv,
        }
    }
}

fn default_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i}")).collect()
}

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>, subject_ids: Vec<String>) -> Result<Self> {
        if subject_ids.len() != data.ncols() {
            return Err(Error::Dimension(format!(
                "{} subject ids for {} columns",
                subject_ids.len(),
                data.ncols()
            )));
        }
        Ok(FeatureMatrix { data, subject_ids })
    }

    /// Wraps a matrix with generated ids `s0, s1, ...`.
    pub fn from_matrix(data: DMatrix<f64>) -> Self {
        let ids = default_ids(data.ncols());
        FeatureMatrix {
            data,
            subject_ids: ids,
        }
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let data = self.data.select_columns(cols.iter());
        let ids = cols.iter().map(|&c| self.subject_ids[c].clone()).collect();
        FeatureMatrix {
            data,
            subject_ids: ids,
        }
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.nrows() != other.nrows() {
            return Err(Error::Dimension(format!(
                "cannot stack {} rows with {} rows",
                self.nrows(),
                other.nrows()
            )));
        }
        let (m, a, b) = (self.nrows(), self.ncols(), other.ncols());
        let mut data = DMatrix::zeros(m, a + b);
        data.columns_mut(0, a).copy_from(&self.data);
        data.columns_mut(a, b).copy_from(&other.data);
        let mut ids = self.subject_ids.clone();
        ids.extend(other.subject_ids.iter().cloned());
        Ok(FeatureMatrix {
            data,
            subject_ids: ids,
        })
    }

    /// Count of entries that are not strictly positive. Radial-distance
    /// features are lengths, so a nonzero count usually means bad input.
    pub fn nonpositive_count(&self) -> usize {
        self.data.iter().filter(|&&v| v <= 0.0).count()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let ids: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let n = ids.len();
        let mut values = Vec::new();
        let mut m = 0usize;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != n {
                return Err(Error::parse(
                    format!("feature csv row {}", row + 1),
                    format!("expected {n} values, found {}", rec.len()),
                ));
            }
            for (col, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::parse(
                        format!("feature csv row {}, column {}", row + 1, col + 1),
                        format!("`{field}` is not a number"),
                    )
                })?;
                values.push(v);
            }
            m += 1;
        }
        let data = DMatrix::from_row_slice(m, n, &values);
        FeatureMatrix::new(data, ids)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(&self.subject_ids)?;
        let mut buf = Vec::with_capacity(self.ncols());
        for row in self.data.row_iter() {
            buf.clear();
            buf.extend(row.iter().map(|v| v.to_string()));
            wtr.write_record(&buf)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut reader: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        reader
            .read_exact(&mut magic)
            .map_err(|e| Error::io("<binary>", e))?;
        if &magic != BINARY_MAGIC {
            return Err(Error::parse("binary feature matrix", "bad magic header"));
        }
        let mut word = [0u8; 8];
        reader
            .read_exact(&mut word)
            .map_err(|e| Error::io("<binary>", e))?;
        let m = u64::from_le_bytes(word) as usize;
        reader
            .read_exact(&mut word)
            .map_err(|e| Error::io("<binary>", e))?;
        let n = u64::from_le_bytes(word) as usize;
        let count = m
            .checked_mul(n)
            .ok_or_else(|| Error::parse("binary feature matrix", "dimensions overflow"))?;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            reader.read_exact(&mut word).map_err(|_| {
                Error::parse(
                    "binary feature matrix",
                    format!("truncated payload: expected {count} values"),
                )
            })?;
            values.push(f64::from_le_bytes(word));
        }
        Ok(FeatureMatrix::from_matrix(DMatrix::from_vec(m, n, values)))
    }

    pub fn write_binary<W: Write>(&self, mut writer: W) -> Result<()> {
        let io = |e| Error::io("<binary>", e);
        writer.write_all(BINARY_MAGIC).map_err(io)?;
        writer
            .write_all(&(self.nrows() as u64).to_le_bytes())
            .map_err(io)?;
        writer
            .write_all(&(self.ncols() as u64).to_le_bytes())
            .map_err(io)?;
        for v in self.data.as_slice() {
            writer.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        writer.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        match MatrixFormat::from_path(path) {
            MatrixFormat::Csv => Self::read_csv(reader),
            MatrixFormat::Binary => Self::read_binary(reader),
        }
        .map_err(|e| match e {
            Error::Parse { context, message } => Error::Parse {
                context: format!("{}: {context}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn save(&self, path: &Path, format: MatrixFormat) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let writer = BufWriter::new(file);
        match format {
            MatrixFormat::Csv => self.write_csv(writer),
            MatrixFormat::Binary => self.write_binary(writer),
        }
    }
}

/// Population standard deviation over every entry of `a`.
pub fn population_std(a: &DMatrix<f64>) -> f64 {
    let count = a.len();
    if count == 0 {
        return 0.0;
    }
    let mean = a.iter().sum::<f64>() / count as f64;
    let ss: f64 = a.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / count as f64).sqrt()
}

/// Per-row arithmetic mean.
pub fn row_means(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.ncols() as f64;
    a.row_iter().map(|r| r.iter().sum::<f64>() / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureMatrix {
        let data = DMatrix::from_row_slice(
            3,
            2,
            &[0.1, 2.5, 1.0 / 3.0, std::f64::consts::PI, 1e-300, -7.25],
        );
        FeatureMatrix::new(data, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let fm = sample();
        let mut buf = Vec::new();
        fm.write_csv(&mut buf).unwrap();
        let back = FeatureMatrix::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, fm);
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let fm = sample();
        let mut buf = Vec::new();
        fm.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 16 + 6 * 8);
        let back = FeatureMatrix::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.data, fm.data);
    }

    #[test]
    fn binary_layout_is_column_major() {
        let fm = sample();
        let mut buf = Vec::new();
        fm.write_binary(&mut buf).unwrap();
        let second = f64::from_le_bytes(buf[32..40].try_into().unwrap());
        assert_eq!(second, 1.0 / 3.0);
    }

    #[test]
    fn ragged_csv_is_rejected() {
        let err = FeatureMatrix::read_csv("a,b\n1,2\n3\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn bad_magic_is_rejected() {
        let err = FeatureMatrix::read_binary(&b"NOTMAGIC"[..]).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let mut buf = Vec::new();
        sample().write_binary(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(FeatureMatrix::read_binary(buf.as_slice()).is_err());
    }

    #[test]
    fn population_std_matches_hand_value() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!((population_std(&a) - 1.25f64.sqrt()).abs() < 1e-15);
    }
}
