//! File formats shared by the command-line tools: numeric CSV for matrices
//! and eigenvalue lists, JSON containers for structured results.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so
//! write-then-read reproduces values bit for bit.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, SpectralMixture};
use crate::linalg::DataMatrix;
use crate::{Error, Result};

/// JSON container for a data matrix: `{"n": …, "p": …, "data": [[…]]}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct MatrixJson {
    pub n: usize,
    pub p: usize,
    pub data: Vec<Vec<f64>>,
}

/// Parses a numeric CSV (optionally with a non-numeric header row) into
/// rows of floats.
pub fn read_csv_rows<P: AsRef<Path>>(path: P) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut rows = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = trimmed
            .split(',')
            .map(|tok| tok.trim().parse::<f64>())
            .collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(e) if lineno == 0 => {
                // tolerate a header line
                let _ = e;
            }
            Err(e) => {
                return Err(Error::InvalidInput(format!(
                    "line {}: {e}",
                    lineno + 1
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("no numeric rows found".into()));
    }
    Ok(rows)
}

/// Loads observations from CSV (rows = observations) or from the JSON
/// container, depending on the extension.
pub fn read_data<P: AsRef<Path>>(path: P) -> Result<DataMatrix> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path)?;
        let parsed: MatrixJson = serde_json::from_str(&text)?;
        if parsed.data.len() != parsed.n || parsed.data.iter().any(|r| r.len() != parsed.p) {
            return Err(Error::InvalidInput(
                "JSON matrix dimensions disagree with payload".into(),
            ));
        }
        DataMatrix::from_rows(&parsed.data)
    } else {
        DataMatrix::from_rows(&read_csv_rows(path)?)
    }
}

/// Reads a single column (or single row) of positive reals.
pub fn read_values<P: AsRef<Path>>(path: P) -> Result<Vec<f64>> {
    let rows = read_csv_rows(path)?;
    let values: Vec<f64> = if rows.len() == 1 {
        rows.into_iter().next().unwrap()
    } else {
        rows.into_iter()
            .map(|r| {
                r.into_iter()
                    .next()
                    .ok_or_else(|| Error::InvalidInput("empty row".into()))
            })
            .collect::<Result<_>>()?
    };
    Ok(values)
}

/// Writes a matrix as plain CSV.
pub fn write_matrix_csv<P: AsRef<Path>>(path: P, m: &DMatrix<f64>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Serialized population spectrum: `{"grid": […], "weights": […]}` where
/// the weights run over the standard basis built from the grid (atoms,
/// rising ramps, falling ramps). A single grid point denotes one atom.
#[derive(Debug, Serialize, Deserialize)]
pub struct SpectrumJson {
    pub grid: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SpectrumJson {
    pub fn to_mixture(&self) -> Result<SpectralMixture> {
        if self.grid.len() == 1 {
            return SpectralMixture::from_atoms(&self.grid, &self.weights);
        }
        let elements = build_basis(&self.grid)?;
        SpectralMixture::new(elements, self.weights.clone())
    }

    pub fn from_parts(grid: &[f64], weights: &[f64]) -> Self {
        Self {
            grid: grid.to_vec(),
            weights: weights.to_vec(),
        }
    }
}

pub fn read_spectrum<P: AsRef<Path>>(path: P) -> Result<SpectrumJson> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<P: AsRef<Path>, T: Serialize>(path: P, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = std::env::temp_dir().join(format!("nlshrink-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.csv");
        let m = DMatrix::from_row_slice(2, 3, &[
            1.0 / 3.0,
            -2.5e-17,
            std::f64::consts::PI,
            1e300,
            -0.0,
            42.0,
        ]);
        write_matrix_csv(&path, &m).unwrap();
        let rows = read_csv_rows(&path).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(rows[i][j].to_bits(), m[(i, j)].to_bits());
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn header_rows_are_tolerated() {
        let dir = std::env::temp_dir().join(format!("nlshrink-io-h-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("h.csv");
        std::fs::write(&path, "a,b\n1,2\n3,4\n").unwrap();
        let rows = read_csv_rows(&path).unwrap();
        assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn single_atom_spectrum_parses() {
        let s = SpectrumJson {
            grid: vec![1.0],
            weights: vec![1.0],
        };
        let mix = s.to_mixture().unwrap();
        assert_eq!(mix.len(), 1);
    }

    #[test]
    fn spectrum_weights_must_match_basis() {
        let s = SpectrumJson {
            grid: vec![1.0, 2.0],
            weights: vec![0.5, 0.5],
        };
        assert!(s.to_mixture().is_err()); // needs 3*2-2 = 4 weights
    }
}
