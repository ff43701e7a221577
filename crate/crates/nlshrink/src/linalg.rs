//! Sample covariance, symmetric eigendecomposition and rotation-equivariant
//! reconstruction.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// An `n x p` data matrix: rows are observations, columns are variables.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    /// Wraps a raw matrix, enforcing `2 <= p < n` and finite entries.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (n, p) = values.shape();
        if n < 2 || p < 2 {
            return Err(Error::InvalidInput(format!(
                "need n >= 2 and p >= 2, got n = {n}, p = {p}"
            )));
        }
        if p >= n {
            return Err(Error::ConcentrationOutOfRange { p, n });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite entry in data".into()));
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidInput("ragged rows in data".into()));
        }
        let values = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Self::new(values)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    /// Concentration ratio `p / n`.
    pub fn concentration(&self) -> f64 {
        self.p() as f64 / self.n() as f64
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Returns a copy with the column means subtracted (divisor `n`).
    ///
    /// The model here is zero-mean, so estimation does not demean by
    /// default; this is provided for data that carries an unknown mean.
    pub fn demeaned(&self) -> Self {
        let n = self.n() as f64;
        let mut values = self.values.clone();
        for mut col in values.column_iter_mut() {
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
        }
        Self { values }
    }
}

/// Eigenvalues (ascending) and matching orthonormal eigenvectors of a
/// symmetric matrix. Column `i` of `eigenvectors` pairs with `eigenvalues[i]`.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenSystem {
    pub fn p(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Sample covariance `S = Y' Y / n`. No demeaning.
pub fn sample_covariance(data: &DataMatrix) -> DMatrix<f64> {
    let y = data.values();
    let n = data.n() as f64;
    let mut s = y.transpose() * y / n;
    // symmetrize away the last bits of rounding
    for i in 0..s.nrows() {
        for j in 0..i {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn eigh(s: &DMatrix<f64>) -> Result<EigenSystem> {
    let (r, c) = s.shape();
    if r != c {
        return Err(Error::DimensionMismatch(r, c));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite entry in matrix".into()));
    }
    let sym = nalgebra::linalg::SymmetricEigen::try_new(s.clone(), 1e-10, 0)
        .ok_or(Error::EigenFailure)?;
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| sym.eigenvalues[a].total_cmp(&sym.eigenvalues[b]));
    let eigenvalues = DVector::from_fn(r, |i, _| sym.eigenvalues[order[i]]);
    let mut eigenvectors = DMatrix::zeros(r, r);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &sym.eigenvectors.column(src));
    }
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
    })
}

/// `U diag(d) U'`: the rotation-equivariant matrix with sample eigenvectors
/// and modified eigenvalues `d`.
pub fn reconstruct(eigsys: &EigenSystem, d: &[f64]) -> Result<DMatrix<f64>> {
    let p = eigsys.p();
    if d.len() != p {
        return Err(Error::DimensionMismatch(d.len(), p));
    }
    let u = &eigsys.eigenvectors;
    let scaled = DMatrix::from_fn(p, p, |i, j| u[(i, j)] * d[j]);
    let mut out = scaled * u.transpose();
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}
