use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Absolute tolerance for the symmetry check.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A dense real symmetric `n x n` matrix.
///
/// Holds the mean matrices of the model (the rank-K part, the logit mean and
/// the nonlinear factor matrix) and renormalized adjacency matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymMatrix {
    inner: DMatrix<f64>,
}

impl DenseSymMatrix {
    /// Wraps `m`, checking squareness and symmetry.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::config(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        for j in 0..n {
            for i in 0..j {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if !((a - b).abs() <= SYMMETRY_TOL) {
                    return Err(Error::domain(format!(
                        "matrix not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(DenseSymMatrix { inner: m })
    }

    /// Builds from the upper triangle (`i <= j`) of `f`, mirroring below.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        DenseSymMatrix { inner: m }
    }

    pub fn zeros(n: usize) -> Self {
        DenseSymMatrix {
            inner: DMatrix::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.inner.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    /// Entry-wise map; `f` must preserve symmetry, which any pure function of
    /// the entry value does.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        DenseSymMatrix {
            inner: self.inner.map(f),
        }
    }

    /// Entry-wise product.
    pub fn hadamard(&self, other: &DenseSymMatrix) -> Self {
        assert_eq!(self.n(), other.n(), "dimension mismatch");
        DenseSymMatrix {
            inner: self.inner.component_mul(&other.inner),
        }
    }

    /// Scales every entry by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        DenseSymMatrix {
            inner: &self.inner * c,
        }
    }

    /// Copy with the diagonal set to zero.
    pub fn without_diagonal(&self) -> Self {
        let mut m = self.inner.clone();
        m.fill_diagonal(0.0);
        DenseSymMatrix { inner: m }
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Symmetric matrix-vector product `y = M x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(y.len(), n);
        // Column-major storage: accumulate columns.
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let col = self.inner.column(j);
            for (yi, &mij) in y.iter_mut().zip(col.iter()) {
                *yi += mij * xj;
            }
        }
    }

    /// Writes the matrix as row-major CSV without a header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        write_matrix_csv(&mut w, &self.inner).map_err(|e| Error::io(path, e))
    }
}

/// Row-major CSV dump of any dense matrix.
pub fn write_matrix_csv<W: Write>(w: &mut W, m: &DMatrix<f64>) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()
}

/// Parses a headerless row-major CSV matrix.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("bad number {tok:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
