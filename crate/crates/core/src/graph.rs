//! Observed networks.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::DenseSymMatrix;

/// Read-only access to a symmetric matrix of edge weights in `[0, 1]`.
///
/// Implemented both by observed adjacency matrices and by dense mean
/// matrices, so the refitting estimators can be run on the population
/// quantities as well as on data. Diagonal entries are never read by the
/// estimators.
pub trait EdgeWeights: Sync {
    fn order(&self) -> usize;
    fn weight(&self, i: usize, j: usize) -> f64;
}

impl EdgeWeights for DenseSymMatrix {
    fn order(&self) -> usize {
        self.n()
    }

    #[inline]
    fn weight(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }
}

/// Fixed-size bit set over node indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitRow {
    words: Vec<u64>,
}

impl BitRow {
    pub fn new(n: usize) -> Self {
        BitRow {
            words: vec![0; n.div_ceil(64)],
        }
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        (self.words[i >> 6] >> (i & 63)) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        self.words[i >> 6] |= 1 << (i & 63);
    }

    #[inline]
    pub fn remove(&mut self, i: usize) {
        self.words[i >> 6] &= !(1 << (i & 63));
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// `|self ∩ other|`.
    #[inline]
    pub fn intersection_count(&self, other: &BitRow) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// `|self ∩ a ∩ b|`.
    #[inline]
    pub fn intersection3_count(&self, a: &BitRow, b: &BitRow) -> usize {
        self.words
            .iter()
            .zip(&a.words)
            .zip(&b.words)
            .map(|((x, y), z)| (x & y & z).count_ones() as usize)
            .sum()
    }
}

/// Binary, symmetric, hollow adjacency matrix.
///
/// Stores one bit row per node (dense view) together with sorted neighbor
/// lists; both are built together and never mutated afterwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    rows: Vec<BitRow>,
    neighbors: Vec<Vec<u32>>,
    edges: usize,
}

impl AdjacencyMatrix {
    /// Builds from undirected edges. Duplicate edges are merged; self loops
    /// and out-of-range endpoints are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut rows = vec![BitRow::new(n); n];
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::domain(format!(
                    "edge ({i},{j}) out of range for n={n}"
                )));
            }
            if i == j {
                return Err(Error::domain(format!("self loop at node {i}")));
            }
            rows[i].insert(j);
            rows[j].insert(i);
        }
        Ok(Self::from_rows(rows))
    }

    fn from_rows(rows: Vec<BitRow>) -> Self {
        let n = rows.len();
        let neighbors: Vec<Vec<u32>> = rows
            .iter()
            .map(|r| (0..n).filter(|&j| r.contains(j)).map(|j| j as u32).collect())
            .collect();
        let edges = neighbors.iter().map(Vec::len).sum::<usize>() / 2;
        AdjacencyMatrix {
            rows,
            neighbors,
            edges,
        }
    }

    /// Builds from a dense 0/1 matrix, validating the adjacency invariants.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::config("adjacency must be square"));
        }
        let mut edges = Vec::new();
        for i in 0..n {
            if m[(i, i)] != 0.0 {
                return Err(Error::domain(format!("nonzero diagonal at {i}")));
            }
            for j in (i + 1)..n {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if a != b {
                    return Err(Error::domain(format!("asymmetric entry ({i},{j})")));
                }
                match a {
                    x if x == 0.0 => {}
                    x if x == 1.0 => edges.push((i, j)),
                    x => return Err(Error::domain(format!("non-binary entry {x} at ({i},{j})"))),
                }
            }
        }
        Self::from_edges(n, edges)
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.rows[i].contains(j)
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i]
    }

    pub fn row(&self, i: usize) -> &BitRow {
        &self.rows[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Edges `(i, j)` with `i < j` in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors.iter().enumerate().flat_map(|(i, nb)| {
            nb.iter()
                .map(|&j| j as usize)
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }

    pub fn to_dense(&self) -> DenseSymMatrix {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for (i, nb) in self.neighbors.iter().enumerate() {
            for &j in nb {
                m[(i, j as usize)] = 1.0;
            }
        }
        DenseSymMatrix::new(m).expect("adjacency is symmetric")
    }

    /// Writes the `n=<count>` header followed by one `i j` line per edge
    /// (0-based, `i < j`).
    pub fn write_edge_list<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "n={}", self.n())?;
        for (i, j) in self.edges() {
            writeln!(w, "{i} {j}")?;
        }
        w.flush()
    }

    pub fn save_edge_list(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_edge_list(f).map_err(|e| Error::io(path, e))
    }

    /// Parses the edge-list format written by [`write_edge_list`](Self::write_edge_list).
    ///
    /// Blank lines and lines starting with `#` are skipped. Edges may appear
    /// in either orientation.
    pub fn read_edge_list<R: BufRead>(reader: R, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut n: Option<usize> = None;
        let mut edges = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::io(origin, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if n.is_none() {
                let count = line
                    .strip_prefix("n=")
                    .ok_or_else(|| parse_err(lineno, format!("expected header n=<count>, got {line:?}")))?;
                n = Some(
                    count
                        .trim()
                        .parse()
                        .map_err(|e| parse_err(lineno, format!("bad node count: {e}")))?,
                );
                continue;
            }
            let mut it = line.split_whitespace();
            let mut next = || -> Result<usize> {
                it.next()
                    .ok_or_else(|| parse_err(lineno, "expected two node indices".into()))?
                    .parse()
                    .map_err(|e| parse_err(lineno, format!("bad node index: {e}")))
            };
            let (i, j) = (next()?, next()?);
            if it.next().is_some() {
                return Err(parse_err(lineno, "trailing tokens".into()));
            }
            edges.push((i, j));
        }
        let n = n.ok_or_else(|| parse_err(1, "missing header n=<count>".into()))?;
        Self::from_edges(n, edges)
    }

    pub fn load_edge_list(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_edge_list(std::io::BufReader::new(f), path)
    }
}

impl EdgeWeights for AdjacencyMatrix {
    fn order(&self) -> usize {
        self.n()
    }

    #[inline]
    fn weight(&self, i: usize, j: usize) -> f64 {
        if self.has_edge(i, j) {
            1.0
        } else {
            0.0
        }
    }
}
