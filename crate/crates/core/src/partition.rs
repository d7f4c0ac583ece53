use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Community labels for `n` nodes.
///
/// Labels are stored 0-based (`0..k`); the text format and everything shown
/// to users is 1-based (`1..=k`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    /// `labels` are 0-based and must all be `< k`. Empty communities are allowed.
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("partition needs at least one community"));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::config(format!(
                "node {i} has label {} outside 1..={k}",
                l + 1
            )));
        }
        Ok(Partition { labels, k })
    }

    /// From 1-based labels.
    pub fn from_one_based(labels: &[usize], k: usize) -> Result<Self> {
        if let Some(i) = labels.iter().position(|&l| l == 0) {
            return Err(Error::config(format!("node {i} has label 0; labels are 1-based")));
        }
        Self::new(labels.iter().map(|&l| l - 1).collect(), k)
    }

    /// Nodes `0..sizes[0]` get label 0, the next `sizes[1]` label 1, and so on.
    pub fn blocks(sizes: &[usize]) -> Self {
        let labels = sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
            .collect();
        Partition {
            labels,
            k: sizes.len().max(1),
        }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l + 1).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Node lists per community, each sorted ascending.
    pub fn communities(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// The `n x k` membership matrix.
    pub fn one_hot(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n(), self.k);
        for (i, &l) in self.labels.iter().enumerate() {
            m[(i, l)] = 1.0;
        }
        m
    }

    /// Relabels node `i` to `perm[label(i)]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.k {
            return Err(Error::config("permutation length differs from k"));
        }
        Self::new(self.labels.iter().map(|&l| perm[l]).collect(), self.k)
    }

    /// Node order permuted: result label of node `i` is `self.label(order[i])`.
    pub fn reordered(&self, order: &[usize]) -> Self {
        Partition {
            labels: order.iter().map(|&i| self.labels[i]).collect(),
            k: self.k,
        }
    }

    /// One 1-based label per line.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for l in &self.labels {
            writeln!(w, "{}", l + 1)?;
        }
        w.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    /// Reads one 1-based label per line. `k` defaults to the largest label.
    pub fn read_from<R: BufRead>(reader: R, k: Option<usize>, origin: &Path) -> Result<Self> {
        let mut labels = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let l: usize = t.parse().map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: idx + 1,
                message: format!("bad label {t:?}: {e}"),
            })?;
            labels.push(l);
        }
        let k = k.unwrap_or_else(|| labels.iter().copied().max().unwrap_or(1));
        Self::from_one_based(&labels, k)
    }

    pub fn load(path: &Path, k: Option<usize>) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f), k, path)
    }
}
