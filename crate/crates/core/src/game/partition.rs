use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disjoint nonempty cells covering the pixel indices `0..n`; each cell is
/// one player.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    n: usize,
    cells: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(n: usize, cells: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n];
        for cell in &cells {
            if cell.is_empty() {
                return Err(Error::Partition("empty cell".into()));
            }
            for &p in cell {
                if p >= n {
                    return Err(Error::Partition(format!("pixel {p} outside 0..{n}")));
                }
                if std::mem::replace(&mut seen[p], true) {
                    return Err(Error::Partition(format!("pixel {p} appears in two cells")));
                }
            }
        }
        if let Some(p) = seen.iter().position(|s| !s) {
            return Err(Error::Partition(format!("pixel {p} is not covered")));
        }
        Ok(Self { n, cells })
    }

    /// One player per pixel.
    pub fn singletons(n: usize) -> Self {
        Self {
            n,
            cells: (0..n).map(|p| vec![p]).collect(),
        }
    }

    pub fn num_pixels(&self) -> usize {
        self.n
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, k: usize) -> &[usize] {
        &self.cells[k]
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    /// Sums `values` (one per pixel) within each cell.
    pub fn aggregate(&self, values: &[f64]) -> Vec<f64> {
        self.cells
            .iter()
            .map(|c| c.iter().map(|&p| values[p]).sum())
            .collect()
    }
}

/// `L x L` grid over a `height x width` raster (row-major pixels). When a
/// side is not divisible by `L`, the leading bands take one extra row or
/// column each. Cell `(p, q)` has index `p * L + q`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPartition {
    pub height: usize,
    pub width: usize,
    pub l: usize,
    partition: Partition,
}

fn band_edges(len: usize, l: usize) -> Vec<usize> {
    let (base, extra) = (len / l, len % l);
    let mut edges = vec![0];
    for b in 0..l {
        edges.push(edges[b] + base + usize::from(b < extra));
    }
    edges
}

impl GridPartition {
    pub fn new(height: usize, width: usize, l: usize) -> Result<Self> {
        if l == 0 || l > height || l > width {
            return Err(Error::Partition(format!(
                "a {l}x{l} grid does not fit a {height}x{width} raster"
            )));
        }
        let rows = band_edges(height, l);
        let cols = band_edges(width, l);
        let mut cells = Vec::with_capacity(l * l);
        for p in 0..l {
            for q in 0..l {
                let mut cell = Vec::new();
                for r in rows[p]..rows[p + 1] {
                    for c in cols[q]..cols[q + 1] {
                        cell.push(r * width + c);
                    }
                }
                cells.push(cell);
            }
        }
        Ok(Self {
            height,
            width,
            l,
            partition: Partition::new(height * width, cells)?,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn index(&self, p: usize, q: usize) -> usize {
        p * self.l + q
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.l, cell % self.l)
    }

    /// 4-adjacent cells in the order up, left, right, down.
    pub fn neighbors(&self, cell: usize) -> Vec<usize> {
        let (p, q) = self.coords(cell);
        let mut out = Vec::with_capacity(4);
        if p > 0 {
            out.push(self.index(p - 1, q));
        }
        if q > 0 {
            out.push(self.index(p, q - 1));
        }
        if q + 1 < self.l {
            out.push(self.index(p, q + 1));
        }
        if p + 1 < self.l {
            out.push(self.index(p + 1, q));
        }
        out
    }
}
