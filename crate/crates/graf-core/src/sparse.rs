//! Directed arc sets with row/column indexes for sparse kernels.

use crate::error::{GrafError, Result};

/// A fixed set of directed arcs `(row, col)` over `n` nodes, sorted by
/// `(row, col)`. `row` is the aggregating node, `col` the neighbor it draws
/// from, so `out[row] += w * x[col]` realizes one sparse matrix-vector row.
///
/// Both a row-major CSR index and a column-sorted permutation are kept so
/// forward aggregation and backward scatter can each run row-parallel with a
/// deterministic summation order.
#[derive(Debug, Clone)]
pub struct ArcSet {
    n: usize,
    rows: std::sync::Arc<Vec<u32>>,
    cols: Vec<u32>,
    row_ptr: Vec<usize>,
    /// Arc indices sorted by (col, row).
    by_col: Vec<u32>,
    col_ptr: Vec<usize>,
}

impl ArcSet {
    /// Build from directed pairs. Pairs are sorted and deduplicated; endpoints
    /// must be `< n`.
    pub fn from_pairs(n: usize, pairs: &[(u32, u32)]) -> Result<Self> {
        for &(r, c) in pairs {
            if r as usize >= n || c as usize >= n {
                return Err(GrafError::Index(format!(
                    "arc ({r}, {c}) out of range for {n} nodes"
                )));
            }
        }
        let mut sorted: Vec<(u32, u32)> = pairs.to_vec();
        sorted.sort_unstable();
        sorted.dedup();

        let m = sorted.len();
        let mut rows = Vec::with_capacity(m);
        let mut cols = Vec::with_capacity(m);
        for (r, c) in &sorted {
            rows.push(*r);
            cols.push(*c);
        }
        let mut row_ptr = vec![0usize; n + 1];
        for &r in &rows {
            row_ptr[r as usize + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut by_col: Vec<u32> = (0..m as u32).collect();
        by_col.sort_unstable_by_key(|&e| (cols[e as usize], rows[e as usize]));
        let mut col_ptr = vec![0usize; n + 1];
        for &c in &cols {
            col_ptr[c as usize + 1] += 1;
        }
        for i in 0..n {
            col_ptr[i + 1] += col_ptr[i];
        }
        Ok(ArcSet {
            n,
            rows: std::sync::Arc::new(rows),
            cols,
            row_ptr,
            by_col,
            col_ptr,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    /// Shared handle to the row (segment) ids, one per arc.
    pub fn row_segments(&self) -> std::sync::Arc<Vec<u32>> {
        std::sync::Arc::clone(&self.rows)
    }

    pub fn cols(&self) -> &[u32] {
        &self.cols
    }

    pub fn arc(&self, e: usize) -> (u32, u32) {
        (self.rows[e], self.cols[e])
    }

    /// Arc index range for one aggregating row.
    pub fn row_range(&self, row: usize) -> std::ops::Range<usize> {
        self.row_ptr[row]..self.row_ptr[row + 1]
    }

    /// Arc indices (into the row-sorted arrays) whose `col` equals `col`.
    pub fn col_arcs(&self, col: usize) -> &[u32] {
        &self.by_col[self.col_ptr[col]..self.col_ptr[col + 1]]
    }

    /// Binary-search an arc index by endpoints.
    pub fn find(&self, row: u32, col: u32) -> Option<usize> {
        let range = self.row_range(row as usize);
        let slice = &self.cols[range.clone()];
        slice.binary_search(&col).ok().map(|off| range.start + off)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.rows.iter().copied().zip(self.cols.iter().copied())
    }

    /// True when (r, c) present iff (c, r) present.
    pub fn is_symmetric(&self) -> bool {
        self.iter().all(|(r, c)| self.find(c, r).is_some())
    }

    /// True when every node carries its own self-loop.
    pub fn has_full_self_loop_diagonal(&self) -> bool {
        (0..self.n).all(|i| self.find(i as u32, i as u32).is_some())
    }

    /// Number of undirected pairs {i, j} with i != j, plus self-loops counted once.
    pub fn undirected_pair_count(&self) -> usize {
        let self_loops = (0..self.n)
            .filter(|&i| self.find(i as u32, i as u32).is_some())
            .count();
        (self.len() - self_loops) / 2 + self_loops
    }
}
