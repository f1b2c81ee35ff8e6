//! Sparse set of observed entries together with the matrix shape.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Observed entries of an `rows × cols` matrix.
///
/// Entries are stored sorted by `(row, col)`. A column-major permutation is
/// kept alongside so transposed sparse products can walk columns without
/// re-sorting.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedMatrix {
    rows: usize,
    cols: usize,
    row_idx: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    row_ptr: Vec<usize>,
    col_ptr: Vec<usize>,
    /// Entry indices ordered by `(col, row)`.
    col_perm: Vec<usize>,
}

impl ObservedMatrix {
    /// Validates and indexes a list of `(row, col, value)` triplets.
    ///
    /// Duplicate positions are rejected; an empty list is allowed.
    pub fn new(rows: usize, cols: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(format!("empty shape {rows}x{cols}")));
        }
        for &(i, j, v) in &entries {
            if i >= rows || j >= cols {
                return Err(Error::invalid(format!(
                    "entry ({i}, {j}) outside {rows}x{cols}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite value at ({i}, {j})")));
            }
        }
        entries.sort_by_key(|&(i, j, _)| (i, j));
        if let Some(w) = entries
            .windows(2)
            .find(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1)
        {
            return Err(Error::invalid(format!(
                "duplicate entry ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self::from_sorted(rows, cols, entries))
    }

    fn from_sorted(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>) -> Self {
        let nnz = entries.len();
        let mut row_idx = Vec::with_capacity(nnz);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_ptr = vec![0usize; cols + 1];
        for (i, j, v) in entries {
            row_idx.push(i);
            col_idx.push(j);
            values.push(v);
            row_ptr[i + 1] += 1;
            col_ptr[j + 1] += 1;
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        for c in 0..cols {
            col_ptr[c + 1] += col_ptr[c];
        }
        // counting sort by column keeps row order within each column
        let mut next = col_ptr.clone();
        let mut col_perm = vec![0usize; nnz];
        for (e, &j) in col_idx.iter().enumerate() {
            col_perm[next[j]] = e;
            next[j] += 1;
        }
        Self {
            rows,
            cols,
            row_idx,
            col_idx,
            values,
            row_ptr,
            col_ptr,
            col_perm,
        }
    }

    pub fn empty(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, Vec::new())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Fraction of observed positions, `nnz / (rows · cols)`.
    pub fn sparsity(&self) -> f64 {
        self.nnz() as f64 / (self.rows as f64 * self.cols as f64)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_indices(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_idx
    }

    /// Entry range of row `i` in storage order.
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Storage indices of the entries in column `j`, ordered by row.
    pub fn col_entries(&self, j: usize) -> &[usize] {
        &self.col_perm[self.col_ptr[j]..self.col_ptr[j + 1]]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.row_idx
            .iter()
            .zip(&self.col_idx)
            .zip(&self.values)
            .map(|((&i, &j), &v)| (i, j, v))
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if i >= self.rows {
            return None;
        }
        let range = self.row_range(i);
        self.col_idx[range.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| self.values[range.start + k])
    }

    /// Same index set with replacement values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.nnz() {
            return Err(Error::shape(format!(
                "expected {} values, got {}",
                self.nnz(),
                values.len()
            )));
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    /// Builds a new matrix from a subset of storage indices.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut entries: Vec<_> = indices
            .iter()
            .map(|&e| (self.row_idx[e], self.col_idx[e], self.values[e]))
            .collect();
        entries.sort_by_key(|&(i, j, _)| (i, j));
        Self::from_sorted(self.rows, self.cols, entries)
    }

    /// Union of two observation sets with disjoint positions.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let entries = self.iter().chain(other.iter()).collect();
        Self::new(self.rows, self.cols, entries)
    }

    /// True when no position appears in both sets.
    pub fn is_disjoint(&self, other: &Self) -> bool {
        let mine: HashSet<(usize, usize)> = self.iter().map(|(i, j, _)| (i, j)).collect();
        other.iter().all(|(i, j, _)| !mine.contains(&(i, j)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        assert!(ObservedMatrix::new(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0)]).is_err());
        assert!(ObservedMatrix::new(2, 2, vec![(2, 0, 1.0)]).is_err());
        assert!(ObservedMatrix::new(2, 2, vec![(0, 0, f64::NAN)]).is_err());
    }

    #[test]
    fn column_walk_matches_entries() {
        let obs = ObservedMatrix::new(
            3,
            3,
            vec![(2, 1, 5.0), (0, 1, 1.0), (1, 0, 2.0), (2, 2, 3.0)],
        )
        .unwrap();
        assert_eq!(obs.nnz(), 4);
        assert_eq!(obs.get(0, 1), Some(1.0));
        assert_eq!(obs.get(1, 1), None);
        let col1: Vec<_> = obs
            .col_entries(1)
            .iter()
            .map(|&e| obs.row_indices()[e])
            .collect();
        assert_eq!(col1, vec![0, 2]);
        assert!((obs.sparsity() - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn union_requires_disjoint() {
        let a = ObservedMatrix::new(2, 2, vec![(0, 0, 1.0)]).unwrap();
        let b = ObservedMatrix::new(2, 2, vec![(1, 1, 1.0)]).unwrap();
        assert!(a.is_disjoint(&b));
        assert_eq!(a.union(&b).unwrap().nnz(), 2);
        assert!(a.union(&a).is_err());
    }
}
