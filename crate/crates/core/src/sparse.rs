//! Compressed sparse row matrices.

use std::io::Write;

use crate::error::{Error, Result};
use crate::real::{to_f64, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed
    /// in input order, so the result is independent of thread scheduling as
    /// long as the triplet order is.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(u32, u32, T)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|t| t.0 as usize >= n_rows || t.1 as usize >= n_cols) {
            return Err(Error::Domain(format!("triplet ({r}, {c}) outside a {n_rows}x{n_cols} matrix")));
        }
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                row_ptr[r as usize + 1] += 1;
                col_idx.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { n_rows, n_cols, row_ptr, col_idx, values })
    }

    /// Zero-valued matrix with the given sorted, duplicate-free column lists.
    pub fn from_pattern(n_cols: usize, rows: Vec<Vec<u32>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        for r in &rows {
            debug_assert!(r.windows(2).all(|w| w[0] < w[1]));
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        Self { n_rows: rows.len(), n_cols, row_ptr, col_idx, values: vec![T::zero(); nnz] }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Position of entry `(i, j)` in `values`, if it is in the pattern.
    #[inline]
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        let cols = &self.col_idx[start..self.row_ptr[i + 1]];
        cols.binary_search(&(j as u32)).ok().map(|k| start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.position(i, j).map_or(T::zero(), |k| self.values[k])
    }

    /// Adds `v` to entry `(i, j)`, which must be part of the pattern.
    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: T) {
        let k = self.position(i, j).unwrap_or_else(|| panic!("entry ({i}, {j}) not in sparsity pattern"));
        self.values[k] += v;
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut s = T::zero();
            for (&c, &v) in cols.iter().zip(vals) {
                s += v * x[c as usize];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n_rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            counts[c as usize + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0u32; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let k = next[c as usize];
                col_idx[k] = i as u32;
                values[k] = v;
                next[c as usize] += 1;
            }
        }
        Self { n_rows: self.n_cols, n_cols: self.n_rows, row_ptr, col_idx, values }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.n_rows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    /// `||A - A^T||_inf`.
    pub fn asymmetry_inf(&self) -> T {
        let t = self.transpose();
        (0..self.n_rows)
            .map(|i| {
                let (ca, va) = self.row(i);
                let (cb, vb) = t.row(i);
                let (mut a, mut b) = (0, 0);
                let mut s = T::zero();
                while a < ca.len() || b < cb.len() {
                    let ka = ca.get(a).copied().unwrap_or(u32::MAX);
                    let kb = cb.get(b).copied().unwrap_or(u32::MAX);
                    if ka == kb {
                        s += (va[a] - vb[b]).abs();
                        a += 1;
                        b += 1;
                    } else if ka < kb {
                        s += va[a].abs();
                        a += 1;
                    } else {
                        s += vb[b].abs();
                        b += 1;
                    }
                }
                s
            })
            .fold(T::zero(), T::max)
    }

    /// Structural symmetry of the sparsity pattern.
    pub fn pattern_is_symmetric(&self) -> bool {
        let t = self.transpose();
        t.row_ptr == self.row_ptr && t.col_idx == self.col_idx
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n_cols]; self.n_rows];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c as usize] = v;
            }
        }
        d
    }

    /// Writes the matrix in coordinate text form, one `row col value` per line.
    pub fn write_coordinate(&self, out: &mut impl Write) -> Result<()> {
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(out, "{i} {c} {:e}", to_f64(v))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_are_summed_and_sorted() {
        let m = CsrMatrix::<f64>::from_triplets(2, 3, vec![(1, 2, 1.0), (0, 1, 2.0), (1, 2, 3.0), (0, 0, 1.0)]).unwrap();
        assert_eq!(m.row_ptr, vec![0, 2, 3]);
        assert_eq!(m.col_idx, vec![0, 1, 2]);
        assert_eq!(m.values, vec![1.0, 2.0, 4.0]);
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![3.0, 4.0]);
        assert!(CsrMatrix::<f64>::from_triplets(1, 1, vec![(0, 1, 1.0)]).is_err());
    }

    #[test]
    fn transpose_and_symmetry_measures() {
        let m = CsrMatrix::<f64>::from_triplets(2, 2, vec![(0, 0, 2.0), (0, 1, 1.0), (1, 0, 3.0)]).unwrap();
        let t = m.transpose();
        assert_eq!(t.to_dense(), vec![vec![2.0, 3.0], vec![1.0, 0.0]]);
        assert_eq!(m.asymmetry_inf(), 2.0);
        assert!(m.pattern_is_symmetric());
        assert_eq!(m.norm_inf(), 3.0);
        let mut out = Vec::new();
        m.write_coordinate(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 3);
    }

    #[test]
    fn pattern_assembly() {
        let mut m = CsrMatrix::<f64>::from_pattern(3, vec![vec![0, 2], vec![1]]);
        m.add_to(0, 2, 1.5);
        m.add_to(0, 2, 1.0);
        assert_eq!(m.get(0, 2), 2.5);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(CsrMatrix::<f64>::identity(3).diagonal(), vec![1.0; 3]);
    }
}
