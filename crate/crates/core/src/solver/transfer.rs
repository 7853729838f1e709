//! Transfer matrix: one adjoint solve per non-reference electrode.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::SparseSystem;
use crate::real::{lit, to_f64, Real};
use crate::solver::{ElectrodeSet, PreparedSolver, SolveStats, SolverConfig};

/// Rows `t_e` solving `K^T t_e = r_e - r_ref`, so that
/// `u_e - u_ref = t_e . f` for every load `f`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix<T> {
    pub n_electrodes: usize,
    pub n_dofs: usize,
    pub reference: usize,
    /// `(n_electrodes - 1) x n_dofs`, row-major, electrodes in order with
    /// the reference skipped.
    pub rows: Vec<T>,
    /// Achieved relative residual and iterations per row.
    pub stats: Vec<SolveStats>,
}

impl<T: Real> TransferMatrix<T> {
    pub fn n_rows(&self) -> usize {
        self.n_electrodes - 1
    }

    pub fn row(&self, k: usize) -> &[T] {
        &self.rows[k * self.n_dofs..(k + 1) * self.n_dofs]
    }

    /// Electrode index of row `k`.
    pub fn electrode_of_row(&self, k: usize) -> usize {
        if k < self.reference {
            k
        } else {
            k + 1
        }
    }

    pub fn write(&self, path: &Path, tag: Option<&str>) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        write!(out, "TRANSFER {} {} {}", self.n_electrodes, self.n_dofs, self.reference)?;
        if let Some(tag) = tag {
            write!(out, " {tag}")?;
        }
        writeln!(out)?;
        for &v in &self.rows {
            out.write_all(&to_f64(v).to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(fs::File::open(path)?);
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() < 4 || tok[0] != "TRANSFER" {
            return Err(bad(format!("expected `TRANSFER e N ref`, got `{}`", header.trim_end())));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("bad header field `{s}`: {e}")));
        let (n_electrodes, n_dofs, reference) = (num(tok[1])?, num(tok[2])?, num(tok[3])?);
        if n_electrodes < 2 || reference >= n_electrodes {
            return Err(bad("need at least two electrodes and a valid reference".into()));
        }
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        let count = (n_electrodes - 1) * n_dofs;
        if bytes.len() != count * 8 {
            return Err(bad(format!("expected {} bytes of data, found {}", count * 8, bytes.len())));
        }
        let rows = bytes.chunks_exact(8).map(|c| lit(f64::from_le_bytes(c.try_into().expect("8 bytes")))).collect();
        Ok(Self { n_electrodes, n_dofs, reference, rows, stats: Vec::new() })
    }
}

/// Solves the adjoint problems for all electrodes except `reference`.
pub fn transfer_matrix<T: Real>(
    system: &SparseSystem<T>,
    electrodes: &ElectrodeSet<T>,
    reference: usize,
    cfg: &SolverConfig<T>,
) -> Result<TransferMatrix<T>> {
    let ne = electrodes.len();
    if ne < 2 {
        return Err(Error::Configuration("a transfer matrix needs at least two electrodes".into()));
    }
    if reference >= ne {
        return Err(Error::Configuration(format!("reference electrode {reference} out of range 0..{ne}")));
    }
    let n = system.n_dofs();
    let r = &electrodes.restriction;
    if r.n_cols != n {
        return Err(Error::DimensionMismatch { expected: n, actual: r.n_cols });
    }
    let transposed;
    let matrix = if system.is_symmetric() {
        &system.matrix
    } else {
        transposed = system.matrix.transpose();
        &transposed
    };
    let solver = PreparedSolver::new(matrix, system.is_symmetric(), cfg);
    let electrodes_to_solve: Vec<usize> = (0..ne).filter(|&e| e != reference).collect();
    let solved: Vec<(Vec<T>, SolveStats)> = electrodes_to_solve
        .par_iter()
        .map(|&e| {
            let mut rhs = vec![T::zero(); n];
            let (cols, vals) = r.row(e);
            for (&c, &v) in cols.iter().zip(vals) {
                rhs[c as usize] += v;
            }
            let (cols, vals) = r.row(reference);
            for (&c, &v) in cols.iter().zip(vals) {
                rhs[c as usize] -= v;
            }
            solver.solve(&rhs)
                .map_err(|err| Error::Electrode { electrode: e, source: Box::new(err) })
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity((ne - 1) * n);
    let mut stats = Vec::with_capacity(ne - 1);
    for (row, s) in solved {
        rows.extend(row);
        stats.push(s);
    }
    Ok(TransferMatrix { n_electrodes: ne, n_dofs: n, reference, rows, stats })
}

/// Electrode potentials for a load vector, with the reference entry zero.
pub fn apply_transfer<T: Real>(t: &TransferMatrix<T>, load: &[T]) -> Result<Vec<T>> {
    if load.len() != t.n_dofs {
        return Err(Error::DimensionMismatch { expected: t.n_dofs, actual: load.len() });
    }
    let support: Vec<(usize, T)> = load.iter().copied().enumerate().filter(|(_, v)| *v != T::zero()).collect();
    let mut out = vec![T::zero(); t.n_electrodes];
    for k in 0..t.n_rows() {
        let row = t.row(k);
        out[t.electrode_of_row(k)] = support.iter().map(|&(i, v)| row[i] * v).sum();
    }
    Ok(out)
}
