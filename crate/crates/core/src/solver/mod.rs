//! Preconditioned Krylov solvers for the pure Neumann system, electrode
//! restriction and the transfer matrix.

pub mod electrodes;
pub mod transfer;

pub use electrodes::{electrode_restriction, ElectrodeSet};
pub use transfer::{apply_transfer, transfer_matrix, TransferMatrix};

use crate::error::{Error, Result};
use crate::fem::SparseSystem;
use crate::real::{lit, to_f64, Real};
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Preconditioner {
    #[default]
    Jacobi,
    SymmetricGaussSeidel,
    /// Incomplete LU factorization on the sparsity pattern of the matrix.
    Ilu0,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Method {
    /// Conjugate gradients for symmetric systems with a positive definite
    /// preconditioner, BiCGstab otherwise.
    #[default]
    Auto,
    ConjugateGradient,
    BiCgStab,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig<T> {
    /// Target relative residual `||b - Ax|| / ||b||`.
    pub tolerance: T,
    pub max_iterations: usize,
    pub preconditioner: Preconditioner,
    pub method: Method,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self { tolerance: lit(1e-8), max_iterations: 20_000, preconditioner: Preconditioner::Jacobi, method: Method::Auto }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final true relative residual.
    pub residual: f64,
    /// Recursively updated relative residual after every iteration.
    pub history: Vec<f64>,
}

/// Solves `K x = load` for an assembled system and returns the zero-mean
/// solution.
pub fn solve<T: Real>(system: &SparseSystem<T>, load: &[T], cfg: &SolverConfig<T>) -> Result<(Vec<T>, SolveStats)> {
    solve_matrix(&system.matrix, system.is_symmetric(), load, cfg)
}

/// Solves a singular system whose kernel is the constants. The load is
/// mean-corrected when `|sum| <= max(1e-10, 64 eps) ||load||_1` and rejected
/// otherwise.
pub fn solve_matrix<T: Real>(
    matrix: &CsrMatrix<T>,
    symmetric: bool,
    load: &[T],
    cfg: &SolverConfig<T>,
) -> Result<(Vec<T>, SolveStats)> {
    PreparedSolver::new(matrix, symmetric, cfg).solve(load)
}

/// A matrix with its preconditioner set up once for repeated solves.
pub struct PreparedSolver<'a, T> {
    matrix: &'a CsrMatrix<T>,
    precond: Precond<'a, T>,
    method: Method,
    cfg: SolverConfig<T>,
}

impl<'a, T: Real> PreparedSolver<'a, T> {
    pub fn new(matrix: &'a CsrMatrix<T>, symmetric: bool, cfg: &SolverConfig<T>) -> Self {
        let precond = Precond::new(matrix, cfg.preconditioner);
        let method = match cfg.method {
            Method::Auto if symmetric && precond.is_positive() => Method::ConjugateGradient,
            Method::Auto => Method::BiCgStab,
            m => m,
        };
        if cfg.method == Method::Auto && symmetric && method == Method::BiCgStab {
            log::debug!("{:?} preconditioner has non-positive pivots, using BiCGstab", cfg.preconditioner);
        }
        Self { matrix, precond, method, cfg: *cfg }
    }

    /// See [`solve_matrix`].
    pub fn solve(&self, load: &[T]) -> Result<(Vec<T>, SolveStats)> {
        let (matrix, cfg) = (self.matrix, &self.cfg);
        let n = matrix.n_rows;
        if load.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: load.len() });
        }
        let b = compatible_load(load)?;
        if b.iter().all(|v| *v == T::zero()) {
            return Ok((vec![T::zero(); n], SolveStats::default()));
        }
        let bnorm = to_f64(norm(&b));
        let mut x = vec![T::zero(); n];
        let mut stats = SolveStats::default();
        let mut r = b.clone();
        // restarts correct the drift between recursive and true residual
        for _ in 0..5 {
            let remaining = cfg.max_iterations.saturating_sub(stats.iterations);
            if remaining == 0 {
                break;
            }
            let rnorm = to_f64(norm(&r));
            let scale = rnorm / bnorm;
            let inner = SolverConfig {
                tolerance: lit::<T>((to_f64(cfg.tolerance) / scale * 0.5).min(0.5)),
                max_iterations: remaining,
                ..*cfg
            };
            let (dx, inner_stats) = match self.method {
                Method::ConjugateGradient => cg(matrix, &r, &self.precond, &inner).map_err(|e| match e {
                    Error::Indefinite { iterations, operator } => {
                        Error::Indefinite { iterations: stats.iterations + iterations, operator }
                    }
                    e => e,
                })?,
                _ => bicgstab(matrix, &r, &self.precond, &inner),
            };
            stats.iterations += inner_stats.iterations;
            stats.history.extend(inner_stats.history.iter().map(|h| h * scale));
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
            r = residual(matrix, &x, &b);
            stats.residual = to_f64(norm(&r)) / bnorm;
            if stats.residual <= to_f64(cfg.tolerance) {
                remove_mean(&mut x);
                return Ok((x, stats));
            }
        }
        Err(Error::NotConverged { iterations: stats.iterations, residual: stats.residual, history: stats.history })
    }
}

fn compatible_load<T: Real>(load: &[T]) -> Result<Vec<T>> {
    let sum: T = load.iter().copied().sum();
    let l1: T = load.iter().map(|v| v.abs()).sum();
    if sum.abs() > lit::<T>(1e-10).max(T::epsilon() * lit(64.0)) * l1 {
        return Err(Error::IncompatibleLoad { sum: to_f64(sum), l1: to_f64(l1) });
    }
    let mut b = load.to_vec();
    remove_mean(&mut b);
    Ok(b)
}

pub fn remove_mean<T: Real>(v: &mut [T]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().copied().sum::<T>() / T::from_usize(v.len()).expect("length representable");
    for x in v.iter_mut() {
        *x -= mean;
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn residual<T: Real>(a: &CsrMatrix<T>, x: &[T], b: &[T]) -> Vec<T> {
    let ax = a.mul_vec(x);
    b.iter().zip(ax).map(|(&bi, v)| bi - v).collect()
}

enum Precond<'a, T> {
    Jacobi(Vec<T>),
    Sgs { matrix: &'a CsrMatrix<T>, diag: Vec<T>, diag_pos: Vec<usize> },
    /// Unit lower and upper factors stored in one matrix.
    Ilu { factors: CsrMatrix<T>, diag_pos: Vec<usize> },
}

fn diagonal_positions<T: Real>(matrix: &CsrMatrix<T>) -> Vec<usize> {
    (0..matrix.n_rows)
        .map(|i| {
            let (cols, _) = matrix.row(i);
            matrix.row_ptr[i] + cols.partition_point(|&c| (c as usize) < i)
        })
        .collect()
}

/// ILU(0) in IKJ order. Pivots that collapse below `max(1e-8, sqrt(eps))` of
/// the original diagonal are reset to it. On a singular system with zero row sums the last
/// pivot is zero up to accumulated rounding, which grows with `n`.
fn ilu0<T: Real>(matrix: &CsrMatrix<T>) -> (CsrMatrix<T>, Vec<usize>) {
    let mut f = matrix.clone();
    let diag_pos = diagonal_positions(&f);
    let n = f.n_rows;
    let mut marker = vec![usize::MAX; n];
    let floor = T::epsilon().sqrt().max(lit(1e-8));
    for i in 0..n {
        let (start, end) = (f.row_ptr[i], f.row_ptr[i + 1]);
        for k in start..end {
            marker[f.col_idx[k] as usize] = k;
        }
        for kk in start..diag_pos[i] {
            let k = f.col_idx[kk] as usize;
            let pivot = f.values[diag_pos[k]];
            let lik = f.values[kk] / pivot;
            f.values[kk] = lik;
            for jj in diag_pos[k] + 1..f.row_ptr[k + 1] {
                let pos = marker[f.col_idx[jj] as usize];
                if pos != usize::MAX {
                    let v = f.values[jj];
                    f.values[pos] -= lik * v;
                }
            }
        }
        let orig = matrix.values.get(diag_pos[i]).copied().unwrap_or(T::one());
        let has_diag = diag_pos[i] < end && f.col_idx[diag_pos[i]] as usize == i;
        assert!(has_diag, "ILU(0) needs a structurally nonzero diagonal (row {i})");
        let d = f.values[diag_pos[i]];
        if !(d.abs() > floor * orig.abs()) {
            f.values[diag_pos[i]] = if orig == T::zero() { T::one() } else { orig };
        }
        for k in start..end {
            marker[f.col_idx[k] as usize] = usize::MAX;
        }
    }
    (f, diag_pos)
}

impl<'a, T: Real> Precond<'a, T> {
    fn new(matrix: &'a CsrMatrix<T>, kind: Preconditioner) -> Self {
        let diag: Vec<T> = matrix.diagonal().into_iter().map(|d| if d == T::zero() { T::one() } else { d }).collect();
        match kind {
            Preconditioner::Jacobi => Precond::Jacobi(diag.into_iter().map(|d| T::one() / d).collect()),
            Preconditioner::SymmetricGaussSeidel => {
                let diag_pos = diagonal_positions(matrix);
                Precond::Sgs { matrix, diag, diag_pos }
            }
            Preconditioner::Ilu0 => {
                let (factors, diag_pos) = ilu0(matrix);
                Precond::Ilu { factors, diag_pos }
            }
        }
    }

    /// Whether all pivots are positive, which makes the preconditioner
    /// of a symmetric matrix positive definite.
    fn is_positive(&self) -> bool {
        match self {
            Precond::Jacobi(inv) => inv.iter().all(|&d| d > T::zero()),
            Precond::Sgs { diag, .. } => diag.iter().all(|&d| d > T::zero()),
            Precond::Ilu { factors, diag_pos } => diag_pos.iter().all(|&k| factors.values[k] > T::zero()),
        }
    }

    /// `z = M^{-1} r`.
    fn apply(&self, r: &[T], z: &mut [T]) {
        match self {
            Precond::Jacobi(inv) => {
                for ((zi, &ri), &d) in z.iter_mut().zip(r).zip(inv) {
                    *zi = ri * d;
                }
            }
            Precond::Sgs { matrix, diag, diag_pos } => {
                // (D + L) y = r
                let n = r.len();
                for i in 0..n {
                    let start = matrix.row_ptr[i];
                    let mut s = r[i];
                    for k in start..diag_pos[i] {
                        s -= matrix.values[k] * z[matrix.col_idx[k] as usize];
                    }
                    z[i] = s / diag[i];
                }
                // (D + U) z = D y
                for i in (0..n).rev() {
                    let end = matrix.row_ptr[i + 1];
                    let mut s = z[i] * diag[i];
                    let first_upper = if diag_pos[i] < end && matrix.col_idx[diag_pos[i]] as usize == i {
                        diag_pos[i] + 1
                    } else {
                        diag_pos[i]
                    };
                    for k in first_upper..end {
                        s -= matrix.values[k] * z[matrix.col_idx[k] as usize];
                    }
                    z[i] = s / diag[i];
                }
            }
            Precond::Ilu { factors: f, diag_pos } => {
                let n = r.len();
                for i in 0..n {
                    let mut s = r[i];
                    for k in f.row_ptr[i]..diag_pos[i] {
                        s -= f.values[k] * z[f.col_idx[k] as usize];
                    }
                    z[i] = s;
                }
                for i in (0..n).rev() {
                    let mut s = z[i];
                    for k in diag_pos[i] + 1..f.row_ptr[i + 1] {
                        s -= f.values[k] * z[f.col_idx[k] as usize];
                    }
                    z[i] = s / f.values[diag_pos[i]];
                }
            }
        }
    }
}

fn cg<T: Real>(a: &CsrMatrix<T>, b: &[T], m: &Precond<T>, cfg: &SolverConfig<T>) -> Result<(Vec<T>, SolveStats)> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut z = vec![T::zero(); n];
    m.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    let mut stats = SolveStats::default();
    if !(rz > T::zero()) {
        return Err(Error::Indefinite { iterations: 0, operator: "preconditioner" });
    }
    for it in 1..=cfg.max_iterations {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::Indefinite { iterations: it - 1, operator: "matrix" });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / bnorm;
        stats.iterations = it;
        stats.history.push(to_f64(rel));
        if rel <= cfg.tolerance {
            break;
        }
        m.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        if !(rz_new > T::zero()) {
            return Err(Error::Indefinite { iterations: it, operator: "preconditioner" });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok((x, stats))
}

fn bicgstab<T: Real>(a: &CsrMatrix<T>, b: &[T], m: &Precond<T>, cfg: &SolverConfig<T>) -> (Vec<T>, SolveStats) {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (T::one(), T::one(), T::one());
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut y = vec![T::zero(); n];
    let mut s = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut t = vec![T::zero(); n];
    let mut stats = SolveStats::default();
    for it in 1..=cfg.max_iterations {
        stats.iterations = it;
        let mut rho_new = dot(&r_hat, &r);
        if rho_new == T::zero() || omega == T::zero() {
            // breakdown: restart the shadow residual
            r_hat.copy_from_slice(&r);
            rho_new = dot(&r_hat, &r);
            p.iter_mut().for_each(|v| *v = T::zero());
            v.iter_mut().for_each(|v| *v = T::zero());
            rho = T::one();
            alpha = T::one();
            omega = T::one();
            if rho_new == T::zero() {
                break;
            }
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        m.apply(&p, &mut y);
        a.mul_vec_into(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == T::zero() {
            omega = T::zero();
            continue;
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let snorm = norm(&s) / bnorm;
        if snorm <= cfg.tolerance {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            r.copy_from_slice(&s);
            stats.history.push(to_f64(snorm));
            break;
        }
        m.apply(&s, &mut z);
        a.mul_vec_into(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt == T::zero() { T::zero() } else { dot(&t, &s) / tt };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        let rel = norm(&r) / bnorm;
        stats.history.push(to_f64(rel));
        if rel <= cfg.tolerance {
            break;
        }
    }
    (x, stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> CsrMatrix<f64> {
        CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)]).unwrap()
    }

    fn path_laplacian(n: usize) -> CsrMatrix<f64> {
        let mut t = Vec::new();
        for i in 0..n - 1 {
            let (a, b) = (i as u32, i as u32 + 1);
            t.extend([(a, a, 1.0), (b, b, 1.0), (a, b, -1.0), (b, a, -1.0)]);
        }
        CsrMatrix::from_triplets(n, n, t).unwrap()
    }

    #[test]
    fn two_node_chain() {
        for method in [Method::ConjugateGradient, Method::BiCgStab] {
            for preconditioner in [Preconditioner::Jacobi, Preconditioner::SymmetricGaussSeidel] {
                let cfg = SolverConfig { method, preconditioner, ..Default::default() };
                let (x, _) = solve_matrix(&chain(), true, &[1.0, -1.0], &cfg).unwrap();
                assert!((x[0] - 0.5).abs() < 1e-12 && (x[1] + 0.5).abs() < 1e-12, "{x:?}");
            }
        }
    }

    #[test]
    fn zero_load_gives_zero() {
        let (x, stats) = solve_matrix(&chain(), true, &[0.0, 0.0], &SolverConfig::default()).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn incompatible_load_is_rejected() {
        let err = solve_matrix(&chain(), true, &[1.0, 0.0], &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::IncompatibleLoad { .. }));
    }

    #[test]
    fn non_convergence_carries_history() {
        let a = path_laplacian(200);
        let mut b = vec![0.0; 200];
        b[0] = 1.0;
        b[199] = -1.0;
        let cfg = SolverConfig { max_iterations: 3, ..Default::default() };
        match solve_matrix(&a, true, &b, &cfg) {
            Err(Error::NotConverged { iterations, history, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn path_solution_is_linear() {
        let n = 50;
        let a = path_laplacian(n);
        let mut b = vec![0.0; n];
        b[0] = -1.0;
        b[n - 1] = 1.0;
        for preconditioner in [Preconditioner::Jacobi, Preconditioner::SymmetricGaussSeidel] {
            for method in [Method::ConjugateGradient, Method::BiCgStab] {
                let cfg = SolverConfig { method, preconditioner, tolerance: 1e-12, ..Default::default() };
                let (x, stats) = solve_matrix(&a, true, &b, &cfg).unwrap();
                assert!(stats.residual <= 1e-11);
                for i in 1..n {
                    assert!((x[i] - x[i - 1] - 1.0).abs() < 1e-8);
                }
            }
        }
    }
}
