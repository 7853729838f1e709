//! Error measures between forward solutions and a single-dipole scan.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::real::{from_usize, lit, Real};
use crate::vec3::Vec3;

fn norm2<T: Real>(v: &[T]) -> T {
    v.iter().map(|x| *x * *x).sum::<T>().sqrt()
}

/// Copy of `v` with its mean removed.
pub fn zero_mean<T: Real>(v: &[T]) -> Vec<T> {
    let mean = v.iter().copied().sum::<T>() / from_usize(v.len().max(1));
    v.iter().map(|x| *x - mean).collect()
}

/// Relative difference measure in percent, between 0 and 100.
pub fn rdm<T: Real>(reference: &[T], numeric: &[T]) -> Result<T> {
    if reference.len() != numeric.len() || reference.len() < 2 {
        return Err(Error::DimensionMismatch { expected: reference.len().max(2), actual: numeric.len() });
    }
    let (a, b) = (zero_mean(reference), zero_mean(numeric));
    let (na, nb) = (norm2(&a), norm2(&b));
    if !(na > T::zero()) || !(nb > T::zero()) {
        return Err(Error::Metric("RDM of a zero potential vector".into()));
    }
    let d = a.iter().zip(&b).map(|(x, y)| (*x / na - *y / nb).powi(2)).sum::<T>().sqrt();
    Ok(lit::<T>(50.0) * d)
}

/// Magnitude error in percent, at least -100.
pub fn mag<T: Real>(reference: &[T], numeric: &[T]) -> Result<T> {
    if reference.len() != numeric.len() || reference.is_empty() {
        return Err(Error::DimensionMismatch { expected: reference.len().max(1), actual: numeric.len() });
    }
    let na = norm2(&zero_mean(reference));
    if !(na > T::zero()) {
        return Err(Error::Metric("MAG against a zero reference".into()));
    }
    let nb = norm2(&zero_mean(numeric));
    Ok(lit::<T>(100.0) * (nb / na - T::one()))
}

/// Potentials per unit moment: `n_electrodes x 3 n_sources`, row-major,
/// every column zero mean.
#[derive(Clone, Debug, PartialEq)]
pub struct LeadField<T> {
    pub n_electrodes: usize,
    pub positions: Vec<Vec3<T>>,
    pub values: Vec<T>,
}

impl<T: Real> LeadField<T> {
    /// Builds from one `n_electrodes x 3` block per source, given as three
    /// columns of potentials; columns are re-referenced.
    pub fn from_columns(n_electrodes: usize, positions: Vec<Vec3<T>>, columns: Vec<[Vec<T>; 3]>) -> Result<Self> {
        if columns.len() != positions.len() {
            return Err(Error::DimensionMismatch { expected: positions.len(), actual: columns.len() });
        }
        let n_cols = 3 * positions.len();
        let mut values = vec![T::zero(); n_electrodes * n_cols];
        for (s, block) in columns.iter().enumerate() {
            for (k, col) in block.iter().enumerate() {
                if col.len() != n_electrodes {
                    return Err(Error::DimensionMismatch { expected: n_electrodes, actual: col.len() });
                }
                for (e, v) in zero_mean(col).into_iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::Metric(format!("non-finite lead field entry at source {s}")));
                    }
                    values[e * n_cols + 3 * s + k] = v;
                }
            }
        }
        Ok(Self { n_electrodes, positions, values })
    }

    pub fn n_sources(&self) -> usize {
        self.positions.len()
    }

    pub fn n_columns(&self) -> usize {
        3 * self.positions.len()
    }

    pub fn get(&self, electrode: usize, column: usize) -> T {
        self.values[electrode * self.n_columns() + column]
    }

    pub fn column(&self, column: usize) -> Vec<T> {
        (0..self.n_electrodes).map(|e| self.get(e, column)).collect()
    }

    /// Potentials of a dipole with `moment` at source `s`.
    pub fn forward(&self, s: usize, moment: Vec3<T>) -> Vec<T> {
        (0..self.n_electrodes)
            .map(|e| (0..3).map(|k| self.get(e, 3 * s + k) * moment[k]).sum())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanResult<T> {
    pub source: usize,
    /// Explained variance in percent.
    pub goodness_of_fit: T,
    pub moment: Vec3<T>,
}

fn fit_source<T: Real>(lf: &LeadField<T>, s: usize, data: &[T], data_sq: T) -> Option<(T, Vec3<T>)> {
    let cols: Vec<Vec<T>> = (0..3).map(|k| lf.column(3 * s + k)).collect();
    let dot = |a: &[T], b: &[T]| a.iter().zip(b).map(|(x, y)| *x * *y).sum::<T>();
    let mut g = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for a in 0..3 {
        for b in 0..3 {
            g[a][b] = dot(&cols[a], &cols[b]).to_f64().unwrap_or(f64::NAN);
        }
        rhs[a] = dot(&cols[a], data).to_f64().unwrap_or(f64::NAN);
    }
    let m = nalgebra::Matrix3::from_fn(|i, j| g[i][j]);
    let eig = m.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo <= 1e-12 * hi {
        return None;
    }
    let x = m.cholesky()?.solve(&nalgebra::Vector3::from(rhs));
    let moment: Vec3<T> = [lit(x[0]), lit(x[1]), lit(x[2])];
    let explained: f64 = (0..3).map(|k| x[k] * rhs[k]).sum();
    let gof = 100.0 * explained / data_sq.to_f64().unwrap_or(f64::NAN);
    Some((lit(gof), moment))
}

/// Single-dipole scan: fits every source's three columns to `data` in the
/// least-squares sense and returns the best fit. Sources whose block has
/// rank below three are skipped.
pub fn dipole_scan<T: Real>(lf: &LeadField<T>, data: &[T]) -> Result<ScanResult<T>> {
    if data.len() != lf.n_electrodes {
        return Err(Error::DimensionMismatch { expected: lf.n_electrodes, actual: data.len() });
    }
    let data = zero_mean(data);
    let data_sq = data.iter().map(|x| *x * *x).sum::<T>();
    if !(data_sq > T::zero()) {
        return Err(Error::Metric("dipole scan of zero data".into()));
    }
    let fits: Vec<Option<(T, Vec3<T>)>> =
        (0..lf.n_sources()).into_par_iter().map(|s| fit_source(lf, s, &data, data_sq)).collect();
    let mut best: Option<ScanResult<T>> = None;
    for (s, fit) in fits.into_iter().enumerate() {
        match fit {
            None => log::warn!("dipole scan skips source {s}: lead field block is rank deficient"),
            Some((gof, moment)) => {
                if best.map_or(true, |b| gof > b.goodness_of_fit) {
                    best = Some(ScanResult { source: s, goodness_of_fit: gof, moment });
                }
            }
        }
    }
    best.ok_or_else(|| Error::Metric("no source with a full-rank lead field block".into()))
}

/// Per-bin summary of a metric over eccentricity.
#[derive(Clone, Debug, PartialEq)]
pub struct BinSummary {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub median: f64,
    pub max: f64,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Groups `(eccentricity, value)` pairs into bins of `width` starting at 0;
/// `max` is taken over absolute values. Empty bins are omitted.
pub fn bin_by_eccentricity(samples: &[(f64, f64)], width: f64) -> Vec<BinSummary> {
    let mut bins: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for &(e, v) in samples {
        bins.entry((e / width + 1e-9).floor() as usize).or_default().push(v);
    }
    bins.into_iter()
        .map(|(k, v)| BinSummary {
            lower: k as f64 * width,
            upper: (k + 1) as f64 * width,
            count: v.len(),
            median: median(&v).expect("bins are non-empty"),
            max: v.iter().fold(0.0f64, |a, x| a.max(x.abs())),
        })
        .collect()
}
