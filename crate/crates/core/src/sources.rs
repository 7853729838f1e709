//! Dipole sources, the Venant monopole model and regular source grids.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fem::Discretization;
use crate::geometry::cut::SnippetShape;
use crate::geometry::partition::CellClass;
use crate::geometry::quadrature::ReferenceRule;
use crate::real::{lit, to_f64, Real};
use crate::vec3::{self, Vec3};

/// Current dipole; position in mm, moment in nAm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dipole<T> {
    pub position: Vec3<T>,
    pub moment: Vec3<T>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Neighborhood {
    ContainingCell,
    #[default]
    CellAndFaceNeighbors,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VenantConfig<T> {
    /// Highest monomial degree whose moments are matched or minimized.
    pub order: usize,
    /// Tikhonov weight on the charges.
    pub regularization: T,
    /// Quadrature degree defining the monopole sites.
    pub quadrature_order: usize,
    pub neighborhood: Neighborhood,
}

impl<T: Real> Default for VenantConfig<T> {
    fn default() -> Self {
        Self { order: 2, regularization: lit(1e-6), quadrature_order: 2, neighborhood: Neighborhood::CellAndFaceNeighbors }
    }
}

impl<T: Real> VenantConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::Configuration("Venant moment order must be at least 1".into()));
        }
        if !(self.regularization >= T::zero()) {
            return Err(Error::Configuration("Venant regularization must be non-negative".into()));
        }
        Ok(())
    }
}

/// Candidate monopole sites around `position`: quadrature points of the
/// source-compartment snippets in the configured cell neighborhood.
pub fn monopole_sites<T: Real>(
    disc: &Discretization<T>,
    compartment: usize,
    position: Vec3<T>,
    cfg: &VenantConfig<T>,
) -> Result<Vec<Vec3<T>>> {
    let cell = disc.locate_in_compartment(position, compartment).ok_or_else(|| {
        Error::Source(format!("dipole at {:?} lies outside source compartment {compartment}", vec3::to_f64(position)))
    })?;
    let mut cells = vec![cell];
    if cfg.neighborhood == Neighborhood::CellAndFaceNeighbors {
        cells.extend(disc.mesh.face_neighbors(cell));
    }
    let tet_rule = ReferenceRule::<T, 3>::tetrahedron(cfg.quadrature_order)?;
    let box_rule = ReferenceRule::<T, 3>::unit_cube(cfg.quadrature_order)?;
    let mut sites = Vec::new();
    for c in cells {
        match disc.partition.classes[c] {
            CellClass::Interior(k) if k == compartment => {
                let min = disc.mesh.cell_min(c);
                let max = vec3::add(min, [disc.mesh.h; 3]);
                box_rule.for_each_on_box(min, max, |x, _| sites.push(x));
            }
            CellClass::Cut => {
                let cut = disc.partition.cut(c).expect("cut cell has a decomposition");
                for s in cut.snippets.iter().filter(|s| s.compartment == compartment) {
                    match &s.shape {
                        SnippetShape::Tetrahedron(v) => tet_rule.for_each_on_tet(v, |x, _| sites.push(x)),
                        SnippetShape::Cuboid { min, max } => box_rule.for_each_on_box(*min, *max, |x, _| sites.push(x)),
                    }
                }
            }
            _ => {}
        }
    }
    Ok(sites)
}

/// Exponents of all monomials with total degree in `lo..=hi`.
fn exponents(lo: usize, hi: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for deg in lo..=hi {
        for a in (0..=deg).rev() {
            for b in (0..=deg - a).rev() {
                out.push([a, b, deg - a - b]);
            }
        }
    }
    out
}

/// Solves a small dense system with partial pivoting. Returns `None` when a
/// pivot falls below `rel_tol` times the largest entry.
pub(crate) fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>, rel_tol: f64) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k].abs() <= rel_tol * scale {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f != 0.0 {
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    Some(x)
}

/// Charges on `sites` reproducing the dipole: zeroth and first moments are
/// matched exactly, higher moments up to `cfg.order` are minimized together
/// with `regularization * |q|^2`. Moments are taken in units of `length`.
pub fn venant_charges<T: Real>(
    dipole: &Dipole<T>,
    sites: &[Vec3<T>],
    length: T,
    cfg: &VenantConfig<T>,
) -> Result<Vec<T>> {
    cfg.validate()?;
    let m = sites.len();
    if m < 4 {
        return Err(Error::Source(format!("only {m} monopole sites available, at least 4 are needed")));
    }
    let l = to_f64(length);
    let x0 = vec3::to_f64(dipole.position);
    let rel: Vec<[f64; 3]> = sites
        .iter()
        .map(|s| {
            let p = vec3::to_f64(*s);
            [(p[0] - x0[0]) / l, (p[1] - x0[1]) / l, (p[2] - x0[2]) / l]
        })
        .collect();
    let mono = |e: &[usize; 3], r: &[f64; 3]| r[0].powi(e[0] as i32) * r[1].powi(e[1] as i32) * r[2].powi(e[2] as i32);
    let low = exponents(0, 1);
    let high = exponents(2, cfg.order);
    // C: 4 x m constraint rows, H: k x m penalized moments
    let c: Vec<Vec<f64>> = low.iter().map(|e| rel.iter().map(|r| mono(e, r)).collect()).collect();
    let h: Vec<Vec<f64>> = high.iter().map(|e| rel.iter().map(|r| mono(e, r)).collect()).collect();
    let lambda = to_f64(cfg.regularization);
    let k = h.len();

    // Y = C^T - H^T S^{-1} H C^T with S = lambda I + H H^T, so that
    // Y = lambda (H^T H + lambda I)^{-1} C^T.
    let mut y: Vec<Vec<f64>> = (0..m).map(|i| (0..4).map(|j| c[j][i]).collect()).collect();
    if k > 0 {
        let mut s = vec![vec![0.0; k]; k];
        for a in 0..k {
            for b in a..k {
                let v: f64 = h[a].iter().zip(&h[b]).map(|(x, y)| x * y).sum();
                s[a][b] = v;
                s[b][a] = v;
            }
            s[a][a] += lambda;
        }
        for j in 0..4 {
            let hc: Vec<f64> = (0..k).map(|a| h[a].iter().zip(&c[j]).map(|(x, y)| x * y).sum()).collect();
            let z = solve_dense(s.clone(), hc, 1e-300)
                .ok_or_else(|| Error::Source("singular higher-moment system; enlarge the neighborhood".into()))?;
            for (i, yi) in y.iter_mut().enumerate() {
                yi[j] -= (0..k).map(|a| h[a][i] * z[a]).sum::<f64>();
            }
        }
    }
    // G = C Y (4 x 4)
    let g: Vec<Vec<f64>> =
        (0..4).map(|a| (0..4).map(|b| (0..m).map(|i| c[a][i] * y[i][b]).sum()).collect()).collect();
    let mom = vec3::to_f64(dipole.moment);
    let d = vec![0.0, mom[0] / l, mom[1] / l, mom[2] / l];
    let rank_error = || Error::Source("monopole sites do not span the dipole moments; enlarge the neighborhood".into());
    let mut q = vec![0.0; m];
    let mut target = d.clone();
    for _ in 0..2 {
        let w = solve_dense(g.clone(), target.clone(), 1e-12).ok_or_else(rank_error)?;
        for (i, qi) in q.iter_mut().enumerate() {
            *qi += (0..4).map(|b| y[i][b] * w[b]).sum::<f64>();
        }
        // refine against the constraint residual
        for a in 0..4 {
            target[a] = d[a] - (0..m).map(|i| c[a][i] * q[i]).sum::<f64>();
        }
    }
    Ok(q.into_iter().map(lit).collect())
}

/// Venant monopoles `(position, charge)` for a dipole in `compartment`.
pub fn venant_monopoles<T: Real>(
    dipole: &Dipole<T>,
    disc: &Discretization<T>,
    compartment: usize,
    cfg: &VenantConfig<T>,
) -> Result<Vec<(Vec3<T>, T)>> {
    let sites = monopole_sites(disc, compartment, dipole.position, cfg)?;
    let q = venant_charges(dipole, &sites, disc.mesh.h, cfg)?;
    Ok(sites.into_iter().zip(q).collect())
}

/// A point of a regular source grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourcePoint<T> {
    pub position: Vec3<T>,
    /// Distance to the compartment boundary estimated from the level set.
    pub depth: T,
    /// Closer than one background cell to the compartment boundary.
    pub near_boundary: bool,
}

/// Points `anchor + spacing * k` strictly inside `compartment`, both by the
/// level sets and by the discrete snippets.
pub fn source_grid<T: Real>(
    disc: &Discretization<T>,
    compartment: usize,
    anchor: Vec3<T>,
    spacing: T,
) -> Result<Vec<SourcePoint<T>>> {
    if !(spacing > T::zero()) {
        return Err(Error::Configuration("source grid spacing must be positive".into()));
    }
    let lo = disc.mesh.origin;
    let hi = disc.mesh.upper_corner();
    let range = |a: usize| {
        let first = ((lo[a] - anchor[a]) / spacing).ceil().to_i64().unwrap_or(0);
        let last = ((hi[a] - anchor[a]) / spacing).floor().to_i64().unwrap_or(-1);
        first..=last
    };
    let ls = &disc.model.compartments[compartment].level_set;
    let mut out = Vec::new();
    for k in range(2) {
        for j in range(1) {
            for i in range(0) {
                let p = [
                    anchor[0] + lit::<T>(i as f64) * spacing,
                    anchor[1] + lit::<T>(j as f64) * spacing,
                    anchor[2] + lit::<T>(k as f64) * spacing,
                ];
                let phi = ls.value(p);
                if disc.model.compartment_of(p) != Some(compartment) || !(phi < T::zero()) {
                    continue;
                }
                if disc.locate_in_compartment(p, compartment).is_none() {
                    continue;
                }
                out.push(SourcePoint { position: p, depth: -phi, near_boundary: -phi < disc.mesh.h });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Source(format!("source grid with spacing {} has no point in compartment {compartment}", to_f64(spacing))));
    }
    Ok(out)
}

/// Reads `x y z [mx my mz]` lines; `#` starts a comment.
pub fn read_points<T: Real>(path: &Path) -> Result<Vec<(Vec3<T>, Option<Vec3<T>>)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format { path: path.to_path_buf(), reason: format!("line {}: {e}", lineno + 1) })?;
        match vals.len() {
            3 => out.push((vec3::cast([vals[0], vals[1], vals[2]]), None)),
            6 => out.push((vec3::cast([vals[0], vals[1], vals[2]]), Some(vec3::cast([vals[3], vals[4], vals[5]])))),
            n => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    reason: format!("line {}: expected 3 or 6 numbers, found {n}", lineno + 1),
                })
            }
        }
    }
    Ok(out)
}

pub fn write_points<T: Real>(path: &Path, points: &[(Vec3<T>, Option<Vec3<T>>)]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for (p, m) in points {
        let p = vec3::to_f64(*p);
        match m {
            Some(m) => {
                let m = vec3::to_f64(*m);
                writeln!(out, "{} {} {} {} {} {}", p[0], p[1], p[2], m[0], m[1], m[2])?;
            }
            None => writeln!(out, "{} {} {}", p[0], p[1], p[2])?,
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads dipoles; lines without a moment are rejected.
pub fn read_dipoles<T: Real>(path: &Path) -> Result<Vec<Dipole<T>>> {
    read_points(path)?
        .into_iter()
        .enumerate()
        .map(|(i, (position, moment))| {
            moment.map(|moment| Dipole { position, moment }).ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                reason: format!("entry {} has no moment", i + 1),
            })
        })
        .collect()
}

/// Fibonacci lattice of `n` points on a sphere.
pub fn fibonacci_sphere<T: Real>(center: Vec3<T>, radius: T, n: usize) -> Vec<Vec3<T>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let d: Vec3<T> = vec3::cast([r * phi.cos(), r * phi.sin(), z]);
            vec3::add(center, vec3::scale(d, radius))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_exponents() {
        assert_eq!(exponents(0, 1).len(), 4);
        assert_eq!(exponents(2, 2).len(), 6);
        assert_eq!(exponents(2, 3).len(), 16);
    }

    #[test]
    fn dense_solver() {
        let x = solve_dense(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0], 1e-14).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15 && (x[1] - 1.4).abs() < 1e-15);
        assert!(solve_dense(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0], 1e-12).is_none());
    }

    #[test]
    fn charges_match_moments_on_a_cube_lattice() {
        let mut sites = Vec::new();
        for k in 0..3 {
            for j in 0..3 {
                for i in 0..3 {
                    sites.push([i as f64 - 1.0, j as f64 - 1.0, k as f64 - 1.0]);
                }
            }
        }
        let dip = Dipole { position: [0.1, -0.2, 0.05], moment: [1.0, 2.0, -0.5] };
        let q = venant_charges(&dip, &sites, 1.0, &VenantConfig::default()).unwrap();
        let l1: f64 = q.iter().map(|v| v.abs()).sum();
        assert!(q.iter().sum::<f64>().abs() <= 1e-12 * l1);
        for a in 0..3 {
            let m: f64 = q.iter().zip(&sites).map(|(q, s)| q * (s[a] - dip.position[a])).sum();
            assert!((m - dip.moment[a]).abs() < 1e-10);
        }
        assert!(venant_charges(&dip, &sites[..3], 1.0, &VenantConfig::default()).is_err());
    }

    #[test]
    fn collinear_sites_are_rank_deficient() {
        let sites: Vec<[f64; 3]> = (0..6).map(|i| [i as f64, 0.0, 0.0]).collect();
        let dip = Dipole { position: [2.5, 0.0, 0.0], moment: [0.0, 1.0, 0.0] };
        assert!(matches!(venant_charges(&dip, &sites, 1.0, &VenantConfig::default()), Err(Error::Source(_))));
    }

    #[test]
    fn fibonacci_points_lie_on_sphere() {
        let pts = fibonacci_sphere::<f64>([1.0, 2.0, 3.0], 5.0, 50);
        assert_eq!(pts.len(), 50);
        for p in pts {
            assert!((vec3::distance(p, [1.0, 2.0, 3.0]) - 5.0).abs() < 1e-12);
        }
    }
}
