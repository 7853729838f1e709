//! Signed implicit surfaces describing compartment boundaries.
//!
//! Sign convention: negative inside the compartment, zero on its boundary,
//! positive outside.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::real::{from_usize, lit, Real};
use crate::vec3::{self, Vec3};

/// A regular grid of level-set samples with trilinear interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledGrid<T> {
    pub origin: Vec3<T>,
    pub spacing: Vec3<T>,
    /// Number of samples per axis.
    pub dims: [usize; 3],
    /// `dims[0] * dims[1] * dims[2]` values, x fastest.
    pub values: Vec<T>,
}

impl<T: Real> SampledGrid<T> {
    pub fn new(origin: Vec3<T>, spacing: Vec3<T>, dims: [usize; 3], values: Vec<T>) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::Configuration(format!("sampled grid needs at least 2 samples per axis, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > T::zero())) {
            return Err(Error::Configuration("sampled grid spacing must be positive".into()));
        }
        if values.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::DimensionMismatch { expected: dims[0] * dims[1] * dims[2], actual: values.len() });
        }
        Ok(Self { origin, spacing, dims, values })
    }

    /// Converts a tissue probability map into a level set `threshold - p`.
    pub fn from_probability(origin: Vec3<T>, spacing: Vec3<T>, dims: [usize; 3], probability: &[T], threshold: T) -> Result<Self> {
        let values = probability.iter().map(|&p| threshold - p).collect();
        Self::new(origin, spacing, dims, values)
    }

    pub fn upper_corner(&self) -> Vec3<T> {
        let mut c = self.origin;
        for a in 0..3 {
            c[a] += self.spacing[a] * from_usize::<T>(self.dims[a] - 1);
        }
        c
    }

    pub fn contains(&self, p: Vec3<T>) -> bool {
        let tol = T::geometric_epsilon();
        let hi = self.upper_corner();
        (0..3).all(|a| {
            let slack = tol * self.spacing[a];
            p[a] >= self.origin[a] - slack && p[a] <= hi[a] + slack
        })
    }

    #[inline]
    fn sample(&self, i: usize, j: usize, k: usize) -> T {
        self.values[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    /// Cell index and local coordinate along axis `a`, clamped to the grid.
    #[inline]
    fn locate_axis(&self, p: T, a: usize) -> (usize, T) {
        let s = (p - self.origin[a]) / self.spacing[a];
        let max_cell = self.dims[a] - 2;
        let c = s.floor().max(T::zero()).to_usize().unwrap_or(0).min(max_cell);
        let t = (s - from_usize::<T>(c)).max(T::zero()).min(T::one());
        (c, t)
    }

    /// Trilinear value and gradient, clamping `p` to the grid.
    pub fn value_and_gradient(&self, p: Vec3<T>) -> (T, Vec3<T>) {
        let (i, tx) = self.locate_axis(p[0], 0);
        let (j, ty) = self.locate_axis(p[1], 1);
        let (k, tz) = self.locate_axis(p[2], 2);
        let mut c = [T::zero(); 8];
        for (n, v) in c.iter_mut().enumerate() {
            *v = self.sample(i + (n & 1), j + ((n >> 1) & 1), k + ((n >> 2) & 1));
        }
        let one = T::one();
        let lerp = |a: T, b: T, t: T| a + (b - a) * t;
        let x00 = lerp(c[0], c[1], tx);
        let x10 = lerp(c[2], c[3], tx);
        let x01 = lerp(c[4], c[5], tx);
        let x11 = lerp(c[6], c[7], tx);
        let y0 = lerp(x00, x10, ty);
        let y1 = lerp(x01, x11, ty);
        let value = lerp(y0, y1, tz);

        let dx = ((c[1] - c[0]) * (one - ty) * (one - tz)
            + (c[3] - c[2]) * ty * (one - tz)
            + (c[5] - c[4]) * (one - ty) * tz
            + (c[7] - c[6]) * ty * tz)
            / self.spacing[0];
        let dy = ((x10 - x00) * (one - tz) + (x11 - x01) * tz) / self.spacing[1];
        let dz = (y1 - y0) / self.spacing[2];
        (value, [dx, dy, dz])
    }

    /// Bounding box of the samples with non-positive value, if any.
    pub fn negative_bounds(&self) -> Option<(Vec3<T>, Vec3<T>)> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for k in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                for i in 0..self.dims[0] {
                    if self.sample(i, j, k) <= T::zero() {
                        any = true;
                        for (a, idx) in [i, j, k].into_iter().enumerate() {
                            lo[a] = lo[a].min(idx);
                            hi[a] = hi[a].max(idx);
                        }
                    }
                }
            }
        }
        if !any {
            return None;
        }
        let mut min = self.origin;
        let mut max = self.origin;
        for a in 0..3 {
            // the zero crossing may extend up to one spacing beyond the last negative sample
            min[a] += self.spacing[a] * from_usize::<T>(lo[a].saturating_sub(1));
            max[a] += self.spacing[a] * from_usize::<T>((hi[a] + 1).min(self.dims[a] - 1));
        }
        Some((min, max))
    }

    /// Reads the `LSGRID` volume format: one ASCII header line
    /// `LSGRID nx ny nz ox oy oz sx sy sz` followed by `nx*ny*nz`
    /// little-endian `f32` values, x fastest.
    pub fn read_lsgrid(path: &Path) -> Result<Self> {
        let file = fs::File::open(path)?;
        let mut reader = BufReader::new(file);
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.len() != 10 || tokens[0] != "LSGRID" {
            return Err(bad(format!("expected `LSGRID nx ny nz ox oy oz sx sy sz`, got `{}`", header.trim_end())));
        }
        let mut dims = [0usize; 3];
        for a in 0..3 {
            dims[a] = tokens[1 + a].parse().map_err(|e| bad(format!("bad dimension: {e}")))?;
        }
        let mut nums = [0f64; 6];
        for (n, tok) in nums.iter_mut().zip(&tokens[4..]) {
            *n = tok.parse().map_err(|e| bad(format!("bad number `{tok}`: {e}")))?;
        }
        let count = dims[0] * dims[1] * dims[2];
        let mut bytes = Vec::with_capacity(count * 4);
        reader.read_to_end(&mut bytes)?;
        if bytes.len() != count * 4 {
            return Err(bad(format!("expected {} bytes of samples, found {}", count * 4, bytes.len())));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        Self::new([lit(nums[0]), lit(nums[1]), lit(nums[2])], [lit(nums[3]), lit(nums[4]), lit(nums[5])], dims, values)
    }

    pub fn write_lsgrid(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        let o = vec3::to_f64(self.origin);
        let s = vec3::to_f64(self.spacing);
        writeln!(
            out,
            "LSGRID {} {} {} {} {} {} {} {} {}",
            self.dims[0], self.dims[1], self.dims[2], o[0], o[1], o[2], s[0], s[1], s[2]
        )?;
        for &v in &self.values {
            out.write_all(&(v.to_f32().unwrap_or(f32::NAN)).to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Geometry of a level-set function.
#[derive(Clone, Debug, PartialEq)]
pub enum LevelSetKind<T> {
    /// `|x - center| - radius`.
    Sphere { center: Vec3<T>, radius: T },
    /// `normal . x - offset` with unit `normal`; the inside is the half space
    /// the normal points away from.
    HalfSpace { normal: Vec3<T>, offset: T },
    Sampled(SampledGrid<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelSetField<T> {
    pub kind: LevelSetKind<T>,
    pub compartment_id: usize,
}

impl<T: Real> LevelSetField<T> {
    pub fn sphere(center: Vec3<T>, radius: T, compartment_id: usize) -> Self {
        Self { kind: LevelSetKind::Sphere { center, radius }, compartment_id }
    }

    /// Half space `normal . x < offset`; `normal` is normalized here.
    pub fn half_space(normal: Vec3<T>, offset: T, compartment_id: usize) -> Result<Self> {
        let len = vec3::norm(normal);
        let unit = vec3::normalize(normal).ok_or_else(|| Error::Configuration("half-space normal must be nonzero".into()))?;
        Ok(Self { kind: LevelSetKind::HalfSpace { normal: unit, offset: offset / len }, compartment_id })
    }

    pub fn sampled(grid: SampledGrid<T>, compartment_id: usize) -> Self {
        Self { kind: LevelSetKind::Sampled(grid), compartment_id }
    }

    /// Evaluates the level set; sampled grids reject points outside the grid.
    pub fn eval(&self, p: Vec3<T>) -> Result<T> {
        if let LevelSetKind::Sampled(g) = &self.kind {
            if !g.contains(p) {
                return Err(Error::Domain(format!(
                    "point {:?} lies outside the sampled level-set grid",
                    vec3::to_f64(p)
                )));
            }
        }
        Ok(self.value(p))
    }

    /// Evaluates without bounds checking; sampled grids clamp to their box.
    #[inline]
    pub fn value(&self, p: Vec3<T>) -> T {
        match &self.kind {
            LevelSetKind::Sphere { center, radius } => vec3::distance(p, *center) - *radius,
            LevelSetKind::HalfSpace { normal, offset } => vec3::dot(*normal, p) - *offset,
            LevelSetKind::Sampled(g) => g.value_and_gradient(p).0,
        }
    }

    /// Gradient of the level set; for a sphere evaluated at its center an
    /// arbitrary unit vector is returned.
    pub fn gradient(&self, p: Vec3<T>) -> Vec3<T> {
        match &self.kind {
            LevelSetKind::Sphere { center, .. } => {
                vec3::normalize(vec3::sub(p, *center)).unwrap_or([T::one(), T::zero(), T::zero()])
            }
            LevelSetKind::HalfSpace { normal, .. } => *normal,
            LevelSetKind::Sampled(g) => g.value_and_gradient(p).1,
        }
    }

    /// Bounding box of the region where the level set is non-positive.
    /// `None` means unbounded (half spaces) or empty.
    pub fn support_bounds(&self) -> Option<(Vec3<T>, Vec3<T>)> {
        match &self.kind {
            LevelSetKind::Sphere { center, radius } => Some((
                vec3::sub(*center, [*radius; 3]),
                vec3::add(*center, [*radius; 3]),
            )),
            LevelSetKind::HalfSpace { .. } => None,
            LevelSetKind::Sampled(g) => g.negative_bounds(),
        }
    }

    /// Nearest point on the zero level set, found by Newton projection along
    /// the gradient (exact for spheres and half spaces).
    pub fn project_to_surface(&self, p: Vec3<T>) -> Vec3<T> {
        match &self.kind {
            LevelSetKind::Sphere { center, radius } => {
                let dir = vec3::normalize(vec3::sub(p, *center)).unwrap_or([T::one(), T::zero(), T::zero()]);
                vec3::add(*center, vec3::scale(dir, *radius))
            }
            LevelSetKind::HalfSpace { normal, offset } => {
                let d = vec3::dot(*normal, p) - *offset;
                vec3::sub(p, vec3::scale(*normal, d))
            }
            LevelSetKind::Sampled(g) => {
                let mut x = p;
                for _ in 0..32 {
                    let (v, grad) = g.value_and_gradient(x);
                    let gg = vec3::dot(grad, grad);
                    if !(gg > T::zero()) {
                        break;
                    }
                    let step = vec3::scale(grad, v / gg);
                    x = vec3::sub(x, step);
                    if vec3::norm(step) <= T::geometric_epsilon() * g.spacing[0] {
                        break;
                    }
                }
                x
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_evaluates_signed_distance() {
        let ls = LevelSetField::sphere([129.0, 127.0, 127.0], 78.0, 0);
        assert_eq!(ls.eval([129.0, 127.0, 127.0]).unwrap(), -78.0);
        let unit = LevelSetField::sphere([0.0; 3], 1.0, 0);
        assert_eq!(unit.eval([1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(unit.eval([2.0, 0.0, 0.0]).unwrap() > 0.0);
    }

    #[test]
    fn constant_grid_interpolates_constant() {
        let g = SampledGrid::<f64>::new([0.0; 3], [1.0; 3], [2, 2, 2], vec![0.5; 8]).unwrap();
        let ls = LevelSetField::sampled(g, 0);
        for p in [[0.3, 0.7, 0.1], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [0.5, 0.5, 0.5]] {
            assert!((ls.eval(p).unwrap() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_rejects_points_outside() {
        let g = SampledGrid::new([0.0; 3], [1.0; 3], [2, 2, 2], vec![0.5; 8]).unwrap();
        let ls = LevelSetField::sampled(g, 0);
        assert!(matches!(ls.eval([1.5, 0.5, 0.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn grid_reproduces_linear_functions_and_gradients() {
        let dims = [4, 3, 5];
        let mut values = Vec::new();
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let p = [i as f64 * 0.5, 1.0 + j as f64 * 2.0, -1.0 + k as f64];
                    values.push(2.0 * p[0] - p[1] + 0.25 * p[2] + 1.0);
                }
            }
        }
        let g = SampledGrid::new([0.0, 1.0, -1.0], [0.5, 2.0, 1.0], dims, values).unwrap();
        let p = [0.8, 3.3, 1.7];
        let (v, grad) = g.value_and_gradient(p);
        assert!((v - (2.0 * 0.8 - 3.3 + 0.25 * 1.7 + 1.0)).abs() < 1e-13);
        assert!((grad[0] - 2.0).abs() < 1e-13 && (grad[1] + 1.0).abs() < 1e-13 && (grad[2] - 0.25).abs() < 1e-13);
    }

    #[test]
    fn probability_maps_become_threshold_minus_p() {
        let g = SampledGrid::<f64>::from_probability([0.0; 3], [1.0; 3], [2, 2, 2], &[0.9; 8], 0.4).unwrap();
        assert!((g.values[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn lsgrid_file_round_trip() {
        let dir = std::env::temp_dir().join(format!("lsgrid-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("g.lsgrid");
        let values: Vec<f64> = (0..24).map(|i| i as f64 * 0.25 - 2.0).collect();
        let g = SampledGrid::new([1.0, 2.0, 3.0], [0.5, 0.5, 1.0], [2, 3, 4], values).unwrap();
        g.write_lsgrid(&path).unwrap();
        let back = SampledGrid::<f64>::read_lsgrid(&path).unwrap();
        assert_eq!(back, g);
        std::fs::write(&path, b"LSGRID 2 2 2 0 0 0 1 1 1\nabc").unwrap();
        assert!(matches!(SampledGrid::<f64>::read_lsgrid(&path), Err(Error::Format { .. })));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn projection_lands_on_surface() {
        let s = LevelSetField::<f64>::sphere([1.0, 2.0, 3.0], 4.0, 0);
        let q = s.project_to_surface([9.0, 2.0, 3.0]);
        assert!(s.value(q).abs() < 1e-14);
        let h = LevelSetField::<f64>::half_space([0.0, 2.0, 0.0], 3.0, 0).unwrap();
        let q = h.project_to_surface([5.0, 7.0, 1.0]);
        assert!((q[1] - 1.5).abs() < 1e-14);
    }
}
