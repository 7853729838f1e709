//! Regular axis-aligned hexahedral background mesh.

use crate::error::{Error, Result};
use crate::real::{from_usize, Real};
use crate::vec3::Vec3;

/// Index of a background cell, `i + nx * (j + ny * k)`.
pub type CellId = usize;
/// Index of a background vertex, `i + (nx + 1) * (j + (ny + 1) * k)`.
pub type VertexId = usize;
/// Index of a background face; faces normal to x come first, then y, then z.
pub type FaceId = usize;

#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundMesh<T> {
    pub origin: Vec3<T>,
    /// Edge length of every cubic cell.
    pub h: T,
    /// Number of cells per axis.
    pub dims: [usize; 3],
}

impl<T: Real> BackgroundMesh<T> {
    pub fn new(origin: Vec3<T>, h: T, dims: [usize; 3]) -> Result<Self> {
        if !(h > T::zero()) || !h.is_finite() {
            return Err(Error::Configuration("cell size must be positive".into()));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Configuration(format!("mesh dimensions must be nonzero, got {dims:?}")));
        }
        Ok(Self { origin, h, dims })
    }

    /// Smallest mesh with cell size `h` that covers `[min, max]` with at
    /// least `padding` cells of margin on every side.
    pub fn covering(min: Vec3<T>, max: Vec3<T>, h: T, padding: usize) -> Result<Self> {
        if !(h > T::zero()) {
            return Err(Error::Configuration("cell size must be positive".into()));
        }
        let mut origin = min;
        let mut dims = [0; 3];
        let pad = from_usize::<T>(padding) * h;
        for a in 0..3 {
            origin[a] = min[a] - pad;
            let span = max[a] + pad - origin[a];
            dims[a] = (span / h).ceil().to_usize().unwrap_or(1).max(1);
        }
        Self::new(origin, h, dims)
    }

    pub fn n_cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn vertex_dims(&self) -> [usize; 3] {
        [self.dims[0] + 1, self.dims[1] + 1, self.dims[2] + 1]
    }

    pub fn n_vertices(&self) -> usize {
        let v = self.vertex_dims();
        v[0] * v[1] * v[2]
    }

    pub fn cell_volume(&self) -> T {
        self.h * self.h * self.h
    }

    #[inline]
    pub fn cell_index(&self, ijk: [usize; 3]) -> CellId {
        ijk[0] + self.dims[0] * (ijk[1] + self.dims[1] * ijk[2])
    }

    #[inline]
    pub fn cell_ijk(&self, cell: CellId) -> [usize; 3] {
        let i = cell % self.dims[0];
        let r = cell / self.dims[0];
        [i, r % self.dims[1], r / self.dims[1]]
    }

    #[inline]
    pub fn vertex_index(&self, ijk: [usize; 3]) -> VertexId {
        let v = self.vertex_dims();
        ijk[0] + v[0] * (ijk[1] + v[1] * ijk[2])
    }

    #[inline]
    pub fn vertex_ijk(&self, vertex: VertexId) -> [usize; 3] {
        let v = self.vertex_dims();
        let i = vertex % v[0];
        let r = vertex / v[0];
        [i, r % v[1], r / v[1]]
    }

    pub fn vertex_position(&self, vertex: VertexId) -> Vec3<T> {
        let ijk = self.vertex_ijk(vertex);
        [
            self.origin[0] + from_usize::<T>(ijk[0]) * self.h,
            self.origin[1] + from_usize::<T>(ijk[1]) * self.h,
            self.origin[2] + from_usize::<T>(ijk[2]) * self.h,
        ]
    }

    /// Lower corner of a cell.
    #[inline]
    pub fn cell_min(&self, cell: CellId) -> Vec3<T> {
        let ijk = self.cell_ijk(cell);
        [
            self.origin[0] + from_usize::<T>(ijk[0]) * self.h,
            self.origin[1] + from_usize::<T>(ijk[1]) * self.h,
            self.origin[2] + from_usize::<T>(ijk[2]) * self.h,
        ]
    }

    pub fn cell_center(&self, cell: CellId) -> Vec3<T> {
        let half = self.h * crate::real::lit(0.5);
        let m = self.cell_min(cell);
        [m[0] + half, m[1] + half, m[2] + half]
    }

    /// The eight vertices of a cell; local corner `c` sits at offset
    /// `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
    #[inline]
    pub fn cell_vertices(&self, cell: CellId) -> [VertexId; 8] {
        let [i, j, k] = self.cell_ijk(cell);
        let mut out = [0; 8];
        for (c, v) in out.iter_mut().enumerate() {
            *v = self.vertex_index([i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)]);
        }
        out
    }

    /// Cell containing `p`, if inside the mesh. Points on shared faces are
    /// assigned to the upper cell except on the upper mesh boundary.
    pub fn locate(&self, p: Vec3<T>) -> Option<CellId> {
        let mut ijk = [0; 3];
        for a in 0..3 {
            let s = (p[a] - self.origin[a]) / self.h;
            let tol = T::geometric_epsilon();
            if s < -tol || s > from_usize::<T>(self.dims[a]) + tol || !s.is_finite() {
                return None;
            }
            ijk[a] = s.floor().max(T::zero()).to_usize()?.min(self.dims[a] - 1);
        }
        Some(self.cell_index(ijk))
    }

    /// Cells whose closure contains `p` (up to eight on a vertex).
    pub fn cells_touching(&self, p: Vec3<T>) -> Vec<CellId> {
        let tol = T::geometric_epsilon();
        let mut ranges = [(0usize, 0usize); 3];
        for a in 0..3 {
            let s = (p[a] - self.origin[a]) / self.h;
            if s < -tol || s > from_usize::<T>(self.dims[a]) + tol || !s.is_finite() {
                return Vec::new();
            }
            let f = s.floor();
            let base = f.max(T::zero()).to_usize().unwrap_or(0);
            let frac = s - f;
            let lo = if frac <= tol && base > 0 { base - 1 } else { base };
            let hi = if frac >= T::one() - tol { base + 1 } else { base };
            ranges[a] = (lo.min(self.dims[a] - 1), hi.min(self.dims[a] - 1));
        }
        let mut out = Vec::new();
        for k in ranges[2].0..=ranges[2].1 {
            for j in ranges[1].0..=ranges[1].1 {
                for i in ranges[0].0..=ranges[0].1 {
                    out.push(self.cell_index([i, j, k]));
                }
            }
        }
        out
    }

    /// Face-adjacent neighbors of a cell.
    pub fn face_neighbors(&self, cell: CellId) -> Vec<CellId> {
        let ijk = self.cell_ijk(cell);
        let mut out = Vec::with_capacity(6);
        for a in 0..3 {
            if ijk[a] > 0 {
                let mut n = ijk;
                n[a] -= 1;
                out.push(self.cell_index(n));
            }
            if ijk[a] + 1 < self.dims[a] {
                let mut n = ijk;
                n[a] += 1;
                out.push(self.cell_index(n));
            }
        }
        out
    }

    fn face_grid(&self, axis: usize) -> [usize; 3] {
        let mut d = self.dims;
        d[axis] += 1;
        d
    }

    fn face_offset(&self, axis: usize) -> usize {
        (0..axis).map(|a| self.face_grid(a).iter().product::<usize>()).sum()
    }

    pub fn n_faces(&self) -> usize {
        self.face_offset(3)
    }

    /// Face normal to `axis` at lattice position `ijk` (with `ijk[axis]` in
    /// `0..=dims[axis]`).
    pub fn face_index(&self, axis: usize, ijk: [usize; 3]) -> FaceId {
        let g = self.face_grid(axis);
        self.face_offset(axis) + ijk[0] + g[0] * (ijk[1] + g[1] * ijk[2])
    }

    /// Axis and lattice position of a face.
    pub fn face_ijk(&self, face: FaceId) -> (usize, [usize; 3]) {
        let mut axis = 0;
        while axis < 2 && face >= self.face_offset(axis + 1) {
            axis += 1;
        }
        let g = self.face_grid(axis);
        let local = face - self.face_offset(axis);
        let i = local % g[0];
        let r = local / g[0];
        (axis, [i, r % g[1], r / g[1]])
    }

    /// The six faces of a cell ordered `-x, +x, -y, +y, -z, +z`.
    pub fn cell_faces(&self, cell: CellId) -> [FaceId; 6] {
        let ijk = self.cell_ijk(cell);
        let mut out = [0; 6];
        for a in 0..3 {
            let mut hi = ijk;
            hi[a] += 1;
            out[2 * a] = self.face_index(a, ijk);
            out[2 * a + 1] = self.face_index(a, hi);
        }
        out
    }

    /// Cells below and above a face along its normal axis.
    pub fn face_cells(&self, face: FaceId) -> (usize, Option<CellId>, Option<CellId>) {
        let (axis, ijk) = self.face_ijk(face);
        let lower = (ijk[axis] > 0).then(|| {
            let mut c = ijk;
            c[axis] -= 1;
            self.cell_index(c)
        });
        let upper = (ijk[axis] < self.dims[axis]).then(|| self.cell_index(ijk));
        (axis, lower, upper)
    }

    /// Lower corner of a face and its two in-plane edge vectors.
    pub fn face_geometry(&self, face: FaceId) -> (Vec3<T>, Vec3<T>, Vec3<T>) {
        let (axis, ijk) = self.face_ijk(face);
        let corner = [
            self.origin[0] + from_usize::<T>(ijk[0]) * self.h,
            self.origin[1] + from_usize::<T>(ijk[1]) * self.h,
            self.origin[2] + from_usize::<T>(ijk[2]) * self.h,
        ];
        let e = |a: usize| {
            let mut v = [T::zero(); 3];
            v[a] = self.h;
            v
        };
        (corner, e((axis + 1) % 3), e((axis + 2) % 3))
    }

    pub fn upper_corner(&self) -> Vec3<T> {
        [
            self.origin[0] + from_usize::<T>(self.dims[0]) * self.h,
            self.origin[1] + from_usize::<T>(self.dims[1]) * self.h,
            self.origin[2] + from_usize::<T>(self.dims[2]) * self.h,
        ]
    }

    /// True when `[min, max]` lies inside the mesh box.
    pub fn covers(&self, min: Vec3<T>, max: Vec3<T>) -> bool {
        let hi = self.upper_corner();
        (0..3).all(|a| min[a] >= self.origin[a] && max[a] <= hi[a])
    }
}
