//! Trilinear shape functions on a cubic background cell.
//!
//! Local corner `c` sits at offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`,
//! matching [`BackgroundMesh::cell_vertices`](crate::geometry::BackgroundMesh::cell_vertices).

use crate::geometry::mesh::{BackgroundMesh, CellId};
use crate::real::Real;
use crate::vec3::Vec3;

/// Local coordinates of `x` in `cell`, in `[0, 1]^3` for points inside.
#[inline]
pub fn local_coordinates<T: Real>(mesh: &BackgroundMesh<T>, cell: CellId, x: Vec3<T>) -> Vec3<T> {
    let base = mesh.cell_min(cell);
    [(x[0] - base[0]) / mesh.h, (x[1] - base[1]) / mesh.h, (x[2] - base[2]) / mesh.h]
}

#[inline]
pub fn values<T: Real>(t: Vec3<T>) -> [T; 8] {
    let one = T::one();
    let f = [[one - t[0], t[0]], [one - t[1], t[1]], [one - t[2], t[2]]];
    std::array::from_fn(|c| f[0][c & 1] * f[1][(c >> 1) & 1] * f[2][(c >> 2) & 1])
}

/// Physical gradients for a cell of edge `h`.
#[inline]
pub fn gradients<T: Real>(t: Vec3<T>, h: T) -> [Vec3<T>; 8] {
    let one = T::one();
    let f = [[one - t[0], t[0]], [one - t[1], t[1]], [one - t[2], t[2]]];
    let inv = one / h;
    let d = [-inv, inv];
    std::array::from_fn(|c| {
        let (i, j, k) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
        [d[i] * f[1][j] * f[2][k], f[0][i] * d[j] * f[2][k], f[0][i] * f[1][j] * d[k]]
    })
}
