//! Overlapping per-compartment Q1 trial spaces.

use std::ops::Range;

use crate::geometry::mesh::{BackgroundMesh, CellId, VertexId};
use crate::geometry::partition::Submeshes;
use crate::real::Real;

const NONE: u32 = u32::MAX;

/// Direct sum of conforming Q1 spaces, one per compartment submesh.
///
/// Global DOFs are numbered compartment by compartment, and by background
/// vertex index within a compartment. A vertex shared by `k` submeshes owns
/// `k` DOFs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialSpace {
    offsets: Vec<usize>,
    vertex_dofs: Vec<Vec<u32>>,
    owners: Vec<(usize, VertexId)>,
}

impl TrialSpace {
    pub fn build<T: Real>(mesh: &BackgroundMesh<T>, submeshes: &Submeshes) -> Self {
        let nv = mesh.n_vertices();
        let mut offsets = vec![0];
        let mut vertex_dofs = Vec::with_capacity(submeshes.cells.len());
        let mut owners = Vec::new();
        for (c, cells) in submeshes.cells.iter().enumerate() {
            let mut used = vec![false; nv];
            for &cell in cells {
                for v in mesh.cell_vertices(cell) {
                    used[v] = true;
                }
            }
            let mut map = vec![NONE; nv];
            for (v, _) in used.iter().enumerate().filter(|(_, &u)| u) {
                map[v] = owners.len() as u32;
                owners.push((c, v));
            }
            vertex_dofs.push(map);
            offsets.push(owners.len());
        }
        Self { offsets, vertex_dofs, owners }
    }

    pub fn n_dofs(&self) -> usize {
        self.owners.len()
    }

    pub fn n_compartments(&self) -> usize {
        self.vertex_dofs.len()
    }

    #[inline]
    pub fn dof(&self, compartment: usize, vertex: VertexId) -> Option<usize> {
        let d = self.vertex_dofs[compartment][vertex];
        (d != NONE).then_some(d as usize)
    }

    /// DOFs of the eight cell corners in `compartment`, if the cell belongs
    /// to that compartment's submesh.
    #[inline]
    pub fn cell_dofs<T: Real>(&self, mesh: &BackgroundMesh<T>, compartment: usize, cell: CellId) -> Option<[u32; 8]> {
        let map = &self.vertex_dofs[compartment];
        let vs = mesh.cell_vertices(cell);
        let mut out = [0u32; 8];
        for (o, v) in out.iter_mut().zip(vs) {
            *o = map[v];
            if *o == NONE {
                return None;
            }
        }
        Some(out)
    }

    /// Compartment and background vertex of a DOF.
    pub fn owner(&self, dof: usize) -> (usize, VertexId) {
        self.owners[dof]
    }

    pub fn compartment_dofs(&self, compartment: usize) -> Range<usize> {
        self.offsets[compartment]..self.offsets[compartment + 1]
    }

    /// Interpolates `f(compartment, position)` at every DOF.
    pub fn interpolate<T: Real>(&self, mesh: &BackgroundMesh<T>, f: impl Fn(usize, crate::vec3::Vec3<T>) -> T) -> Vec<T> {
        self.owners.iter().map(|&(c, v)| f(c, mesh.vertex_position(v))).collect()
    }
}
