//! Restriction of the discrete potential to electrode positions.

use crate::error::{Error, Result};
use crate::fem::{basis, Discretization};
use crate::real::{lit, to_f64, Real};
use crate::sparse::CsrMatrix;
use crate::vec3::{self, Vec3};

/// Electrodes attached to the outermost compartment.
#[derive(Clone, Debug)]
pub struct ElectrodeSet<T> {
    /// Requested positions.
    pub requested: Vec<Vec3<T>>,
    /// Positions after snapping onto the outermost compartment.
    pub positions: Vec<Vec3<T>>,
    pub snap_distances: Vec<T>,
    /// `electrodes x DOFs` trilinear interpolation weights; rows sum to one.
    pub restriction: CsrMatrix<T>,
}

impl<T: Real> ElectrodeSet<T> {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Electrode potentials of a coefficient vector.
    pub fn evaluate(&self, coefficients: &[T]) -> Vec<T> {
        self.restriction.mul_vec(coefficients)
    }

    pub fn max_snap(&self) -> T {
        self.snap_distances.iter().copied().fold(T::zero(), T::max)
    }
}

/// Snaps every position onto the closure of the outermost compartment
/// (at most `2h` away) and builds its interpolation row from the trial
/// functions of that compartment.
pub fn electrode_restriction<T: Real>(disc: &Discretization<T>, positions: &[Vec3<T>]) -> Result<ElectrodeSet<T>> {
    let outer = disc.model.outermost();
    let ls = &disc.model.compartments[outer].level_set;
    let max_snap = lit::<T>(2.0) * disc.mesh.h;
    let mut snapped = Vec::with_capacity(positions.len());
    let mut distances = Vec::with_capacity(positions.len());
    let mut triplets = Vec::new();
    for (e, &p) in positions.iter().enumerate() {
        let q = if disc.model.compartment_of(p) == Some(outer) { p } else { ls.project_to_surface(p) };
        let d = vec3::distance(p, q);
        if d > max_snap {
            return Err(Error::Domain(format!(
                "electrode {e} at {:?} lies {:.3} mm from the outer surface (limit {:.3} mm)",
                vec3::to_f64(p),
                to_f64(d),
                to_f64(max_snap)
            )));
        }
        if d > T::zero() {
            log::debug!("electrode {e} snapped by {:.3e} mm", to_f64(d));
        }
        let touching = disc.mesh.cells_touching(q);
        let cell = touching
            .iter()
            .copied()
            .find(|&c| disc.partition.compartment_at(c, q) == Some(outer))
            .or_else(|| touching.iter().copied().find(|&c| disc.submeshes.contains(outer, c)))
            .ok_or_else(|| {
                Error::Domain(format!("electrode {e} at {:?} has no cell in the outer compartment", vec3::to_f64(q)))
            })?;
        let dofs = disc.space.cell_dofs(&disc.mesh, outer, cell).expect("submesh cell has DOFs");
        let phi = basis::values(basis::local_coordinates(&disc.mesh, cell, q));
        for (&dof, w) in dofs.iter().zip(phi) {
            if w != T::zero() {
                triplets.push((e as u32, dof, w));
            }
        }
        snapped.push(q);
        distances.push(d);
    }
    if let Some(m) = distances.iter().copied().reduce(T::max) {
        log::info!("{} electrodes placed, largest snap {:.3e} mm", positions.len(), to_f64(m));
    }
    let restriction = CsrMatrix::from_triplets(positions.len(), disc.space.n_dofs(), triplets)?;
    Ok(ElectrodeSet { requested: positions.to_vec(), positions: snapped, snap_distances: distances, restriction })
}
