//! Nested compartments described by ordered level sets.

use crate::error::{Error, Result};
use crate::geometry::level_set::{LevelSetField, LevelSetKind};
use crate::geometry::mesh::BackgroundMesh;
use crate::real::Real;
use crate::vec3::{self, Vec3};

/// Symmetric positive definite 3x3 conductivity tensor in S/m.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conductivity<T>(pub [[T; 3]; 3]);

impl<T: Real> Conductivity<T> {
    pub fn isotropic(sigma: T) -> Self {
        let z = T::zero();
        Self([[sigma, z, z], [z, sigma, z], [z, z, sigma]])
    }

    /// Builds a tensor from its six independent entries
    /// `xx, yy, zz, xy, yz, xz`.
    pub fn from_upper(xx: T, yy: T, zz: T, xy: T, yz: T, xz: T) -> Self {
        Self([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])
    }

    pub fn apply(&self, v: Vec3<T>) -> Vec3<T> {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    /// `n^T sigma n`.
    pub fn normal_component(&self, n: Vec3<T>) -> T {
        vec3::dot(n, self.apply(n))
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut m = self.0;
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        Self(m)
    }

    /// Scalar value when the tensor is a multiple of the identity.
    pub fn as_isotropic(&self) -> Option<T> {
        let m = &self.0;
        let s = m[0][0];
        let tol = T::geometric_epsilon() * s.abs();
        let off = [m[0][1], m[0][2], m[1][0], m[1][2], m[2][0], m[2][1]];
        ((m[1][1] - s).abs() <= tol && (m[2][2] - s).abs() <= tol && off.iter().all(|v| v.abs() <= tol)).then_some(s)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.0;
        for i in 0..3 {
            for j in 0..3 {
                if !m[i][j].is_finite() {
                    return Err(Error::Configuration("conductivity entries must be finite".into()));
                }
                let tol = T::geometric_epsilon() * (m[i][j].abs() + m[j][i].abs());
                if (m[i][j] - m[j][i]).abs() > tol {
                    return Err(Error::Configuration("conductivity tensor must be symmetric".into()));
                }
            }
        }
        // Sylvester's criterion
        let d1 = m[0][0];
        let d2 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let d3 = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        if !(d1 > T::zero() && d2 > T::zero() && d3 > T::zero()) {
            return Err(Error::Configuration("conductivity tensor must be positive definite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Compartment<T> {
    pub name: String,
    pub level_set: LevelSetField<T>,
    pub conductivity: Conductivity<T>,
}

/// Ordered compartments, innermost first.
///
/// Compartment `i` is the region where its level set is non-positive and the
/// level sets of all earlier compartments are positive. A level-set value of
/// exactly zero counts as inside.
#[derive(Clone, Debug, PartialEq)]
pub struct CompartmentModel<T> {
    pub compartments: Vec<Compartment<T>>,
}

impl<T: Real> CompartmentModel<T> {
    pub fn new(compartments: Vec<Compartment<T>>) -> Result<Self> {
        if compartments.is_empty() {
            return Err(Error::Configuration("at least one compartment is required".into()));
        }
        for (i, c) in compartments.iter().enumerate() {
            c.conductivity.validate().map_err(|e| Error::Configuration(format!("compartment `{}`: {e}", c.name)))?;
            if c.level_set.compartment_id != i {
                return Err(Error::Configuration(format!(
                    "compartment `{}` at position {i} carries level set id {}",
                    c.name, c.level_set.compartment_id
                )));
            }
        }
        Ok(Self { compartments })
    }

    pub fn len(&self) -> usize {
        self.compartments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compartments.is_empty()
    }

    /// Index of the outermost compartment (the last listed).
    pub fn outermost(&self) -> usize {
        self.compartments.len() - 1
    }

    pub fn conductivity(&self, compartment: usize) -> &Conductivity<T> {
        &self.compartments[compartment].conductivity
    }

    /// Compartment containing `p`, or `None` outside the head.
    #[inline]
    pub fn compartment_of(&self, p: Vec3<T>) -> Option<usize> {
        self.compartments.iter().position(|c| c.level_set.value(p) <= T::zero())
    }

    /// Compartment from precomputed level-set values.
    #[inline]
    pub fn compartment_from_values(values: &[T]) -> Option<usize> {
        values.iter().position(|&v| v <= T::zero())
    }

    /// Checks that the mesh covers every bounded compartment and lies inside
    /// every sampled grid.
    pub fn check_mesh(&self, mesh: &BackgroundMesh<T>) -> Result<()> {
        for c in &self.compartments {
            if let Some((lo, hi)) = c.level_set.support_bounds() {
                if !mesh.covers(lo, hi) {
                    return Err(Error::Configuration(format!(
                        "background mesh does not cover compartment `{}` (bounds {:?}..{:?})",
                        c.name,
                        vec3::to_f64(lo),
                        vec3::to_f64(hi)
                    )));
                }
            }
            if let LevelSetKind::Sampled(g) = &c.level_set.kind {
                if !g.contains(mesh.origin) || !g.contains(mesh.upper_corner()) {
                    return Err(Error::Configuration(format!(
                        "sampled level set of `{}` does not cover the background mesh",
                        c.name
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nested() -> CompartmentModel<f64> {
        let mk = |name: &str, r: f64, s: f64, id: usize| Compartment {
            name: name.into(),
            level_set: LevelSetField::sphere([0.0; 3], r, id),
            conductivity: Conductivity::isotropic(s),
        };
        CompartmentModel::new(vec![mk("brain", 1.0, 0.33, 0), mk("skull", 2.0, 0.01, 1), mk("scalp", 3.0, 0.43, 2)]).unwrap()
    }

    #[test]
    fn membership_follows_nesting_order() {
        let m = nested();
        assert_eq!(m.compartment_of([0.0; 3]), Some(0));
        assert_eq!(m.compartment_of([1.5, 0.0, 0.0]), Some(1));
        assert_eq!(m.compartment_of([0.0, 2.5, 0.0]), Some(2));
        assert_eq!(m.compartment_of([0.0, 0.0, 3.5]), None);
        // boundary points belong to the inner compartment
        assert_eq!(m.compartment_of([1.0, 0.0, 0.0]), Some(0));
    }

    #[test]
    fn conductivity_validation() {
        assert!(Conductivity::isotropic(0.33).validate().is_ok());
        assert!(Conductivity::isotropic(-1.0).validate().is_err());
        assert!(Conductivity::from_upper(1.0, 1.0, 1.0, 2.0, 0.0, 0.0).validate().is_err());
        let mut asym = Conductivity::isotropic(1.0);
        asym.0[0][1] = 0.1;
        assert!(asym.validate().is_err());
    }

    #[test]
    fn mesh_must_cover_compartments() {
        let m = nested();
        let small = BackgroundMesh::new([-2.0; 3], 1.0, [4, 4, 4]).unwrap();
        assert!(m.check_mesh(&small).is_err());
        let big = BackgroundMesh::new([-4.0; 3], 1.0, [8, 8, 8]).unwrap();
        assert!(m.check_mesh(&big).is_ok());
    }
}
