//! Conductivity-weighted averages on interface facets.

use crate::geometry::model::Conductivity;
use crate::real::{lit, Real};
use crate::vec3::Vec3;

/// How the average weights are derived from the normal conductivities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AverageWeighting {
    /// `omega_E = delta_E / (delta_E + delta_F)`.
    #[default]
    Direct,
    /// `omega_E = delta_F / (delta_E + delta_F)`, the usual weighted
    /// interior-penalty choice that favours the less conductive side.
    Swapped,
}

/// Weights for the facet between `E` (inner) and `F` (outer) with normal `n`
/// pointing from `E` into `F`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterfaceWeights<T> {
    pub omega_e: T,
    pub omega_f: T,
    /// `n^T sigma_E n`.
    pub delta_e: T,
    pub delta_f: T,
    /// Harmonic mean of `delta_E` and `delta_F`.
    pub sigma_hat: T,
    pub h_hat: T,
    pub nu: T,
}

impl<T: Real> InterfaceWeights<T> {
    pub fn new(
        sigma_e: &Conductivity<T>,
        sigma_f: &Conductivity<T>,
        normal: Vec3<T>,
        h_hat: T,
        nu: T,
        weighting: AverageWeighting,
    ) -> Self {
        let delta_e = sigma_e.normal_component(normal);
        let delta_f = sigma_f.normal_component(normal);
        let sum = delta_e + delta_f;
        let (omega_e, omega_f) = match weighting {
            AverageWeighting::Direct => (delta_e / sum, delta_f / sum),
            AverageWeighting::Swapped => (delta_f / sum, delta_e / sum),
        };
        let sigma_hat = lit::<T>(2.0) * delta_e * delta_f / sum;
        Self { omega_e, omega_f, delta_e, delta_f, sigma_hat, h_hat, nu }
    }

    /// Penalty coefficient `gamma * nu * sigma_hat / h_hat`.
    pub fn penalty(&self, gamma: T) -> T {
        gamma * self.nu * self.sigma_hat / self.h_hat
    }
}
