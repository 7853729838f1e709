//! Unfitted (CutFEM) finite-element solver for the EEG forward problem.
//!
//! Head compartments are zero sublevel sets of level-set functions over a
//! regular hexahedral background mesh. Every compartment carries its own
//! trilinear trial space on the cells it touches; the spaces are coupled
//! across interfaces by a weighted Nitsche method and stabilized by a ghost
//! penalty. Dipoles enter through a Venant monopole model and electrode
//! potentials are computed with a transfer matrix.
//!
//! Numerical types are generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common case.
//!
//! Units: mm, nAm and S/m. Potentials returned by [`pipeline`] and
//! [`analytic`] are in volts.

pub mod analytic;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod real;
pub mod solver;
pub mod sources;
pub mod sparse;
pub mod vec3;

pub use error::{Error, Result};
pub use real::Real;

pub type Mesh = geometry::mesh::BackgroundMesh<f64>;
pub type Model = geometry::model::CompartmentModel<f64>;
pub type Discretization = fem::Discretization<f64>;
pub type SparseSystem = fem::SparseSystem<f64>;
pub type TransferMatrix = solver::TransferMatrix<f64>;
pub type LeadField = metrics::LeadField<f64>;
pub type ForwardModel = pipeline::ForwardModel<f64>;
pub type Dipole = sources::Dipole<f64>;

pub type Mesh32 = geometry::mesh::BackgroundMesh<f32>;
pub type Model32 = geometry::model::CompartmentModel<f32>;
pub type Discretization32 = fem::Discretization<f32>;
pub type ForwardModel32 = pipeline::ForwardModel<f32>;
