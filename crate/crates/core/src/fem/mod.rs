//! Overlapping Q1 trial spaces and assembly of the CutFEM system.

pub mod assembly;
pub mod basis;
pub mod space;
pub mod weights;

pub use assembly::{
    assemble_boundary_flux, assemble_ghost, assemble_load, assemble_nitsche, assemble_system, assemble_terms,
    assemble_volume, AssemblyConfig, Discretization, SparseSystem, Terms, Variant,
};
pub use space::TrialSpace;
pub use weights::{AverageWeighting, InterfaceWeights};
