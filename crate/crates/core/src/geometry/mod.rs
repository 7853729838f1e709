//! Level-set compartments over a regular hexahedral background mesh and the
//! decomposition of cut cells into integrable snippets.

pub mod cut;
pub mod level_set;
pub mod mesh;
pub mod model;
pub mod partition;
pub mod quadrature;

pub use cut::{cut_cell, BoundaryFacet, CellCut, CutConfig, InterfaceFacet, Snippet, SnippetShape};
pub use level_set::{LevelSetField, LevelSetKind, SampledGrid};
pub use mesh::{BackgroundMesh, CellId, FaceId, VertexId};
pub use model::{Compartment, CompartmentModel, Conductivity};
pub use partition::{classify_cell, CellClass, CutCellPartition, Submeshes};
