//! Whole-mesh cut-cell partition, ghost skeleton and compartment submeshes.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::cut::{cut_cell, CellCut, CutConfig};
use crate::geometry::mesh::{BackgroundMesh, CellId, FaceId};
use crate::geometry::model::CompartmentModel;
use crate::real::{from_usize, Real};
use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellClass {
    Interior(usize),
    Cut,
    Exterior,
}

/// Classifies a background cell by sampling every level set on a dyadic
/// lattice of `(2^level + 1)^3` points.
pub fn classify_cell<T: Real>(mesh: &BackgroundMesh<T>, cell: CellId, model: &CompartmentModel<T>, level: usize) -> CellClass {
    let n = 1usize << level;
    let step = mesh.h / from_usize::<T>(n);
    let base = mesh.cell_min(cell);
    let nl = model.len();
    let mut first: Option<Vec<bool>> = None;
    let mut sample = vec![false; nl];
    for k in 0..=n {
        for j in 0..=n {
            for i in 0..=n {
                let p: Vec3<T> = [
                    base[0] + from_usize::<T>(i) * step,
                    base[1] + from_usize::<T>(j) * step,
                    base[2] + from_usize::<T>(k) * step,
                ];
                for (l, c) in model.compartments.iter().enumerate() {
                    sample[l] = c.level_set.value(p) <= T::zero();
                }
                match &first {
                    None => first = Some(sample.clone()),
                    Some(f) if *f != sample => return CellClass::Cut,
                    _ => {}
                }
            }
        }
    }
    let signs = first.expect("at least one sample");
    match signs.iter().position(|&s| s) {
        Some(c) => CellClass::Interior(c),
        None => CellClass::Exterior,
    }
}

/// Classification and decomposition of every background cell.
#[derive(Clone, Debug)]
pub struct CutCellPartition<T> {
    pub classes: Vec<CellClass>,
    /// Decompositions of cut cells, ordered by cell index.
    pub cuts: Vec<(CellId, CellCut<T>)>,
    /// Position in `cuts` for every cell, `u32::MAX` for uncut cells.
    cut_slot: Vec<u32>,
    /// Faces of all cut cells, sorted and unique.
    pub ghost_faces: Vec<FaceId>,
    pub config: CutConfig<T>,
}

impl<T: Real> CutCellPartition<T> {
    pub fn build(mesh: &BackgroundMesh<T>, model: &CompartmentModel<T>, config: CutConfig<T>) -> Result<Self> {
        if config.refinement > 3 {
            return Err(Error::Configuration(format!("refinement {} outside 0..=3", config.refinement)));
        }
        model.check_mesh(mesh)?;
        let classes: Vec<CellClass> = (0..mesh.n_cells())
            .into_par_iter()
            .map(|c| classify_cell(mesh, c, model, config.classification_level))
            .collect();
        let cut_ids: Vec<CellId> = (0..mesh.n_cells()).filter(|&c| classes[c] == CellClass::Cut).collect();
        let cuts: Vec<(CellId, CellCut<T>)> =
            cut_ids.par_iter().map(|&c| (c, cut_cell(mesh, c, model, &config))).collect();
        let mut cut_slot = vec![u32::MAX; mesh.n_cells()];
        for (slot, (c, _)) in cuts.iter().enumerate() {
            cut_slot[*c] = slot as u32;
        }
        let mut ghost_faces: Vec<FaceId> = cut_ids.iter().flat_map(|&c| mesh.cell_faces(c)).collect();
        ghost_faces.sort_unstable();
        ghost_faces.dedup();
        Ok(Self { classes, cuts, cut_slot, ghost_faces, config })
    }

    pub fn cut(&self, cell: CellId) -> Option<&CellCut<T>> {
        let slot = self.cut_slot[cell];
        (slot != u32::MAX).then(|| &self.cuts[slot as usize].1)
    }

    pub fn n_cut_cells(&self) -> usize {
        self.cuts.len()
    }

    pub fn n_snippets(&self) -> usize {
        self.cuts.iter().map(|(_, c)| c.snippets.len()).sum()
    }

    /// True when `cell` has support in `compartment`.
    pub fn cell_in_compartment(&self, cell: CellId, compartment: usize) -> bool {
        match self.classes[cell] {
            CellClass::Interior(c) => c == compartment,
            CellClass::Cut => self.cut(cell).is_some_and(|c| c.has_compartment(compartment)),
            CellClass::Exterior => false,
        }
    }

    /// Compartment of the snippet containing `p` within `cell`.
    pub fn compartment_at(&self, cell: CellId, p: Vec3<T>) -> Option<usize> {
        match self.classes[cell] {
            CellClass::Interior(c) => Some(c),
            CellClass::Cut => self.cut(cell).and_then(|c| c.compartment_at(p)),
            CellClass::Exterior => None,
        }
    }

    /// Total discrete volume of a compartment.
    pub fn compartment_volume(&self, mesh: &BackgroundMesh<T>, compartment: usize) -> T {
        let interior = self.classes.iter().filter(|&&c| c == CellClass::Interior(compartment)).count();
        let cut: T = self.cuts.iter().map(|(_, c)| c.compartment_volume(compartment)).sum();
        from_usize::<T>(interior) * mesh.cell_volume() + cut
    }

    /// Per-compartment cell lists; fails if a compartment has no support.
    pub fn submeshes(&self, n_compartments: usize) -> Result<Submeshes> {
        let mut cells = vec![Vec::new(); n_compartments];
        for (cell, class) in self.classes.iter().enumerate() {
            match class {
                CellClass::Interior(c) => cells[*c].push(cell),
                CellClass::Cut => {
                    let cut = self.cut(cell).expect("cut cell has a decomposition");
                    for (c, list) in cells.iter_mut().enumerate() {
                        if cut.has_compartment(c) {
                            list.push(cell);
                        }
                    }
                }
                CellClass::Exterior => {}
            }
        }
        if let Some(empty) = cells.iter().position(|c| c.is_empty()) {
            return Err(Error::Configuration(format!("compartment {empty} has an empty submesh")));
        }
        Ok(Submeshes { cells })
    }
}

/// Cells with partial support in each compartment, sorted by cell index.
/// Submeshes overlap on cut cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Submeshes {
    pub cells: Vec<Vec<CellId>>,
}

impl Submeshes {
    pub fn contains(&self, compartment: usize, cell: CellId) -> bool {
        self.cells[compartment].binary_search(&cell).is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::level_set::LevelSetField;
    use crate::geometry::model::{Compartment, Conductivity};

    fn spheres(radii: &[f64]) -> CompartmentModel<f64> {
        CompartmentModel::new(
            radii
                .iter()
                .enumerate()
                .map(|(i, &r)| Compartment {
                    name: format!("c{i}"),
                    level_set: LevelSetField::sphere([0.0; 3], r, i),
                    conductivity: Conductivity::isotropic(1.0),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn classification_examples() {
        let mesh = BackgroundMesh::new([-0.5; 3], 1.0, [1, 1, 1]).unwrap();
        assert_eq!(classify_cell(&mesh, 0, &spheres(&[10.0]), 1), CellClass::Interior(0));
        let mesh = BackgroundMesh::new([0.5, -0.5, -0.5], 1.0, [1, 1, 1]).unwrap();
        assert_eq!(classify_cell(&mesh, 0, &spheres(&[1.0]), 0), CellClass::Cut);
        let mesh = BackgroundMesh::new([5.0; 3], 1.0, [1, 1, 1]).unwrap();
        assert_eq!(classify_cell(&mesh, 0, &spheres(&[1.0]), 1), CellClass::Exterior);
    }

    #[test]
    fn midpoint_sampling_catches_thin_features() {
        // sphere pokes into the face centre of the cell without reaching a vertex
        let mesh = BackgroundMesh::new([0.0, -0.5, -0.5], 1.0, [1, 1, 1]).unwrap();
        let model = CompartmentModel::new(vec![Compartment {
            name: "s".into(),
            level_set: LevelSetField::sphere([-0.45, 0.0, 0.0], 0.6, 0),
            conductivity: Conductivity::isotropic(1.0),
        }])
        .unwrap();
        assert_eq!(classify_cell(&mesh, 0, &model, 0), CellClass::Exterior);
        assert_eq!(classify_cell(&mesh, 0, &model, 1), CellClass::Cut);
    }

    #[test]
    fn submeshes_overlap_on_interface_cells() {
        let model = spheres(&[1.6, 3.1]);
        let mesh = BackgroundMesh::covering([-3.1; 3], [3.1; 3], 1.0, 1).unwrap();
        let part = CutCellPartition::build(&mesh, &model, CutConfig::default()).unwrap();
        let sub = part.submeshes(2).unwrap();
        let mut shared = 0;
        for (cell, cut) in &part.cuts {
            if cut.facets.iter().any(|f| f.inner == 0) {
                assert!(sub.contains(0, *cell) && sub.contains(1, *cell));
                shared += 1;
            }
        }
        assert!(shared > 0);
        // ghost faces are exactly the faces of cut cells
        for &f in &part.ghost_faces {
            let (_, lo, hi) = mesh.face_cells(f);
            assert!([lo, hi].iter().flatten().any(|&c| part.classes[c] == CellClass::Cut));
        }
        for (cell, _) in &part.cuts {
            for f in mesh.cell_faces(*cell) {
                assert!(part.ghost_faces.binary_search(&f).is_ok());
            }
        }
    }

    #[test]
    fn single_compartment_covering_mesh_uses_all_cells() {
        let model = spheres(&[100.0]);
        let mesh = BackgroundMesh::new([0.0; 3], 1.0, [3, 2, 2]).unwrap();
        let model = CompartmentModel::new(vec![Compartment {
            name: "all".into(),
            level_set: LevelSetField::half_space([1.0, 0.0, 0.0], 50.0, 0).unwrap(),
            conductivity: model.compartments[0].conductivity,
        }])
        .unwrap();
        let part = CutCellPartition::build(&mesh, &model, CutConfig::default()).unwrap();
        let sub = part.submeshes(1).unwrap();
        assert_eq!(sub.cells[0], (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn empty_compartment_is_a_configuration_error() {
        // inner sphere fully hidden inside an earlier compartment
        let model = spheres(&[2.0, 1.0]);
        let mesh = BackgroundMesh::covering([-2.0; 3], [2.0; 3], 1.0, 1).unwrap();
        let part = CutCellPartition::build(&mesh, &model, CutConfig::default()).unwrap();
        assert!(matches!(part.submeshes(2), Err(Error::Configuration(_))));
    }
}
