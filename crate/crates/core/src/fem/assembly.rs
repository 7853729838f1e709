//! Assembly of the CutFEM bilinear form and load vectors.
//!
//! The stiffness matrix collects three families of element contributions:
//! volume integrals over the snippets of each compartment, Nitsche coupling
//! integrals over interface facets, and ghost-penalty integrals over the full
//! faces of cut cells. The sparsity pattern is built from the element DOF
//! lists first; element matrices are then computed in parallel chunks and
//! scattered in element order, so the result does not depend on the number
//! of threads.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::basis;
use crate::fem::space::TrialSpace;
use crate::fem::weights::{AverageWeighting, InterfaceWeights};
use crate::geometry::cut::{CutConfig, SnippetShape};
use crate::geometry::mesh::{BackgroundMesh, CellId};
use crate::geometry::model::{CompartmentModel, Conductivity};
use crate::geometry::partition::{CellClass, CutCellPartition, Submeshes};
use crate::geometry::quadrature::{ReferenceRule, MAX_ORDER};
use crate::real::{lit, Real};
use crate::sparse::CsrMatrix;
use crate::vec3::{self, Vec3};

/// Interior penalty variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Variant {
    /// Non-symmetric weighted interior penalty Galerkin.
    #[default]
    Nwipg,
    /// Symmetric weighted interior penalty Galerkin.
    Swipg,
}

impl Variant {
    /// Sign of the symmetry term `+/- int {sigma grad v} [u]`.
    pub fn symmetry_sign<T: Real>(self) -> T {
        match self {
            Variant::Nwipg => T::one(),
            Variant::Swipg => -T::one(),
        }
    }

    pub fn is_symmetric(self) -> bool {
        self == Variant::Swipg
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssemblyConfig<T> {
    pub variant: Variant,
    /// Nitsche penalty `gamma`.
    pub gamma: T,
    /// Ghost penalty `gamma_G`.
    pub ghost_penalty: T,
    /// Degree scaling `nu_k` of the Nitsche penalty.
    pub nu: T,
    pub weighting: AverageWeighting,
    /// Quadrature degree on tetrahedral snippets.
    pub volume_order: usize,
    /// Quadrature degree on interface and boundary triangles.
    pub facet_order: usize,
}

impl<T: Real> Default for AssemblyConfig<T> {
    fn default() -> Self {
        Self {
            variant: Variant::Nwipg,
            gamma: lit(16.0),
            ghost_penalty: lit(0.1),
            nu: T::one(),
            weighting: AverageWeighting::Direct,
            volume_order: 4,
            facet_order: 4,
        }
    }
}

impl<T: Real> AssemblyConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > T::zero()) {
            return Err(Error::Configuration(format!("Nitsche penalty must be positive, got {:?}", self.gamma)));
        }
        if !(self.ghost_penalty >= T::zero()) {
            return Err(Error::Configuration(format!("ghost penalty must be non-negative, got {:?}", self.ghost_penalty)));
        }
        if !(self.nu > T::zero()) {
            return Err(Error::Configuration("penalty scaling nu must be positive".into()));
        }
        for order in [self.volume_order, self.facet_order] {
            if order == 0 || order > MAX_ORDER {
                return Err(Error::Configuration(format!("quadrature order {order} outside 1..={MAX_ORDER}")));
            }
        }
        Ok(())
    }
}

/// Which parts of the bilinear form to assemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Terms {
    pub volume: bool,
    pub interface: bool,
    pub ghost: bool,
}

impl Terms {
    pub const ALL: Terms = Terms { volume: true, interface: true, ghost: true };
    pub const VOLUME: Terms = Terms { volume: true, interface: false, ghost: false };
    pub const INTERFACE: Terms = Terms { volume: false, interface: true, ghost: false };
    pub const GHOST: Terms = Terms { volume: false, interface: false, ghost: true };
}

/// Assembled stiffness matrix.
#[derive(Clone, Debug)]
pub struct SparseSystem<T> {
    pub matrix: CsrMatrix<T>,
    pub variant: Variant,
    pub gamma: T,
    pub ghost_penalty: T,
}

impl<T: Real> SparseSystem<T> {
    pub fn n_dofs(&self) -> usize {
        self.matrix.n_rows
    }

    pub fn is_symmetric(&self) -> bool {
        self.variant.is_symmetric()
    }

    /// `||K 1||_inf / ||K||_inf`.
    pub fn null_space_residual(&self) -> T {
        let ones = vec![T::one(); self.matrix.n_cols];
        let r = self.matrix.mul_vec(&ones).into_iter().fold(T::zero(), |m, v| m.max(v.abs()));
        r / self.matrix.norm_inf()
    }

    /// `||K - K^T||_inf / ||K||_inf`.
    pub fn relative_asymmetry(&self) -> T {
        self.matrix.asymmetry_inf() / self.matrix.norm_inf()
    }
}

/// Geometry, partition and trial space of one discretized head model.
#[derive(Clone, Debug)]
pub struct Discretization<T> {
    pub mesh: BackgroundMesh<T>,
    pub model: CompartmentModel<T>,
    pub partition: CutCellPartition<T>,
    pub submeshes: Submeshes,
    pub space: TrialSpace,
}

impl<T: Real> Discretization<T> {
    pub fn build(mesh: BackgroundMesh<T>, model: CompartmentModel<T>, cut: CutConfig<T>) -> Result<Self> {
        let partition = CutCellPartition::build(&mesh, &model, cut)?;
        let submeshes = partition.submeshes(model.len())?;
        let space = TrialSpace::build(&mesh, &submeshes);
        Ok(Self { mesh, model, partition, submeshes, space })
    }

    /// A cell whose snippets of `compartment` contain `p`.
    pub fn locate_in_compartment(&self, p: Vec3<T>, compartment: usize) -> Option<CellId> {
        self.mesh
            .cells_touching(p)
            .into_iter()
            .find(|&c| self.partition.compartment_at(c, p) == Some(compartment))
    }

    /// Evaluates the discrete function of `compartment` at `p` using the
    /// trial space of `cell`.
    pub fn evaluate_in_cell(&self, coefficients: &[T], compartment: usize, cell: CellId, p: Vec3<T>) -> Option<T> {
        let dofs = self.space.cell_dofs(&self.mesh, compartment, cell)?;
        let phi = basis::values(basis::local_coordinates(&self.mesh, cell, p));
        Some(dofs.iter().zip(phi).map(|(&d, f)| coefficients[d as usize] * f).sum())
    }
}

#[derive(Clone, Copy, Debug)]
enum Element {
    Volume { compartment: usize, cell: CellId },
    Interface { cell: CellId, inner: usize, outer: usize },
    Ghost { compartment: usize, axis: usize, lower: CellId, upper: CellId },
}

struct Assembler<'a, T> {
    disc: &'a Discretization<T>,
    cfg: AssemblyConfig<T>,
    tet_rule: ReferenceRule<T, 3>,
    box_rule: ReferenceRule<T, 3>,
    tri_rule: ReferenceRule<T, 2>,
    /// Unit-cell stiffness per compartment.
    cell_reference: Vec<[T; 64]>,
    /// Unit-cell ghost-face matrices indexed by `[axis][compartment]`.
    ghost_reference: [Vec<Vec<T>>; 3],
}

/// Unit-cell stiffness `int grad phi_a^T sigma grad phi_b` with `h = 1`.
fn reference_cell_matrix<T: Real>(sigma: &Conductivity<T>, rule: &ReferenceRule<T, 3>) -> [T; 64] {
    let mut m = [T::zero(); 64];
    for (p, &w) in rule.points.iter().zip(&rule.weights) {
        let g = basis::gradients(*p, T::one());
        accumulate_stiffness(&mut m, &g, sigma, w);
    }
    m
}

#[inline]
fn accumulate_stiffness<T: Real>(m: &mut [T; 64], g: &[Vec3<T>; 8], sigma: &Conductivity<T>, w: T) {
    let sg: [Vec3<T>; 8] = std::array::from_fn(|b| sigma.apply(g[b]));
    for a in 0..8 {
        for b in 0..8 {
            m[a * 8 + b] += w * vec3::dot(g[a], sg[b]);
        }
    }
}

/// Unit-cell ghost-face matrix for the face normal to `axis` between a lower
/// and an upper cell, DOFs ordered lower then upper.
fn reference_ghost_matrix<T: Real>(sigma: &Conductivity<T>, axis: usize, rule: &ReferenceRule<T, 2>) -> Vec<T> {
    let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
    let mut m = vec![T::zero(); 256];
    for (p, &w) in rule.points.iter().zip(&rule.weights) {
        let mut tl = [T::zero(); 3];
        tl[axis] = T::one();
        tl[a1] = p[0];
        tl[a2] = p[1];
        let mut tu = tl;
        tu[axis] = T::zero();
        let gl = basis::gradients(tl, T::one());
        let gu = basis::gradients(tu, T::one());
        let g: [Vec3<T>; 16] = std::array::from_fn(|k| if k < 8 { gl[k] } else { vec3::scale(gu[k - 8], -T::one()) });
        let flux: [T; 16] = std::array::from_fn(|k| (0..3).map(|b| sigma.0[axis][b] * g[k][b]).sum());
        for r in 0..16 {
            for c in 0..16 {
                m[r * 16 + c] += w * flux[c] * g[r][axis];
            }
        }
    }
    m
}

impl<'a, T: Real> Assembler<'a, T> {
    fn new(disc: &'a Discretization<T>, cfg: AssemblyConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let box_rule = ReferenceRule::unit_cube(3)?;
        let square = ReferenceRule::unit_square(3)?;
        let cell_reference = disc.model.compartments.iter().map(|c| reference_cell_matrix(&c.conductivity, &box_rule)).collect();
        let ghost_reference = std::array::from_fn(|axis| {
            disc.model
                .compartments
                .iter()
                .map(|c| reference_ghost_matrix(&c.conductivity, axis, &square))
                .collect()
        });
        Ok(Self {
            disc,
            cfg,
            tet_rule: ReferenceRule::tetrahedron(cfg.volume_order)?,
            box_rule,
            tri_rule: ReferenceRule::triangle(cfg.facet_order)?,
            cell_reference,
            ghost_reference,
        })
    }

    fn elements(&self, terms: Terms) -> Vec<Element> {
        let d = self.disc;
        let mut out = Vec::new();
        if terms.volume {
            for (compartment, cells) in d.submeshes.cells.iter().enumerate() {
                out.extend(cells.iter().map(|&cell| Element::Volume { compartment, cell }));
            }
        }
        if terms.interface {
            for (cell, cut) in &d.partition.cuts {
                let pairs: BTreeSet<(usize, usize)> = cut.facets.iter().map(|f| (f.inner, f.outer)).collect();
                out.extend(pairs.into_iter().map(|(inner, outer)| Element::Interface { cell: *cell, inner, outer }));
            }
        }
        if terms.ghost && self.cfg.ghost_penalty > T::zero() {
            for &face in &d.partition.ghost_faces {
                let (axis, lower, upper) = d.mesh.face_cells(face);
                let (Some(lower), Some(upper)) = (lower, upper) else { continue };
                for compartment in 0..d.model.len() {
                    if d.submeshes.contains(compartment, lower) && d.submeshes.contains(compartment, upper) {
                        out.push(Element::Ghost { compartment, axis, lower, upper });
                    }
                }
            }
        }
        out
    }

    fn dofs(&self, c: usize, cell: CellId) -> [u32; 8] {
        self.disc.space.cell_dofs(&self.disc.mesh, c, cell).expect("submesh cell has DOFs")
    }

    fn element_dofs(&self, e: &Element) -> Vec<u32> {
        match *e {
            Element::Volume { compartment, cell } => self.dofs(compartment, cell).to_vec(),
            Element::Interface { cell, inner, outer } => {
                let mut v = self.dofs(inner, cell).to_vec();
                v.extend(self.dofs(outer, cell));
                v
            }
            Element::Ghost { compartment, lower, upper, .. } => {
                let mut v = self.dofs(compartment, lower).to_vec();
                v.extend(self.dofs(compartment, upper));
                v
            }
        }
    }

    fn element_matrix(&self, e: &Element) -> Vec<T> {
        match *e {
            Element::Volume { compartment, cell } => self.volume_matrix(compartment, cell),
            Element::Interface { cell, inner, outer } => self.interface_matrix(cell, inner, outer),
            Element::Ghost { compartment, axis, .. } => {
                let s = self.cfg.ghost_penalty * self.disc.mesh.h;
                self.ghost_reference[axis][compartment].iter().map(|&v| v * s).collect()
            }
        }
    }

    fn volume_matrix(&self, compartment: usize, cell: CellId) -> Vec<T> {
        let d = self.disc;
        let h = d.mesh.h;
        match d.partition.classes[cell] {
            CellClass::Interior(_) => self.cell_reference[compartment].iter().map(|&v| v * h).collect(),
            _ => {
                let cut = d.partition.cut(cell).expect("cut cell has a decomposition");
                let sigma = d.model.conductivity(compartment);
                let base = d.mesh.cell_min(cell);
                let inv_h = T::one() / h;
                let mut m = [T::zero(); 64];
                let mut point = |x: Vec3<T>, w: T| {
                    let t = [(x[0] - base[0]) * inv_h, (x[1] - base[1]) * inv_h, (x[2] - base[2]) * inv_h];
                    accumulate_stiffness(&mut m, &basis::gradients(t, h), sigma, w);
                };
                for s in cut.snippets.iter().filter(|s| s.compartment == compartment) {
                    match &s.shape {
                        SnippetShape::Tetrahedron(v) => self.tet_rule.for_each_on_tet(v, &mut point),
                        SnippetShape::Cuboid { min, max } => self.box_rule.for_each_on_box(*min, *max, &mut point),
                    }
                }
                m.to_vec()
            }
        }
    }

    fn interface_matrix(&self, cell: CellId, inner: usize, outer: usize) -> Vec<T> {
        let d = self.disc;
        let h = d.mesh.h;
        let cut = d.partition.cut(cell).expect("cut cell has a decomposition");
        let (se, sf) = (d.model.conductivity(inner), d.model.conductivity(outer));
        let base = d.mesh.cell_min(cell);
        let inv_h = T::one() / h;
        let s = self.cfg.variant.symmetry_sign::<T>();
        let mut m = vec![T::zero(); 256];
        for f in cut.facets.iter().filter(|f| f.inner == inner && f.outer == outer) {
            let n = f.normal;
            let iw = InterfaceWeights::new(se, sf, n, h, self.cfg.nu, self.cfg.weighting);
            let pen = iw.penalty(self.cfg.gamma);
            let sne = vec3::scale(se.apply(n), iw.omega_e);
            let snf = vec3::scale(sf.apply(n), iw.omega_f);
            self.tri_rule.for_each_on_triangle(&f.vertices, |x, w| {
                let t = [(x[0] - base[0]) * inv_h, (x[1] - base[1]) * inv_h, (x[2] - base[2]) * inv_h];
                let phi = basis::values(t);
                let g = basis::gradients(t, h);
                let jump: [T; 16] = std::array::from_fn(|k| if k < 8 { phi[k] } else { -phi[k - 8] });
                let flux: [T; 16] =
                    std::array::from_fn(|k| if k < 8 { vec3::dot(g[k], sne) } else { vec3::dot(g[k - 8], snf) });
                for r in 0..16 {
                    let row = &mut m[r * 16..r * 16 + 16];
                    let (jr, fr) = (jump[r], flux[r]);
                    for c in 0..16 {
                        row[c] += w * (-flux[c] * jr + s * fr * jump[c] + pen * jump[c] * jr);
                    }
                }
            });
        }
        m
    }

    fn assemble(&self, terms: Terms) -> CsrMatrix<T> {
        let n = self.disc.space.n_dofs();
        let elements = self.elements(terms);
        let dof_lists: Vec<Vec<u32>> = elements.par_iter().map(|e| self.element_dofs(e)).collect();

        let mut start = vec![0usize; n + 1];
        for list in &dof_lists {
            for &d in list {
                start[d as usize + 1] += 1;
            }
        }
        for i in 0..n {
            start[i + 1] += start[i];
        }
        let mut incidence = vec![0u32; start[n]];
        let mut next = start.clone();
        for (e, list) in dof_lists.iter().enumerate() {
            for &d in list {
                incidence[next[d as usize]] = e as u32;
                next[d as usize] += 1;
            }
        }
        let rows: Vec<Vec<u32>> = (0..n)
            .into_par_iter()
            .map(|d| {
                let mut cols = Vec::new();
                for &e in &incidence[start[d]..start[d + 1]] {
                    cols.extend_from_slice(&dof_lists[e as usize]);
                }
                cols.sort_unstable();
                cols.dedup();
                cols
            })
            .collect();
        drop(incidence);
        let mut matrix = CsrMatrix::from_pattern(n, rows);

        for (chunk, lists) in elements.chunks(2048).zip(dof_lists.chunks(2048)) {
            let mats: Vec<Vec<T>> = chunk.par_iter().map(|e| self.element_matrix(e)).collect();
            for (m, dofs) in mats.iter().zip(lists) {
                let k = dofs.len();
                for (r, &dr) in dofs.iter().enumerate() {
                    for (c, &dc) in dofs.iter().enumerate() {
                        let v = m[r * k + c];
                        if v != T::zero() {
                            matrix.add_to(dr as usize, dc as usize, v);
                        }
                    }
                }
            }
        }
        matrix
    }
}

/// Assembles the selected terms of the bilinear form.
pub fn assemble_terms<T: Real>(disc: &Discretization<T>, cfg: &AssemblyConfig<T>, terms: Terms) -> Result<CsrMatrix<T>> {
    Ok(Assembler::new(disc, *cfg)?.assemble(terms))
}

/// Volume, Nitsche and ghost-penalty contributions in one matrix.
pub fn assemble_system<T: Real>(disc: &Discretization<T>, cfg: &AssemblyConfig<T>) -> Result<SparseSystem<T>> {
    let matrix = assemble_terms(disc, cfg, Terms::ALL)?;
    Ok(SparseSystem { matrix, variant: cfg.variant, gamma: cfg.gamma, ghost_penalty: cfg.ghost_penalty })
}

pub fn assemble_volume<T: Real>(disc: &Discretization<T>, cfg: &AssemblyConfig<T>) -> Result<CsrMatrix<T>> {
    assemble_terms(disc, cfg, Terms::VOLUME)
}

pub fn assemble_nitsche<T: Real>(disc: &Discretization<T>, cfg: &AssemblyConfig<T>) -> Result<CsrMatrix<T>> {
    assemble_terms(disc, cfg, Terms::INTERFACE)
}

pub fn assemble_ghost<T: Real>(disc: &Discretization<T>, cfg: &AssemblyConfig<T>) -> Result<CsrMatrix<T>> {
    assemble_terms(disc, cfg, Terms::GHOST)
}

/// Load vector `sum_q charge_q phi(x_q)` over the trial functions of
/// `compartment`.
pub fn assemble_load<T: Real>(disc: &Discretization<T>, compartment: usize, monopoles: &[(Vec3<T>, T)]) -> Result<Vec<T>> {
    let mut load = vec![T::zero(); disc.space.n_dofs()];
    for &(p, q) in monopoles {
        let cell = disc.locate_in_compartment(p, compartment).ok_or_else(|| {
            Error::Source(format!("monopole at {:?} lies outside compartment {compartment}", vec3::to_f64(p)))
        })?;
        let dofs = disc.space.cell_dofs(&disc.mesh, compartment, cell).expect("cell of the compartment has DOFs");
        let phi = basis::values(basis::local_coordinates(&disc.mesh, cell, p));
        for (&d, f) in dofs.iter().zip(phi) {
            load[d as usize] += q * f;
        }
    }
    Ok(load)
}

/// Load `int_{dOmega} g(c, x, n) phi dS` for Neumann data `g` given as a
/// function of compartment, position and outward normal. Covers mesh-box
/// boundary pieces and boundary facets produced by the outermost level sets.
pub fn assemble_boundary_flux<T: Real>(
    disc: &Discretization<T>,
    order: usize,
    g: impl Fn(usize, Vec3<T>, Vec3<T>) -> T,
) -> Result<Vec<T>> {
    let mesh = &disc.mesh;
    let tri_rule = ReferenceRule::<T, 2>::triangle(order)?;
    let rect_rule = ReferenceRule::<T, 2>::unit_square(order.max(3))?;
    let mut load = vec![T::zero(); disc.space.n_dofs()];
    let lo = mesh.origin;
    let hi = mesh.upper_corner();
    let tol = lit::<T>(1e-9) * mesh.h;
    let plane_of = |p: Vec3<T>| -> Vec<(usize, bool)> {
        let mut v = Vec::new();
        for a in 0..3 {
            if (p[a] - lo[a]).abs() <= tol {
                v.push((a, false));
            }
            if (p[a] - hi[a]).abs() <= tol {
                v.push((a, true));
            }
        }
        v
    };
    let normal_of = |(a, upper): (usize, bool)| {
        let mut n = [T::zero(); 3];
        n[a] = if upper { T::one() } else { -T::one() };
        n
    };
    let mut add = |c: usize, cell: CellId, x: Vec3<T>, w: T, n: Vec3<T>| {
        let dofs = disc.space.cell_dofs(mesh, c, cell).expect("cell of the compartment has DOFs");
        let phi = basis::values(basis::local_coordinates(mesh, cell, x));
        let gv = g(c, x, n) * w;
        for (&d, f) in dofs.iter().zip(phi) {
            load[d as usize] += gv * f;
        }
    };
    for cell in 0..mesh.n_cells() {
        match disc.partition.classes[cell] {
            CellClass::Exterior => {}
            CellClass::Interior(c) => {
                for (k, face) in mesh.cell_faces(cell).into_iter().enumerate() {
                    let (_, lower, upper) = mesh.face_cells(face);
                    if lower.is_some() && upper.is_some() {
                        continue;
                    }
                    let n = normal_of((k / 2, k % 2 == 1));
                    let (corner, ea, eb) = mesh.face_geometry(face);
                    rect_rule.for_each_on_rectangle(corner, ea, eb, |x, w| add(c, cell, x, w, n));
                }
            }
            CellClass::Cut => {
                let cut = disc.partition.cut(cell).expect("cut cell has a decomposition");
                for s in &cut.snippets {
                    match &s.shape {
                        SnippetShape::Tetrahedron(v) => {
                            for skip in 0..4 {
                                let tri: Vec<Vec3<T>> = (0..4).filter(|&i| i != skip).map(|i| v[i]).collect();
                                let planes = plane_of(tri[0]);
                                for pl in planes {
                                    if plane_of(tri[1]).contains(&pl) && plane_of(tri[2]).contains(&pl) {
                                        let n = normal_of(pl);
                                        tri_rule.for_each_on_triangle(&[tri[0], tri[1], tri[2]], |x, w| {
                                            add(s.compartment, cell, x, w, n)
                                        });
                                    }
                                }
                            }
                        }
                        SnippetShape::Cuboid { min, max } => {
                            for a in 0..3 {
                                for upper in [false, true] {
                                    let coord = if upper { max[a] } else { min[a] };
                                    let bound = if upper { hi[a] } else { lo[a] };
                                    if (coord - bound).abs() > tol {
                                        continue;
                                    }
                                    let (a1, a2) = ((a + 1) % 3, (a + 2) % 3);
                                    let mut corner = *min;
                                    corner[a] = coord;
                                    let mut ea = [T::zero(); 3];
                                    ea[a1] = max[a1] - min[a1];
                                    let mut eb = [T::zero(); 3];
                                    eb[a2] = max[a2] - min[a2];
                                    let n = normal_of((a, upper));
                                    rect_rule.for_each_on_rectangle(corner, ea, eb, |x, w| add(s.compartment, cell, x, w, n));
                                }
                            }
                        }
                    }
                }
                for f in &cut.boundary_facets {
                    tri_rule.for_each_on_triangle(&f.vertices, |x, w| add(f.compartment, cell, x, w, f.normal));
                }
            }
        }
    }
    Ok(load)
}
