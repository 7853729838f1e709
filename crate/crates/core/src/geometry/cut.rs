//! Decomposition of cut background cells into single-compartment snippets.
//!
//! A cut cell is optionally refined dyadically. Sub-cubes without a sign
//! change become box snippets; the others are split into six Kuhn
//! tetrahedra which are then clipped by every level set in compartment order.
//! Each clip keeps the inside part for the current compartment and passes the
//! outside part on to the next level set, so cells crossed by several surfaces
//! are handled by repeated cutting of the pieces produced so far. Interface
//! triangles are clipped the same way to find the compartment on their outer
//! side.

use crate::geometry::mesh::{BackgroundMesh, CellId};
use crate::geometry::model::CompartmentModel;
use crate::real::{from_usize, lit, Real};
use crate::vec3::{self, Vec3};

/// Parameters of the cut-cell decomposition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutConfig<T> {
    /// Dyadic refinement levels applied to cut cells (0..=3).
    pub refinement: usize,
    /// Dyadic sample levels used to detect cut cells (vertices plus
    /// `2^level - 1` interior samples per edge).
    pub classification_level: usize,
    /// Pieces below `min_volume_fraction * h^3` are merged into the majority side.
    pub min_volume_fraction: T,
    /// Bisection tolerance for edge crossings, relative to `h`.
    pub bisection_tolerance: T,
}

impl<T: Real> Default for CutConfig<T> {
    fn default() -> Self {
        Self {
            refinement: 1,
            classification_level: 1,
            min_volume_fraction: lit(1e-12),
            bisection_tolerance: lit(1e-10),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SnippetShape<T> {
    Tetrahedron([Vec3<T>; 4]),
    /// Axis-aligned box from an uncut sub-cube.
    Cuboid { min: Vec3<T>, max: Vec3<T> },
}

/// A piece of a cut cell lying entirely inside one compartment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Snippet<T> {
    pub shape: SnippetShape<T>,
    pub compartment: usize,
}

impl<T: Real> Snippet<T> {
    pub fn volume(&self) -> T {
        match &self.shape {
            SnippetShape::Tetrahedron(v) => vec3::tet_signed_volume(v[0], v[1], v[2], v[3]).abs(),
            SnippetShape::Cuboid { min, max } => (max[0] - min[0]) * (max[1] - min[1]) * (max[2] - min[2]),
        }
    }

    pub fn centroid(&self) -> Vec3<T> {
        match &self.shape {
            SnippetShape::Tetrahedron(v) => {
                let s = vec3::add(vec3::add(v[0], v[1]), vec3::add(v[2], v[3]));
                vec3::scale(s, lit(0.25))
            }
            SnippetShape::Cuboid { min, max } => vec3::scale(vec3::add(*min, *max), lit(0.5)),
        }
    }

    /// Point containment with a relative tolerance `tol`.
    pub fn contains(&self, p: Vec3<T>, tol: T) -> bool {
        match &self.shape {
            SnippetShape::Cuboid { min, max } => {
                (0..3).all(|a| {
                    let slack = tol * (max[a] - min[a]);
                    p[a] >= min[a] - slack && p[a] <= max[a] + slack
                })
            }
            SnippetShape::Tetrahedron(v) => {
                let vol = vec3::tet_signed_volume(v[0], v[1], v[2], v[3]);
                if vol == T::zero() {
                    return false;
                }
                // sub-volumes against the longest edge cubed, so slivers keep
                // their own interior points
                let mut edge = T::zero();
                for i in 0..4 {
                    for j in i + 1..4 {
                        edge = edge.max(vec3::distance(v[i], v[j]));
                    }
                }
                let slack = tol * edge * edge * edge;
                let sign = vol.signum();
                [
                    vec3::tet_signed_volume(p, v[1], v[2], v[3]),
                    vec3::tet_signed_volume(v[0], p, v[2], v[3]),
                    vec3::tet_signed_volume(v[0], v[1], p, v[3]),
                    vec3::tet_signed_volume(v[0], v[1], v[2], p),
                ]
                .iter()
                .all(|&x| sign * x >= -slack)
            }
        }
    }
}

/// Planar interface triangle between compartments `inner < outer`, with the
/// unit normal pointing from `inner` into `outer`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterfaceFacet<T> {
    pub vertices: [Vec3<T>; 3],
    pub normal: Vec3<T>,
    pub inner: usize,
    pub outer: usize,
}

/// Piece of the outer domain boundary produced by a level set, with the
/// outward unit normal of `compartment`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryFacet<T> {
    pub vertices: [Vec3<T>; 3],
    pub normal: Vec3<T>,
    pub compartment: usize,
}

/// Decomposition of one cut cell.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellCut<T> {
    pub snippets: Vec<Snippet<T>>,
    pub facets: Vec<InterfaceFacet<T>>,
    pub boundary_facets: Vec<BoundaryFacet<T>>,
    /// Volume of the cell lying outside every compartment.
    pub exterior_volume: T,
}

impl<T: Real> CellCut<T> {
    pub fn compartment_volume(&self, compartment: usize) -> T {
        self.snippets.iter().filter(|s| s.compartment == compartment).map(|s| s.volume()).sum()
    }

    pub fn total_volume(&self) -> T {
        self.snippets.iter().map(|s| s.volume()).sum()
    }

    pub fn has_compartment(&self, compartment: usize) -> bool {
        self.snippets.iter().any(|s| s.compartment == compartment)
            || self.facets.iter().any(|f| f.inner == compartment || f.outer == compartment)
    }

    /// Compartment of the snippet containing `p`, if any.
    pub fn compartment_at(&self, p: Vec3<T>) -> Option<usize> {
        let tol = lit::<T>(1e-9);
        self.snippets.iter().find(|s| s.contains(p, tol)).map(|s| s.compartment)
    }
}

/// Kuhn decomposition of a cube into six tetrahedra sharing the main diagonal.
const KUHN: [[usize; 4]; 6] = [[0, 1, 3, 7], [0, 1, 5, 7], [0, 2, 3, 7], [0, 2, 6, 7], [0, 4, 5, 7], [0, 4, 6, 7]];

#[inline]
fn inside<T: Real>(v: T) -> bool {
    v <= T::zero()
}

struct Cutter<'a, T> {
    model: &'a CompartmentModel<T>,
    min_volume: T,
    tolerance: T,
    min_area: T,
}

impl<T: Real> Cutter<'_, T> {
    /// Crossing on the segment from an inside point `a` to an outside point `b`.
    fn crossing(&self, level: usize, a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
        let ls = &self.model.compartments[level].level_set;
        let (mut lo, mut hi) = (a, b);
        let half = lit::<T>(0.5);
        while vec3::distance(lo, hi) > self.tolerance {
            let mid = vec3::lerp(lo, hi, half);
            // the tolerance can sit below the scalar's resolution
            if mid == lo || mid == hi {
                break;
            }
            if inside(ls.value(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        vec3::lerp(lo, hi, half)
    }

    fn orient(&self, level: usize, tri: [Vec3<T>; 3]) -> Option<([Vec3<T>; 3], Vec3<T>)> {
        let n = vec3::cross(vec3::sub(tri[1], tri[0]), vec3::sub(tri[2], tri[0]));
        if vec3::norm(n) * lit(0.5) <= self.min_area {
            return None;
        }
        let mut n = vec3::normalize(n)?;
        let c = vec3::scale(vec3::add(vec3::add(tri[0], tri[1]), tri[2]), lit(1.0 / 3.0));
        let g = self.model.compartments[level].level_set.gradient(c);
        if vec3::dot(n, g) < T::zero() {
            n = vec3::scale(n, -T::one());
        }
        Some((tri, n))
    }

    /// Splits a tetrahedron by level set `level`. Returns inside pieces,
    /// outside pieces and interface triangles.
    #[allow(clippy::type_complexity)]
    fn split_tet(
        &self,
        level: usize,
        tet: [Vec3<T>; 4],
    ) -> (Vec<[Vec3<T>; 4]>, Vec<[Vec3<T>; 4]>, Vec<[Vec3<T>; 3]>) {
        let ls = &self.model.compartments[level].level_set;
        let ins: [bool; 4] = std::array::from_fn(|i| inside(ls.value(tet[i])));
        let count = ins.iter().filter(|&&b| b).count();
        if count == 0 {
            return (vec![], vec![tet], vec![]);
        }
        if count == 4 {
            return (vec![tet], vec![], vec![]);
        }
        let inn: Vec<usize> = (0..4).filter(|&i| ins[i]).collect();
        let out: Vec<usize> = (0..4).filter(|&i| !ins[i]).collect();
        let x = |i: usize, o: usize| self.crossing(level, tet[i], tet[o]);
        let (inside_tets, outside_tets, tris) = match count {
            1 => {
                let a = inn[0];
                let (b, c, d) = (out[0], out[1], out[2]);
                let (pb, pc, pd) = (x(a, b), x(a, c), x(a, d));
                (vec![[tet[a], pb, pc, pd]], prism([pb, pc, pd], [tet[b], tet[c], tet[d]]), vec![[pb, pc, pd]])
            }
            3 => {
                let d = out[0];
                let (a, b, c) = (inn[0], inn[1], inn[2]);
                let (pa, pb, pc) = (x(a, d), x(b, d), x(c, d));
                (prism([tet[a], tet[b], tet[c]], [pa, pb, pc]), vec![[pa, pb, pc, tet[d]]], vec![[pa, pb, pc]])
            }
            _ => {
                let (a, b) = (inn[0], inn[1]);
                let (c, d) = (out[0], out[1]);
                let (pac, pad, pbc, pbd) = (x(a, c), x(a, d), x(b, c), x(b, d));
                (
                    prism([tet[a], pac, pad], [tet[b], pbc, pbd]),
                    prism([tet[c], pac, pbc], [tet[d], pad, pbd]),
                    vec![[pac, pbc, pbd], [pac, pbd, pad]],
                )
            }
        };
        let vol = |ts: &[[Vec3<T>; 4]]| ts.iter().map(|t| vec3::tet_signed_volume(t[0], t[1], t[2], t[3]).abs()).sum::<T>();
        let vin = vol(&inside_tets);
        let vout = vol(&outside_tets);
        if vin < self.min_volume {
            log::debug!("merging degenerate inside piece of volume {vin:?} into outer side");
            return (vec![], vec![tet], vec![]);
        }
        if vout < self.min_volume {
            log::debug!("merging degenerate outside piece of volume {vout:?} into inner side");
            return (vec![tet], vec![], vec![]);
        }
        (inside_tets, outside_tets, tris)
    }

    /// Splits a triangle by level set `level` into inside and outside parts.
    fn split_triangle(&self, level: usize, tri: [Vec3<T>; 3]) -> (Vec<[Vec3<T>; 3]>, Vec<[Vec3<T>; 3]>) {
        let ls = &self.model.compartments[level].level_set;
        let ins: [bool; 3] = std::array::from_fn(|i| inside(ls.value(tri[i])));
        let count = ins.iter().filter(|&&b| b).count();
        match count {
            0 => (vec![], vec![tri]),
            3 => (vec![tri], vec![]),
            _ => {
                // rotate so vertex 0 is the lone vertex
                let lone = (0..3).find(|&i| ins[i] == (count == 1)).unwrap();
                let a = tri[lone];
                let b = tri[(lone + 1) % 3];
                let c = tri[(lone + 2) % 3];
                let (pb, pc) = if count == 1 {
                    (self.crossing(level, a, b), self.crossing(level, a, c))
                } else {
                    (self.crossing(level, b, a), self.crossing(level, c, a))
                };
                let small = vec![[a, pb, pc]];
                let quad = vec![[pb, b, c], [pb, c, pc]];
                if count == 1 {
                    (small, quad)
                } else {
                    (quad, small)
                }
            }
        }
    }
}

fn prism<T: Copy>(bottom: [Vec3<T>; 3], top: [Vec3<T>; 3]) -> Vec<[Vec3<T>; 4]> {
    vec![
        [bottom[0], bottom[1], bottom[2], top[0]],
        [bottom[1], bottom[2], top[0], top[1]],
        [bottom[2], top[0], top[1], top[2]],
    ]
}

/// Decomposes a cut cell into snippets and facets.
pub fn cut_cell<T: Real>(
    mesh: &BackgroundMesh<T>,
    cell: CellId,
    model: &CompartmentModel<T>,
    config: &CutConfig<T>,
) -> CellCut<T> {
    let h = mesh.h;
    let levels = config.refinement;
    let n = 1usize << levels;
    let sub_h = h / from_usize::<T>(n);
    let base = mesh.cell_min(cell);
    let cutter = Cutter {
        model,
        min_volume: config.min_volume_fraction * h * h * h,
        tolerance: config.bisection_tolerance * h,
        min_area: T::geometric_epsilon() * T::geometric_epsilon() * h * h,
    };
    let nl = model.len();
    let lattice = n + 1;
    let point = |i: usize, j: usize, k: usize| -> Vec3<T> {
        [
            base[0] + from_usize::<T>(i) * sub_h,
            base[1] + from_usize::<T>(j) * sub_h,
            base[2] + from_usize::<T>(k) * sub_h,
        ]
    };
    // level-set values on the refinement lattice, [point][level]
    let mut values = vec![T::zero(); lattice * lattice * lattice * nl];
    for k in 0..lattice {
        for j in 0..lattice {
            for i in 0..lattice {
                let p = point(i, j, k);
                let idx = i + lattice * (j + lattice * k);
                for (l, c) in model.compartments.iter().enumerate() {
                    values[idx * nl + l] = c.level_set.value(p);
                }
            }
        }
    }

    let mut result = CellCut { exterior_volume: T::zero(), ..Default::default() };
    let mut pending: Vec<(usize, [Vec3<T>; 3], Vec3<T>)> = Vec::new();
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let corner_idx: [usize; 8] = std::array::from_fn(|c| {
                    (i + (c & 1)) + lattice * ((j + ((c >> 1) & 1)) + lattice * (k + ((c >> 2) & 1)))
                });
                let uniform = (0..nl).all(|l| {
                    let s0 = inside(values[corner_idx[0] * nl + l]);
                    corner_idx.iter().all(|&ci| inside(values[ci * nl + l]) == s0)
                });
                let min = point(i, j, k);
                let max = point(i + 1, j + 1, k + 1);
                if uniform {
                    let v0 = &values[corner_idx[0] * nl..corner_idx[0] * nl + nl];
                    match CompartmentModel::compartment_from_values(v0) {
                        Some(c) => result.snippets.push(Snippet { shape: SnippetShape::Cuboid { min, max }, compartment: c }),
                        None => result.exterior_volume += sub_h * sub_h * sub_h,
                    }
                    continue;
                }
                let corners: [Vec3<T>; 8] = std::array::from_fn(|c| point(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)));
                let mut unassigned: Vec<[Vec3<T>; 4]> =
                    KUHN.iter().map(|t| [corners[t[0]], corners[t[1]], corners[t[2]], corners[t[3]]]).collect();
                let mut local_pending: Vec<(usize, [Vec3<T>; 3], Vec3<T>)> = Vec::new();
                for l in 0..nl {
                    // resolve the outer side of earlier facets
                    let mut still = Vec::with_capacity(local_pending.len());
                    for (owner, tri, normal) in local_pending.drain(..) {
                        let (ins, outs) = cutter.split_triangle(l, tri);
                        for t in ins {
                            if vec3::triangle_area(t[0], t[1], t[2]) > cutter.min_area {
                                result.facets.push(InterfaceFacet { vertices: t, normal, inner: owner, outer: l });
                            }
                        }
                        for t in outs {
                            if vec3::triangle_area(t[0], t[1], t[2]) > cutter.min_area {
                                still.push((owner, t, normal));
                            }
                        }
                    }
                    local_pending = still;
                    if unassigned.is_empty() {
                        continue;
                    }
                    let mut next = Vec::with_capacity(unassigned.len());
                    for tet in unassigned.drain(..) {
                        let (ins, outs, tris) = cutter.split_tet(l, tet);
                        for t in ins {
                            result.snippets.push(Snippet { shape: SnippetShape::Tetrahedron(t), compartment: l });
                        }
                        next.extend(outs);
                        for tri in tris {
                            if let Some((tri, normal)) = cutter.orient(l, tri) {
                                local_pending.push((l, tri, normal));
                            }
                        }
                    }
                    unassigned = next;
                }
                for t in &unassigned {
                    result.exterior_volume += vec3::tet_signed_volume(t[0], t[1], t[2], t[3]).abs();
                }
                pending.append(&mut local_pending);
            }
        }
    }
    result.boundary_facets =
        pending.into_iter().map(|(c, vertices, normal)| BoundaryFacet { vertices, normal, compartment: c }).collect();
    result
}
