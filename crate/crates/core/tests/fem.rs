use std::collections::BTreeSet;

use cutfem_eeg::fem::{
    assemble_boundary_flux, assemble_system, assemble_terms, AssemblyConfig, AverageWeighting, Discretization, Terms,
    Variant,
};
use cutfem_eeg::geometry::{BackgroundMesh, CellClass, Compartment, CompartmentModel, Conductivity, CutConfig, LevelSetField};
use cutfem_eeg::pipeline::shifted_sphere_compartments;
use cutfem_eeg::solver::{solve, Preconditioner, SolverConfig};

fn slab_model(offset: f64, sigma: [f64; 2]) -> CompartmentModel<f64> {
    CompartmentModel::new(vec![
        Compartment {
            name: "left".into(),
            level_set: LevelSetField::half_space([1.0, 0.0, 0.0], offset, 0).unwrap(),
            conductivity: Conductivity::isotropic(sigma[0]),
        },
        Compartment {
            name: "rest".into(),
            level_set: LevelSetField::half_space([1.0, 0.0, 0.0], 1e3, 1).unwrap(),
            conductivity: Conductivity::isotropic(sigma[1]),
        },
    ])
    .unwrap()
}

fn tight_solver() -> SolverConfig<f64> {
    SolverConfig { tolerance: 1e-13, preconditioner: Preconditioner::Ilu0, ..Default::default() }
}

/// Solves the pure Neumann problem for the piecewise linear field
/// `u_c(x) = slopes[c] . x + shift[c]` and compares with its interpolant.
fn patch_error(variant: Variant, sigma: [f64; 2], offset: f64) -> f64 {
    let mesh = BackgroundMesh::new([0.0; 3], 1.0, [4, 3, 3]).unwrap();
    let disc = Discretization::build(mesh, slab_model(offset, sigma), CutConfig::default()).unwrap();
    let cfg = AssemblyConfig { variant, ..Default::default() };
    let system = assemble_system(&disc, &cfg).unwrap();
    // flux continuity across x = offset: sigma0 a0 = sigma1 a1
    let a0 = 1.0;
    let a1 = sigma[0] * a0 / sigma[1];
    let slopes = [[a0, -0.5, 0.25], [a1, -0.5, 0.25]];
    let shift = [0.0, (a0 - a1) * offset];
    let u = |c: usize, x: [f64; 3]| slopes[c][0] * x[0] + slopes[c][1] * x[1] + slopes[c][2] * x[2] + shift[c];
    let load = assemble_boundary_flux(&disc, 4, |c, _x, n| {
        sigma[c] * (slopes[c][0] * n[0] + slopes[c][1] * n[1] + slopes[c][2] * n[2])
    })
    .unwrap();
    let (x, _) = solve(&system, &load, &tight_solver()).unwrap();
    let mut exact = disc.space.interpolate(&disc.mesh, u);
    let mean = exact.iter().sum::<f64>() / exact.len() as f64;
    exact.iter_mut().for_each(|v| *v -= mean);
    x.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[test]
fn homogeneous_patch_test_reproduces_linear_field() {
    for variant in [Variant::Nwipg, Variant::Swipg] {
        let err = patch_error(variant, [1.0, 1.0], 1.37);
        assert!(err < 1e-7, "{variant:?}: {err}");
    }
}

#[test]
fn piecewise_linear_field_with_conductivity_jump() {
    for variant in [Variant::Nwipg, Variant::Swipg] {
        let err = patch_error(variant, [1.0, 0.1], 2.21);
        assert!(err < 1e-7, "{variant:?}: {err}");
    }
}

fn shifted_disc(h: f64) -> Discretization<f64> {
    let mesh = BackgroundMesh::covering([35.0; 3], [219.0; 3], h, 1).unwrap();
    Discretization::build(mesh, shifted_sphere_compartments().unwrap(), CutConfig::default()).unwrap()
}

#[test]
fn symmetric_variant_and_constant_null_space() {
    let disc = shifted_disc(16.0);
    for variant in [Variant::Nwipg, Variant::Swipg] {
        for weighting in [AverageWeighting::Direct, AverageWeighting::Swapped] {
            let cfg = AssemblyConfig { variant, weighting, ..Default::default() };
            let system = assemble_system(&disc, &cfg).unwrap();
            let k = &system.matrix;
            let knorm = k.norm_inf();
            let ones = vec![1.0; k.n_cols];
            let k1 = k.mul_vec(&ones).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(k1 <= 1e-8 * knorm, "{variant:?}: |K1| = {k1}");
            assert!(k.pattern_is_symmetric());
            if variant == Variant::Swipg {
                assert!(k.asymmetry_inf() <= 1e-10 * knorm);
            } else {
                assert!(k.asymmetry_inf() > 1e-6 * knorm);
            }
        }
    }
}

#[test]
fn nitsche_term_vanishes_without_interfaces() {
    let mesh = BackgroundMesh::<f64>::new([0.0; 3], 2.0, [3, 3, 3]).unwrap();
    let model = CompartmentModel::new(vec![Compartment {
        name: "all".into(),
        level_set: LevelSetField::half_space([1.0, 0.0, 0.0], 50.0, 0).unwrap(),
        conductivity: Conductivity::isotropic(0.5),
    }])
    .unwrap();
    let disc = Discretization::build(mesh, model, CutConfig::default()).unwrap();
    let cfg = AssemblyConfig::default();
    let nitsche = assemble_terms(&disc, &cfg, Terms::INTERFACE).unwrap();
    assert!(nitsche.values.iter().all(|v| *v == 0.0));
    // uncut cells: standard Q1 stiffness h * sigma * K_ref, diagonal h sigma / 3
    let volume = assemble_terms(&disc, &cfg, Terms::VOLUME).unwrap();
    let corner = disc.space.dof(0, 0).unwrap();
    assert!((volume.get(corner, corner) - 2.0 * 0.5 / 3.0).abs() < 1e-13);
    let along_edge = disc.space.dof(0, 1).unwrap();
    assert!((volume.get(corner, along_edge) - 0.0).abs() < 1e-13);
    let diagonal = disc.space.dof(0, disc.mesh.vertex_index([1, 1, 1])).unwrap();
    assert!((volume.get(corner, diagonal) + 2.0 * 0.5 / 12.0).abs() < 1e-13);
}

#[test]
fn dof_count_matches_submesh_vertices() {
    let disc = shifted_disc(8.0);
    let mut expected = 0;
    for cells in &disc.submeshes.cells {
        let vertices: BTreeSet<usize> = cells.iter().flat_map(|&c| disc.mesh.cell_vertices(c)).collect();
        expected += vertices.len();
    }
    assert_eq!(disc.space.n_dofs(), expected);
}

#[test]
fn cut_cells_belong_to_every_touched_submesh() {
    let disc = shifted_disc(8.0);
    for (cell, cut) in &disc.partition.cuts {
        assert_eq!(disc.partition.classes[*cell], CellClass::Cut);
        for c in 0..4 {
            if cut.has_compartment(c) {
                assert!(disc.submeshes.contains(c, *cell));
            }
        }
    }
    // brain cut cells near the skull side lie in at least one outer submesh too
    let brain_cut: Vec<_> = disc.partition.cuts.iter().filter(|(_, c)| c.has_compartment(0)).collect();
    assert!(!brain_cut.is_empty());
    for (cell, _) in brain_cut {
        assert!((1..4).any(|c| disc.submeshes.contains(c, *cell)));
    }
}
