use cutfem_eeg::fem::Discretization;
use cutfem_eeg::geometry::{BackgroundMesh, Compartment, CompartmentModel, Conductivity, CutConfig, LevelSetField};
use cutfem_eeg::pipeline::{sphere_compartments, sphere_mesh, three_layer_sphere};
use cutfem_eeg::sources::{
    monopole_sites, read_dipoles, read_points, source_grid, venant_monopoles, write_points, Dipole, Neighborhood,
    VenantConfig,
};
use cutfem_eeg::{vec3, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn three_layer(h: f64) -> Discretization<f64> {
    let sphere = three_layer_sphere();
    Discretization::build(sphere_mesh(&sphere, h).unwrap(), sphere_compartments(&sphere, &[]).unwrap(), CutConfig::default())
        .unwrap()
}

#[test]
fn venant_moments_for_random_dipoles() {
    let disc = three_layer(8.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = VenantConfig::default();
    for _ in 0..100 {
        let dir = loop {
            let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            if let Some(u) = vec3::normalize(v) {
                break u;
            }
        };
        let position = vec3::add([127.0; 3], vec3::scale(dir, rng.gen_range(0.0..79.0)));
        let moment = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let dipole = Dipole { position, moment };
        let mono = venant_monopoles(&dipole, &disc, 0, &cfg).unwrap();
        let l1: f64 = mono.iter().map(|(_, q)| q.abs()).sum();
        let q0: f64 = mono.iter().map(|(_, q)| q).sum();
        assert!(q0.abs() <= 1e-12 * l1);
        let mut first = [0.0; 3];
        for (x, q) in &mono {
            for a in 0..3 {
                first[a] += q * (x[a] - position[a]);
            }
        }
        let err = vec3::norm(vec3::sub(first, moment)) / vec3::norm(moment);
        assert!(err <= 1e-8, "first moment error {err}");
        for (x, _) in &mono {
            assert_eq!(disc.model.compartment_of(*x), Some(0));
        }
    }
}

#[test]
fn neighborhood_controls_site_count() {
    let disc = three_layer(8.0);
    let p = [127.3, 126.1, 128.2];
    let small = monopole_sites(&disc, 0, p, &VenantConfig { neighborhood: Neighborhood::ContainingCell, ..Default::default() }).unwrap();
    let large = monopole_sites(&disc, 0, p, &VenantConfig::default()).unwrap();
    assert_eq!(small.len(), 8);
    assert_eq!(large.len(), 56);
}

#[test]
fn dipole_outside_source_compartment_is_rejected() {
    let disc = three_layer(8.0);
    let d = Dipole { position: [127.0, 127.0, 127.0 + 83.0], moment: [1.0, 0.0, 0.0] };
    assert!(matches!(venant_monopoles(&d, &disc, 0, &VenantConfig::default()), Err(Error::Source(_))));
}

#[test]
fn grid_counts_lattice_points_inside_the_sphere() {
    let r = 20.0;
    let model = CompartmentModel::new(vec![Compartment {
        name: "ball".into(),
        level_set: LevelSetField::sphere([0.0; 3], r, 0),
        conductivity: Conductivity::isotropic(1.0),
    }])
    .unwrap();
    let mesh = BackgroundMesh::covering([-r; 3], [r; 3], 4.0, 1).unwrap();
    let disc = Discretization::build(mesh, model, CutConfig::default()).unwrap();
    let spacing = r / 2.0;
    let grid = source_grid(&disc, 0, [0.0; 3], spacing).unwrap();
    let mut expected = 0;
    for i in -2i32..=2 {
        for j in -2i32..=2 {
            for k in -2i32..=2 {
                if ((i * i + j * j + k * k) as f64) < 4.0 {
                    expected += 1;
                }
            }
        }
    }
    assert_eq!(grid.len(), expected);
    assert!(grid.iter().all(|p| p.depth > 0.0));
    assert!(source_grid(&disc, 0, [0.0; 3], 0.0).is_err());
}

#[test]
fn point_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dipoles.txt");
    let pts = vec![([1.0, 2.0, 3.0], Some([0.5, -0.25, 1e-3])), ([4.0, 5.5, -6.0], Some([0.0, 0.0, 1.0]))];
    write_points::<f64>(&path, &pts).unwrap();
    assert_eq!(read_points::<f64>(&path).unwrap(), pts);
    let dips = read_dipoles::<f64>(&path).unwrap();
    assert_eq!(dips[1].moment, [0.0, 0.0, 1.0]);
    std::fs::write(&path, "# electrodes\n1 2 3\n4 5 6 # trailing\n").unwrap();
    assert_eq!(read_points::<f64>(&path).unwrap().len(), 2);
    assert!(read_dipoles::<f64>(&path).is_err());
    std::fs::write(&path, "1 2\n").unwrap();
    assert!(matches!(read_points::<f64>(&path), Err(Error::Format { .. })));
}
