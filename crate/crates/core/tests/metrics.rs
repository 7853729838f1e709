use cutfem_eeg::analytic::sphere_forward;
use cutfem_eeg::metrics::{dipole_scan, mag, rdm, LeadField};
use cutfem_eeg::pipeline::three_layer_sphere;
use cutfem_eeg::sources::{fibonacci_sphere, Dipole};
use cutfem_eeg::vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn rdm_and_mag_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let u = random_vec(&mut rng, 32);
        let scale = |a: f64| u.iter().map(|x| a * x).collect::<Vec<_>>();
        assert!(rdm(&u, &u).unwrap().abs() <= 1e-12);
        assert!((rdm(&u, &scale(-1.0)).unwrap() - 100.0).abs() <= 1e-12);
        assert!(rdm(&u, &scale(rng.gen_range(0.01..100.0))).unwrap().abs() <= 1e-12);
        assert!((mag(&u, &scale(2.0)).unwrap() - 100.0).abs() <= 1e-12);
        assert!((mag(&u, &scale(0.5)).unwrap() + 50.0).abs() <= 1e-12);
        let v = random_vec(&mut rng, 32);
        let r = rdm(&u, &v).unwrap();
        assert!((0.0..=100.0).contains(&r));
        assert!((rdm(&scale(3.0), &v).unwrap() - r).abs() <= 1e-12);
        // mag(u, v) = -100 (1 - 1 / (1 + mag(v, u) / 100))
        let (m_uv, m_vu) = (mag(&u, &v).unwrap(), mag(&v, &u).unwrap());
        assert!((m_uv + 100.0 * (1.0 - 1.0 / (1.0 + m_vu / 100.0))).abs() <= 1e-12 * (1.0 + m_uv.abs()));
    }
}

#[test]
fn metrics_reject_degenerate_input() {
    assert!(rdm(&[0.0, 0.0], &[1.0, 2.0]).is_err());
    assert!(rdm(&[1.0, 2.0], &[3.0, 3.0]).is_err());
    assert!(mag(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    assert!(rdm(&[1.0, 2.0], &[1.0]).is_err());
}

fn random_lead_field(rng: &mut ChaCha8Rng, electrodes: usize, sources: usize) -> LeadField<f64> {
    let cols = (0..sources).map(|_| [random_vec(rng, electrodes), random_vec(rng, electrodes), random_vec(rng, electrodes)]).collect();
    LeadField::from_columns(electrodes, vec![[0.0; 3]; sources], cols).unwrap()
}

#[test]
fn scan_recovers_a_lead_field_column() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let lf = random_lead_field(&mut rng, 40, 25);
    for k in (0..lf.n_columns()).step_by(7) {
        let data = lf.column(k);
        let fit = dipole_scan(&lf, &data).unwrap();
        assert_eq!(fit.source, k / 3);
        assert!((fit.goodness_of_fit - 100.0).abs() < 1e-9);
        let scaled: Vec<f64> = data.iter().map(|x| -7.5 * x).collect();
        let fit2 = dipole_scan(&lf, &scaled).unwrap();
        assert_eq!(fit2.source, fit.source);
        assert!((fit2.goodness_of_fit - fit.goodness_of_fit).abs() < 1e-9);
    }
}

#[test]
fn scan_of_orthogonal_data_explains_nothing() {
    // columns supported on electrodes 0..4, data on 4..8; both zero mean
    let cols = |a: [f64; 4]| {
        let mut v = vec![0.0; 8];
        v[..4].copy_from_slice(&a);
        v
    };
    let block = [cols([1.0, -1.0, 0.0, 0.0]), cols([0.0, 1.0, -1.0, 0.0]), cols([0.0, 0.0, 1.0, -1.0])];
    let lf = LeadField::from_columns(8, vec![[0.0; 3]; 2], vec![block.clone(), block]).unwrap();
    let data = vec![0.0, 0.0, 0.0, 0.0, 1.0, -2.0, 3.0, -2.0];
    let fit = dipole_scan(&lf, &data).unwrap();
    assert!(fit.goodness_of_fit.abs() < 1e-12);
    assert_eq!(fit.source, 0);
}

#[test]
fn rank_deficient_sources_are_skipped() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = random_vec(&mut rng, 12);
    let good = [random_vec(&mut rng, 12), random_vec(&mut rng, 12), random_vec(&mut rng, 12)];
    let bad = [a.clone(), a.clone(), a];
    let lf = LeadField::from_columns(12, vec![[0.0; 3]; 2], vec![bad.clone(), good]).unwrap();
    assert_eq!(dipole_scan(&lf, &bad[0]).unwrap().source, 1);
}

#[test]
fn scan_on_analytic_lead_field_finds_true_source() {
    let sphere = three_layer_sphere();
    let els = fibonacci_sphere(sphere.center, 92.0, 64);
    let mut positions = Vec::new();
    for i in -6..=6 {
        for j in -6..=6 {
            for k in -6..=6 {
                let p = vec3::add(sphere.center, [8.0 * i as f64, 8.0 * j as f64, 8.0 * k as f64]);
                if vec3::distance(p, sphere.center) < 70.0 {
                    positions.push(p);
                }
            }
        }
    }
    let columns = positions
        .iter()
        .map(|&p| {
            let col = |m: [f64; 3]| sphere_forward(&sphere, &Dipole { position: p, moment: m }, &els).unwrap();
            [col([1.0, 0.0, 0.0]), col([0.0, 1.0, 0.0]), col([0.0, 0.0, 1.0])]
        })
        .collect();
    let lf = LeadField::from_columns(els.len(), positions.clone(), columns).unwrap();
    let truth = Dipole { position: [150.3, 118.2, 141.7], moment: [0.2, -0.5, 0.8] };
    let data = sphere_forward(&sphere, &truth, &els).unwrap();
    let fit = dipole_scan(&lf, &data).unwrap();
    assert!(vec3::distance(positions[fit.source], truth.position) <= 8.0);
    assert!(fit.goodness_of_fit >= 99.0);
}
