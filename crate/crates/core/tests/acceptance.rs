//! Acceptance criteria, one pass/fail line each.
//!
//! `cargo test --test acceptance` runs them all; passing criterion numbers
//! (`cargo test --test acceptance -- 3 7`) runs a subset.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use cutfem_eeg::analytic::{homogeneous_sphere_potential, sphere_forward, SphereModel};
use cutfem_eeg::fem::{assemble_boundary_flux, assemble_system, AssemblyConfig, Discretization, Variant};
use cutfem_eeg::geometry::{
    BackgroundMesh, Compartment, CompartmentModel, Conductivity, CutCellPartition, CutConfig, LevelSetField,
};
use cutfem_eeg::metrics::{dipole_scan, mag, rdm, LeadField};
use cutfem_eeg::pipeline::{
    sphere_compartments, sphere_mesh, three_layer_sphere, validate_sphere, ForwardConfig, ForwardModel, ValidationReport,
    ValidationStudy,
};
use cutfem_eeg::solver::{solve, Preconditioner, SolverConfig};
use cutfem_eeg::sources::{fibonacci_sphere, venant_monopoles, Dipole, VenantConfig};
use cutfem_eeg::vec3::{self, Vec3};
use cutfem_eeg::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn ilu(tolerance: f64) -> ForwardConfig<f64> {
    ForwardConfig {
        solver: SolverConfig { tolerance, preconditioner: Preconditioner::Ilu0, ..Default::default() },
        ..Default::default()
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3<f64> {
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = vec3::norm(v);
        if n > 1e-3 && n <= 1.0 {
            return vec3::scale(v, 1.0 / n);
        }
    }
}

fn random_in_ball(rng: &mut ChaCha8Rng, center: Vec3<f64>, radius: f64) -> Vec3<f64> {
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if vec3::norm(v) < 1.0 {
            return vec3::add(center, vec3::scale(v, radius));
        }
    }
}

/// Sphere validation at h = 16, 8 and 4 with the full stratified source set.
struct SphereRuns {
    reports: Vec<(ValidationReport, f64)>,
}

impl SphereRuns {
    fn run() -> Result<Self, Error> {
        let sphere = three_layer_sphere();
        let study = ValidationStudy::default();
        let mut reports = Vec::new();
        for h in [16.0, 8.0, 4.0] {
            let start = Instant::now();
            let report = validate_sphere::<f64>(&sphere, h, &study, ilu(1e-8))?;
            reports.push((report, start.elapsed().as_secs_f64()));
        }
        Ok(Self { reports })
    }
}

fn sphere_accuracy(runs: &SphereRuns) -> Outcome {
    let (r, secs) = &runs.reports[2];
    let n_sources = r.records.len() / 2;
    let (med_rdm, med_mag) = (r.median_rdm(), r.median_abs_mag());
    let band = r.band_median_rdm(0.96, 0.98).unwrap_or(f64::NAN);
    let pass = n_sources >= 500 && med_rdm <= 3.0 && med_mag <= 5.0 && band <= 5.0 && *secs <= 900.0;
    outcome(
        pass,
        format!(
            "h=4, {} electrodes, {n_sources} sources x 2 directions: median RDM {med_rdm:.3}% (<= 3), median |MAG| {med_mag:.3}% (<= 5), \
             RDM at ecc 0.96-0.98 {band:.3}% (<= 5), {secs:.0}s (<= 900)",
            r.forward.n_electrodes
        ),
    )
}

fn refinement_convergence(runs: &SphereRuns) -> Outcome {
    let medians: Vec<f64> = runs.reports.iter().map(|(r, _)| r.band_median_rdm(0.5, 0.9).unwrap_or(f64::NAN)).collect();
    let pass = medians.windows(2).all(|w| w[1] < w[0]);
    outcome(
        pass,
        format!("median RDM at ecc 0.5-0.9: h=16 {:.4}%, h=8 {:.4}%, h=4 {:.4}%", medians[0], medians[1], medians[2]),
    )
}

fn transfer_equivalence() -> Result<Outcome, Error> {
    let sphere = three_layer_sphere();
    let els = fibonacci_sphere(sphere.center, sphere.outer_radius(), 12);
    let fwd = ForwardModel::build(
        sphere_mesh(&sphere, 16.0)?,
        sphere_compartments(&sphere, &["brain", "skull", "scalp"])?,
        &els,
        ilu(1e-12),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let position = random_in_ball(&mut rng, sphere.center, 0.9 * sphere.inner_radius());
        for k in 0..3 {
            let mut moment = [0.0; 3];
            moment[k] = 1.0;
            let d = Dipole { position, moment };
            let via = fwd.potentials(&d)?;
            let direct = fwd.potentials_direct(&d)?;
            let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in via.iter().zip(&direct) {
                worst = worst.max((a - b).abs() / scale);
            }
        }
    }
    Ok(outcome(worst <= 1e-6, format!("h=16, 12 electrodes, 20 sources: max relative entry difference {worst:.2e} (<= 1e-6)")))
}

fn patch_test() -> Result<Outcome, Error> {
    let offset = 1.37;
    let half_space = |offset: f64, id: usize| LevelSetField::half_space([1.0, 0.0, 0.0], offset, id);
    let model = CompartmentModel::new(vec![
        Compartment { name: "left".into(), level_set: half_space(offset, 0)?, conductivity: Conductivity::isotropic(1.0) },
        Compartment { name: "right".into(), level_set: half_space(1e3, 1)?, conductivity: Conductivity::isotropic(1.0) },
    ])?;
    let disc = Discretization::build(BackgroundMesh::new([0.0; 3], 1.0, [4, 3, 3])?, model, CutConfig::default())?;
    let slope = [1.0, -0.5, 0.25];
    let mut worst = 0.0f64;
    for variant in [Variant::Nwipg, Variant::Swipg] {
        let system = assemble_system(&disc, &AssemblyConfig { variant, ..Default::default() })?;
        let load = assemble_boundary_flux(&disc, 4, |_, _, n| vec3::dot(slope, n))?;
        let cfg = SolverConfig { tolerance: 1e-13, preconditioner: Preconditioner::Ilu0, ..Default::default() };
        let (x, _) = solve(&system, &load, &cfg)?;
        let mut exact = disc.space.interpolate(&disc.mesh, |_, p| vec3::dot(slope, p));
        let mean = exact.iter().sum::<f64>() / exact.len() as f64;
        exact.iter_mut().for_each(|v| *v -= mean);
        worst = worst.max(x.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    Ok(outcome(worst <= 1e-7, format!("planar interface, NWIPG and SWIPG: max DOF error {worst:.2e} (<= 1e-7)")))
}

fn matrix_structure() -> Result<Outcome, Error> {
    let sphere = three_layer_sphere();
    let disc = Discretization::build(sphere_mesh(&sphere, 8.0)?, sphere_compartments(&sphere, &[])?, CutConfig::default())?;
    let mut details = Vec::new();
    let mut pass = true;
    for variant in [Variant::Nwipg, Variant::Swipg] {
        let k = assemble_system::<f64>(&disc, &AssemblyConfig { variant, ..Default::default() })?.matrix;
        let norm = k.norm_inf();
        let null = k.mul_vec(&vec![1.0; k.n_rows]).iter().fold(0.0f64, |m, v| m.max(v.abs())) / norm;
        pass &= null <= 1e-8;
        details.push(format!("{variant:?} |K1|/|K| {null:.1e}"));
        if variant == Variant::Swipg {
            let asym = k.asymmetry_inf() / norm;
            pass &= asym <= 1e-10;
            details.push(format!("SWIPG |K-K^T|/|K| {asym:.1e}"));
        }
    }
    Ok(outcome(pass, format!("3-layer sphere, h=8: {} (<= 1e-8, <= 1e-10)", details.join(", "))))
}

/// Median iteration count over random compatible loads for a model whose
/// inner interface passes within 0.01 h of background vertices.
fn ghost_penalty() -> Result<Outcome, Error> {
    let h = 2.0;
    let center = [0.0; 3];
    let sphere = |r: f64, id: usize| LevelSetField::sphere(center, r, id);
    // vertices (±20, 0, 0) etc. sit 0.01 h inside the inner sphere
    let model = CompartmentModel::new(vec![
        Compartment { name: "inner".into(), level_set: sphere(20.0 + 0.01 * h, 0), conductivity: Conductivity::isotropic(0.33) },
        Compartment { name: "outer".into(), level_set: sphere(26.3, 1), conductivity: Conductivity::isotropic(0.01) },
    ])?;
    let mesh = BackgroundMesh::new([-28.0; 3], h, [28; 3])?;
    let disc = Discretization::build(mesh, model, CutConfig::default())?;
    let solver = SolverConfig { max_iterations: 5000, ..SolverConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let loads: Vec<Vec<f64>> = (0..10)
        .map(|_| {
            let mut b: Vec<f64> = (0..disc.space.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean = b.iter().sum::<f64>() / b.len() as f64;
            b.iter_mut().for_each(|v| *v -= mean);
            b
        })
        .collect();
    let mut medians = Vec::new();
    for ghost_penalty in [0.1, 0.0] {
        let system = assemble_system(&disc, &AssemblyConfig { ghost_penalty, ..Default::default() })?;
        let mut counts: Vec<usize> = loads
            .iter()
            .map(|b| match solve(&system, b, &solver) {
                Ok((_, s)) => s.iterations,
                Err(Error::NotConverged { iterations, .. }) => iterations.max(solver.max_iterations),
                Err(_) => usize::MAX,
            })
            .collect();
        counts.sort_unstable();
        medians.push((counts[4] + counts[5]) as f64 / 2.0);
    }
    Ok(outcome(
        medians[0] <= medians[1],
        format!("h=2, interface 0.01h from vertices, 10 loads: median iterations {} with ghost penalty 0.1, {} without", medians[0], medians[1]),
    ))
}

fn venant_moments() -> Result<Outcome, Error> {
    let sphere = three_layer_sphere();
    let disc = Discretization::build(sphere_mesh(&sphere, 8.0)?, sphere_compartments(&sphere, &[])?, CutConfig::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut zeroth, mut first) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let position = random_in_ball(&mut rng, sphere.center, 0.98 * sphere.inner_radius());
        let moment = vec3::scale(random_unit(&mut rng), rng.gen_range(0.1..10.0));
        let mono = venant_monopoles(&Dipole { position, moment }, &disc, 0, &VenantConfig::default())?;
        let l1: f64 = mono.iter().map(|(_, q)| q.abs()).sum();
        zeroth = zeroth.max(mono.iter().map(|(_, q)| q).sum::<f64>().abs() / l1);
        let mut m = [0.0; 3];
        for (x, q) in &mono {
            m = vec3::add(m, vec3::scale(vec3::sub(*x, position), *q));
        }
        first = first.max(vec3::norm(vec3::sub(m, moment)) / vec3::norm(moment));
    }
    Ok(outcome(
        zeroth <= 1e-12 && first <= 1e-8,
        format!("100 dipoles at h=8: max |sum q|/|q|_1 {zeroth:.1e} (<= 1e-12), max first-moment error {first:.1e} (<= 1e-8)"),
    ))
}

fn metric_identities() -> Result<Outcome, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let u: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scaled = |a: f64| u.iter().map(|x| a * x).collect::<Vec<_>>();
        let alpha = rng.gen_range(1e-3..1e3);
        for err in [
            rdm(&u, &u)?,
            rdm(&u, &scaled(-1.0))? - 100.0,
            rdm(&u, &scaled(alpha))?,
            mag(&u, &scaled(2.0))? - 100.0,
            mag(&u, &scaled(0.5))? + 50.0,
        ] {
            worst = worst.max(err.abs());
        }
    }
    Ok(outcome(worst <= 1e-12, format!("100 random vectors: max deviation {worst:.1e} (<= 1e-12)")))
}

fn analytic_oracle() -> Result<Outcome, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let center = [rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0)];
        let radius = rng.gen_range(40.0..120.0);
        let sigma = rng.gen_range(0.05..2.0);
        let model = SphereModel::new(center, vec![radius], vec![sigma])?.with_terms(1000);
        let dipole = Dipole {
            position: random_in_ball(&mut rng, center, 0.9 * radius),
            moment: vec3::scale(random_unit(&mut rng), rng.gen_range(0.1..10.0)),
        };
        let n = rng.gen_range(8..64);
        let electrodes: Vec<Vec3<f64>> =
            (0..n).map(|_| vec3::add(center, vec3::scale(random_unit(&mut rng), radius))).collect();
        let series = sphere_forward(&model, &dipole, &electrodes)?;
        let closed = homogeneous_sphere_potential(center, radius, sigma, &dipole, &electrodes);
        let mean = closed.iter().sum::<f64>() / n as f64;
        let closed: Vec<f64> = closed.iter().map(|v| v - mean).collect();
        let num: f64 = series.iter().zip(&closed).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = closed.iter().map(|b| b * b).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    Ok(outcome(worst <= 1e-8, format!("50 random spheres, dipoles and electrode sets: max relative error {worst:.1e} (<= 1e-8)")))
}

fn scan_recovery() -> Result<Outcome, Error> {
    let sphere = three_layer_sphere();
    let els = fibonacci_sphere(sphere.center, sphere.outer_radius(), 128);
    let spacing = 4.0;
    let reach = 72.0;
    let n = (reach / spacing) as i32;
    let mut positions = Vec::new();
    for i in -n..=n {
        for j in -n..=n {
            for k in -n..=n {
                let p = vec3::add(sphere.center, vec3::scale([i as f64, j as f64, k as f64], spacing));
                if vec3::distance(p, sphere.center) <= reach {
                    positions.push(p);
                }
            }
        }
    }
    let columns = positions
        .iter()
        .map(|&p| -> Result<[Vec<f64>; 3], Error> {
            let col = |m| sphere_forward(&sphere, &Dipole { position: p, moment: m }, &els);
            Ok([col([1.0, 0.0, 0.0])?, col([0.0, 1.0, 0.0])?, col([0.0, 0.0, 1.0])?])
        })
        .collect::<Result<Vec<_>, _>>()?;
    let lf = LeadField::from_columns(els.len(), positions.clone(), columns)?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut worst_dist, mut worst_gof) = (0.0f64, 100.0f64);
    for _ in 0..5 {
        let truth = Dipole {
            position: random_in_ball(&mut rng, sphere.center, 60.0),
            moment: vec3::scale(random_unit(&mut rng), 10.0),
        };
        let data = sphere_forward(&sphere, &truth, &els)?;
        let fit = dipole_scan(&lf, &data)?;
        worst_dist = worst_dist.max(vec3::distance(positions[fit.source], truth.position));
        worst_gof = worst_gof.min(fit.goodness_of_fit);
    }
    Ok(outcome(
        worst_dist <= spacing && worst_gof >= 99.0,
        format!(
            "{} grid points at 4 mm, 5 off-grid dipoles: max distance {worst_dist:.2} mm (<= 4), min GOF {worst_gof:.3}% (>= 99)",
            positions.len()
        ),
    ))
}

/// Volume of a sphere from the cut-cell partition against Monte Carlo
/// sampling of the cut cells; interior cells are exact in both.
fn geometry_oracle() -> Result<Outcome, Error> {
    let (center, radius, h): (Vec3<f64>, f64, f64) = ([0.31, -0.27, 0.13], 80.0, 8.0);
    let model = CompartmentModel::new(vec![
        Compartment { name: "ball".into(), level_set: LevelSetField::sphere(center, radius, 0), conductivity: Conductivity::isotropic(1.0) },
        Compartment {
            name: "box".into(),
            level_set: LevelSetField::half_space([0.0, 0.0, 1.0], 1e4, 1)?,
            conductivity: Conductivity::isotropic(1.0),
        },
    ])?;
    let mesh = BackgroundMesh::covering(vec3::sub(center, [radius; 3]), vec3::add(center, [radius; 3]), h, 1)?;
    let samples = 10_000_000usize;
    let exact_ball = 4.0 / 3.0 * PI * radius.powi(3);
    let mut errors = Vec::new();
    for refinement in [1, 2] {
        let p = CutCellPartition::build(&mesh, &model, CutConfig { refinement, ..Default::default() })?;
        let volume = p.compartment_volume(&mesh, 0);
        let cut_part: f64 = p.cuts.iter().map(|(_, c)| c.compartment_volume(0)).sum();
        let interior = volume - cut_part;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hits = 0usize;
        for _ in 0..samples {
            let (cell, _) = &p.cuts[rng.gen_range(0..p.cuts.len())];
            let lo = mesh.cell_min(*cell);
            let x = [lo[0] + h * rng.gen::<f64>(), lo[1] + h * rng.gen::<f64>(), lo[2] + h * rng.gen::<f64>()];
            if vec3::distance(x, center) <= radius {
                hits += 1;
            }
        }
        let mc = interior + hits as f64 / samples as f64 * p.cuts.len() as f64 * mesh.cell_volume();
        errors.push(((volume - mc).abs() / mc, (mc - exact_ball).abs() / exact_ball));
    }
    Ok(outcome(
        errors[0].0 <= 0.01 && errors[1].0 <= 0.003,
        format!(
            "sphere r=80 at h=8, 1e7 samples: volume error {:.2e} at one refinement level (<= 1e-2), {:.2e} at two (<= 3e-3); \
             Monte Carlo vs exact ball {:.1e}",
            errors[0].0, errors[1].0, errors[1].1
        ),
    ))
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| selected.is_empty() || selected.contains(&n);
    let names = [
        "sphere validation accuracy",
        "refinement convergence",
        "transfer-matrix equivalence",
        "patch test",
        "matrix structure",
        "ghost-penalty stabilization",
        "Venant moments",
        "metric identities",
        "analytic oracle",
        "dipole-scan recovery",
        "geometry oracle",
    ];
    let runs = if wanted(1) || wanted(2) { Some(SphereRuns::run()) } else { None };
    let mut failed = 0;
    for (i, name) in names.iter().enumerate() {
        let n = i + 1;
        if !wanted(n) {
            continue;
        }
        let start = Instant::now();
        let result = match n {
            1 | 2 => match runs.as_ref().expect("sphere runs") {
                Ok(r) => Ok(if n == 1 { sphere_accuracy(r) } else { refinement_convergence(r) }),
                Err(e) => Err(Error::Configuration(e.to_string())),
            },
            3 => transfer_equivalence(),
            4 => patch_test(),
            5 => matrix_structure(),
            6 => ghost_penalty(),
            7 => venant_moments(),
            8 => metric_identities(),
            9 => analytic_oracle(),
            10 => scan_recovery(),
            _ => geometry_oracle(),
        };
        let o = result.unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {n:>2} {name}: {} ({}; {:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
