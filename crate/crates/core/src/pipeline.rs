//! End-to-end forward modelling and the concentric-sphere validation study.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analytic::{sphere_forward, SphereModel};
use crate::error::{Error, Result};
use crate::fem::{assemble_load, assemble_system, AssemblyConfig, Discretization, SparseSystem};
use crate::geometry::cut::CutConfig;
use crate::geometry::level_set::LevelSetField;
use crate::geometry::mesh::BackgroundMesh;
use crate::geometry::model::{Compartment, CompartmentModel, Conductivity};
use crate::metrics::{self, bin_by_eccentricity, median, BinSummary, LeadField};
use crate::real::{lit, to_f64, Real};
use crate::solver::{apply_transfer, electrode_restriction, solve, transfer_matrix, ElectrodeSet, SolverConfig, TransferMatrix};
use crate::sources::{fibonacci_sphere, venant_monopoles, Dipole, VenantConfig};
use crate::vec3::{self, Vec3};

/// Millivolt-scale raw potentials (nAm, S/m, mm) to volts.
pub const VOLTS_PER_UNIT: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardConfig<T> {
    pub assembly: AssemblyConfig<T>,
    pub cut: CutConfig<T>,
    pub solver: SolverConfig<T>,
    pub venant: VenantConfig<T>,
    pub source_compartment: usize,
    pub reference_electrode: usize,
}

impl<T: Real> Default for ForwardConfig<T> {
    fn default() -> Self {
        Self {
            assembly: AssemblyConfig::default(),
            cut: CutConfig::default(),
            solver: SolverConfig::default(),
            venant: VenantConfig::default(),
            source_compartment: 0,
            reference_electrode: 0,
        }
    }
}

/// Wall time per stage.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub driver_setup: Duration,
    pub matrix_assembly: Duration,
    pub solver_setup: Duration,
    pub solving: Duration,
    pub lead_field: Duration,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForwardReport {
    pub n_dofs: usize,
    pub n_cut_cells: usize,
    pub n_snippets: usize,
    pub n_electrodes: usize,
    pub n_sources: usize,
    /// Iterations per transfer-matrix row.
    pub iterations: Vec<usize>,
    pub max_residual: f64,
    pub max_electrode_snap: f64,
    pub timings: StageTimings,
}

impl ForwardReport {
    pub fn render(&self) -> String {
        let t = &self.timings;
        let it = &self.iterations;
        let (min_it, max_it) = (it.iter().min().copied().unwrap_or(0), it.iter().max().copied().unwrap_or(0));
        let mean_it = if it.is_empty() { 0.0 } else { it.iter().sum::<usize>() as f64 / it.len() as f64 };
        format!(
            "dofs {}\ncut_cells {}\nsnippets {}\nelectrodes {}\nsources {}\n\
             solver_iterations min {} mean {:.1} max {}\nmax_residual {:.3e}\nmax_electrode_snap_mm {:.3e}\n\
             time_driver_setup_s {:.3}\ntime_matrix_assembly_s {:.3}\ntime_solver_setup_s {:.3}\n\
             time_solving_s {:.3}\ntime_lead_field_s {:.3}\n",
            self.n_dofs,
            self.n_cut_cells,
            self.n_snippets,
            self.n_electrodes,
            self.n_sources,
            min_it,
            mean_it,
            max_it,
            self.max_residual,
            self.max_electrode_snap,
            t.driver_setup.as_secs_f64(),
            t.matrix_assembly.as_secs_f64(),
            t.solver_setup.as_secs_f64(),
            t.solving.as_secs_f64(),
            t.lead_field.as_secs_f64(),
        )
    }
}

/// Discretized head model with its transfer matrix.
pub struct ForwardModel<T> {
    pub disc: Discretization<T>,
    pub system: SparseSystem<T>,
    pub electrodes: ElectrodeSet<T>,
    pub transfer: TransferMatrix<T>,
    pub config: ForwardConfig<T>,
    pub report: ForwardReport,
}

fn stage<R>(name: &str, elapsed: &mut Duration, f: impl FnOnce() -> Result<R>) -> Result<R> {
    let start = Instant::now();
    log::info!("{name}");
    let out = f().map_err(|e| e.in_stage(name));
    *elapsed += start.elapsed();
    out
}

impl<T: Real> ForwardModel<T> {
    pub fn build(
        mesh: BackgroundMesh<T>,
        model: CompartmentModel<T>,
        electrode_positions: &[Vec3<T>],
        config: ForwardConfig<T>,
    ) -> Result<Self> {
        let mut t = StageTimings::default();
        let disc = stage("driver setup", &mut t.driver_setup, || {
            config.assembly.validate()?;
            config.venant.validate()?;
            if config.source_compartment >= model.len() {
                return Err(Error::Configuration(format!("source compartment {} does not exist", config.source_compartment)));
            }
            model.check_mesh(&mesh)?;
            Discretization::build(mesh, model, config.cut)
        })?;
        let system = stage("matrix assembly", &mut t.matrix_assembly, || assemble_system(&disc, &config.assembly))?;
        let electrodes =
            stage("solver setup", &mut t.solver_setup, || electrode_restriction(&disc, electrode_positions))?;
        let transfer = stage("solving", &mut t.solving, || {
            transfer_matrix(&system, &electrodes, config.reference_electrode, &config.solver)
        })?;
        let report = ForwardReport {
            n_dofs: disc.space.n_dofs(),
            n_cut_cells: disc.partition.n_cut_cells(),
            n_snippets: disc.partition.n_snippets(),
            n_electrodes: electrodes.len(),
            n_sources: 0,
            iterations: transfer.stats.iter().map(|s| s.iterations).collect(),
            max_residual: transfer.stats.iter().map(|s| s.residual).fold(0.0, f64::max),
            max_electrode_snap: to_f64(electrodes.max_snap()),
            timings: t,
        };
        log::info!(
            "{} dofs, {} cut cells, transfer matrix of {} rows in {:.2}s",
            report.n_dofs,
            report.n_cut_cells,
            transfer.n_rows(),
            t.solving.as_secs_f64()
        );
        Ok(Self { disc, system, electrodes, transfer, config, report })
    }

    fn load(&self, dipole: &Dipole<T>) -> Result<Vec<T>> {
        let c = self.config.source_compartment;
        let monopoles = venant_monopoles(dipole, &self.disc, c, &self.config.venant)?;
        assemble_load(&self.disc, c, &monopoles)
    }

    /// Zero-mean electrode potentials in volts for one dipole.
    pub fn potentials(&self, dipole: &Dipole<T>) -> Result<Vec<T>> {
        let u = apply_transfer(&self.transfer, &self.load(dipole)?)?;
        Ok(to_volts(&u))
    }

    /// The same potentials from a full solve of the forward system.
    pub fn potentials_direct(&self, dipole: &Dipole<T>) -> Result<Vec<T>> {
        let (u, _) = solve(&self.system, &self.load(dipole)?, &self.config.solver)?;
        Ok(to_volts(&self.electrodes.evaluate(&u)))
    }

    /// Lead field for unit moments along the axes at `positions`.
    pub fn lead_field(&mut self, positions: &[Vec3<T>]) -> Result<LeadField<T>> {
        if positions.is_empty() {
            return Err(Error::Source("no source positions given".into()).in_stage("lead field"));
        }
        let start = Instant::now();
        let columns = positions
            .par_iter()
            .enumerate()
            .map(|(s, &p)| {
                let mut block: [Vec<T>; 3] = Default::default();
                for (k, col) in block.iter_mut().enumerate() {
                    let mut m = [T::zero(); 3];
                    m[k] = T::one();
                    *col = self
                        .potentials(&Dipole { position: p, moment: m })
                        .map_err(|e| Error::Source(format!("source {s}: {e}")))?;
                }
                Ok(block)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage("lead field"))?;
        let lf = LeadField::from_columns(self.electrodes.len(), positions.to_vec(), columns).map_err(|e| e.in_stage("lead field"))?;
        self.report.timings.lead_field += start.elapsed();
        self.report.n_sources = positions.len();
        Ok(lf)
    }
}

fn to_volts<T: Real>(u: &[T]) -> Vec<T> {
    metrics::zero_mean(u).into_iter().map(|v| v * lit(VOLTS_PER_UNIT)).collect()
}

/// Nested-sphere compartments, innermost first, with one level set per
/// shell of `sphere` (whose radii are stored outermost first).
pub fn sphere_compartments<T: Real>(sphere: &SphereModel, names: &[&str]) -> Result<CompartmentModel<T>> {
    let center: Vec3<T> = vec3::cast(sphere.center);
    let compartments = sphere
        .radii
        .iter()
        .rev()
        .zip(sphere.conductivities.iter().rev())
        .enumerate()
        .map(|(i, (&r, &s))| Compartment {
            name: names.get(i).map_or_else(|| format!("shell{i}"), |n| n.to_string()),
            level_set: LevelSetField::sphere(center, lit(r), i),
            conductivity: Conductivity::isotropic(lit(s)),
        })
        .collect();
    CompartmentModel::new(compartments)
}

/// Mesh of cell size `h` covering the outer sphere with one cell of margin.
pub fn sphere_mesh<T: Real>(sphere: &SphereModel, h: T) -> Result<BackgroundMesh<T>> {
    let c: Vec3<T> = vec3::cast(sphere.center);
    let r: T = lit(sphere.outer_radius());
    BackgroundMesh::covering(vec3::sub(c, [r; 3]), vec3::add(c, [r; 3]), h, 1)
}

/// The three-layer validation model: brain, skull, scalp.
pub fn three_layer_sphere() -> SphereModel {
    SphereModel::new([127.0; 3], vec![92.0, 86.0, 80.0], vec![0.43, 0.01, 0.33]).expect("valid sphere model")
}

/// Four spheres with the brain shifted 2 mm towards +x inside the CSF. Brain
/// and CSF share a conductivity, so the volume conductor equals
/// [`three_layer_sphere`].
pub fn shifted_sphere_compartments<T: Real>() -> Result<CompartmentModel<T>> {
    let spheres = [
        ("brain", [129.0, 127.0, 127.0], 78.0, 0.33),
        ("csf", [127.0; 3], 80.0, 0.33),
        ("skull", [127.0; 3], 86.0, 0.01),
        ("scalp", [127.0; 3], 92.0, 0.43),
    ];
    let compartments = spheres
        .iter()
        .enumerate()
        .map(|(i, &(name, c, r, s))| Compartment {
            name: name.to_string(),
            level_set: LevelSetField::sphere(vec3::cast(c), lit(r), i),
            conductivity: Conductivity::isotropic(lit(s)),
        })
        .collect();
    CompartmentModel::new(compartments)
}

/// One evaluated source direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationRecord {
    pub position: Vec3<f64>,
    pub eccentricity: f64,
    pub radial: bool,
    pub moment: Vec3<f64>,
    pub rdm: f64,
    pub mag: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationStudy {
    pub sources_per_bin: usize,
    pub bin_width: f64,
    pub max_eccentricity: f64,
    pub n_electrodes: usize,
    pub seed: u64,
}

impl Default for ValidationStudy {
    fn default() -> Self {
        Self { sources_per_bin: 11, bin_width: 0.02, max_eccentricity: 0.98, n_electrodes: 200, seed: 7 }
    }
}

impl ValidationStudy {
    /// Source positions and unit radial and tangential directions, stratified
    /// over eccentricity bins of the innermost shell.
    pub fn sources(&self, sphere: &SphereModel) -> Vec<(Vec3<f64>, f64, Vec3<f64>, Vec3<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n_bins = (self.max_eccentricity / self.bin_width).round() as usize;
        let mut out = Vec::with_capacity(n_bins * self.sources_per_bin);
        for b in 0..n_bins {
            for j in 0..self.sources_per_bin {
                let ecc = self.bin_width * (b as f64 + (j as f64 + 0.5) / self.sources_per_bin as f64);
                let dir = random_unit(&mut rng);
                let pos = vec3::add(sphere.center, vec3::scale(dir, ecc * sphere.inner_radius()));
                let tangential = vec3::normalize(vec3::cross(dir, random_unit(&mut rng))).unwrap_or(vec3::orthogonal_unit(dir));
                out.push((pos, ecc, dir, tangential));
            }
        }
        out
    }

    pub fn electrodes(&self, sphere: &SphereModel) -> Vec<Vec3<f64>> {
        fibonacci_sphere(sphere.center, sphere.outer_radius(), self.n_electrodes)
    }
}

fn random_unit(rng: &mut impl Rng) -> Vec3<f64> {
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = vec3::norm(v);
        if n > 1e-3 && n <= 1.0 {
            return vec3::scale(v, 1.0 / n);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub h: f64,
    pub records: Vec<ValidationRecord>,
    pub forward: ForwardReport,
}

impl ValidationReport {
    pub fn median_rdm(&self) -> f64 {
        median(&self.records.iter().map(|r| r.rdm).collect::<Vec<_>>()).unwrap_or(f64::NAN)
    }

    pub fn median_abs_mag(&self) -> f64 {
        median(&self.records.iter().map(|r| r.mag.abs()).collect::<Vec<_>>()).unwrap_or(f64::NAN)
    }

    /// Median RDM over sources with eccentricity in `[lo, hi)`.
    pub fn band_median_rdm(&self, lo: f64, hi: f64) -> Option<f64> {
        let v: Vec<f64> =
            self.records.iter().filter(|r| r.eccentricity >= lo && r.eccentricity < hi).map(|r| r.rdm).collect();
        median(&v)
    }

    pub fn rdm_bins(&self, width: f64) -> Vec<BinSummary> {
        bin_by_eccentricity(&self.records.iter().map(|r| (r.eccentricity, r.rdm)).collect::<Vec<_>>(), width)
    }

    pub fn mag_bins(&self, width: f64) -> Vec<BinSummary> {
        bin_by_eccentricity(&self.records.iter().map(|r| (r.eccentricity, r.mag)).collect::<Vec<_>>(), width)
    }

    /// Per-source records followed by binned medians and maxima; the
    /// 0.96-0.98 band is marked.
    pub fn render(&self, width: f64) -> String {
        let mut s = format!("# h {}\n# x y z eccentricity direction rdm_percent mag_percent\n", self.h);
        for r in &self.records {
            s += &format!(
                "{:.6} {:.6} {:.6} {:.4} {} {:.6e} {:.6e}\n",
                r.position[0],
                r.position[1],
                r.position[2],
                r.eccentricity,
                if r.radial { "radial" } else { "tangential" },
                r.rdm,
                r.mag
            );
        }
        s += "# bin_lower bin_upper count rdm_median rdm_max mag_median mag_max flag\n";
        for (a, b) in self.rdm_bins(width).iter().zip(self.mag_bins(width)) {
            let flag = if a.lower >= 0.96 - 1e-9 && a.upper <= 0.98 + 1e-9 { "realistic" } else { "-" };
            s += &format!(
                "# {:.2} {:.2} {} {:.4} {:.4} {:.4} {:.4} {flag}\n",
                a.lower, a.upper, a.count, a.median, a.max, b.median, b.max
            );
        }
        s += &format!("# median_rdm {:.4}\n# median_abs_mag {:.4}\n", self.median_rdm(), self.median_abs_mag());
        s
    }
}

/// Compares numerical and analytic potentials for every source of `study`
/// on the concentric model `sphere` at cell size `h`.
pub fn validate_sphere<T: Real>(
    sphere: &SphereModel,
    h: f64,
    study: &ValidationStudy,
    config: ForwardConfig<T>,
) -> Result<ValidationReport> {
    let electrodes = study.electrodes(sphere);
    let model = sphere_compartments::<T>(sphere, &["brain", "skull", "scalp"])?;
    let mesh = sphere_mesh::<T>(sphere, lit(h))?;
    let els: Vec<Vec3<T>> = electrodes.iter().map(|&e| vec3::cast(e)).collect();
    let mut fwd = ForwardModel::build(mesh, model, &els, config)?;
    let sources = study.sources(sphere);
    let start = Instant::now();
    let records = sources
        .par_iter()
        .flat_map_iter(|&(pos, ecc, radial, tangential)| {
            [(radial, true), (tangential, false)].into_iter().map(move |(m, is_radial)| (pos, ecc, m, is_radial))
        })
        .map(|(pos, ecc, m, radial)| {
            let dipole = Dipole { position: pos, moment: m };
            let ana = sphere_forward(sphere, &dipole, &electrodes)?;
            let num: Vec<f64> = fwd
                .potentials(&Dipole { position: vec3::cast(pos), moment: vec3::cast(m) })?
                .into_iter()
                .map(to_f64)
                .collect();
            Ok(ValidationRecord {
                position: pos,
                eccentricity: ecc,
                radial,
                moment: m,
                rdm: metrics::rdm(&ana, &num)?,
                mag: metrics::mag(&ana, &num)?,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("lead field"))?;
    fwd.report.timings.lead_field += start.elapsed();
    fwd.report.n_sources = sources.len();
    Ok(ValidationReport { h, records, forward: fwd.report })
}

/// Median RDM in an eccentricity band for each cell size.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub band: (f64, f64),
    pub rows: Vec<(f64, f64)>,
    pub reports: Vec<ValidationReport>,
}

impl ConvergenceTable {
    /// Strictly decreasing median RDM with decreasing `h`.
    pub fn is_monotone(&self) -> bool {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| b.0.total_cmp(&a.0));
        rows.windows(2).all(|w| w[1].1 < w[0].1)
    }

    pub fn render(&self) -> String {
        let mut s = format!("# h median_rdm_band_{}_{} median_rdm median_abs_mag\n", self.band.0, self.band.1);
        for ((h, band), r) in self.rows.iter().zip(&self.reports) {
            s += &format!("{h} {band:.6} {:.6} {:.6}\n", r.median_rdm(), r.median_abs_mag());
        }
        s += &format!("# monotone {}\n", self.is_monotone());
        s
    }
}

pub fn convergence<T: Real>(
    sphere: &SphereModel,
    hs: &[f64],
    study: &ValidationStudy,
    band: (f64, f64),
    config: ForwardConfig<T>,
) -> Result<ConvergenceTable> {
    if hs.len() < 2 {
        return Err(Error::Configuration("a convergence study needs at least two cell sizes".into()));
    }
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &h in hs {
        let report = validate_sphere(sphere, h, study, config)?;
        let m = report
            .band_median_rdm(band.0, band.1)
            .ok_or_else(|| Error::Configuration(format!("no sources with eccentricity in [{}, {})", band.0, band.1)))?;
        log::info!("h = {h}: band median RDM {m:.4}%");
        rows.push((h, m));
        reports.push(report);
    }
    Ok(ConvergenceTable { band, rows, reports })
}
