//! Run configuration, read from TOML.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Every output file carries the short SHA-256 of the normalized
//! config so results can be traced back to the run that produced them.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cutfem_eeg::analytic::SphereModel;
use cutfem_eeg::fem::{AssemblyConfig, AverageWeighting, Variant};
use cutfem_eeg::geometry::{
    BackgroundMesh, Compartment, CompartmentModel, Conductivity, CutConfig, LevelSetField, SampledGrid,
};
use cutfem_eeg::pipeline::{ForwardConfig, ValidationStudy};
use cutfem_eeg::real::lit;
use cutfem_eeg::solver::{Method, Preconditioner, SolverConfig};
use cutfem_eeg::sources::{Neighborhood, VenantConfig};
use cutfem_eeg::vec3::{self, Vec3};
use cutfem_eeg::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default)]
    pub precision: Precision,
    pub mesh: MeshConfig,
    #[serde(default)]
    pub discretization: DiscretizationConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub venant: VenantSection,
    #[serde(default)]
    pub electrodes: ElectrodeConfig,
    #[serde(default)]
    pub sources: SourceConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub validation: ValidationConfig,
    /// Innermost first.
    pub compartments: Vec<CompartmentConfig>,
}

fn default_threads() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub h: f64,
    /// Lower corner; with `dims` omitted the mesh covers the outermost
    /// compartment with `padding` cells of margin.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<[usize; 3]>,
    #[serde(default = "default_padding")]
    pub padding: usize,
}

fn default_padding() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompartmentConfig {
    pub name: String,
    pub conductivity: ConductivitySpec,
    pub level_set: LevelSetSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConductivitySpec {
    Isotropic(f64),
    Tensor([[f64; 3]; 3]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LevelSetSpec {
    Sphere { center: [f64; 3], radius: f64 },
    HalfSpace { normal: [f64; 3], offset: f64 },
    /// `LSGRID` volume file.
    Grid { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantName {
    Nwipg,
    Swipg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingName {
    Direct,
    Swapped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationConfig {
    pub variant: VariantName,
    pub gamma: f64,
    pub ghost_penalty: f64,
    pub nu: f64,
    pub weighting: WeightingName,
    pub volume_order: usize,
    pub facet_order: usize,
    pub refinement: usize,
    pub classification_level: usize,
    pub min_volume_fraction: f64,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        let a = AssemblyConfig::<f64>::default();
        let c = CutConfig::<f64>::default();
        Self {
            variant: VariantName::Nwipg,
            gamma: a.gamma,
            ghost_penalty: a.ghost_penalty,
            nu: a.nu,
            weighting: WeightingName::Direct,
            volume_order: a.volume_order,
            facet_order: a.facet_order,
            refinement: c.refinement,
            classification_level: c.classification_level,
            min_volume_fraction: c.min_volume_fraction,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreconditionerName {
    Jacobi,
    Sgs,
    Ilu0,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Auto,
    Cg,
    Bicgstab,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub preconditioner: PreconditionerName,
    pub method: MethodName,
    pub reference_electrode: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverConfig::<f64>::default();
        Self {
            tolerance: s.tolerance,
            max_iterations: s.max_iterations,
            preconditioner: PreconditionerName::Jacobi,
            method: MethodName::Auto,
            reference_electrode: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborhoodName {
    Cell,
    FaceNeighbors,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VenantSection {
    pub order: usize,
    pub regularization: f64,
    pub quadrature_order: usize,
    pub neighborhood: NeighborhoodName,
}

impl Default for VenantSection {
    fn default() -> Self {
        let v = VenantConfig::<f64>::default();
        Self {
            order: v.order,
            regularization: v.regularization,
            quadrature_order: v.quadrature_order,
            neighborhood: NeighborhoodName::FaceNeighbors,
        }
    }
}

/// Either a point file or `count` Fibonacci points on the outermost sphere.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectrodeConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

/// Either a point file or a regular grid inside the source compartment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_spacing: Option<f64>,
    /// Grid anchor; the center of the compartment bounds by default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor: Option<[f64; 3]>,
    #[serde(default)]
    pub compartment: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub lead_field: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lead_field_csv: Option<PathBuf>,
    /// Source positions of the lead-field columns, written next to it.
    pub positions: PathBuf,
    pub report: PathBuf,
    pub validation: PathBuf,
    pub convergence: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            lead_field: "leadfield.bin".into(),
            lead_field_csv: None,
            positions: "sources.txt".into(),
            report: "report.txt".into(),
            validation: "validation.txt".into(),
            convergence: "convergence.txt".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    pub sources_per_bin: usize,
    pub bin_width: f64,
    pub max_eccentricity: f64,
    pub electrodes: usize,
    pub seed: u64,
    /// Bin width of the summary table.
    pub report_bin_width: f64,
    pub series_terms: usize,
    /// Cell sizes of the convergence study.
    pub h: Vec<f64>,
    pub band: [f64; 2],
}

impl Default for ValidationConfig {
    fn default() -> Self {
        let s = ValidationStudy::default();
        Self {
            sources_per_bin: s.sources_per_bin,
            bin_width: s.bin_width,
            max_eccentricity: s.max_eccentricity,
            electrodes: s.n_electrodes,
            seed: s.seed,
            report_bin_width: 0.1,
            series_terms: 200,
            h: Vec::new(),
            band: [0.5, 0.9],
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Reads, resolves relative paths against the file's directory and
    /// validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg = Self::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = cfg.resolved(base);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Short hex digest of the normalized TOML.
    pub fn hash(&self) -> String {
        let text = self.to_toml().unwrap_or_default();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn tag(&self) -> String {
        format!("config={}", self.hash())
    }

    pub fn resolved(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for c in &mut self.compartments {
            if let LevelSetSpec::Grid { path } = &mut c.level_set {
                fix(path);
            }
        }
        if let Some(p) = &mut self.electrodes.path {
            fix(p);
        }
        if let Some(p) = &mut self.sources.path {
            fix(p);
        }
        let o = &mut self.output;
        for p in [&mut o.lead_field, &mut o.positions, &mut o.report, &mut o.validation, &mut o.convergence] {
            fix(p);
        }
        if let Some(p) = &mut o.lead_field_csv {
            fix(p);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.threads >= 1, "threads must be at least 1");
        ensure!(self.mesh.h > 0.0 && self.mesh.h.is_finite(), "mesh.h must be positive");
        ensure!(self.mesh.origin.is_some() == self.mesh.dims.is_some(), "mesh.origin and mesh.dims go together");
        ensure!(!self.compartments.is_empty(), "at least one compartment is required");
        for c in &self.compartments {
            match &c.conductivity {
                ConductivitySpec::Isotropic(s) => ensure!(*s > 0.0, "compartment `{}`: conductivity must be positive", c.name),
                ConductivitySpec::Tensor(m) => {
                    ensure!(m[0][1] == m[1][0] && m[0][2] == m[2][0] && m[1][2] == m[2][1], "compartment `{}`: tensor must be symmetric", c.name)
                }
            }
            match &c.level_set {
                LevelSetSpec::Sphere { radius, .. } => ensure!(*radius > 0.0, "compartment `{}`: radius must be positive", c.name),
                LevelSetSpec::HalfSpace { normal, .. } => {
                    ensure!(vec3::norm(*normal) > 0.0, "compartment `{}`: zero normal", c.name)
                }
                LevelSetSpec::Grid { path } => ensure!(path.is_file(), "compartment `{}`: {} does not exist", c.name, path.display()),
            }
        }
        let d = &self.discretization;
        ensure!(d.refinement <= 3, "discretization.refinement must be in 0..=3");
        ensure!(d.gamma > 0.0, "discretization.gamma must be positive");
        ensure!(d.ghost_penalty >= 0.0, "discretization.ghost_penalty must be non-negative");
        ensure!(self.solver.tolerance > 0.0, "solver.tolerance must be positive");
        ensure!(self.solver.max_iterations > 0, "solver.max_iterations must be positive");
        ensure!(self.sources.compartment < self.compartments.len(), "sources.compartment out of range");
        if let Some(p) = &self.electrodes.path {
            ensure!(p.is_file(), "electrode file {} does not exist", p.display());
        }
        if let Some(p) = &self.sources.path {
            ensure!(p.is_file(), "source file {} does not exist", p.display());
        }
        if let Some(s) = self.sources.grid_spacing {
            ensure!(s > 0.0, "sources.grid_spacing must be positive");
        }
        let v = &self.validation;
        ensure!(v.band[0] < v.band[1], "validation.band must be increasing");
        ensure!(v.bin_width > 0.0 && v.report_bin_width > 0.0, "validation bin widths must be positive");
        Ok(())
    }

    pub fn forward_config<T: Real>(&self) -> ForwardConfig<T> {
        let d = &self.discretization;
        let s = &self.solver;
        let v = &self.venant;
        ForwardConfig {
            assembly: AssemblyConfig {
                variant: match d.variant {
                    VariantName::Nwipg => Variant::Nwipg,
                    VariantName::Swipg => Variant::Swipg,
                },
                gamma: lit(d.gamma),
                ghost_penalty: lit(d.ghost_penalty),
                nu: lit(d.nu),
                weighting: match d.weighting {
                    WeightingName::Direct => AverageWeighting::Direct,
                    WeightingName::Swapped => AverageWeighting::Swapped,
                },
                volume_order: d.volume_order,
                facet_order: d.facet_order,
            },
            cut: CutConfig {
                refinement: d.refinement,
                classification_level: d.classification_level,
                min_volume_fraction: lit(d.min_volume_fraction),
                ..CutConfig::default()
            },
            solver: SolverConfig {
                tolerance: lit(s.tolerance),
                max_iterations: s.max_iterations,
                preconditioner: match s.preconditioner {
                    PreconditionerName::Jacobi => Preconditioner::Jacobi,
                    PreconditionerName::Sgs => Preconditioner::SymmetricGaussSeidel,
                    PreconditionerName::Ilu0 => Preconditioner::Ilu0,
                },
                method: match s.method {
                    MethodName::Auto => Method::Auto,
                    MethodName::Cg => Method::ConjugateGradient,
                    MethodName::Bicgstab => Method::BiCgStab,
                },
            },
            venant: VenantConfig {
                order: v.order,
                regularization: lit(v.regularization),
                quadrature_order: v.quadrature_order,
                neighborhood: match v.neighborhood {
                    NeighborhoodName::Cell => Neighborhood::ContainingCell,
                    NeighborhoodName::FaceNeighbors => Neighborhood::CellAndFaceNeighbors,
                },
            },
            source_compartment: self.sources.compartment,
            reference_electrode: s.reference_electrode,
        }
    }

    pub fn compartment_model<T: Real>(&self) -> Result<CompartmentModel<T>> {
        let mut compartments = Vec::with_capacity(self.compartments.len());
        for (id, c) in self.compartments.iter().enumerate() {
            let level_set = match &c.level_set {
                LevelSetSpec::Sphere { center, radius } => LevelSetField::sphere(vec3::cast(*center), lit(*radius), id),
                LevelSetSpec::HalfSpace { normal, offset } => LevelSetField::half_space(vec3::cast(*normal), lit(*offset), id)?,
                LevelSetSpec::Grid { path } => LevelSetField::sampled(SampledGrid::read_lsgrid(path)?, id),
            };
            let conductivity = match &c.conductivity {
                ConductivitySpec::Isotropic(s) => Conductivity::isotropic(lit(*s)),
                ConductivitySpec::Tensor(m) => Conductivity(m.map(|row| row.map(lit))),
            };
            compartments.push(Compartment { name: c.name.clone(), level_set, conductivity });
        }
        Ok(CompartmentModel::new(compartments)?)
    }

    pub fn mesh<T: Real>(&self, model: &CompartmentModel<T>) -> Result<BackgroundMesh<T>> {
        let h = lit(self.mesh.h);
        if let (Some(origin), Some(dims)) = (self.mesh.origin, self.mesh.dims) {
            return Ok(BackgroundMesh::new(vec3::cast(origin), h, dims)?);
        }
        let Some((lo, hi)) = model.compartments[model.outermost()].level_set.support_bounds() else {
            bail!("the outermost compartment is unbounded; give mesh.origin and mesh.dims");
        };
        Ok(BackgroundMesh::covering(lo, hi, h, self.mesh.padding)?)
    }

    /// The equivalent concentric-sphere model, if every compartment is an
    /// isotropic sphere around a common center with increasing radii.
    pub fn sphere_model(&self) -> Result<SphereModel> {
        let mut center: Option<Vec3<f64>> = None;
        let mut radii = Vec::new();
        let mut sigmas = Vec::new();
        for c in &self.compartments {
            let (LevelSetSpec::Sphere { center: cc, radius }, ConductivitySpec::Isotropic(s)) = (&c.level_set, &c.conductivity)
            else {
                bail!("compartment `{}` is not an isotropic sphere", c.name);
            };
            match center {
                None => center = Some(*cc),
                Some(c0) => ensure!(vec3::distance(c0, *cc) <= 1e-9 * radius, "compartment `{}` is not concentric", c.name),
            }
            if let Some(&last) = radii.last() {
                ensure!(*radius > last, "compartment `{}` must enclose the previous one", c.name);
            }
            radii.push(*radius);
            sigmas.push(*s);
        }
        radii.reverse();
        sigmas.reverse();
        let center = center.expect("at least one compartment");
        Ok(SphereModel::new(center, radii, sigmas)?.with_terms(self.validation.series_terms))
    }

    pub fn study(&self) -> ValidationStudy {
        let v = &self.validation;
        ValidationStudy {
            sources_per_bin: v.sources_per_bin,
            bin_width: v.bin_width,
            max_eccentricity: v.max_eccentricity,
            n_electrodes: v.electrodes,
            seed: v.seed,
        }
    }
}
