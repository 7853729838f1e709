use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use cutfem_eeg::analytic::sphere_forward;
use cutfem_eeg::io::{read_lead_field, read_vector, write_lead_field, write_lead_field_csv};
use cutfem_eeg::metrics::{self, dipole_scan};
use cutfem_eeg::pipeline::{convergence, validate_sphere, ForwardModel, ForwardReport, ValidationRecord, ValidationReport};
use cutfem_eeg::real::{lit, to_f64};
use cutfem_eeg::sources::{fibonacci_sphere, read_points, source_grid, write_points, Dipole};
use cutfem_eeg::vec3::{self, Vec3};
use cutfem_eeg::Real;

use cutfem_eeg_cli::config::{LevelSetSpec, Precision, RunConfig};

#[derive(Parser)]
#[command(name = "cutfem", version, about = "Unfitted finite-element EEG forward solver")]
struct Cli {
    /// Worker threads; overrides the config.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the head model and write the lead field for the configured sources.
    Forward { config: PathBuf },
    /// Compare against the analytic multilayer-sphere solution.
    Validate {
        config: PathBuf,
        /// Feed the analytic potentials to both sides of the comparison.
        #[arg(long)]
        self_test: bool,
    },
    /// Repeat the validation for several cell sizes.
    Convergence {
        config: PathBuf,
        /// Cell sizes; overrides `validation.h`.
        #[arg(long = "h", num_args = 1..)]
        h: Vec<f64>,
    },
    /// Fit a single dipole to a data vector by scanning a lead field.
    Scan {
        #[arg(long)]
        lead_field: PathBuf,
        /// Electrode potentials in volts, one per electrode.
        #[arg(long)]
        data: PathBuf,
        /// Source positions of the lead-field columns.
        #[arg(long)]
        positions: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Forward { config } => {
            let cfg = load(&config, cli.threads)?;
            match cfg.precision {
                Precision::F64 => forward::<f64>(&cfg),
                Precision::F32 => forward::<f32>(&cfg),
            }
        }
        Command::Validate { config, self_test } => {
            let cfg = load(&config, cli.threads)?;
            validate(&cfg, self_test)
        }
        Command::Convergence { config, h } => {
            let cfg = load(&config, cli.threads)?;
            let hs = if h.is_empty() { cfg.validation.h.clone() } else { h };
            match cfg.precision {
                Precision::F64 => run_convergence::<f64>(&cfg, &hs),
                Precision::F32 => run_convergence::<f32>(&cfg, &hs),
            }
        }
        Command::Scan { lead_field, data, positions, output } => {
            init_threads(cli.threads.unwrap_or(1))?;
            scan(&lead_field, &data, positions.as_deref(), output.as_deref())
        }
    }
}

fn load(path: &Path, threads: Option<usize>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path).context("config")?;
    if let Some(t) = threads {
        cfg.threads = t;
    }
    init_threads(cfg.threads)?;
    log::info!("{} ({})", path.display(), cfg.tag());
    Ok(cfg)
}

fn init_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().context("thread pool")
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn electrodes<T: Real>(cfg: &RunConfig) -> Result<Vec<Vec3<T>>> {
    if let Some(path) = &cfg.electrodes.path {
        return Ok(read_points::<T>(path)?.into_iter().map(|(p, _)| p).collect());
    }
    let Some(count) = cfg.electrodes.count else {
        bail!("give electrodes.path or electrodes.count");
    };
    let outer = cfg.compartments.last().expect("validated");
    let LevelSetSpec::Sphere { center, radius } = outer.level_set else {
        bail!("electrodes.count needs a spherical outermost compartment");
    };
    Ok(fibonacci_sphere(center, radius, count).into_iter().map(vec3::cast).collect())
}

fn forward<T: Real>(cfg: &RunConfig) -> Result<()> {
    let tag = cfg.tag();
    let model = cfg.compartment_model::<T>().context("driver setup")?;
    let mesh = cfg.mesh(&model).context("driver setup")?;
    let els = electrodes::<T>(cfg).context("driver setup")?;
    let mut fwd = ForwardModel::build(mesh, model, &els, cfg.forward_config())?;
    let positions: Vec<Vec3<T>> = match (&cfg.sources.path, cfg.sources.grid_spacing) {
        (Some(path), _) => read_points::<T>(path).context("lead field")?.into_iter().map(|(p, _)| p).collect(),
        (None, Some(spacing)) => {
            let c = cfg.sources.compartment;
            let anchor = match cfg.sources.anchor {
                Some(a) => vec3::cast(a),
                None => {
                    let (lo, hi) = fwd.disc.model.compartments[c]
                        .level_set
                        .support_bounds()
                        .context("sources.anchor is required for an unbounded compartment")?;
                    vec3::scale(vec3::add(lo, hi), lit(0.5))
                }
            };
            source_grid(&fwd.disc, c, anchor, lit(spacing)).context("lead field")?.into_iter().map(|s| s.position).collect()
        }
        (None, None) => Vec::new(),
    };
    let lf = fwd.lead_field(&positions)?;
    let o = &cfg.output;
    write_lead_field(&o.lead_field, &lf, Some(&tag)).with_context(|| format!("writing {}", o.lead_field.display()))?;
    if let Some(csv) = &o.lead_field_csv {
        write_lead_field_csv(csv, &lf, Some(&tag)).with_context(|| format!("writing {}", csv.display()))?;
    }
    let points: Vec<(Vec3<T>, Option<Vec3<T>>)> = positions.iter().map(|&p| (p, None)).collect();
    write_points(&o.positions, &points).with_context(|| format!("writing {}", o.positions.display()))?;
    let report = render_report(&fwd.report, &tag);
    write(&o.report, &report)?;
    print!("{report}");
    Ok(())
}

fn render_report(r: &ForwardReport, tag: &str) -> String {
    format!("# cutfem forward {tag}\n{}", r.render())
}

fn validate(cfg: &RunConfig, self_test: bool) -> Result<()> {
    let sphere = cfg.sphere_model().context("validation needs a concentric-sphere model")?;
    let study = cfg.study();
    let report = if self_test {
        let els = study.electrodes(&sphere);
        let mut records = Vec::new();
        for (pos, ecc, radial, tangential) in study.sources(&sphere) {
            for (m, is_radial) in [(radial, true), (tangential, false)] {
                let u = sphere_forward(&sphere, &Dipole { position: pos, moment: m }, &els).context("analytic oracle")?;
                records.push(ValidationRecord {
                    position: pos,
                    eccentricity: ecc,
                    radial: is_radial,
                    moment: m,
                    rdm: metrics::rdm(&u, &u)?,
                    mag: metrics::mag(&u, &u)?,
                });
            }
        }
        ValidationReport { h: cfg.mesh.h, records, forward: ForwardReport::default() }
    } else {
        match cfg.precision {
            Precision::F64 => validate_sphere::<f64>(&sphere, cfg.mesh.h, &study, cfg.forward_config())?,
            Precision::F32 => validate_sphere::<f32>(&sphere, cfg.mesh.h, &study, cfg.forward_config())?,
        }
    };
    let mut text = format!("# cutfem validate {}\n", cfg.tag());
    if !self_test {
        text += &prefix_lines(&report.forward.render());
    }
    text += &report.render(cfg.validation.report_bin_width);
    write(&cfg.output.validation, &text)?;
    println!("median RDM {:.4}% median |MAG| {:.4}%", report.median_rdm(), report.median_abs_mag());
    if let Some(band) = report.band_median_rdm(0.96, 0.98) {
        println!("median RDM at eccentricity 0.96-0.98: {band:.4}%");
    }
    Ok(())
}

fn prefix_lines(text: &str) -> String {
    text.lines().map(|l| format!("# {l}\n")).collect()
}

fn run_convergence<T: Real>(cfg: &RunConfig, hs: &[f64]) -> Result<()> {
    let sphere = cfg.sphere_model().context("convergence needs a concentric-sphere model")?;
    let band = (cfg.validation.band[0], cfg.validation.band[1]);
    let table = convergence::<T>(&sphere, hs, &cfg.study(), band, cfg.forward_config())?;
    let text = format!("# cutfem convergence {}\n{}", cfg.tag(), table.render());
    write(&cfg.output.convergence, &text)?;
    print!("{text}");
    if !table.is_monotone() {
        bail!("convergence: median RDM in [{}, {}) does not decrease strictly with h", band.0, band.1);
    }
    Ok(())
}

fn scan(lead_field: &Path, data: &Path, positions: Option<&Path>, output: Option<&Path>) -> Result<()> {
    let positions = match positions {
        Some(p) => Some(read_points::<f64>(p).context("scan")?.into_iter().map(|(x, _)| x).collect()),
        None => None,
    };
    let (lf, tag) = read_lead_field::<f64>(lead_field, positions).context("scan")?;
    let data = read_vector::<f64>(data).context("scan")?;
    let fit = dipole_scan(&lf, &data).context("scan")?;
    let p = lf.positions[fit.source];
    let text = format!(
        "# cutfem scan {}\n# source x y z goodness_of_fit_percent mx my mz\n{} {} {} {} {:.6} {:e} {:e} {:e}\n",
        tag.unwrap_or_else(|| "untagged".into()),
        fit.source,
        p[0],
        p[1],
        p[2],
        to_f64(fit.goodness_of_fit),
        fit.moment[0],
        fit.moment[1],
        fit.moment[2]
    );
    match output {
        Some(path) => write(path, &text)?,
        None => {}
    }
    print!("{text}");
    Ok(())
}
