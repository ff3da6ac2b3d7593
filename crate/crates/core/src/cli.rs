//! The `lsdopt` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::driver::{fd_verify, random_loaded_design, run, Problem, ProblemSpec, RunOutcome};
use crate::error::{Error, Result};
use crate::geometry::{minimum_feature_diameter, FeatureOptions};
use crate::grid::StructuredGrid;
use crate::io::vtk::{design_image, SYMMETRY_TAG};
use crate::io::{load_config, write_effective_config, write_history_csv, RunConfig, VtkImage};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Largest FD relative error `fd-check` accepts.
pub const FD_CHECK_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "lsdopt", version, about = "Level-set topology optimization with a projected density field")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize one design.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to the config file name without extension).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Density filter radius.
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Compare adjoint gradients with central differences on a random design.
    FdCheck {
        #[arg(long)]
        config: PathBuf,
        /// Sampled components per variable block.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Run once per density filter radius.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        radii: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Minimum feature diameter of a saved design.
    Measure {
        #[arg(long)]
        vtk: PathBuf,
    },
}

/// Failure classes, mapped to exit codes.
enum Failure {
    Config(Error),
    Runtime(Error),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn error(&self) -> &Error {
        match self {
            Failure::Config(e) | Failure::Runtime(e) => e,
        }
    }
}

fn runtime<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Runtime)
}

/// Parse `argv` (including the program name), run the subcommand and
/// return the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Run { config, out, max_iters, radius } => cmd_run(&config, out, max_iters, radius),
        Command::FdCheck { config, samples } => cmd_fd_check(&config, samples),
        Command::Sweep { config, radii, out, max_iters } => cmd_sweep(&config, &radii, out, max_iters),
        Command::Measure { vtk } => cmd_measure(&vtk),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.error());
            f.code()
        }
    }
}

fn load_with_overrides(
    path: &Path,
    max_iters: Option<usize>,
    radius: Option<f64>,
) -> std::result::Result<RunConfig, Failure> {
    let mut cfg = load_config(path).map_err(Failure::Config)?;
    if let Some(n) = max_iters {
        cfg.schedule.max_iterations = n;
    }
    if let Some(r) = radius {
        cfg.filter.density_filter_radius = r;
    }
    cfg.validate().map_err(Failure::Config)?;
    Ok(cfg)
}

fn default_out(config: &Path) -> PathBuf {
    PathBuf::from(config.file_stem().unwrap_or_else(|| "out".as_ref()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Feature size of `{φ > 0}` with the left edge mirrored and pads ignored.
pub fn measure_design(grid: &StructuredGrid, phi: &[f64], frozen: Option<&[bool]>, mirror_left: bool) -> Result<f64> {
    let opts = FeatureOptions {
        mirror_left,
        excluded_nodes: frozen.map(<[bool]>::to_vec),
        ..Default::default()
    };
    minimum_feature_diameter(grid, phi, &opts)
}

/// Optimize with `cfg`, writing history, snapshots and the effective config
/// into `dir`.
pub fn run_to_directory(cfg: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    create_dir(dir)?;
    write_effective_config(dir, cfg)?;
    let problem = Problem::new(ProblemSpec::from_config(cfg)?)?;
    let grid = problem.spec.grid.clone();
    let every = cfg.output.output_every;
    let frozen = problem.spec.initial.frozen.clone();
    let snapshot = |iter: usize| dir.join(format!("design_{iter:04}.vtk"));
    let outcome = run(&problem, cfg.output.record_wall_time, |rec, ev, _| {
        if every > 0 && rec.iter % every == 0 {
            design_image(&grid, ev, &frozen, true).write(&snapshot(rec.iter))?;
        }
        Ok(())
    })?;
    let last = &outcome.last;
    let path = snapshot(last.iteration);
    if !path.exists() {
        design_image(&grid, last, &frozen, true).write(&path)?;
    }
    write_history_csv(&dir.join("history.csv"), &outcome.history)?;
    Ok(outcome)
}

struct RunSummary {
    iterations: usize,
    stop: String,
    psi: f64,
    g1: f64,
    void_density: f64,
    feature: f64,
}

fn summarize(cfg: &RunConfig, outcome: &RunOutcome) -> Result<RunSummary> {
    let spec = ProblemSpec::from_config(cfg)?;
    let last = &outcome.last;
    let feature = measure_design(&spec.grid, &last.fields.phi, Some(&outcome.design.frozen), true)?;
    Ok(RunSummary {
        iterations: outcome.history.len(),
        stop: format!("{:?}", outcome.stop),
        psi: last.psi,
        g1: last.g1,
        void_density: last.void_density_mean(spec.penalty.phi_th_fs),
        feature,
    })
}

fn cmd_run(
    config: &Path,
    out: Option<PathBuf>,
    max_iters: Option<usize>,
    radius: Option<f64>,
) -> std::result::Result<i32, Failure> {
    let cfg = load_with_overrides(config, max_iters, radius)?;
    let dir = out.unwrap_or_else(|| default_out(config));
    let outcome = runtime(run_to_directory(&cfg, &dir))?;
    let s = runtime(summarize(&cfg, &outcome))?;
    println!(
        "{} after {} iterations: Psi = {}, g1 = {:.3e}, void density = {:.4}, min feature = {:.3}",
        s.stop, s.iterations, s.psi, s.g1, s.void_density, s.feature
    );
    println!("results in {}", dir.display());
    Ok(EXIT_OK)
}

fn cmd_fd_check(config: &Path, samples: Option<usize>) -> std::result::Result<i32, Failure> {
    let mut cfg = load_config(config).map_err(Failure::Config)?;
    if let Some(n) = samples {
        cfg.verify.fd_samples = n;
    }
    cfg.validate().map_err(Failure::Config)?;
    let v = &cfg.verify;
    let problem = runtime(ProblemSpec::from_config(&cfg).and_then(Problem::new))?;
    let s = runtime(random_loaded_design(&problem, v.seed, v.fd_iteration))?;
    let report = runtime(fd_verify(&problem, &s, v.fd_iteration, v.fd_samples, v.fd_step, v.seed))?;
    println!(
        "{} components checked, max relative error {:.3e}, mean {:.3e}",
        report.samples.len(),
        report.max_rel_error,
        report.mean_rel_error
    );
    Ok(if report.max_rel_error <= FD_CHECK_TOLERANCE { EXIT_OK } else { EXIT_RUNTIME })
}

fn cmd_sweep(
    config: &Path,
    radii: &[f64],
    out: Option<PathBuf>,
    max_iters: Option<usize>,
) -> std::result::Result<i32, Failure> {
    // Validate every radius before starting the first run.
    let cfgs = radii
        .iter()
        .map(|&r| load_with_overrides(config, max_iters, Some(r)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let dir = out.unwrap_or_else(|| default_out(config));
    runtime(create_dir(&dir))?;
    let summary_path = dir.join("summary.csv");
    let mut w = runtime(csv::Writer::from_path(&summary_path).map_err(|e| csv_io(&summary_path, e)))?;
    let header = ["radius", "stop", "iterations", "Psi", "g1", "void_density", "min_feature"];
    runtime(w.write_record(header).map_err(|e| csv_io(&summary_path, e)))?;
    for (r, cfg) in radii.iter().zip(&cfgs) {
        let sub = dir.join(format!("radius_{r}"));
        let outcome = runtime(run_to_directory(cfg, &sub))?;
        let s = runtime(summarize(cfg, &outcome))?;
        println!("radius {r}: Psi = {}, min feature = {:.3}", s.psi, s.feature);
        let row = [
            r.to_string(),
            s.stop,
            s.iterations.to_string(),
            s.psi.to_string(),
            s.g1.to_string(),
            s.void_density.to_string(),
            s.feature.to_string(),
        ];
        runtime(w.write_record(row).map_err(|e| csv_io(&summary_path, e)))?;
    }
    runtime(w.flush().map_err(|e| Error::io(&summary_path, e)))?;
    Ok(EXIT_OK)
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

fn cmd_measure(path: &Path) -> std::result::Result<i32, Failure> {
    let img = runtime(VtkImage::read(path))?;
    let grid = runtime(img.grid())?;
    let phi = img
        .point_scalar("phi")
        .ok_or_else(|| Failure::Runtime(Error::Vtk { path: path.into(), message: "no 'phi' point data".into() }))?;
    let frozen: Option<Vec<bool>> = img.point_scalar("frozen").map(|f| f.iter().map(|&v| v > 0.5).collect());
    let mirror = img.title.contains(SYMMETRY_TAG);
    let d = runtime(measure_design(&grid, phi, frozen.as_deref(), mirror))?;
    println!("{d}");
    Ok(EXIT_OK)
}
