//! Experiment runner behind the command-line interface. Reads one config
//! document, executes the named experiment, writes CSV/JSON reports plus a
//! manifest, and reports a pass/fail verdict through the exit status.

pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use levy_bsde::analysis::{stability_sweep, truncation_convergence_study};
use levy_bsde::checks::{check_gamma, check_growth, check_monotonicity, check_rho_bounds};
use levy_bsde::comparison::{node_means, ComparisonExperiment, ComparisonTolerance};
use levy_bsde::csvio;
use levy_bsde::inequalities::{bihari_bound, gronwall_bound};
use levy_bsde::registry;
use levy_bsde::solver::solve_bsde;
use levy_bsde::{simulate_forward, RhoFunction};

use config::{ExperimentConfig, RunConfig};

#[derive(Error, Debug)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] levy_bsde::Error),

    #[error("report serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Final outcome of an experiment run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 2,
        }
    }

    fn from_bool(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_sha256: String,
    seed: u64,
    version: &'a str,
    experiment: &'a str,
    created_unix: u64,
}

/// Execute the config at `path`; `output_override` replaces the config's
/// output directory when set.
pub fn run_config_file(path: &Path, output_override: Option<&Path>) -> Result<Verdict, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let config = config::parse_config(&text)?;
    run_config(&config, &text, output_override)
}

pub fn run_config(
    config: &RunConfig,
    raw_text: &str,
    output_override: Option<&Path>,
) -> Result<Verdict, CliError> {
    let model = config.model.build()?;
    let grid = config.grid.build()?;
    config.scheme.validate()?;
    if config.ensemble.paths == 0 {
        return Err(CliError::Config("ensemble.paths must be >= 1".into()));
    }

    let out_dir: PathBuf = output_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&config.output_dir));
    fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;

    let spec = registry::build_generator(
        &config.generator.id,
        &model,
        &grid,
        &config.generator.overrides,
    )?;
    let terminal = registry::build_terminal(&config.terminal.id, &config.terminal.overrides)?;

    let verdict = match &config.experiment {
        ExperimentConfig::Solve { dump_ensemble } => {
            let ensemble =
                simulate_forward(&model, &grid, config.ensemble.paths, config.ensemble.seed)?;
            let sol = solve_bsde(&spec, &terminal, &ensemble, &grid, &config.scheme)?;
            write_file(&out_dir.join("solution.csv"), |w| {
                csvio::write_solution(w, &sol)
            })?;
            write_json(&out_dir.join("diagnostics.json"), &sol.diagnostics)?;
            if *dump_ensemble {
                write_file(&out_dir.join("ensemble.csv"), |w| {
                    csvio::write_ensemble(w, &ensemble)
                })?;
            }
            Verdict::Pass
        }
        ExperimentConfig::Sweep { scales } => {
            let ensemble =
                simulate_forward(&model, &grid, config.ensemble.paths, config.ensemble.seed)?;
            let report =
                stability_sweep(&spec, &terminal, &ensemble, &grid, &config.scheme, scales)?;
            write_file(&out_dir.join("sweep.csv"), |w| csvio::write_sweep(w, &report))?;
            write_json(&out_dir.join("sweep.json"), &report)?;
            Verdict::from_bool(report.pass)
        }
        ExperimentConfig::Compare {
            generator_prime,
            terminal_prime,
            tolerance,
            posthoc,
            sampler,
        } => {
            let spec_prime = registry::build_generator(
                &generator_prime.id,
                &model,
                &grid,
                &generator_prime.overrides,
            )?;
            let term_prime =
                registry::build_terminal(&terminal_prime.id, &terminal_prime.overrides)?;
            let experiment = ComparisonExperiment {
                spec: &spec,
                spec_prime: &spec_prime,
                terminal: &terminal,
                terminal_prime: &term_prime,
                model: &model,
                grid: &grid,
                paths: config.ensemble.paths,
                seed: config.ensemble.seed,
                scheme: &config.scheme,
                tolerance: match tolerance {
                    Some(value) => ComparisonTolerance::Absolute { value: *value },
                    None => ComparisonTolerance::default(),
                },
                preflight_sampler: sampler.build(grid.horizon(), grid.dt(0)),
                posthoc_generator_check: *posthoc,
            };
            let (report, sol, sol_prime) = experiment.run_with_solutions()?;
            write_json(&out_dir.join("comparison.json"), &report)?;
            let rows = node_means(&sol, &sol_prime, &grid);
            write_file(&out_dir.join("comparison_nodes.csv"), |w| {
                csvio::write_comparison_nodes(w, &rows)
            })?;
            Verdict::from_bool(report.pass)
        }
        ExperimentConfig::Truncate {
            levels,
            radius,
            sampler,
        } => {
            let ensemble =
                simulate_forward(&model, &grid, config.ensemble.paths, config.ensemble.seed)?;
            let report = truncation_convergence_study(
                &spec,
                &terminal,
                &ensemble,
                &grid,
                &config.scheme,
                levels,
                *radius,
                &sampler.build(grid.horizon(), grid.dt(0)),
            )?;
            write_file(&out_dir.join("truncation.csv"), |w| {
                csvio::write_truncation(w, &report)
            })?;
            write_json(&out_dir.join("truncation.json"), &report)?;
            Verdict::from_bool(report.pass)
        }
        ExperimentConfig::Check {
            checks,
            tolerance,
            growth_radius,
            sampler,
        } => {
            let sampler = sampler.build(grid.horizon(), grid.dt(0));
            let mut reports = Vec::new();
            for check in checks {
                match check.as_str() {
                    "monotonicity" => {
                        reports.push(check_monotonicity(&spec, &sampler, *tolerance)?)
                    }
                    "growth" => {
                        let (report, _) = check_growth(&spec, *growth_radius, &grid, &sampler)?;
                        reports.push(report);
                    }
                    "gamma" => reports.push(check_gamma(&spec, &model, &sampler, *tolerance)?),
                    "rho_bounds" => reports.push(check_rho_bounds(
                        &spec.coefficients.rho,
                        spec.p,
                        4000,
                        *tolerance,
                    )),
                    other => {
                        return Err(CliError::Config(format!(
                            "experiment.checks entry '{other}' unknown \
                             (monotonicity | growth | gamma | rho_bounds)"
                        )))
                    }
                }
            }
            write_json(&out_dir.join("checks.json"), &reports)?;
            Verdict::from_bool(reports.iter().all(|r| r.pass))
        }
        ExperimentConfig::Bihari {
            rho,
            c,
            k_constant,
            k_values,
            compare_gronwall,
        } => {
            let rho = rho.build()?;
            let nodes = grid.nodes().to_vec();
            let k = match k_values {
                Some(values) => {
                    if values.len() != nodes.len() {
                        return Err(CliError::Config(format!(
                            "experiment.k_values has {} entries, grid has {} nodes",
                            values.len(),
                            nodes.len()
                        )));
                    }
                    values.clone()
                }
                None => vec![*k_constant; nodes.len()],
            };
            let bound = bihari_bound(*c, &k, &rho, &nodes)?;
            write_file(&out_dir.join("bihari.csv"), |w| {
                csvio::write_bihari(w, &bound)
            })?;
            let mut pass = bound.in_domain.iter().all(|&b| b);
            let gronwall_agreement = if *compare_gronwall {
                if let RhoFunction::Linear { slope } = rho {
                    let scaled: Vec<f64> = k.iter().map(|v| v * slope).collect();
                    let g = gronwall_bound(*c, &scaled, &nodes)?;
                    let max_diff = bound
                        .bound
                        .iter()
                        .zip(&g)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f64, f64::max);
                    pass &= max_diff <= 1e-9;
                    Some(max_diff)
                } else {
                    None
                }
            } else {
                None
            };
            #[derive(Serialize)]
            struct BihariSummary<'a> {
                bound: &'a levy_bsde::inequalities::BihariBound,
                gronwall_max_divergence: Option<f64>,
                pass: bool,
            }
            write_json(
                &out_dir.join("bihari.json"),
                &BihariSummary {
                    bound: &bound,
                    gronwall_max_divergence: gronwall_agreement,
                    pass,
                },
            )?;
            Verdict::from_bool(pass)
        }
    };

    let manifest = Manifest {
        config_sha256: hex_sha256(raw_text.as_bytes()),
        seed: config.ensemble.seed,
        version: env!("CARGO_PKG_VERSION"),
        experiment: config.experiment.kind_name(),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;

    Ok(verdict)
}

fn hex_sha256(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

fn write_file<F>(path: &Path, writer: F) -> Result<(), CliError>
where
    F: FnOnce(&mut std::io::BufWriter<fs::File>) -> std::io::Result<()>,
{
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut buffered = std::io::BufWriter::new(file);
    writer(&mut buffered).map_err(io_err(path))?;
    buffered.flush().map_err(io_err(path))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(io_err(path))
}

/// Configure the global worker pool from `--threads` or `LEVY_BSDE_THREADS`.
/// Zero or absent keeps the default (hardware parallelism).
pub fn configure_threads(flag: Option<usize>) {
    let from_env = std::env::var("LEVY_BSDE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    let threads = flag.or(from_env).unwrap_or(0);
    if threads > 0 {
        // ignore the error when a pool already exists (tests call this twice)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}
