//! `combrc`: runs reservoir experiments described by a TOML configuration.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use combrc::config::{ExperimentConfig, TaskConfig};
use combrc::harness::{comb_spectrum, run_experiment, run_omega_scan, run_sweep};
use combrc::output::{spectrum_plot, write_omega_scan, write_run, write_spectrum_csv, write_sweep};
use combrc::system::PhysicsConfig;
use combrc::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "combrc", version, about = "Photonic deep reservoir computing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured mode once.
    Run(Common),
    /// Run the configured mode at every point of the sweep section.
    Sweep(Common),
    /// Score each band alone across the line spacings of an omega_detuning sweep.
    OmegaScan(Common),
    /// Print the input comb of both bands as CSV.
    CombSpectrum(Common),
    /// Check a configuration and print it with all defaults filled in.
    ValidateConfig(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Santa Fe series, one sample per line.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
    /// Overrides the configuration output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

/// Loads the configuration and applies the command-line overrides.
fn effective_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(output) = &common.output {
        cfg.output_dir = output.clone();
    }
    if let Some(dataset) = &common.dataset {
        match &mut cfg.task {
            TaskConfig::Santafe(s) => s.dataset = Some(dataset.clone()),
            TaskConfig::Channel(_) => {
                return Err(Failure::Config("--dataset applies to the santafe task only".into()));
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn set_jobs(jobs: Option<usize>) -> Result<(), Failure> {
    let Some(jobs) = jobs else {
        return Ok(());
    };
    if jobs == 0 {
        return Err(Failure::Config("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(common) => {
            let mut cfg = effective_config(&common)?;
            set_jobs(common.jobs)?;
            if cfg.sweep.take().is_some() {
                log::warn!("`run` ignores the sweep section; use `sweep`");
            }
            let outcome = run_experiment(&cfg)?;
            write_run(&cfg.output_dir, &cfg, &outcome, common.plot)?;
            let r = &outcome.record;
            println!(
                "{} {} {}: mean {:.6e} std {:.6e} over {} folds -> {}",
                r.mode,
                r.task,
                r.metric.name(),
                r.mean,
                r.std,
                r.fold_scores.len(),
                cfg.output_dir.display()
            );
        }
        Command::Sweep(common) => {
            let cfg = effective_config(&common)?;
            set_jobs(common.jobs)?;
            let outcome = run_sweep(&cfg)?;
            write_sweep(&cfg.output_dir, &cfg, &outcome, common.plot)?;
            let s = &outcome.summary;
            for (v, (m, sd)) in s.values.iter().zip(s.means.iter().zip(&s.stds)) {
                println!("{} = {v}: {} mean {m:.6e} std {sd:.6e}", s.axis, s.metric.name());
            }
            println!("best {} = {} -> {}", s.axis, s.best_value, cfg.output_dir.display());
        }
        Command::OmegaScan(common) => {
            let cfg = effective_config(&common)?;
            set_jobs(common.jobs)?;
            let scan = run_omega_scan(&cfg)?;
            write_omega_scan(&cfg.output_dir, &cfg, &scan, common.plot)?;
            for p in &scan.points {
                println!(
                    "omega {} GHz: band 1 {:.6e}, band 2 {:.6e}",
                    p.omega_ghz, p.bands[0].mean, p.bands[1].mean
                );
            }
            println!(
                "best omega: band 1 {} GHz, band 2 {} GHz -> {}",
                scan.best_omega_ghz[0],
                scan.best_omega_ghz[1],
                cfg.output_dir.display()
            );
        }
        Command::CombSpectrum(common) => {
            let physics = match &common.config {
                Some(_) => effective_config(&common)?.physics,
                None => PhysicsConfig::default(),
            };
            let lines = comb_spectrum(&physics)?;
            write_spectrum_csv(std::io::stdout().lock(), &lines)?;
            if let Some(dir) = &common.output {
                std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
                let file = std::fs::File::create(dir.join("comb_spectrum.csv"))
                    .map_err(|e| Failure::Runtime(e.to_string()))?;
                write_spectrum_csv(file, &lines)?;
                if common.plot {
                    std::fs::write(dir.join("comb_spectrum.svg"), spectrum_plot(&lines).to_svg())
                        .map_err(|e| Failure::Runtime(e.to_string()))?;
                }
            }
        }
        Command::ValidateConfig(common) => {
            let cfg = effective_config(&common)?;
            print!("{}", cfg.to_toml_string()?);
            eprintln!("configuration is valid");
        }
    }
    Ok(())
}
