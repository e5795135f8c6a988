use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stabilab::experiment::{exit_code, run_command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "stabilab", version, about = "Fixed-frequency Schrodinger inverse problem experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config file (flat key = value).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// DN cache directory; overrides `cache_dir`.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,

    /// RNG seed; overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve one Dirichlet problem and write the field and Neumann trace.
    Forward,
    /// Build the full and partial DN maps.
    Dnmap,
    /// Check CGO remainder decay and norm bounds.
    CgoCheck,
    /// Calibrate and test the Carleman inequality over the frequency grid.
    CarlemanCheck,
    /// Estimate Fourier modes of q1 - q2 from boundary data.
    FourierRecon,
    /// Run the frequency sweep.
    Sweep,
    /// Run the property suite and write a pass/fail report.
    Verify,
    /// Rebuild beta.csv and plot.svg from records.csv.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Dnmap => "dnmap",
            Command::CgoCheck => "cgo-check",
            Command::CarlemanCheck => "carleman-check",
            Command::FourierRecon => "fourier-recon",
            Command::Sweep => "sweep",
            Command::Verify => "verify",
            Command::Report => "report",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    };
    let result = cfg.and_then(|mut cfg| {
        if let Some(j) = cli.jobs {
            cfg.jobs = j.max(1);
        }
        if let Some(d) = &cli.cache {
            cfg.cache_dir = Some(d.clone());
        }
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        run_command(cli.command.name(), &cfg)
    });
    match &result {
        Ok(out) => {
            print!("{}", out.summary);
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => eprintln!("error kind={} message={e}", e.kind()),
    }
    ExitCode::from(exit_code(&result) as u8)
}
