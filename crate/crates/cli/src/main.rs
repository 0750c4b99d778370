use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fsi_asrom::pipeline::{self, PipelineConfig};
use fsi_asrom::Error;

#[derive(Parser)]
#[command(
    name = "fsi-asrom",
    version,
    about = "Flutter-constrained design with active-subspace reduced models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the active subspace and the reduced-model database.
    Offline {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the design problem on a stored database.
    Online {
        #[arg(long)]
        config: PathBuf,
        /// Database file; `<out>/db.json` when absent.
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the brute-force property checks.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the reports found in an output directory.
    Report {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_)
        | Error::FormatVersionMismatch { .. }
        | Error::DigestMismatch { .. }
        | Error::InfeasibleStart(_) => EXIT_VALIDATION,
        Error::Io(io) if io.kind() == std::io::ErrorKind::InvalidData => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn load(config: &Path, out: Option<PathBuf>) -> Result<PipelineConfig, Error> {
    let mut cfg = PipelineConfig::load(config)?;
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    Ok(cfg)
}

fn run(cmd: Command) -> Result<u8, Error> {
    match cmd {
        Command::Offline { config, out } => {
            let cfg = load(&config, out)?;
            let outcome = pipeline::run_offline(&cfg)?;
            let r = &outcome.report;
            println!(
                "offline: n_g={} n_db={} status={:?} -> {}",
                r.n_g.unwrap_or(0),
                r.n_db.unwrap_or(0),
                outcome.database.status,
                cfg.database_path().display()
            );
            Ok(0)
        }
        Command::Online { config, db, out } => {
            let cfg = load(&config, out)?;
            let db = db.unwrap_or_else(|| cfg.database_path());
            let outcome = pipeline::run_online(&cfg, &db)?;
            let s = &outcome.summary;
            println!(
                "online: status={:?} iterations={} objective={:.6} min_zeta={:.6} hdm_min_zeta={:.6}",
                s.status, s.iterations, s.objective, s.min_zeta, s.hdm_min_zeta
            );
            Ok(0)
        }
        Command::Verify { config, db, out } => {
            let cfg = load(&config, out)?;
            let report = pipeline::run_verify(&cfg, db.as_deref())?;
            for p in &report.properties {
                println!("{} {} {}", if p.passed { "PASS" } else { "FAIL" }, p.name, p.detail);
            }
            Ok(if report.passed { 0 } else { EXIT_VALIDATION })
        }
        Command::Report { config, out } => {
            let dir = match (out, config) {
                (Some(out), _) => out,
                (None, Some(config)) => PipelineConfig::load(&config)?.output_dir,
                (None, None) => PathBuf::from("out"),
            };
            print!("{}", pipeline::render_report(&dir)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
