use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use polarloc_cli::commands;

/// Place recognition and relative-yaw estimation for LiDAR scans.
#[derive(Parser)]
#[command(name = "polarloc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a signature database from a scan manifest.
    BuildDb {
        /// Scan manifest CSV.
        #[arg(long)]
        manifest: PathBuf,
        /// Output database file.
        #[arg(long)]
        db: PathBuf,
        /// key=value run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Worker threads (0 = available parallelism).
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Rank database places against one scan, optionally with yaw.
    Query {
        #[arg(long)]
        db: PathBuf,
        /// Scan file (.xyz binary triples, or .csv).
        #[arg(long)]
        scan: PathBuf,
        /// Number of candidates to print.
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Also estimate relative yaw against the rank-1 match.
        #[arg(long)]
        with_yaw: bool,
        /// Manifest used to locate the matched scan (needed by --with-yaw).
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Retrieval metrics and rejection curves over manifest queries.
    Eval {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Report CSV path; curve/pr/distances files are written alongside.
        #[arg(long)]
        out: PathBuf,
        /// Success radius in meters (default: config success_radius_m).
        #[arg(long)]
        radius: Option<f64>,
        /// Retrieval depth for the recall curve.
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Finite-difference verification of all gradient paths.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a synthetic world, scans and a benchmark manifest.
    Synth {
        /// Output directory (scans/ and manifest.csv are created inside).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Per-stage timing over the manifest's db scans.
    Bench {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::BuildDb {
            manifest,
            db,
            config,
            threads,
        } => {
            let cfg = commands::load_config(config.as_deref())?;
            commands::cmd_build_db(&cfg, &manifest, &db, threads)?;
            Ok(true)
        }
        Command::Query {
            db,
            scan,
            k,
            with_yaw,
            manifest,
            config,
        } => {
            let cfg = commands::load_config(config.as_deref())?;
            commands::cmd_query(&cfg, &db, &scan, k, with_yaw, manifest.as_deref())?;
            Ok(true)
        }
        Command::Eval {
            db,
            manifest,
            out,
            radius,
            k,
            config,
            threads,
        } => {
            let cfg = commands::load_config(config.as_deref())?;
            commands::cmd_eval(&cfg, &db, &manifest, &out, radius, k, threads)?;
            Ok(true)
        }
        Command::Gradcheck { config, seed } => {
            let cfg = commands::load_config(config.as_deref())?;
            commands::cmd_gradcheck(&cfg, seed)
        }
        Command::Synth { out, seed, config } => {
            let cfg = commands::load_config(config.as_deref())?;
            commands::cmd_synth(&cfg, &out, seed)?;
            Ok(true)
        }
        Command::Bench { manifest, config } => {
            let cfg = commands::load_config(config.as_deref())?;
            commands::cmd_bench(&cfg, &manifest)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
