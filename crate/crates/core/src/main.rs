use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use relaxstab::cli::{self, Pipeline, RunConfig};

#[derive(Parser)]
#[command(name = "relaxstab", version, about = "Stability checks for relaxation fronts")]
struct Args {
    /// TOML run configuration (defaults to the Jin–Xin front).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pipeline: Option<Pipeline>,
    /// Output directory for summaries and CSV artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Merge prior run summaries into one table.
    Report { paths: Vec<PathBuf> },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = match execute(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            cli::exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}

fn execute(args: Args) -> relaxstab::Result<i32> {
    cli::configure_threads()?;
    if let Some(Command::Report { paths }) = args.command {
        let rep = cli::report(&paths)?;
        print!("{}", rep.table());
        if let Some(dir) = &args.out {
            std::fs::create_dir_all(dir)?;
            let json = serde_json::to_string_pretty(&rep)? + "\n";
            cli::write_atomic(&dir.join("report.json"), json.as_bytes())?;
        }
        return Ok(if rep.all_pass { cli::EXIT_OK } else { cli::EXIT_REFUTED });
    }
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::jin_xin_default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args.out.clone().or_else(|| cfg.out.clone());
    let summary = cli::run(&cfg, args.pipeline, out.as_deref(), args.verbose)?;
    for (name, c) in &summary.checks {
        println!("{:<32} {}", name, if c.pass { "ok" } else { "FAIL" });
    }
    if let Some(e) = &summary.error {
        eprintln!("error: {e}");
    }
    Ok(cli::summary_exit_code(&summary))
}
