use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use ups_core::gateway::{Config, Gateway};

#[derive(Parser)]
#[command(name = "ups", version, about = "Aadhaar-keyed unified wallet service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP API.
    Serve {
        /// key=value configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the configured listen address.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Run scenario scripts; with no files, the bundled corpus.
    Scenario { files: Vec<PathBuf> },
    /// Print a wallet statement from an event log.
    Audit {
        wallet: String,
        #[arg(long, default_value = "ups-events.log")]
        log: PathBuf,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Serve { config, listen } => serve(config, listen),
        Command::Scenario { files } => match ups_cli::scenarios(&files) {
            Ok(reports) => {
                for r in &reports {
                    println!("{r}");
                }
                if reports.iter().all(|r| r.passed()) {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::FAILURE
                }
            }
            Err(e) => {
                eprintln!("ups: {e}");
                ExitCode::from(2)
            }
        },
        Command::Audit { wallet, log } => match ups_cli::audit(&log, &wallet) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("ups: {e}");
                ExitCode::FAILURE
            }
        },
    }
}

fn serve(config: Option<PathBuf>, listen: Option<String>) -> ExitCode {
    let mut config = match config {
        Some(path) => match Config::load(&path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("ups: {}: {e}", path.display());
                return ExitCode::from(2);
            }
        },
        None => Config::default(),
    };
    if let Some(addr) = listen {
        config.listen = addr;
    }
    let gateway = match Gateway::open(&config) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("ups: cannot start: {e}");
            return ExitCode::FAILURE;
        }
    };
    let report = gateway.startup_report();
    eprintln!(
        "ups: replayed {} events from {} ({} torn bytes dropped, {} in-flight transactions closed)",
        report.events,
        config.log_path.display(),
        report.discarded_bytes,
        report.recovered.len()
    );
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    runtime.block_on(async move {
        let listener = match tokio::net::TcpListener::bind(&config.listen).await {
            Ok(l) => l,
            Err(e) => {
                eprintln!("ups: {}: {e}", config.listen);
                return ExitCode::FAILURE;
            }
        };
        eprintln!("ups: listening on {}", config.listen);
        match axum::serve(listener, ups_cli::router(Arc::new(gateway))).await {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("ups: {e}");
                ExitCode::FAILURE
            }
        }
    })
}
