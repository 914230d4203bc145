//! Thin command-line front end: run or check `.pbl` files and list the
//! shipped catalog. All substance lives in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pblab::catalog;
use pblab::dsl::{self, DslError};

const DEFAULT_SEED: u64 = 20260810;

#[derive(Parser)]
#[command(name = "pblab", about = "exact workbench for diffeological vector pseudo-bundles")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and execute a file (or `@name` from the catalog)
    Run {
        file: String,
        /// Write the JSON report here
        #[arg(long)]
        json: Option<PathBuf>,
        /// Sampling seed (overrides PBLAB_SEED)
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse only
    Check { file: String },
    /// List the shipped fixtures
    Catalog,
}

fn load(file: &str) -> Result<String, String> {
    if let Some(name) = file.strip_prefix('@') {
        return catalog::fixture(name)
            .map(|s| s.to_string())
            .ok_or_else(|| format!("no catalog fixture named {name}"));
    }
    std::fs::read_to_string(file).map_err(|e| format!("cannot read {file}: {e}"))
}

fn seed_from(cli_seed: Option<u64>) -> u64 {
    cli_seed
        .or_else(|| {
            std::env::var("PBLAB_SEED")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(DEFAULT_SEED)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match cli.command {
        Cmd::Catalog => {
            for name in catalog::names() {
                let desc = catalog::description(name).unwrap_or_default();
                println!("{name:24} {desc}");
            }
            ExitCode::SUCCESS
        }
        Cmd::Check { file } => {
            let text = match load(&file) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(1);
                }
            };
            match dsl::parse(&text) {
                Ok(doc) => {
                    println!("ok: {} statements", doc.items.len());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("parse error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Cmd::Run { file, json, seed } => {
            let text = match load(&file) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(1);
                }
            };
            let started = std::time::Instant::now();
            let doc = match dsl::parse(&text) {
                Ok(doc) => doc,
                Err(e) => {
                    eprintln!("parse error: {e}");
                    return ExitCode::from(1);
                }
            };
            let seed = seed_from(seed);
            match dsl::run(&doc, seed) {
                Ok(report) => {
                    for c in &report.commands {
                        println!("{}", c.command);
                        println!(
                            "  {}",
                            serde_json::to_string(&c.details).unwrap_or_default()
                        );
                    }
                    println!(
                        "ran {} commands in {} ms (seed {seed})",
                        report.commands.len(),
                        started.elapsed().as_millis()
                    );
                    if let Some(path) = json {
                        let body =
                            serde_json::to_string_pretty(&report).expect("report serializes");
                        if let Err(e) = std::fs::write(&path, body) {
                            eprintln!("cannot write {}: {e}", path.display());
                            return ExitCode::from(2);
                        }
                    }
                    ExitCode::SUCCESS
                }
                Err(e @ DslError::Parse { .. }) => {
                    eprintln!("parse error: {e}");
                    ExitCode::from(1)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
