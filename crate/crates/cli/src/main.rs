use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wrm_cli::app::{exit, run_and_write, summary, CliError, Command};
use wrm_cli::config::{Overrides, ProbeName, Resolved};
use wrm_cli::manifest;

#[derive(Parser)]
#[command(name = "wrm", version, about = "Widom-Rowlinson quasilocality laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed` in the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out` in the file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Independent RNG substreams the Monte Carlo budget is split over.
    #[arg(long)]
    replicas: Option<u32>,
}

#[derive(Subcommand)]
enum Sub {
    /// Draw WRM samples in the configured window.
    Sample(Common),
    /// Apply the spin-flip dynamics to samples or to --input.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Evaluate the configured conditional kernel.
    Kernel(Common),
    ProbeDecay(Common),
    ProbeColor(Common),
    ProbeSpatial(Common),
    ProbePercolation(Common),
    /// Time/intensity phase scan.
    Scan(Common),
    /// SVG of --input, or of one fresh sample.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Every probe listed in `[probes] run`.
    Run(Common),
    /// Check an output directory against its manifest.
    Verify {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, cmd) = match cli.command {
        Sub::Sample(c) => (c, Command::Sample),
        Sub::Evolve { common, input } => (common, Command::Evolve { input }),
        Sub::Kernel(c) => (c, Command::Kernel),
        Sub::ProbeDecay(c) => (c, Command::Probe(ProbeName::Decay)),
        Sub::ProbeColor(c) => (c, Command::Probe(ProbeName::Color)),
        Sub::ProbeSpatial(c) => (c, Command::Probe(ProbeName::Spatial)),
        Sub::ProbePercolation(c) => (c, Command::Probe(ProbeName::Percolation)),
        Sub::Scan(c) => (c, Command::Scan),
        Sub::Render { common, input } => (common, Command::Render { input }),
        Sub::Run(c) => (c, Command::Run),
        Sub::Verify { out } => {
            return match manifest::verify(&out) {
                Ok(bad) if bad.is_empty() => {
                    println!("manifest ok");
                    ExitCode::from(exit::CONSISTENT as u8)
                }
                Ok(bad) => {
                    for b in bad {
                        eprintln!("{b}");
                    }
                    ExitCode::from(exit::VIOLATED as u8)
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(exit::INVALID_CONFIG as u8)
                }
            };
        }
    };
    let ov = Overrides { seed: common.seed, out: common.out, replicas: common.replicas };
    let cfg = match Resolved::from_file(&common.config, &ov) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("invalid config {}: {e}", common.config.display());
            return ExitCode::from(exit::INVALID_CONFIG as u8);
        }
    };
    match run_and_write(&cmd, &cfg) {
        Ok((art, code)) => {
            for line in summary(&art) {
                println!("{line}");
            }
            println!("wrote {} files to {}", art.files.len() + 2, cfg.out.display());
            ExitCode::from(code as u8)
        }
        Err(e @ CliError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(exit::INVALID_CONFIG as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(exit::INVALID_CONFIG as u8)
        }
    }
}
