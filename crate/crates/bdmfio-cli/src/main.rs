//! `bdmfio` command-line entry point.

use bdmfio_cli::{run, RunOptions, Status};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "bdmfio",
    version,
    about = "Batch experiments for Boutet de Monvel FIO calculus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON); also searched in BDMFIO_FIXTURES.
    #[arg(long)]
    config: String,
    /// Directory receiving the JSON and CSV reports.
    #[arg(long, default_value = "reports")]
    out_dir: PathBuf,
    /// Worker threads for parallel sweeps.
    #[arg(long)]
    jobs: Option<usize>,
    /// Omit the timestamp so that repeated runs produce identical reports.
    #[arg(long)]
    no_timestamp: bool,
    /// Multiplies every residual tolerance and slope slack.
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Admissibility of boundary-preserving symplectomorphisms.
    CheckAdmissible(Common),
    /// Transmission condition and H-space projections.
    CheckTransmission(Common),
    /// Dirac-action closed forms, order sweeps and the derivative induction identity.
    Dirac(Common),
    /// Transpose anomaly and the derivative-loss counterexample.
    Truncate(Common),
    /// Boundary-symbol defect sweeps.
    DefectSweep(Common),
    /// Composition cases, multiplicativity and associativity.
    ComposeCases(Common),
    /// Parametrices of elliptic boundary symbols.
    Parametrix(Common),
    /// Conjugation of operators by boundary FIOs.
    Egorov(Common),
    /// Norm continuity of the normal deformation family.
    Deform(Common),
    /// Fredholm index estimates.
    Index(Common),
    /// Index independence of the Maslov section.
    Independence(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, c) = match cli.command {
        Command::CheckAdmissible(c) => ("check-admissible", c),
        Command::CheckTransmission(c) => ("check-transmission", c),
        Command::Dirac(c) => ("dirac", c),
        Command::Truncate(c) => ("truncate", c),
        Command::DefectSweep(c) => ("defect-sweep", c),
        Command::ComposeCases(c) => ("compose-cases", c),
        Command::Parametrix(c) => ("parametrix", c),
        Command::Egorov(c) => ("egorov", c),
        Command::Deform(c) => ("deform", c),
        Command::Index(c) => ("index", c),
        Command::Independence(c) => ("independence", c),
    };
    let opts = RunOptions {
        config: c.config,
        out_dir: c.out_dir,
        jobs: c.jobs,
        no_timestamp: c.no_timestamp,
        tolerance_scale: c.tolerance_scale,
    };
    let out = run(name, &opts);
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    for m in &out.messages {
        eprintln!(
            "{}: {m}",
            if out.status == Status::ConfigError {
                "config error"
            } else {
                "FAILED"
            }
        );
    }
    if out.status == Status::Pass {
        println!("{name}: all criteria passed");
    }
    ExitCode::from(out.status as u8)
}
