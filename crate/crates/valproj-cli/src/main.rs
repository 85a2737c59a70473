//! Command-line runner for measurement-consistent reconstruction
//! experiments: configure an instance in TOML, pick a solver, get traces
//! and reconstructions on disk.

mod config;
mod run;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use run::{run_experiment, CliError, Experiment};

#[derive(Parser)]
#[command(
    name = "valproj",
    about = "Reconstruction by projection onto the measurement-consistent set",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Replicas to run in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output root; defaults to runs/<experiment>.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Project a point (or the origin) onto the valid set.
    Project(RunArgs),
    /// Alternate denoiser and projection; final iterate is feasible.
    Pm(RunArgs),
    /// Regularization-by-denoising fixed-point iteration.
    Red(RunArgs),
    /// Run red and pm on one instance; traces align iteration by iteration.
    RedVsPm(RunArgs),
    /// Fit a generator network to the measurements (deep image prior).
    Dip(RunArgs),
    /// Train a projected autoencoder chain, writing a checkpoint.
    VnpaTrain(RunArgs),
    /// Reconstruct held-out samples with a trained checkpoint.
    VnpaEval(RunArgs),
    /// L2-regularized baseline with discrepancy-principle weight.
    Tikhonov(RunArgs),
    /// Summarize trace CSVs: best-PSNR, best-SSIM, and final rows.
    Compare {
        /// Trace CSV files to summarize.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Directory for table.txt and table.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn dispatch(exp: Experiment, args: &RunArgs) -> Result<(), CliError> {
    let cfg = config::load(&args.config).map_err(CliError::Input)?;
    let out_root = args.out.clone().unwrap_or_else(|| {
        let name = match exp {
            Experiment::Project => "project",
            Experiment::Pm => "pm",
            Experiment::Red => "red",
            Experiment::RedVsPm => "red-vs-pm",
            Experiment::Dip => "dip",
            Experiment::VnpaTrain => "vnpa-train",
            Experiment::VnpaEval => "vnpa-eval",
            Experiment::Tikhonov => "tikhonov",
        };
        PathBuf::from("runs").join(name)
    });
    let summaries = run_experiment(exp, &cfg, &out_root, args.jobs)?;
    for line in summaries {
        println!("{line}");
    }
    Ok(())
}

fn compare(traces: &[PathBuf], out: &PathBuf) -> Result<(), CliError> {
    let (text, csv) = table::compare_table(traces)?;
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out.display())))?;
    let txt_path = out.join("table.txt");
    std::fs::write(&txt_path, &text)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", txt_path.display())))?;
    let csv_path = out.join("table.csv");
    std::fs::write(&csv_path, &csv)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", csv_path.display())))?;
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Project(args) => dispatch(Experiment::Project, args),
        Command::Pm(args) => dispatch(Experiment::Pm, args),
        Command::Red(args) => dispatch(Experiment::Red, args),
        Command::RedVsPm(args) => dispatch(Experiment::RedVsPm, args),
        Command::Dip(args) => dispatch(Experiment::Dip, args),
        Command::VnpaTrain(args) => dispatch(Experiment::VnpaTrain, args),
        Command::VnpaEval(args) => dispatch(Experiment::VnpaEval, args),
        Command::Tikhonov(args) => dispatch(Experiment::Tikhonov, args),
        Command::Compare { traces, out } => compare(traces, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
