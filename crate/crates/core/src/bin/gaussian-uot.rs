use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gaussian_uot::report::{
    check_options, parse_problem, run_certify, run_grid_bench, run_limit_sweep, run_solve, ParsedProblem, Report,
    RunError,
};

/// Closed-form unbalanced optimal transport between Gaussian measures.
#[derive(Debug, Parser)]
#[command(name = "gaussian-uot", version)]
struct Cli {
    /// Include wall-clock timings in the report (makes output non-reproducible).
    #[arg(long, global = true)]
    timings: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Problem file (JSON).
    #[arg(long)]
    input: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the closed-form solution.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Solve and verify the dual certificate.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare against the discrete dual on uniform grids (1-D only).
    GridBench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Scale both relaxations by each lambda and compare with the limit expansion.
    LimitSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        #[arg(long)]
        bar_tau0: Option<f64>,
        #[arg(long)]
        bar_tau1: Option<f64>,
    },
}

fn load(common: &Common, apply: impl FnOnce(&mut ParsedProblem)) -> Result<ParsedProblem, RunError> {
    let mut parsed = parse_problem(&common.input)?;
    apply(&mut parsed);
    check_options(&parsed)?;
    Ok(parsed)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), String> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<(Report, Option<PathBuf>), (RunError, Option<PathBuf>)> {
    let (common, result) = match &cli.command {
        Command::Solve { common } => (common, load(common, |_| {}).and_then(|p| run_solve(&p))),
        Command::Certify { common, samples, seed } => (
            common,
            load(common, |p| {
                p.samples = samples.unwrap_or(p.samples);
                p.seed = seed.unwrap_or(p.seed);
            })
            .and_then(|p| run_certify(&p, cli.timings)),
        ),
        Command::GridBench { common, sizes } => (
            common,
            load(common, |p| {
                if let Some(s) = sizes {
                    p.grid_sizes = s.clone();
                }
            })
            .and_then(|p| run_grid_bench(&p)),
        ),
        Command::LimitSweep {
            common,
            lambdas,
            bar_tau0,
            bar_tau1,
        } => (
            common,
            load(common, |p| {
                if let Some(l) = lambdas {
                    p.lambdas = l.clone();
                }
                p.bar_taus = (bar_tau0.unwrap_or(p.bar_taus.0), bar_tau1.unwrap_or(p.bar_taus.1));
            })
            .and_then(|p| run_limit_sweep(&p)),
        ),
    };
    result
        .map(|r| (r, common.output.clone()))
        .map_err(|e| (e, common.output.clone()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((report, output)) => match write_output(output.as_deref(), &report.render(cli.timings)) {
            Ok(()) => ExitCode::SUCCESS,
            Err(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
        },
        Err((err, output)) => {
            if let RunError::CertificateFailed { report, .. } = &err {
                let mut text = serde_json::to_string_pretty(report).expect("report serializes");
                text.push('\n');
                if let Err(msg) = write_output(output.as_deref(), &text) {
                    eprintln!("error: {msg}");
                }
            }
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
