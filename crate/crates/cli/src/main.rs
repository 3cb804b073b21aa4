//! `jtc-tphd`: simulate scenarios, run the tracker and sweep the L-scan
//! window from a JSON experiment file.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;

#[derive(Debug, Parser)]
#[command(name = "jtc-tphd", version, about = "Trajectory PHD filter with joint tracking and classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw ground truth and measurement frames; writes truth.csv and frames.csv.
    Simulate(Common),
    /// Run the filter (Monte Carlo over `--runs`); writes estimates, metrics and a summary.
    Track {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        runs: Option<usize>,
        /// Window length, or `none` for the unwindowed filter.
        #[arg(long = "l-scan", value_parser = parse_l_scan)]
        l_scan: Option<LScan>,
        /// Track a frames.csv written by `simulate` instead of generating frames.
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// One Monte Carlo batch per window length with shared seeds.
    SweepLscan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        runs: Option<usize>,
        /// Comma-separated window lengths.
        #[arg(long = "l-scan", value_delimiter = ',', default_value = "1,5,10,30")]
        l_scan: Vec<usize>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment file; the bundled six-target scenario when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "JTC_TPHD_OUT", default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy)]
struct LScan(Option<usize>);

fn parse_l_scan(s: &str) -> Result<LScan, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(LScan(None));
    }
    match s.parse::<usize>() {
        Ok(0) => Err("window length must be >= 1".into()),
        Ok(n) => Ok(LScan(Some(n))),
        Err(e) => Err(e.to_string()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(c) => commands::simulate(c.config.as_deref(), &c.out, c.seed),
        Command::Track {
            common: c,
            runs,
            l_scan,
            frames,
            workers,
        } => commands::track(&commands::TrackArgs {
            config: c.config.as_deref(),
            out: &c.out,
            seed: c.seed,
            runs,
            l_scan: l_scan.map(|l| l.0),
            frames: frames.as_deref(),
            workers,
        }),
        Command::SweepLscan {
            common: c,
            runs,
            l_scan,
            workers,
        } => commands::sweep(c.config.as_deref(), &c.out, c.seed, runs, &l_scan, workers),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
        Err(_) => ExitCode::from(4),
    }
}
