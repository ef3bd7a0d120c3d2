//! Command-line driver: run experiments, validate configs, and apply e-BH to
//! e-values read from standard input.

use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ebcc::harness::{emit_csv, parse_config, run_experiment, ExperimentConfig};
use ebcc::{ebh, EValueVector, Error};

#[derive(Parser)]
#[command(name = "ebcc", version, about = "e-BH with conditional calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write one CSV row per (method, replication).
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to all cores.
        #[arg(long, env = "EBCC_THREADS")]
        threads: Option<usize>,
        /// Overrides the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Read one e-value per line from stdin and print rejected 1-based indices.
    Ebh {
        #[arg(long)]
        alpha: f64,
    },
    /// Parse and check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, Error> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn read_evalues(input: impl BufRead) -> Result<EValueVector, Error> {
    let mut v = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let x: f64 = t
            .parse()
            .map_err(|_| Error::Domain(format!("line {}: cannot parse {t:?} as a number", i + 1)))?;
        v.push(x);
    }
    if v.is_empty() {
        return Err(Error::Domain("no e-values on standard input".into()));
    }
    EValueVector::new(v)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, out, threads, seed } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t.max(1))
                    .build_global()
                    .map_err(|e| Error::Unsupported(format!("thread pool: {e}")))?;
            }
            let rows = run_experiment(&cfg)?;
            emit_csv(&rows, &out)?;
        }
        Command::Ebh { alpha } => {
            let e = read_evalues(io::stdin().lock())?;
            let r = ebh(&e, alpha)?;
            let mut w = io::BufWriter::new(io::stdout().lock());
            for j in r.indices() {
                writeln!(w, "{}", j + 1)?;
            }
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!(
                "ok: {} with m = {}, alpha = {}, {} replications",
                cfg.kind.name(),
                cfg.m,
                cfg.alpha,
                cfg.replications
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
