use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levyheat::experiment::{self, ExperimentConfig, KernelQuery};
use levyheat::{Error, KernelSpec};

#[derive(Parser)]
#[command(name = "levyheat", version, about = "Lévy-driven stochastic heat equation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config, writing manifest.json, moments.csv and verdicts.csv.
    Run {
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print kernel functionals for an inline JSON query.
    Kernel { query: String },
    /// Evaluate a config's claims and print the verdict CSV to stdout.
    /// `verify convolution [kernel-json]` prints the convolution ordering table instead.
    Verify {
        config: String,
        kernel: Option<String>,
    },
    /// Long-format (t, x, k, estimate, bound) CSV from a run directory.
    Report { run_dir: PathBuf },
}

const CLAIM_FAILED: u8 = 2;
const RUNTIME: u8 = 1;
const CONFIG: u8 = 64;
const IO: u8 = 74;

fn code(e: &Error) -> u8 {
    match e {
        Error::ConfigInvalid(_) => CONFIG,
        Error::Io(_) => IO,
        _ => RUNTIME,
    }
}

fn verdict(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(CLAIM_FAILED)
    }
}

fn execute(cli: Cli) -> Result<ExitCode, Error> {
    let stdout = io::stdout().lock();
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let outcome = experiment::run(&cfg, &dir)?;
            Ok(verdict(outcome.all_pass()))
        }
        Command::Kernel { query } => {
            let q: KernelQuery = serde_json::from_str(&query).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
            let info = experiment::kernel_info(&q);
            let mut stdout = stdout;
            writeln!(stdout, "{info}")?;
            Ok(if info.get("error").is_some() { ExitCode::from(RUNTIME) } else { ExitCode::SUCCESS })
        }
        Command::Verify { config, kernel } if config == "convolution" => {
            let specs: Vec<KernelSpec> = match kernel {
                Some(k) => vec![serde_json::from_str(&k).map_err(|e| Error::ConfigInvalid(e.to_string()))?],
                None => vec![
                    serde_json::from_value(serde_json::json!({"kind": "brownian", "kappa": 1.0})).expect("valid spec"),
                    serde_json::from_value(serde_json::json!({"kind": "stable", "alpha": 1.5, "kappa": 1.0})).expect("valid spec"),
                ],
            };
            let mut buf = Vec::new();
            let mut pass = true;
            for (i, spec) in specs.iter().enumerate() {
                let mut part = Vec::new();
                pass &= experiment::convolution_csv(spec, &mut part)?;
                // keep a single header row
                let text = String::from_utf8(part).expect("csv is utf-8");
                let body = if i == 0 { text.as_str() } else { text.split_once('\n').map_or("", |(_, b)| b) };
                buf.extend_from_slice(body.as_bytes());
            }
            let mut stdout = stdout;
            stdout.write_all(&buf)?;
            Ok(verdict(pass))
        }
        Command::Verify { config, kernel } => {
            if kernel.is_some() {
                return Err(Error::ConfigInvalid("verify takes a single config path".into()));
            }
            let cfg = ExperimentConfig::load(&PathBuf::from(config))?;
            let outcome = experiment::evaluate(&cfg)?;
            experiment::write_verdicts_csv(&outcome.verdicts, stdout)?;
            Ok(verdict(outcome.all_pass()))
        }
        Command::Report { run_dir } => {
            experiment::report(&run_dir, stdout)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("levyheat: {msg}");
            ExitCode::from(code(&e))
        }
    }
}
