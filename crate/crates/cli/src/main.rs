//! `fim`: JSON in, CSV or JSON out, one subcommand per module.
//!
//! Exit status is 0 on success, 2 when the input is malformed or fails a
//! model precondition, 1 for anything else.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

mod commands;
mod input;

const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Parser)]
#[command(name = "fim", version, about = "Super-replication of game options in fully incomplete markets")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON input file.
    #[arg(long = "in", global = true, value_name = "FILE")]
    input: Option<PathBuf>,

    /// Output file; stdout when omitted. The extension picks the format
    /// where a subcommand offers more than one.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Master seed. FIM_SEED overrides it when set.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Print the JSON schema of the subcommand's input and exit.
    #[arg(long, global = true)]
    schema: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Game concave envelope on a set of prices.
    Envelope,
    /// Trivial hedge and the cash-leg assumption at the spot.
    Hedge,
    /// Simulated paths as CSV, or the compact binary layout for `.bin`.
    Simulate,
    /// Monte Carlo audit of the trivial hedge, optionally with the lattice bound.
    Verify,
    /// The positive-rate counterexample (input optional).
    Counterexample,
    /// Uncertain-volatility stopping value; `.csv` output dumps the surface.
    Stopvalue,
    /// Robust price of a claim on a finite tree with static instruments.
    Semistatic,
    /// Quantile coupling: law match or weak-distance diagnostics.
    Lawdensity,
    /// Steering the Heston volatility towards a target.
    Steer,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Envelope => "envelope",
            Command::Hedge => "hedge",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::Counterexample => "counterexample",
            Command::Stopvalue => "stopvalue",
            Command::Semistatic => "semistatic",
            Command::Lawdensity => "lawdensity",
            Command::Steer => "steer",
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Internal(String),
}

impl From<fim_core::Error> for Failure {
    fn from(e: fim_core::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

pub type CliResult<T> = Result<T, Failure>;

/// Where results go: a file or stdout.
pub struct Sink {
    path: Option<PathBuf>,
}

impl Sink {
    pub fn extension(&self) -> Option<&str> {
        self.path.as_deref().and_then(Path::extension).and_then(|e| e.to_str())
    }

    pub fn writer(&self) -> CliResult<Box<dyn Write>> {
        Ok(match &self.path {
            Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
            None => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
        })
    }

    pub fn json<T: Serialize>(&self, value: &T) -> CliResult<()> {
        let mut w = self.writer()?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Internal(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

pub struct Context {
    pub input: Option<PathBuf>,
    pub sink: Sink,
    pub seed: u64,
}

impl Context {
    /// Parses the input file, reporting the failing field and position.
    pub fn read<T: DeserializeOwned>(&self) -> CliResult<T> {
        let path = self.input.as_ref().ok_or_else(|| Failure::Validation("--in FILE is required".into()))?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Validation(format!("cannot read {}: {e}", path.display())))?;
        parse(&text).map_err(|m| Failure::Validation(format!("{}: {m}", path.display())))
    }

    /// Like [`Context::read`], with defaults when no input is given.
    pub fn read_or_default<T: DeserializeOwned + Default>(&self) -> CliResult<T> {
        if self.input.is_some() {
            self.read()
        } else {
            Ok(T::default())
        }
    }
}

fn parse<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let field = if path == "." { String::new() } else { format!(" at field `{path}`") };
        format!("line {} column {}{field}: {inner}", inner.line(), inner.column())
    })
}

fn seed(flag: u64) -> CliResult<u64> {
    match std::env::var("FIM_SEED") {
        Ok(s) => s.trim().parse().map_err(|_| Failure::Validation(format!("FIM_SEED={s:?} is not an unsigned integer"))),
        Err(_) => Ok(flag),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if cli.schema {
        return Sink { path: None }.json(&input::schema(cli.command.name()));
    }
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Failure::Internal(e.to_string()))?;
    }
    let ctx = Context { input: cli.input, sink: Sink { path: cli.out }, seed: seed(cli.seed)? };
    match cli.command {
        Command::Envelope => commands::envelope(&ctx),
        Command::Hedge => commands::hedge(&ctx),
        Command::Simulate => commands::simulate(&ctx),
        Command::Verify => commands::verify(&ctx),
        Command::Counterexample => commands::counterexample(&ctx),
        Command::Stopvalue => commands::stopvalue(&ctx),
        Command::Semistatic => commands::semistatic(&ctx),
        Command::Lawdensity => commands::lawdensity(&ctx),
        Command::Steer => commands::steer(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(1)
        }
    }
}
