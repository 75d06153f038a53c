//! `phcs`: generate, censor, fit and simulate Weibull lifetime data under
//! Type-I progressively hybrid censoring.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure.

mod fit;
mod manifest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use phcs_core::censoring::{censor_observed, generate};
use phcs_core::simbench::{run_cell, BenchConfig};
use phcs_core::{CensoringScheme, Error, WeibullParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::manifest::{CellDiscards, RunManifest};

const TABLE1_CELL1: &str = include_str!("../../../configs/table1_cell1.toml");
const PAPER_SCALE: &str = include_str!("../../../configs/paper_scale.toml");

#[derive(Debug, Parser)]
#[command(name = "phcs", version, about = "Weibull estimation under progressively hybrid censoring")]
struct Cli {
    /// Seed for every random draw; one is drawn and recorded when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print errors to stderr as a JSON object.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one censored sample from a Weibull model.
    Generate(GenerateArgs),
    /// Apply a censoring scheme to a file of complete lifetimes.
    Censor(CensorArgs),
    /// Fit a censored sample.
    Fit(fit::FitArgs),
    /// Run a simulation grid from a TOML config.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args, Serialize)]
struct SchemeArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    /// Removal plan, e.g. "(0^{m-1},n-m)" or a comma list.
    #[arg(long)]
    scheme: String,
    #[arg(long)]
    t_max: f64,
}

impl SchemeArgs {
    fn build(&self) -> Result<CensoringScheme, Error> {
        CensoringScheme::from_shorthand(&self.scheme, self.n, self.m, self.t_max)
    }
}

#[derive(Debug, Args, Serialize)]
struct GenerateArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    beta: f64,
    /// Output sample CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CensorArgs {
    /// Complete lifetimes, one per line; `#` starts a comment.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    scheme: String,
    #[arg(long)]
    t_max: f64,
    /// Subtracted from every value before censoring.
    #[arg(long, default_value_t = 0.0)]
    shift: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    /// Config file, or a bundled name: `table1_cell1`, `paper_scale`.
    #[arg(long)]
    config: String,
    /// Replications per cell, overriding the config.
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    kind: String,
    message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Self { code: 2, kind: "Validation".into(), message: message.into() }
    }

    /// Wraps a library error with the context it came from.
    pub fn context(ctx: &str, e: Error) -> Self {
        let dbg = format!("{e:?}");
        let kind = dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string();
        Self { code: if e.is_validation() { 2 } else { 3 }, kind, message: format!("{ctx}: {e}") }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let mut f = Failure::context("", e);
        f.message = f.message.trim_start_matches(": ").to_string();
        f
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self { code: 2, kind: "Serialization".into(), message: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json_errors = cli.json_errors;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if json_errors {
                let body = serde_json::json!({
                    "error": { "kind": f.kind, "message": f.message, "exit_code": f.code }
                });
                eprintln!("{body}");
            } else {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let seed = cli.seed.unwrap_or_else(rand::random);
    let started = Instant::now();
    match cli.command {
        Command::Generate(args) => cmd_generate(&args, seed, started),
        Command::Censor(args) => cmd_censor(&args, seed, started),
        Command::Fit(args) => fit::cmd_fit(&args, seed, started),
        Command::Simulate(args) => cmd_simulate(&args, cli.seed, started),
    }
}

pub fn command_line() -> Vec<String> {
    std::env::args().collect()
}

/// Path of the manifest written next to `out`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::validation(format!("cannot create {}: {e}", path.display())))
}

fn cmd_generate(args: &GenerateArgs, seed: u64, started: Instant) -> CliResult<()> {
    let scheme = args.scheme.build()?;
    let truth = WeibullParams::new(args.alpha, args.beta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = generate(&scheme, truth, &mut rng).map_err(|e| Failure::context("generate", e))?;
    let mut out = create(&args.out)?;
    sample.write_csv(&mut out)?;
    out.flush()?;
    RunManifest::new(serde_json::to_value(args)?, seed, started, vec![args.out.clone()])
        .write(&manifest_path(&args.out))
}

/// Reads one value per line, skipping blanks and `#` comments.
pub fn read_values(path: &Path) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            l.parse::<f64>()
                .map_err(|e| Failure::validation(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn cmd_censor(args: &CensorArgs, seed: u64, started: Instant) -> CliResult<()> {
    let values: Vec<f64> = read_values(&args.data)?.into_iter().map(|x| x - args.shift).collect();
    let scheme = CensoringScheme::from_shorthand(&args.scheme, values.len(), args.m, args.t_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = censor_observed(&values, &scheme, &mut rng).map_err(|e| Failure::context("censor", e))?;
    let mut out = create(&args.out)?;
    sample.write_csv(&mut out)?;
    out.flush()?;
    RunManifest::new(serde_json::to_value(args)?, seed, started, vec![args.out.clone()])
        .write(&manifest_path(&args.out))
}

fn load_config(name: &str) -> CliResult<String> {
    let path = Path::new(name);
    if path.is_file() {
        return std::fs::read_to_string(path)
            .map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())));
    }
    match name {
        "table1_cell1" => Ok(TABLE1_CELL1.to_string()),
        "paper_scale" => Ok(PAPER_SCALE.to_string()),
        _ => Err(Failure::validation(format!(
            "config {name:?} is neither a file nor a bundled config (table1_cell1, paper_scale)"
        ))),
    }
}

fn cmd_simulate(args: &SimulateArgs, seed: Option<u64>, started: Instant) -> CliResult<()> {
    let mut cfg = BenchConfig::from_toml_str(&load_config(&args.config)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let cells = cfg.cells(args.reps)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| Failure::validation(format!("cannot create {}: {e}", args.out_dir.display())))?;
    let mut outputs = Vec::new();
    let mut discards = Vec::new();
    let mut table = String::new();
    for cell in &cells {
        let report = run_cell(cell, args.workers).map_err(|e| Failure::context(&format!("cell {}", cell.name), e))?;
        let path = args.out_dir.join(format!("{}.csv", cell.name));
        let mut out = create(&path)?;
        report.write_csv(&mut out)?;
        out.flush()?;
        outputs.push(path);
        table.push_str(&report.to_text_table());
        table.push('\n');
        discards.push(CellDiscards {
            cell: report.cell.clone(),
            replications: report.replications,
            attempted: report.attempted,
            discarded: report.discarded,
        });
    }
    let table_path = args.out_dir.join("report.txt");
    std::fs::write(&table_path, &table)?;
    outputs.push(table_path);
    print!("{table}");
    let echo = serde_json::json!({ "args": args, "config": cfg });
    let mut manifest = RunManifest::new(echo, cfg.seed, started, outputs);
    manifest.discards = discards;
    manifest.write(&args.out_dir.join("manifest.json"))
}
