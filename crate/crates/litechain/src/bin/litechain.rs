//! Command-line front end: run scenarios, sweep a parameter, generate
//! security and storage reports, and re-validate exported ledgers.
//!
//! Exit codes: 0 on success, 2 on configuration problems (missing or
//! malformed config, bad flags), 1 on runtime failures (including a
//! failed ledger verification).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use litechain::consensus::Ledger;
use litechain::harness::{
    median, reliability_range, run_scenario, security_report, storage_report, Scenario, Scheme,
};

#[derive(Parser)]
#[command(
    name = "litechain",
    about = "Deterministic simulator of clustered, blockchain-verified federated learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write metrics.csv, summary.json, ledger.jsonl.
    Run(RunArgs),
    /// Run a scenario once per value of one config field.
    Sweep(SweepArgs),
    /// Sample consensus-security scores over random networks.
    Security(SecurityArgs),
    /// Compare on-chain storage across schemes at equal seeds.
    Storage(StorageArgs),
    /// Re-validate an exported ledger file.
    VerifyLedger(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `out`, overridable via LITECHAIN_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Dotted config field to vary, e.g. `network.devices` or `seed`.
    #[arg(long)]
    field: String,
    /// Comma-separated TOML literals for the field.
    #[arg(long)]
    values: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SecurityArgs {
    /// Optional scenario supplying network and channel parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long)]
    devices: Option<usize>,
    /// `medium`, `high`, or `lo,hi`.
    #[arg(long, default_value = "high")]
    range: String,
    /// litechain | flc_model | flc_hash
    #[arg(long, default_value = "litechain")]
    scheme: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StorageArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 40)]
    rounds: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Exported ledger (one JSON block per line).
    #[arg(long)]
    file: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

enum CliError {
    Config(String),
    Runtime(String),
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Security(args) => security(args),
        Command::Storage(args) => storage(args),
        Command::VerifyLedger(args) => verify_ledger(args),
    }
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("LITECHAIN_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Scenario::from_toml(&text).map_err(CliError::Config)
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let mut scenario = load_scenario(&args.config)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let dir = out_dir(args.out);
    let output = run_scenario(&scenario).map_err(|e| CliError::Runtime(e.to_string()))?;
    write(&dir.join("metrics.csv"), &output.metrics.to_csv())?;
    write(&dir.join("summary.json"), &output.metrics.summary_json())?;
    write(&dir.join("ledger.jsonl"), &output.ledger.export_jsonl())?;
    println!(
        "{}: {} rounds, accuracy {:.4}, sim time {:.3} s, {} live blocks -> {}",
        scenario.scheme.as_str(),
        output.metrics.rounds_run,
        output.metrics.final_accuracy,
        output.metrics.final_sim_time,
        output.ledger.len(),
        dir.display()
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let base: toml::Value = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let dir = out_dir(args.out);

    let mut summary = String::from("value,rounds,final_accuracy,time_to_target,ledger_live_bytes\n");
    for raw in args.values.split(',') {
        let raw = raw.trim();
        let mut doc = base.clone();
        set_field(&mut doc, &args.field, raw)
            .map_err(|e| CliError::Config(format!("--field {}: {e}", args.field)))?;
        let scenario: Scenario = doc
            .try_into()
            .map_err(|e| CliError::Config(format!("value {raw}: {e}")))?;
        scenario.validate().map_err(CliError::Config)?;
        let output = run_scenario(&scenario).map_err(|e| CliError::Runtime(e.to_string()))?;
        let sub = dir.join(format!("{}-{}", args.field.replace('.', "_"), raw));
        write(&sub.join("metrics.csv"), &output.metrics.to_csv())?;
        write(&sub.join("summary.json"), &output.metrics.summary_json())?;
        summary.push_str(&format!(
            "{},{},{},{},{}\n",
            raw,
            output.metrics.rounds_run,
            output.metrics.final_accuracy,
            output
                .metrics
                .time_to_target
                .map(|t| t.to_string())
                .unwrap_or_default(),
            output
                .metrics
                .rows
                .last()
                .map(|r| r.ledger_live_bytes)
                .unwrap_or(0),
        ));
        println!(
            "{} = {raw}: accuracy {:.4} after {} rounds",
            args.field, output.metrics.final_accuracy, output.metrics.rounds_run
        );
    }
    write(&dir.join("sweep.csv"), &summary)
}

/// Sets a dotted field inside a TOML document from a literal.
fn set_field(doc: &mut toml::Value, field: &str, raw: &str) -> Result<(), String> {
    let literal: toml::Value = toml::from_str(&format!("x = {raw}"))
        .map(|v: toml::Value| v["x"].clone())
        .or_else(|_| toml::from_str(&format!("x = \"{raw}\"")).map(|v: toml::Value| v["x"].clone()))
        .map_err(|e| format!("cannot parse {raw:?}: {e}"))?;
    let mut cursor = doc;
    let parts: Vec<&str> = field.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cursor
            .as_table_mut()
            .ok_or_else(|| format!("{} is not a table", parts[..i].join(".")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), literal);
            return Ok(());
        }
        cursor = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    Err("empty field".into())
}

fn security(args: SecurityArgs) -> Result<(), CliError> {
    let mut scenario = match &args.config {
        Some(path) => load_scenario(path)?,
        None => Scenario::default(),
    };
    if let Some(devices) = args.devices {
        scenario.network.devices = devices;
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    scenario.validate().map_err(CliError::Config)?;
    let range = match reliability_range(&args.range) {
        Some(r) => r,
        None => {
            let parts: Vec<&str> = args.range.split(',').collect();
            if parts.len() != 2 {
                return Err(CliError::Config(format!(
                    "--range: expected medium, high, or lo,hi; got {:?}",
                    args.range
                )));
            }
            let lo: f64 = parts[0]
                .trim()
                .parse()
                .map_err(|e| CliError::Config(format!("--range lo: {e}")))?;
            let hi: f64 = parts[1]
                .trim()
                .parse()
                .map_err(|e| CliError::Config(format!("--range hi: {e}")))?;
            (lo, hi)
        }
    };
    let scheme = parse_scheme(&args.scheme)?;
    let scores = security_report(&scenario, range, args.trials, scheme)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let dir = out_dir(args.out);
    let mut csv = String::from("trial,score\n");
    for (i, s) in scores.iter().enumerate() {
        csv.push_str(&format!("{i},{s}\n"));
    }
    write(&dir.join("security.csv"), &csv)?;
    println!(
        "{} trials, scheme {}, range [{}, {}]: median score {:.6}",
        scores.len(),
        scheme.as_str(),
        range.0,
        range.1,
        median(&scores)
    );
    Ok(())
}

fn parse_scheme(raw: &str) -> Result<Scheme, CliError> {
    match raw {
        "litechain" => Ok(Scheme::Litechain),
        "flc_model" => Ok(Scheme::FlcModel),
        "flc_hash" => Ok(Scheme::FlcHash),
        other => Err(CliError::Config(format!(
            "--scheme: expected litechain, flc_model, or flc_hash; got {other:?}"
        ))),
    }
}

fn storage(args: StorageArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&args.config)?;
    let rows = storage_report(&scenario, args.rounds)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let dir = out_dir(args.out);
    let mut csv = String::from("scheme,rounds,live_bytes,total_bytes,blocks_live\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.scheme.as_str(),
            row.rounds,
            row.live_bytes,
            row.total_bytes,
            row.blocks_live
        ));
        println!(
            "{:>10}: live {:>12} B, cumulative {:>12} B over {} rounds",
            row.scheme.as_str(),
            row.live_bytes,
            row.total_bytes,
            row.rounds
        );
    }
    write(&dir.join("storage.csv"), &csv)
}

fn verify_ledger(args: VerifyArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.file)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.file.display())))?;
    let ledger = Ledger::import_jsonl(&text).map_err(|e| CliError::Runtime(e.to_string()))?;
    ledger
        .verify_chain()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "ok: {} blocks, heights {}..={}, chain verifies",
        ledger.len(),
        ledger.blocks().first().map(|b| b.height).unwrap_or(0),
        ledger.tip().height
    );
    Ok(())
}
