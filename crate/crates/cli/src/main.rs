//! Command-line front end for the attack evaluation pipeline.
//!
//! Exit codes: 0 on success, 1 for configuration errors, 2 when a pipeline
//! stage fails (the run directory then holds failure.json and the partial
//! artifacts).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shillbench::error::{Error, Result};
use shillbench::experiment::config::DefenseKind;
use shillbench::experiment::{
    attack_only, expand_grid, load_config, run_attack_eval, run_robustness_eval,
};
use shillbench::metrics::{render_table, EvalReport};

#[derive(Parser)]
#[command(name = "shillbench", version, about = "Shilling-attack evaluation for recommenders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline: attack, train, evaluate, optionally defend.
    Run(RunArgs),
    /// Generate and export the attacked dataset without training anything.
    AttackOnly(AttackOnlyArgs),
    /// Re-render result tables from existing run directories.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Top-level config file. Per-dataset and per-model overrides are read
    /// from datasets/<name>.yaml and models/<model>.yaml next to it.
    #[arg(long)]
    config: PathBuf,
    /// Override a resolved key, e.g. --set victim.train.epochs=20
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Sweep a key over comma-separated values; repeat the flag to cross
    /// several sweeps, e.g. --grid seed=1,2,3 --grid attack.name=random,average
    #[arg(long = "grid", value_name = "KEY=V1,V2")]
    grid: Vec<String>,
    /// Write run directories here instead of the configured out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AttackOnlyArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// A run directory, or a parent whose children are run directories.
    #[arg(long)]
    dir: PathBuf,
}

fn parse_kv(raw: &str) -> Result<(String, String)> {
    match raw.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(Error::Config(format!(
            "expected KEY=VALUE, got {raw:?}"
        ))),
    }
}

fn parse_kv_list(raw: &[String]) -> Result<Vec<(String, String)>> {
    raw.iter().map(|s| parse_kv(s)).collect()
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let overrides = parse_kv_list(&args.set)?;
    let grid = parse_kv_list(&args.grid)?;
    let cells = expand_grid(&grid)?;
    let mut stage_failures = 0usize;
    for cell in &cells {
        let mut all = overrides.clone();
        all.extend(cell.iter().cloned());
        let mut cfg = load_config(&args.config, &all)?;
        if let Some(out) = &args.out {
            cfg.out_dir = out.clone();
        }
        let artifacts = if cfg.defense.kind == DefenseKind::None {
            run_attack_eval(&cfg)?
        } else {
            run_robustness_eval(&cfg)?
        };
        println!("run: {}", artifacts.run_dir.display());
        print!("{}", render_table(&artifacts.reports));
        if let Some(failure) = &artifacts.failure {
            eprintln!(
                "stage {} failed: {} (see {})",
                failure.stage,
                failure.error,
                artifacts.run_dir.join("failure.json").display()
            );
            stage_failures += 1;
        }
    }
    if stage_failures > 0 {
        eprintln!("{stage_failures} of {} cells failed", cells.len());
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_attack_only(args: &AttackOnlyArgs) -> Result<ExitCode> {
    let overrides = parse_kv_list(&args.set)?;
    let mut cfg = load_config(&args.config, &overrides)?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    let path = attack_only(&cfg)?;
    println!("attacked dataset: {}", path.display());
    Ok(ExitCode::SUCCESS)
}

/// Load reports.json from `dir` itself or from each immediate child that
/// has one, rewriting table.txt beside every file found.
fn cmd_report(args: &ReportArgs) -> Result<ExitCode> {
    let mut report_files = Vec::new();
    let direct = args.dir.join("reports.json");
    if direct.is_file() {
        report_files.push(direct);
    } else {
        let entries = std::fs::read_dir(&args.dir).map_err(|e| Error::io(&args.dir, e))?;
        let mut children: Vec<PathBuf> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.path().join("reports.json"))
            .filter(|p| p.is_file())
            .collect();
        children.sort();
        report_files.extend(children);
    }
    if report_files.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no reports.json under {}",
            args.dir.display()
        )));
    }
    for path in report_files {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let reports: Vec<EvalReport> = serde_json::from_str(&text)
            .map_err(|e| Error::Cache(format!("{}: {e}", path.display())))?;
        let table = render_table(&reports);
        let run_dir = path.parent().expect("reports.json has a parent");
        std::fs::write(run_dir.join("table.txt"), &table)
            .map_err(|e| Error::io(run_dir.join("table.txt"), e))?;
        println!("run: {}", run_dir.display());
        print!("{table}");
    }
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::AttackOnly(args) => cmd_attack_only(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
