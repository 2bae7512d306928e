//! Batch CLI: run configured convergence studies and compare produced tables
//! against reference tables.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 solver failure,
//! 3 comparison failure. `MAC_ELASTICITY_THREADS` caps how many studies run
//! concurrently (default: available parallelism).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mac_elasticity::config::{Config, StudySpec};
use mac_elasticity::mms::{convergence_study, ConvergenceReport};
use mac_elasticity::table::{compare, Table};
use mac_elasticity::{Error, Result};

#[derive(Parser)]
#[command(name = "mac-elasticity", about = "Staggered-grid elasticity convergence studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every study in a config file and write CSV/Markdown tables.
    Run(RunArgs),
    /// Compare two tables in the shared CSV schema cell by cell.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file declaring the studies.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Prints per-level errors, rates and residuals.
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// CSV file with the produced table.
    produced: PathBuf,
    /// CSV file with the reference table, or an embedded tag like "6.3".
    reference: String,
    /// Relative tolerance for error cells.
    #[arg(long, default_value_t = 0.02)]
    error_tol: f64,
    /// Absolute tolerance for rate cells.
    #[arg(long, default_value_t = 0.05)]
    rate_tol: f64,
}

const EXIT_USAGE: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_COMPARE: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(&args),
        Command::Compare(args) => run_compare(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn thread_budget() -> usize {
    if let Ok(text) = std::env::var("MAC_ELASTICITY_THREADS") {
        if let Ok(n) = text.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn run(args: &RunArgs) -> Result<ExitCode> {
    let config = Config::load(&args.config)?;
    let output_dir = args
        .output_dir
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&output_dir)?;

    let reports = run_studies(&config.studies, thread_budget())?;

    let mut solver_failed = false;
    let mut compare_failed = false;
    for (spec, report) in config.studies.iter().zip(&reports) {
        let stem = spec.output_name();
        let csv_path = output_dir.join(format!("{stem}.csv"));
        std::fs::write(&csv_path, report.to_csv())?;
        std::fs::write(output_dir.join(format!("{stem}.md")), report.to_markdown())?;
        println!(
            "{stem}: {} levels, wrote {}",
            report.levels.len(),
            csv_path.display()
        );
        if args.verbose {
            print!("{}", report.to_markdown());
        }
        for (lvl, rec) in report.levels.iter().enumerate() {
            if let Some(reason) = &rec.failure {
                eprintln!("{stem}: level {lvl} ({:?} cells) failed: {reason}", rec.cells);
                solver_failed = true;
            } else if args.verbose {
                println!(
                    "{stem}: level {lvl} residual {:.3e}{}",
                    rec.residual,
                    rec.iterations
                        .map(|n| format!(", {n} iterations"))
                        .unwrap_or_default()
                );
            }
        }
        if !spec.compare.is_empty() {
            let produced = Table::parse(&report.to_csv())?;
            for tag in &spec.compare {
                let reference = Table::reference(tag).expect("validated by Config::load");
                let outcome = compare(&produced, &reference, spec.error_tol, spec.rate_tol)?;
                println!("{stem} vs table {tag}: {outcome}");
                compare_failed |= !outcome.passed();
            }
        }
    }
    Ok(ExitCode::from(if solver_failed {
        EXIT_SOLVER
    } else if compare_failed {
        EXIT_COMPARE
    } else {
        0
    }))
}

/// Runs studies on up to `threads` worker threads, preserving input order.
fn run_studies(specs: &[StudySpec], threads: usize) -> Result<Vec<ConvergenceReport>> {
    let configs = specs
        .iter()
        .map(|s| s.study_config())
        .collect::<Result<Vec<_>>>()?;
    if threads <= 1 || configs.len() <= 1 {
        return configs.iter().map(convergence_study).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<ConvergenceReport>>> = Vec::new();
    slots.resize_with(configs.len(), || None);
    let slots = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..threads.min(configs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(config) = configs.get(i) else { break };
                let report = convergence_study(config);
                slots.lock().unwrap()[i] = Some(report);
            });
        }
    });
    slots.into_inner()
        .unwrap()
        .drain(..)
        .map(|slot| slot.expect("every study ran"))
        .collect()
}

fn run_compare(args: &CompareArgs) -> Result<ExitCode> {
    let produced = Table::parse(&std::fs::read_to_string(&args.produced)?)?;
    let reference = load_reference(&args.reference)?;
    let report = compare(&produced, &reference, args.error_tol, args.rate_tol)?;
    println!("{report}");
    Ok(ExitCode::from(if report.passed() { 0 } else { EXIT_COMPARE }))
}

fn load_reference(source: &str) -> Result<Table> {
    let path = Path::new(source);
    if path.exists() {
        return Table::parse(&std::fs::read_to_string(path)?);
    }
    Table::reference(source).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "{source:?} is neither a file nor an embedded reference tag"
        ))
    })
}
