use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bergman_lab::scenarios::{
    catalog, emit_tables, find_scenario, parse_config, run_suite, OutputFormat, Precision,
    RunReport,
};
use bergman_lab::verify::{run_acceptance, CriterionResult};

const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(
    name = "bergman-lab",
    version,
    about = "Power sums of the Bergman density matrix on model Kähler geometries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios from a config file and/or the built-in catalog.
    Run {
        /// Scenario file in the key-value grammar.
        config: Option<PathBuf>,
        /// Catalog scenario to include (repeatable).
        #[arg(long = "scenario", short = 's')]
        scenarios: Vec<String>,
        /// Override the precision of every scenario.
        #[arg(long, value_enum)]
        precision: Option<Precision>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        format: OutputFormat,
    },
    /// List built-in scenarios.
    Catalog {
        /// Print every scenario in the config grammar.
        #[arg(long)]
        config: bool,
    },
    /// Run the acceptance suite and print one line per criterion.
    Verify {
        /// Also write the suite's run report here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        format: OutputFormat,
    },
}

fn write_report(
    report: &RunReport,
    format: OutputFormat,
    out_dir: &PathBuf,
) -> Result<(), ExitCode> {
    emit_tables(report, format, out_dir)
        .map(|_| ())
        .map_err(|e| {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        })
}

fn run(
    config: Option<PathBuf>,
    names: Vec<String>,
    precision: Option<Precision>,
    out_dir: PathBuf,
    format: OutputFormat,
) -> Result<ExitCode, ExitCode> {
    let mut scenarios = Vec::new();
    if let Some(path) = &config {
        let text = std::fs::read_to_string(path).map_err(|e| {
            eprintln!("error: cannot read {}: {e}", path.display());
            ExitCode::from(EXIT_CONFIG)
        })?;
        scenarios = parse_config(&text).map_err(|errors| {
            for e in errors {
                eprintln!("{}:{e}", path.display());
            }
            ExitCode::from(EXIT_CONFIG)
        })?;
    }
    for name in names {
        scenarios.push(find_scenario(&name).map_err(|e| {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        })?);
    }
    let report = run_suite(&scenarios, precision);
    for (name, secs) in &report.timings {
        eprintln!("{name}: {secs:.2}s");
    }
    for sc in &report.scenarios {
        for f in &sc.invariant_failures {
            eprintln!("{}: invariant failure: {f}", sc.name);
        }
        for f in &sc.precision_failures {
            eprintln!("{}: precision failure: {f}", sc.name);
        }
    }
    write_report(&report, format, &out_dir)?;
    Ok(ExitCode::from(report.exit_code() as u8))
}

fn print_results(results: &[CriterionResult]) {
    for r in results {
        println!("{r}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            scenarios,
            precision,
            out_dir,
            format,
        } => run(config, scenarios, precision, out_dir, format).unwrap_or_else(|code| code),
        Command::Catalog { config } => {
            for s in catalog() {
                if config {
                    println!("{}", s.to_config());
                } else {
                    println!(
                        "{:<16} n={} r={} b={:?} m={}..{} precision={}",
                        s.name,
                        s.dimension(),
                        s.rank(),
                        s.b_list,
                        s.m_schedule.first().copied().unwrap_or(0),
                        s.m_schedule.last().copied().unwrap_or(0),
                        s.precision.name()
                    );
                }
            }
            ExitCode::SUCCESS
        }
        Command::Verify { out_dir, format } => {
            let outcome = run_acceptance();
            print_results(&outcome.results);
            if let Some(dir) = out_dir {
                if let Err(code) = write_report(&outcome.report, format, &dir) {
                    return code;
                }
            }
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
