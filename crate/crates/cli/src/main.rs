//! `stratlab` command-line entry point.
//!
//! Exit codes: 0 on success, 1 on a domain error (one diagnostic line on
//! stderr), 2 on a usage error (clap prints help to stderr).

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use stratlab::backtest::{run_report, BacktestRequest, Frequency, Grouping};
use stratlab::data::DataSourceConfig;
use stratlab::pipeline::{
    inference_window_start, run_dag_with, validate_dag, PipelineDag, RunOptions, TaskRegistry, TaskStatus,
};
use stratlab::registry::{keys, list_strategies, load_strategy, save_backtest_report, FsStore, ObjectStore};
use stratlab::strategy::StrategyInterface;
use stratlab::timeseries::TradingDate;
use stratlab::{RunId, StrategyId};

#[derive(Debug, Parser)]
#[command(name = "stratlab", version, about = "Build, run and evaluate investment strategies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate or execute pipeline DAG files.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Inspect and execute saved strategies.
    #[command(subcommand)]
    Strategy(StrategyCommand),
    /// Backtest a saved strategy and store the report.
    Backtest(BacktestArgs),
}

#[derive(Debug, Subcommand)]
enum PipelineCommand {
    /// Check a DAG file for structural errors and cycles.
    Validate {
        #[arg(long)]
        dag: PathBuf,
    },
    /// Execute every task of a DAG file.
    Run {
        #[arg(long)]
        dag: PathBuf,
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        run_id: Option<RunId>,
        #[arg(long, default_value_t = 4)]
        max_parallel: usize,
    },
}

#[derive(Debug, Subcommand)]
enum StrategyCommand {
    /// Print the id of every saved strategy, one per line.
    List {
        #[command(flatten)]
        store: StoreArg,
    },
    /// Execute a saved strategy on one date and print the outcome.
    Execute {
        #[arg(long)]
        id: StrategyId,
        #[arg(long)]
        date: TradingDate,
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Debug, Args)]
struct StoreArg {
    /// Object store root directory.
    #[arg(long = "store", env = "SHAI_STORE")]
    path: PathBuf,
}

impl StoreArg {
    fn open(&self) -> anyhow::Result<FsStore> {
        Ok(FsStore::open(&self.path)?)
    }
}

#[derive(Debug, Args)]
struct BacktestArgs {
    #[arg(long)]
    id: StrategyId,
    #[arg(long)]
    start: TradingDate,
    #[arg(long)]
    end: TradingDate,
    #[arg(long, value_enum, conflicts_with = "interval_days")]
    frequency: Option<CalendarFrequency>,
    #[arg(long)]
    interval_days: Option<i64>,
    #[arg(long, value_enum, default_value_t = GroupBy::Asset)]
    group_by: GroupBy,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(flatten)]
    store: StoreArg,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CalendarFrequency {
    Monthly,
    Quarterly,
    Yearly,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GroupBy {
    Asset,
    Sector,
    Category,
    Country,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Pipeline(PipelineCommand::Validate { dag }) => validate(&dag),
        Command::Pipeline(PipelineCommand::Run { dag, store, data, run_id, max_parallel }) => {
            run_pipeline(&dag, &store.open()?, &data, RunOptions { run_id, max_parallel })
        }
        Command::Strategy(StrategyCommand::List { store }) => {
            for id in list_strategies(&store.open()?)? {
                println!("{id}");
            }
            Ok(())
        }
        Command::Strategy(StrategyCommand::Execute { id, date, store, data }) => {
            execute(&store.open()?, &id, date, &data)
        }
        Command::Backtest(args) => backtest(&args),
    }
}

fn read_dag(path: &PathBuf) -> anyhow::Result<PipelineDag> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(PipelineDag::from_json(&bytes)?)
}

fn validate(path: &PathBuf) -> anyhow::Result<()> {
    let dag = read_dag(path)?;
    validate_dag(&dag)?;
    TaskRegistry::builtin().check(&dag)?;
    println!("ok: {} ({} tasks)", dag.dag_id, dag.tasks.len());
    Ok(())
}

fn run_pipeline(path: &PathBuf, store: &FsStore, data: &PathBuf, options: RunOptions) -> anyhow::Result<()> {
    let dag = read_dag(path)?;
    let report = run_dag_with(&dag, store, &DataSourceConfig::csv_dir(data), &TaskRegistry::builtin(), &options)?;
    println!("run {}", report.run_id);
    for t in &report.tasks {
        let status = match t.status {
            TaskStatus::Succeeded => "succeeded",
            TaskStatus::Failed => "failed",
            TaskStatus::Skipped => "skipped",
        };
        println!("{:<24} {status}", t.task_id);
    }
    if let Ok(raw) = store.get(&keys::trained_strategy_id(&report.run_id)) {
        println!("strategy {}", String::from_utf8_lossy(&raw));
    }
    let failed: Vec<&str> =
        report.tasks.iter().filter(|t| t.status == TaskStatus::Failed).map(|t| t.task_id.as_str()).collect();
    if let Some(first) = failed.first() {
        let reason = last_log_line(store, &report.run_id, first).unwrap_or_default();
        bail!("run {} failed at task `{first}`: {reason}", report.run_id);
    }
    Ok(())
}

fn last_log_line(store: &FsStore, run_id: &RunId, task_id: &str) -> Option<String> {
    let raw = store.get(&keys::task_log(run_id, task_id).ok()?).ok()?;
    String::from_utf8_lossy(&raw).lines().rev().find(|l| !l.trim().is_empty()).map(str::to_owned)
}

fn execute(store: &FsStore, id: &StrategyId, date: TradingDate, data: &PathBuf) -> anyhow::Result<()> {
    let mut s = load_strategy(store, id)?;
    s.set_configs(DataSourceConfig::csv_dir(data));
    s.reset(inference_window_start(date, s.lookback_days()), date)?;
    let outcome = s.execute(date)?;
    println!("{}", String::from_utf8_lossy(&outcome.to_json()));
    Ok(())
}

fn backtest(args: &BacktestArgs) -> anyhow::Result<()> {
    let store = args.store.open()?;
    let frequency = match (args.frequency, args.interval_days) {
        (_, Some(n)) => Frequency::custom(n)?,
        (Some(CalendarFrequency::Quarterly), None) => Frequency::Quarterly,
        (Some(CalendarFrequency::Yearly), None) => Frequency::Yearly,
        (Some(CalendarFrequency::Monthly) | None, None) => Frequency::Monthly,
    };
    let grouping = match args.group_by {
        GroupBy::Asset => Grouping::Asset,
        GroupBy::Sector => Grouping::Sector,
        GroupBy::Category => Grouping::Category,
        GroupBy::Country => Grouping::Country,
    };
    let request = BacktestRequest { start: args.start, end: args.end, frequency, grouping };

    let mut strategy = load_strategy(&store, &args.id)?;
    let report = run_report(&mut strategy, &DataSourceConfig::csv_dir(&args.data), &request)?;
    let key = save_backtest_report(&store, &args.id, &RunId::random(), &report.to_json())?;
    match args.format {
        Format::Json => {
            let stored = store.get(&key)?;
            use std::io::Write;
            std::io::stdout().lock().write_all(&stored)?;
        }
        Format::Table => print!("{}", report.to_table()),
    }
    Ok(())
}
