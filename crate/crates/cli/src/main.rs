use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vpuflow_cli::report::emit;
use vpuflow_cli::{cmd_accuracy, cmd_bench, cmd_gen_fixture, CliError, DeviceSpec, FixtureSpec, Overrides, RunConfig, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "vpuflow", version, about = "Simulated accelerator benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Throughput sweep over batch sizes; one CSV row per run.
    Bench(RunArgs),
    /// Host binary32 against simulated binary16, per subset.
    Accuracy(RunArgs),
    /// Write a deterministic network, dataset and labels.
    GenFixture(FixtureArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// KIND:COUNT[:TDP], repeatable or comma separated. Replaces the
    /// configured device list.
    #[arg(long, value_delimiter = ',')]
    devices: Vec<String>,
    /// For example 1,2,4,8.
    #[arg(long, value_delimiter = ',')]
    batch_sizes: Option<Vec<usize>>,
    #[arg(long)]
    subset_size: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Service time for every synthetic device.
    #[arg(long)]
    service_ms: Option<f32>,
}

#[derive(Args)]
struct FixtureArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long, default_value_t = 100)]
    subset_size: usize,
    /// Integer weights and inputs, exact in binary16.
    #[arg(long)]
    exact: bool,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let devices = self.devices.iter().map(|d| DeviceSpec::parse_flag(d)).collect::<Result<_, _>>()?;
        cfg.apply(Overrides {
            manifest: self.manifest,
            weights: self.weights,
            dataset: self.dataset,
            labels: self.labels,
            devices,
            batch_sizes: self.batch_sizes,
            subset_size: self.subset_size,
            repetitions: self.reps,
            seed: self.seed,
            out: self.out,
            service_ms: self.service_ms,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Bench(args) => {
            let cfg = args.into_config()?;
            let report = cmd_bench(&cfg)?;
            emit(&report.rows, cfg.out.as_deref())
        }
        Command::Accuracy(args) => {
            let cfg = args.into_config()?;
            let report = cmd_accuracy(&cfg)?;
            emit(&report.rows(cfg.seed)?, cfg.out.as_deref())
        }
        Command::GenFixture(a) => {
            let spec = FixtureSpec { samples: a.samples, exact: a.exact, subset_size: a.subset_size, ..FixtureSpec::default() };
            let files = cmd_gen_fixture(&a.out, a.seed, &spec)?;
            println!("{}", files.config.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG as u8) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
