use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ris_semcom::harness::{load_config, oracle_for_spec, run_experiment, run_selftest, write_csv};
use ris_semcom::Error;

#[derive(Parser)]
#[command(name = "ris-semcom", version, about = "RIS-assisted semantic communication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write per-interval metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides experiment.n_seeds.
        #[arg(long)]
        seeds: Option<usize>,
        /// Overrides experiment.output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive sum-rate search over the first R rows on a frozen channel.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        rows: usize,
    },
    /// Built-in property checks plus a small deterministic experiment.
    Selftest {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value = "selftest.csv")]
        out: PathBuf,
    },
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::ConfigParse { .. } => Failure::Config(e),
            other => Failure::Runtime(other),
        }
    }
}

fn load(path: &Path) -> Result<ris_semcom::harness::ExperimentSpec, Failure> {
    load_config(path).map_err(|e| match e {
        Error::Io(_) => Failure::Config(e),
        other => Failure::from(other),
    })
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, seeds, out } => {
            let spec = load(&config)?;
            let out = out.unwrap_or_else(|| PathBuf::from(&spec.experiment.output));
            let seeds = seeds.unwrap_or(spec.experiment.n_seeds);
            if seeds == 0 {
                return Err(Failure::Config(Error::Config("--seeds must be at least 1".into())));
            }
            println!("# resolved configuration\n{}", spec.to_toml());
            let rows = run_experiment(&spec, seeds, &out).map_err(Failure::Runtime)?;
            println!("# wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Oracle { config, rows } => {
            let spec = load(&config)?;
            let res = oracle_for_spec(&spec, rows)?;
            let idx: Vec<String> = res.indices.iter().map(u8::to_string).collect();
            println!("indices={} sum_rate={}", idx.join(","), res.value);
        }
        Command::Selftest { seed, out } => {
            let report = run_selftest(seed);
            for (name, ok) in &report.checks {
                println!("{} {name}", if *ok { "PASS" } else { "FAIL" });
            }
            let mut file = std::io::BufWriter::new(std::fs::File::create(&out).map_err(|e| Failure::Runtime(e.into()))?);
            write_csv(&mut file, &report.rows, None).map_err(|e| Failure::Runtime(e.into()))?;
            if !report.passed() {
                return Err(Failure::Runtime(Error::Config("self test failed".into())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
