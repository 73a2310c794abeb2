use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use fdmimo::harness::{
    emit_plot_data, parse_columns, read_header, read_rows, run_experiment, summarize, validate_model, write_aggregates,
    write_experiment, ExperimentSpec, Figure, ResultRow, ValidationTolerances,
};
use fdmimo::{Error, Result};

#[derive(Parser)]
#[command(name = "fdmimo", version, about = "Full-duplex MIMO-OFDM transceiver design experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and write results.csv and timings.csv.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the master seed of the spec.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the spec's `output`.
        #[arg(long, env = "FDMIMO_OUT_DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Mean, standard deviation and count of a results table per group.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        /// Comma-separated group-by columns; metric and iteration are always added.
        #[arg(long, default_value = "sweep_param,sweep_value,algorithm")]
        by: String,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the table behind one figure.
    Plotdata {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        figure: String,
        /// Defaults to `<figure>.csv` next to the input.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare simulated interference-plus-noise covariances with the model.
    ValidateModel {
        #[arg(long, default_value_t = 100_000)]
        blocks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Take the system and channel parameters from an experiment spec.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

fn run(spec_path: &Path, seed: Option<u64>, out: Option<PathBuf>, threads: Option<usize>) -> Result<()> {
    let mut spec = ExperimentSpec::load(spec_path)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let dir = out.unwrap_or_else(|| spec.output.clone());
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::InvalidSpec("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Numerical(format!("cannot start thread pool: {e}")))?;
    let results = pool.install(|| run_experiment(&spec))?;
    let path = write_experiment(&spec, &results, &dir)?;
    info!("{} rows", results.rows.len());
    println!("{}", path.display());
    Ok(())
}

fn summarize_cmd(input: &Path, by: &str, out: Option<PathBuf>) -> Result<()> {
    let rows: Vec<ResultRow> = read_rows(input)?;
    let by = parse_columns(by)?;
    let aggs = summarize(&rows, &by)?;
    match out {
        Some(p) => write_aggregates(std::fs::File::create(p)?, &by, &aggs),
        None => write_aggregates(io::stdout().lock(), &by, &aggs),
    }
}

fn plotdata(input: &Path, figure: &str, out: Option<PathBuf>) -> Result<()> {
    let figure = Figure::parse(figure)?;
    let rows: Vec<ResultRow> = read_rows(input)?;
    let base_kappa = read_header(input)?
        .into_iter()
        .find(|(k, _)| k == "kappa_db")
        .map(|(_, v)| v)
        .unwrap_or_default();
    let data = emit_plot_data(&rows, figure, &base_kappa)?;
    let path = out.unwrap_or_else(|| input.with_file_name(format!("{}.csv", figure.name())));
    data.write(std::fs::File::create(&path)?)?;
    println!("{}", path.display());
    Ok(())
}

fn validate(blocks: usize, seed: u64, spec: Option<PathBuf>) -> Result<()> {
    if blocks == 0 {
        return Err(Error::InvalidSpec("--blocks must be at least 1".into()));
    }
    let (config, stats) = match spec {
        Some(p) => {
            let s = ExperimentSpec::load(&p)?;
            (s.base_config(), s.stats())
        }
        None => {
            let s = ExperimentSpec::from_json(r#"{"algorithms": ["altqcp"]}"#)?;
            (s.base_config(), s.stats())
        }
    };
    let report = validate_model(&config, &stats, blocks, seed, ValidationTolerances::default())?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "{report}")?;
    if report.passed() {
        Ok(())
    } else {
        Err(Error::Numerical("simulated statistics deviate from the covariance model".into()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { spec, seed, out, threads } => run(&spec, seed, out, threads),
        Command::Summarize { input, by, out } => summarize_cmd(&input, &by, out),
        Command::Plotdata { input, figure, out } => plotdata(&input, &figure, out),
        Command::ValidateModel { blocks, seed, spec } => validate(blocks, seed, spec),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
