//! Experiment runner CLI.
//!
//! Exit codes: 0 on success, 1 on configuration errors (bad flags, bad
//! config file), 2 on runtime failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use metabandit::diagnostics::scaling_summary;
use metabandit::experiment::{
    emit_csv, emit_traces_csv, load_config, read_observations_csv, records_to_observations,
    run_experiment_with_traces, write_observations_csv, write_scaling_csv,
};
use metabandit::Error;

#[derive(Parser)]
#[command(
    name = "metabandit",
    about = "Monte-Carlo simulator for greedy bandit policies on a learned low-rank representation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file and write results CSVs.
    Run {
        /// TOML experiment configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the number of Monte-Carlo replicates.
        #[arg(long)]
        seeds: Option<usize>,
        /// Worker threads for replicates (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Override the output CSV path from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-round regret and diagnostic traces to
        /// `<out>.traces.csv`.
        #[arg(long)]
        dump_traces: bool,
    },
    /// Parse and validate a config file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Aggregate long-format regret observations
    /// (`policy,d,n,seed,regret`, as written next to each run output) into
    /// per-policy scaling statistics.
    Summarize {
        /// Input observation CSVs; repeat the flag to pool several runs.
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        /// Output CSV for the scaling summary.
        #[arg(long)]
        out: PathBuf,
    },
}

fn sidecar(path: &std::path::Path, suffix: &str) -> PathBuf {
    let mut name = path.file_stem().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn cmd_run(
    config_path: PathBuf,
    seeds: Option<usize>,
    workers: Option<usize>,
    out: Option<PathBuf>,
    dump_traces: bool,
) -> Result<(), Error> {
    let mut config = load_config(&config_path)?;
    if let Some(n) = seeds {
        config.n_seeds = n;
    }
    if let Some(path) = out {
        config.output_path = path;
    }
    config.validate()?;

    let run = || run_experiment_with_traces(&config, dump_traces);
    let (records, traces) = match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::config(format!("workers: {e}")))?;
            pool.install(run)?
        }
        None => run()?,
    };

    emit_csv(&records, &config.output_path)?;
    println!(
        "wrote {} records to {}",
        records.len(),
        config.output_path.display()
    );

    let observations =
        records_to_observations(&records, config.environment.d, config.n_test);
    let obs_path = sidecar(&config.output_path, ".scaling.csv");
    write_observations_csv(&observations, &obs_path)?;
    println!(
        "wrote {} scaling observations to {}",
        observations.len(),
        obs_path.display()
    );

    if dump_traces {
        let traces_path = sidecar(&config.output_path, ".traces.csv");
        emit_traces_csv(&traces, &traces_path)?;
        println!("wrote per-round traces to {}", traces_path.display());
    }
    Ok(())
}

fn cmd_validate(config_path: PathBuf) -> Result<(), Error> {
    let config = load_config(&config_path)?;
    let lambdas = config.resolve_lambdas()?;
    println!(
        "ok: d={} r={} T={} K={} n_tr={} n_test={} seeds={} lambda={:?} rsc_proxy={:.4}",
        config.environment.d,
        config.environment.r,
        config.environment.tasks,
        config.environment.arms,
        config.n_tr,
        config.n_test,
        config.n_seeds,
        lambdas,
        metabandit::diagnostics::rsc_proxy(&config.environment)?
    );
    Ok(())
}

fn cmd_summarize(inputs: Vec<PathBuf>, out: PathBuf) -> Result<(), Error> {
    let mut observations = Vec::new();
    for path in &inputs {
        observations.extend(read_observations_csv(path)?);
    }
    let summary = scaling_summary(&observations)
        .map_err(|e| Error::config(format!("summarize: {e}")))?;
    write_scaling_csv(&summary, &out)?;
    for policy in &summary {
        println!(
            "{}: growth exponent {:.3}, d-ratio {:.3}",
            policy.policy, policy.growth_exponent, policy.d_ratio
        );
    }
    println!("wrote scaling summary to {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };

    let result = match cli.command {
        Command::Run {
            config,
            seeds,
            workers,
            out,
            dump_traces,
        } => cmd_run(config, seeds, workers, out, dump_traces),
        Command::Validate { config } => cmd_validate(config),
        Command::Summarize { inputs, out } => cmd_summarize(inputs, out),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
