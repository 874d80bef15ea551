//! `bdsim`: simulate branching diffusions, sample the tilted measure, and
//! run the statistical verification suites.
//!
//! Exit codes: 0 all checks pass, 1 at least one check failed, 2 config or
//! I/O error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bdsim_cli::config::{default_config, ExperimentConfig};
use bdsim_cli::{canned, report, runner};
use bdsim_core::simulate::{run_replicates, trajectory_summary, write_trajectories_csv};
use bdsim_core::spine::{export_spine, simulate_tilted};

#[derive(Parser)]
#[command(name = "bdsim", version, about = "branching-diffusion simulation and verification")]
struct Cli {
    /// Print the default configuration as JSON and exit.
    #[arg(long, global = true)]
    print_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Path to a JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Name of a canned config (unknown names list the available ones).
    #[arg(long)]
    canned: Option<String>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for the replicate fan-out (0 = rayon default).
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run forward simulations and export trajectories (CSV + JSON summary).
    Simulate(CommonArgs),
    /// Sample one tilted-measure realization and export the spine data.
    Spine(CommonArgs),
    /// Run the configured verification checks and write reports.
    Verify(CommonArgs),
    /// Print the built-in model table.
    ListModels,
    /// Re-render the summary of a previous run directory.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&args.config, &args.canned) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            ExperimentConfig::from_json(&text).map_err(|e| anyhow!(e))?
        }
        (None, Some(name)) => canned::get(name).ok_or_else(|| {
            anyhow!(
                "unknown canned config '{name}'; available: {}",
                canned::list()
                    .iter()
                    .map(|(n, _)| *n)
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })?,
        (Some(_), Some(_)) => bail!("pass either --config or --canned, not both"),
        (None, None) => bail!("one of --config or --canned is required"),
    };
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(parallel) = args.parallel {
        cfg.run.parallel = parallel;
    }
    cfg.validate().map_err(anyhow::Error::msg)?;
    Ok(cfg)
}

fn cmd_simulate(args: &CommonArgs) -> Result<bool> {
    let cfg = load_config(args)?;
    let model = cfg.model.build().map_err(|e| anyhow!("{e}"))?;
    let sim = cfg.sim_config();
    let init = cfg.init_positions(model.dim);
    let trajectories = run_replicates(&model, &init, &sim, cfg.run.replicates, |_, t| t.clone())
        .map_err(|e| anyhow!("{e}"))?;
    fs::create_dir_all(&args.out)?;
    let mut csv = Vec::new();
    write_trajectories_csv(&mut csv, &trajectories, model.dim)?;
    fs::write(args.out.join("trajectories.csv"), csv)?;
    let summaries: Vec<_> = trajectories
        .iter()
        .map(|t| trajectory_summary(t, &model))
        .collect();
    fs::write(
        args.out.join("summaries.json"),
        serde_json::to_string_pretty(&summaries)?,
    )?;
    let capped = trajectories.iter().filter(|t| t.capped).count();
    println!(
        "wrote {} replicates ({capped} capped) to {}",
        trajectories.len(),
        args.out.display()
    );
    Ok(capped * 2 <= trajectories.len())
}

fn cmd_spine(args: &CommonArgs) -> Result<bool> {
    let cfg = load_config(args)?;
    let model = cfg.model.build().map_err(|e| anyhow!("{e}"))?;
    let sim = cfg.sim_config();
    let x0 = cfg.init_positions(model.dim)[0].clone();
    let out = simulate_tilted(&model, &x0, &sim).map_err(|e| anyhow!("{e}"))?;
    fs::create_dir_all(&args.out)?;
    fs::write(
        args.out.join("spine.json"),
        serde_json::to_string_pretty(&export_spine(&out.realization))?,
    )?;
    let mut csv = Vec::new();
    write_trajectories_csv(&mut csv, std::slice::from_ref(&out.trajectory), model.dim)?;
    fs::write(args.out.join("tilted-trajectory.csv"), csv)?;
    println!(
        "spine with {} fissions, assembled population {} at t = {}; artifacts in {}",
        out.realization.fission_times.len(),
        out.trajectory.last().len(),
        sim.t_end,
        args.out.display()
    );
    Ok(true)
}

fn cmd_verify(args: &CommonArgs) -> Result<bool> {
    let cfg = load_config(args)?;
    let outcome = runner::run(&cfg, &args.out)?;
    for report in &outcome.reports {
        for line in &report.lines {
            println!("{}", bdsim_cli::checks::render_line(&report.check, line));
        }
    }
    println!(
        "{}: artifacts in {}",
        if outcome.all_passed {
            "ALL CHECKS PASSED"
        } else {
            "CHECK FAILURES"
        },
        outcome.out_dir.display()
    );
    Ok(outcome.all_passed)
}

fn dispatch() -> Result<bool> {
    let cli = Cli::parse();
    if cli.print_defaults {
        println!("{}", default_config().to_json_pretty());
        return Ok(true);
    }
    match cli.command {
        Some(Command::Simulate(args)) => cmd_simulate(&args),
        Some(Command::Spine(args)) => cmd_spine(&args),
        Some(Command::Verify(args)) => cmd_verify(&args),
        Some(Command::ListModels) => {
            print!("{}", report::model_table()?);
            Ok(true)
        }
        Some(Command::Report { out }) => {
            print!("{}", report::render_run_dir(&out)?);
            Ok(true)
        }
        None => bail!("a subcommand is required (or --print-defaults)"),
    }
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
