//! Command-line front end: `coeffs`, `simulate`, `fit`, `rate`, `sweep`,
//! and `figure` subcommands over a JSON experiment configuration. Failures
//! exit nonzero with a machine-readable JSON error on stderr.

use clap::{Args, Parser, Subcommand};
use sdmrate::experiment::{
    build_coefficient_cache, dataset, emit_figure_data, fit_power_algo, rate_power_algo,
    read_rate_csv, run_pipeline, write_figure_csv, write_rate_csv, ExperimentConfig,
};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "sdmrate", version, about = "SDM fiber simulation, CRAN model fitting, and achievable-rate sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON); defaults to the built-in full-scale system.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Apply the reduced desk-scale preset to the loaded configuration.
    #[arg(long)]
    desk_scale: bool,
    /// Output directory for caches, CSV, and JSON artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build and cache the exact nonlinear-interference coefficient table.
    Coeffs(Common),
    /// Simulate and cache all training/test sequences.
    Simulate(Common),
    /// Fit model parameters per power and algorithm (simulating as needed).
    Fit(Common),
    /// Evaluate achievable rates on test data and write rates.csv.
    Rate(Common),
    /// Full pipeline: simulate, fit, rate, emit CSV.
    Sweep(Common),
    /// Turn rates.csv into plot-ready figure.csv with the capacity series.
    Figure(Common),
}

fn load_config(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::table1(),
    };
    if common.desk_scale {
        cfg.apply_desk_scale();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    if let Some(workers) = common.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()?;
    }
    std::fs::create_dir_all(&common.out)?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Coeffs(common) => {
            let cfg = load_config(&common)?;
            let path = build_coefficient_cache(&cfg, &common.out)?;
            println!("{}", path.display());
        }
        Command::Simulate(common) => {
            let cfg = load_config(&common)?;
            for &p in &cfg.powers_dbm {
                let train = dataset(&cfg, &common.out, p, "train")?;
                let test = dataset(&cfg, &common.out, p, "test")?;
                println!(
                    "p = {p} dBm: {} training / {} test sequences cached",
                    train.len(),
                    test.len()
                );
            }
        }
        Command::Fit(common) => {
            let cfg = load_config(&common)?;
            for &p in &cfg.powers_dbm {
                let train = dataset(&cfg, &common.out, p, "train")?;
                for &algo in &cfg.algos {
                    let fit = fit_power_algo(&cfg, &common.out, p, algo, &train)?;
                    let h = fit.reports[0].h_cond_bits;
                    println!("p = {p} dBm, {}: h_q(Y|X) = {h:.4} bits/vector", algo.label());
                }
            }
        }
        Command::Rate(common) => {
            let cfg = load_config(&common)?;
            let mut rows = Vec::new();
            for &p in &cfg.powers_dbm {
                let train = dataset(&cfg, &common.out, p, "train")?;
                let test = dataset(&cfg, &common.out, p, "test")?;
                for &algo in &cfg.algos {
                    let fit = fit_power_algo(&cfg, &common.out, p, algo, &train)?;
                    let row = rate_power_algo(&cfg, p, algo, &fit, &test)?;
                    println!(
                        "p = {p} dBm, {}: {:.4} bits/s/Hz/channel (stderr {:.4})",
                        algo.label(),
                        row.rate_bits,
                        row.mc_stderr
                    );
                    rows.push(row);
                }
            }
            write_rate_csv(&common.out.join("rates.csv"), &rows)?;
            println!("wrote {}", common.out.join("rates.csv").display());
        }
        Command::Sweep(common) => {
            let cfg = load_config(&common)?;
            let out = run_pipeline(&cfg, &common.out)?;
            for row in &out.rates {
                println!(
                    "p = {} dBm, {}: {:.4} bits/s/Hz/channel",
                    row.power_dbm, row.algo, row.rate_bits
                );
            }
            println!("wrote {}", common.out.join("rates.csv").display());
        }
        Command::Figure(common) => {
            let cfg = load_config(&common)?;
            let rows = read_rate_csv(&common.out.join("rates.csv"))?;
            let fig = emit_figure_data(&cfg, &rows)?;
            write_figure_csv(&common.out.join("figure.csv"), &fig)?;
            println!("wrote {}", common.out.join("figure.csv").display());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        let payload = serde_json::json!({
            "error": {
                "message": err.to_string(),
                "chain": err.chain().skip(1).map(|e| e.to_string()).collect::<Vec<_>>(),
            }
        });
        eprintln!("{payload}");
        std::process::exit(1);
    }
}
