use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wic_lab::config::ExperimentConfig;
use wic_lab::report::write_report;
use wic_lab::runner::{multi_seed, run_experiment};

/// Grid-world skill-discovery lab.
#[derive(Parser)]
#[command(name = "wic-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one experiment from a config file.
    Run {
        /// Path to a flat `key = value` config file.
        config: PathBuf,
        /// Overrides as `key=value`.
        #[arg(short = 'o', long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Emit endpoint and heatmap reports from a finished run directory.
    Report {
        /// A run directory created by `run` (contains config.txt and
        /// checkpoints).
        run_dir: PathBuf,
    },
    /// Train the same config over several seeds and aggregate the metrics.
    Sweep {
        config: PathBuf,
        /// Comma-separated seed list.
        #[arg(long, default_value = "0,1,2,3,4")]
        seeds: String,
        #[arg(short = 'o', long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn output_root() -> PathBuf {
    std::env::var_os("WIC_LAB_RUNS")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("./runs"))
}

fn load_config(path: &PathBuf, overrides: &[String]) -> wic_lab::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    for ov in overrides {
        let (k, v) = ov.split_once('=').ok_or_else(|| wic_lab::Error::Parse(
            format!("override '{ov}' is not key=value"),
        ))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> wic_lab::Result<()> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let dir = output_root().join(cfg.run_dir_name());
            let trained = run_experiment(&cfg, &dir)?;
            write_report(&cfg.grid_spec(), &trained.policy, &trained.objective, &cfg, &dir)?;
            if let Some(last) = trained.record.rows.last() {
                println!(
                    "run finished: {} updates, episodic coverage {:.2}, lifetime coverage {}",
                    last.update + 1,
                    last.mean_episodic_coverage,
                    last.lifetime_coverage
                );
            }
            println!("outputs in {}", dir.display());
        }
        Command::Report { run_dir } => {
            let cfg = ExperimentConfig::from_file(&run_dir.join("config.txt"))?;
            let spec = cfg.grid_spec();
            let policy =
                wic_lab::reinforce::SkillPolicy::load_file(&spec, &run_dir.join("policy.bin"))?;
            let objective = match cfg.method {
                wic_lab::config::Method::Wic => wic_lab::runner::ObjectiveModel::Wic(
                    wic_lab::wic::PotentialBank::load_file(&spec, &run_dir.join("objective.bin"))?,
                ),
                wic_lab::config::Method::Vic => wic_lab::runner::ObjectiveModel::Vic(
                    wic_lab::vic::Discriminator::load_file(&spec, &run_dir.join("objective.bin"))?,
                ),
            };
            write_report(&spec, &policy, &objective, &cfg, &run_dir)?;
            println!("report written to {}", run_dir.display());
        }
        Command::Sweep {
            config,
            seeds,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let seeds: Vec<u64> = seeds
                .split(',')
                .map(|s| {
                    s.trim().parse().map_err(|_| wic_lab::Error::Parse(
                        format!("bad seed '{s}'"),
                    ))
                })
                .collect::<wic_lab::Result<_>>()?;
            let root = output_root();
            let (runs, _) = multi_seed(&cfg, &seeds, &root)?;
            for (seed, trained) in seeds.iter().zip(&runs) {
                let mut c = cfg.clone();
                c.seed = *seed;
                let dir = root.join(c.run_dir_name());
                write_report(&c.grid_spec(), &trained.policy, &trained.objective, &c, &dir)?;
            }
            println!("sweep finished: {} seeds, outputs in {}", seeds.len(), root.display());
        }
    }
    Ok(())
}
