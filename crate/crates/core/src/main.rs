use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use she_core::harness::{compare_runs, heatmaps_for_run, run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "she", version, about = "Audio-visual curiosity experiments on synthetic grid worlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seed (or the config's seed list) and write logs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from checkpoints found in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Summarise finished runs side by side.
    Compare {
        #[arg(long, num_args = 2.., required = true)]
        runs: Vec<PathBuf>,
        /// Where to write the CSV table.
        #[arg(long, default_value = "compare.csv")]
        csv: PathBuf,
    },
    /// Re-render visitation heatmaps for a finished run.
    Heatmap {
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            out,
            resume,
        } => {
            let mut cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            let out = match out {
                Some(o) => o,
                None if !cfg.out.is_empty() => cfg.out_dir(),
                None => bail!("no output directory: pass --out or set `out` in the config"),
            };
            let results = run_experiment(&cfg, &out, resume).with_context(|| format!("run into {}", out.display()))?;
            for r in results {
                let eps = r.episodes_to_full.map_or_else(|| "not reached".to_string(), |e| format!("{e:.2} episodes"));
                println!(
                    "seed {}: {} rollouts, {}/{} states, full coverage {eps}",
                    r.seed, r.rollouts, r.unique_states, r.num_states
                );
            }
        }
        Command::Compare { runs, csv } => {
            let table = compare_runs(&runs)?;
            fs::write(&csv, table.to_csv()?).with_context(|| format!("writing {}", csv.display()))?;
            print!("{}", table.to_text());
            for r in table.rows.iter().filter(|r| r.incomplete_seeds > 0) {
                eprintln!("{}: {} incomplete seed(s) excluded", r.run, r.incomplete_seeds);
            }
        }
        Command::Heatmap { run } => {
            let written = heatmaps_for_run(&run)?;
            if written.is_empty() {
                bail!("no finished seeds under {}", run.display());
            }
            for p in written {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}
