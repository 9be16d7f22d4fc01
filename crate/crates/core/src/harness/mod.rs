//! Experiment orchestration: configuration, the training loop, coverage
//! metrics, CSV logs, heatmaps and run comparison.

mod compare;
mod config;
mod coverage;
mod heatmap;
mod trainer;

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

pub use compare::{compare_runs, CompareRow, CompareTable, SeedResult};
pub use config::ExperimentConfig;
pub use coverage::{cell_counts, state_count_histogram, CoverageTracker};
pub use heatmap::{count_on, emit_heatmap, heatmap_pgm, heatmap_ppm, heatmap_svg, CELL_PX};
pub use trainer::{RolloutMetrics, RolloutTiming, TrainEnv, Trainer};

use crate::error::{Error, Result};
use crate::numeric::Checkpoint;

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const FINAL_FILE: &str = "final.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

fn csv_writer(path: &Path, header: &[&str], append: bool) -> Result<csv::Writer<File>> {
    let exists = append && path.exists();
    let file = if exists {
        OpenOptions::new().append(true).open(path)?
    } else {
        File::create(path)?
    };
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if !exists {
        w.write_record(header)?;
        w.flush()?;
    }
    Ok(w)
}

/// Keeps the header and the rows whose first field is at most `rollout`.
fn truncate_log(path: &Path, rollout: usize) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut kept = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        if i == 0 || rec.get(0).and_then(|r| r.parse::<usize>().ok()).is_some_and(|r| r <= rollout) {
            kept.push(rec);
        }
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for rec in kept {
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-seed artifacts that summarise a finished run.
fn write_seed_artifacts(trainer: &Trainer, dir: &Path) -> Result<SeedResult> {
    let cov = trainer.coverage();
    let mut w = csv::Writer::from_path(dir.join("counts.csv"))?;
    w.write_record(["state_id", "count"])?;
    for (i, c) in cov.counts().iter().enumerate() {
        w.write_record([i.to_string(), c.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("histogram.csv"))?;
    w.write_record(["rank", "count"])?;
    for (i, c) in state_count_histogram(cov).iter().enumerate() {
        w.write_record([(i + 1).to_string(), c.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("coverage.csv"))?;
    w.write_record(["episode", "unique_states"])?;
    for (i, u) in cov.per_episode().iter().enumerate() {
        w.write_record([(i + 1).to_string(), u.to_string()])?;
    }
    w.flush()?;

    let map = &trainer.env_config().map;
    emit_heatmap(&cell_counts(cov.counts(), map.open_cells(), map.height(), map.width())?, map, &dir.join("heatmap"))?;
    Ok(SeedResult {
        seed: 0,
        rollouts: trainer.rollouts_done(),
        episodes_to_full: cov.episodes_to_full(),
        unique_states: cov.unique(),
        num_states: cov.num_states(),
        rare_state_mass: cov.rare_state_mass(),
        final_extrinsic: 0.0,
    })
}

/// Trains one seed into `dir`, resuming from its checkpoint when asked and
/// one exists.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path, resume: bool) -> Result<SeedResult> {
    fs::create_dir_all(dir)?;
    let mut trainer = Trainer::new(cfg, seed)?;
    let ck_path = dir.join(CHECKPOINT_FILE);
    let resuming = resume && ck_path.exists();
    if resuming {
        trainer.restore(&Checkpoint::load(&ck_path)?)?;
        truncate_log(&dir.join(METRICS_FILE), trainer.rollouts_done())?;
        truncate_log(&dir.join(TIMING_FILE), trainer.rollouts_done())?;
    } else {
        let _ = fs::remove_file(dir.join(FINAL_FILE));
    }
    let mut metrics = csv_writer(&dir.join(METRICS_FILE), &RolloutMetrics::HEADER, resuming)?;
    let mut timing = csv_writer(&dir.join(TIMING_FILE), &["rollout", "collect_s", "module_s", "ppo_s"], resuming)?;
    let mut last_extrinsic = 0.0;
    for _ in trainer.rollouts_done()..cfg.rollouts() {
        let (m, t) = trainer.step()?;
        metrics.write_record(m.record())?;
        metrics.flush()?;
        timing.write_record([
            m.rollout.to_string(),
            format!("{:.6}", t.collect),
            format!("{:.6}", t.module),
            format!("{:.6}", t.ppo),
        ])?;
        timing.flush()?;
        last_extrinsic = m.extrinsic_score;
        if m.rollout % cfg.checkpoint_every == 0 {
            trainer.to_checkpoint().save(&ck_path)?;
        }
    }
    trainer.to_checkpoint().save(&ck_path)?;
    let mut result = write_seed_artifacts(&trainer, dir)?;
    result.seed = seed;
    result.final_extrinsic = last_extrinsic;
    result.write(&dir.join(FINAL_FILE))?;
    Ok(result)
}

/// Runs every seed of `cfg` under `out`, then refreshes the aggregate summary.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, resume: bool) -> Result<Vec<SeedResult>> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let mut stored = cfg.clone();
    stored.out = out.display().to_string();
    fs::write(out.join(CONFIG_FILE), stored.to_toml())?;
    let mut results = Vec::new();
    for &seed in &cfg.seeds {
        results.push(run_seed(cfg, seed, &seed_dir(out, seed), resume)?);
    }
    write_summary(out)?;
    Ok(results)
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean and standard error across the completed seeds under `out`, per rollout.
pub fn write_summary(out: &Path) -> Result<()> {
    const COLUMNS: [&str; 3] = ["mean_intrinsic_reward", "extrinsic_score", "unique_states"];
    let mut per_seed: Vec<Vec<(u64, [f64; 3])>> = Vec::new();
    for dir in compare::seed_dirs(out)? {
        if !dir.join(FINAL_FILE).exists() {
            continue;
        }
        let mut reader = csv::Reader::from_path(dir.join(METRICS_FILE))?;
        let headers = reader.headers()?.clone();
        let idx: Vec<usize> = std::iter::once("frames")
            .chain(COLUMNS)
            .map(|c| {
                headers
                    .iter()
                    .position(|h| h == c)
                    .ok_or_else(|| Error::Config(format!("metrics log lacks column {c}")))
            })
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let num = |i: usize| rec[idx[i]].parse::<f64>().map_err(|e| Error::Config(e.to_string()));
            rows.push((num(0)? as u64, [num(1)?, num(2)?, num(3)?]));
        }
        per_seed.push(rows);
    }
    let mut w = csv::Writer::from_path(out.join(SUMMARY_FILE))?;
    let mut header = vec!["rollout".to_string(), "frames".to_string(), "seeds".to_string()];
    for c in COLUMNS {
        header.push(format!("{c}_mean"));
        header.push(format!("{c}_stderr"));
    }
    w.write_record(&header)?;
    let len = per_seed.iter().map(Vec::len).min().unwrap_or(0);
    for r in 0..len {
        let mut rec = vec![(r + 1).to_string(), per_seed[0][r].0.to_string(), per_seed.len().to_string()];
        for c in 0..COLUMNS.len() {
            let xs: Vec<f64> = per_seed.iter().map(|s| s[r].1[c]).collect();
            let (m, se) = mean_stderr(&xs);
            rec.push(m.to_string());
            rec.push(se.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Re-renders heatmaps for every seed of a finished run from `counts.csv`.
pub fn heatmaps_for_run(run: &Path) -> Result<Vec<PathBuf>> {
    let cfg = ExperimentConfig::load(&run.join(CONFIG_FILE))?;
    let map = cfg.env_config()?.map;
    let mut written = Vec::new();
    for dir in compare::seed_dirs(run)? {
        let path = dir.join("counts.csv");
        if !path.exists() {
            continue;
        }
        let mut counts = Vec::new();
        for rec in csv::Reader::from_path(&path)?.records() {
            let rec = rec?;
            counts.push(rec[1].parse::<u64>().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?);
        }
        let cells = cell_counts(&counts, map.open_cells(), map.height(), map.width())?;
        written.extend(emit_heatmap(&cells, &map, &dir.join("heatmap"))?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stderr_of_known_values() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_stderr(&[4.0]), (4.0, 0.0));
    }
}
