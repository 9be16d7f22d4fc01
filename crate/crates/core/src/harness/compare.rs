use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::{CONFIG_FILE, FINAL_FILE};
use crate::error::{contract_err, Error, Result};
use crate::rewards::RewardModuleKind;

/// Outcome of one finished seed (`final.csv`).
#[derive(Clone, Debug, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub rollouts: usize,
    /// `None` when full coverage was never reached.
    pub episodes_to_full: Option<f64>,
    pub unique_states: usize,
    pub num_states: usize,
    pub rare_state_mass: u64,
    /// Extrinsic score collected during the last rollout.
    pub final_extrinsic: f64,
}

const FINAL_HEADER: [&str; 7] = [
    "seed",
    "rollouts",
    "episodes_to_full_coverage",
    "unique_states",
    "num_states",
    "rare_state_mass",
    "final_extrinsic_score",
];

impl SeedResult {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(FINAL_HEADER)?;
        w.write_record([
            self.seed.to_string(),
            self.rollouts.to_string(),
            self.episodes_to_full.map(|e| e.to_string()).unwrap_or_default(),
            self.unique_states.to_string(),
            self.num_states.to_string(),
            self.rare_state_mass.to_string(),
            self.final_extrinsic.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rec = r
            .records()
            .next()
            .ok_or_else(|| Error::Config(format!("{} is empty", path.display())))??;
        let bad = |field: &str| Error::Config(format!("{}: bad {field}", path.display()));
        let int = |i: usize| rec[i].parse::<u64>().map_err(|_| bad(FINAL_HEADER[i]));
        Ok(Self {
            seed: int(0)?,
            rollouts: int(1)? as usize,
            episodes_to_full: match &rec[2] {
                "" => None,
                s => Some(s.parse().map_err(|_| bad(FINAL_HEADER[2]))?),
            },
            unique_states: int(3)? as usize,
            num_states: int(4)? as usize,
            rare_state_mass: int(5)?,
            final_extrinsic: rec[6].parse().map_err(|_| bad(FINAL_HEADER[6]))?,
        })
    }
}

/// `seed-*` directories under a run, in seed order.
pub(crate) fn seed_dirs(run: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<(u64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(run)? {
        let path = entry?.path();
        let seed = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("seed-"))
            .and_then(|s| s.parse().ok());
        if let (Some(seed), true) = (seed, path.is_dir()) {
            dirs.push((seed, path));
        }
    }
    dirs.sort();
    Ok(dirs.into_iter().map(|(_, p)| p).collect())
}

/// Median where `None` (censored) sorts above every finite value.
fn censored_median(xs: &[Option<f64>]) -> Option<f64> {
    let mut v: Vec<f64> = xs.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
    m.is_finite().then_some(m)
}

fn median(xs: &[f64]) -> f64 {
    censored_median(&xs.iter().map(|&x| Some(x)).collect::<Vec<_>>()).unwrap_or(f64::NAN)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub run: String,
    pub method: String,
    pub seeds: usize,
    pub incomplete_seeds: usize,
    pub episodes_to_full: Option<f64>,
    pub final_extrinsic: f64,
    pub rare_state_mass: f64,
    /// This run's episodes to full coverage over the SHE run's.
    pub ratio_to_she: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
}

fn fmt_episodes(x: Option<f64>) -> String {
    x.map_or_else(|| "inf".to_string(), |v| format!("{v:.2}"))
}

impl CompareTable {
    const HEADER: [&'static str; 8] = [
        "run",
        "method",
        "seeds",
        "incomplete_seeds",
        "episodes_to_full_coverage",
        "final_extrinsic_score",
        "rare_state_mass",
        "coverage_ratio_vs_she",
    ];

    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.run.clone(),
                    r.method.clone(),
                    r.seeds.to_string(),
                    r.incomplete_seeds.to_string(),
                    fmt_episodes(r.episodes_to_full),
                    format!("{:.3}", r.final_extrinsic),
                    format!("{:.1}", r.rare_state_mass),
                    r.ratio_to_she.map_or_else(|| "inf".to_string(), |v| format!("{v:.3}")),
                ]
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::HEADER)?;
        for row in self.cells() {
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn to_text(&self) -> String {
        let cells = self.cells();
        let widths: Vec<usize> = (0..Self::HEADER.len())
            .map(|c| cells.iter().map(|r| r[c].len()).chain([Self::HEADER[c].len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, row: &[&str]| {
            let parts: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, &Self::HEADER);
        for row in &cells {
            line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }
}

/// Summarises finished runs side by side. Seeds without `final.csv` are
/// counted as incomplete and left out.
pub fn compare_runs(runs: &[PathBuf]) -> Result<CompareTable> {
    if runs.len() < 2 {
        return contract_err("compare needs at least two runs");
    }
    let mut rows = Vec::new();
    for run in runs {
        let cfg = ExperimentConfig::load(&run.join(CONFIG_FILE))?;
        let (mut done, mut incomplete) = (Vec::new(), 0);
        for dir in seed_dirs(run)? {
            let f = dir.join(FINAL_FILE);
            if f.exists() {
                done.push(SeedResult::read(&f)?);
            } else {
                incomplete += 1;
            }
        }
        if done.is_empty() {
            return Err(Error::Config(format!("{} has no completed seeds", run.display())));
        }
        let n = done.len() as f64;
        rows.push(CompareRow {
            run: run.file_name().map_or_else(|| run.display().to_string(), |n| n.to_string_lossy().into_owned()),
            method: cfg.method.clone(),
            seeds: done.len(),
            incomplete_seeds: incomplete,
            episodes_to_full: censored_median(&done.iter().map(|d| d.episodes_to_full).collect::<Vec<_>>()),
            final_extrinsic: done.iter().map(|d| d.final_extrinsic).sum::<f64>() / n,
            rare_state_mass: median(&done.iter().map(|d| d.rare_state_mass as f64).collect::<Vec<_>>()),
            ratio_to_she: None,
        });
    }
    let she = rows
        .iter()
        .find(|r| r.method == RewardModuleKind::She.tag())
        .and_then(|r| r.episodes_to_full);
    for r in &mut rows {
        r.ratio_to_she = match (r.episodes_to_full, she) {
            (Some(e), Some(s)) if s > 0.0 => Some(e / s),
            _ => None,
        };
    }
    Ok(CompareTable { rows })
}
