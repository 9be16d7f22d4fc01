use crate::envs::StateId;
use crate::error::{shape_err, Result};

/// Visit counts over (cell, heading) states and the unique-state curve.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageTracker {
    counts: Vec<u64>,
    unique: usize,
    steps: u64,
    horizon: usize,
    /// Unique-state count at the end of each completed episode.
    per_episode: Vec<usize>,
    full_at_step: Option<u64>,
}

impl CoverageTracker {
    pub fn new(num_states: usize, horizon: usize) -> Self {
        Self {
            counts: vec![0; num_states],
            unique: 0,
            steps: 0,
            horizon: horizon.max(1),
            per_episode: Vec::new(),
            full_at_step: None,
        }
    }

    pub fn record(&mut self, state: StateId) -> Result<()> {
        let Some(c) = self.counts.get_mut(state.0) else {
            return shape_err(format!("state {} outside 0..{}", state.0, self.counts.len()));
        };
        if *c == 0 {
            self.unique += 1;
        }
        *c += 1;
        self.steps += 1;
        if self.unique == self.counts.len() && self.full_at_step.is_none() {
            self.full_at_step = Some(self.steps);
        }
        Ok(())
    }

    pub fn end_episode(&mut self) {
        self.per_episode.push(self.unique);
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn unique(&self) -> usize {
        self.unique
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn per_episode(&self) -> &[usize] {
        &self.per_episode
    }

    pub fn num_states(&self) -> usize {
        self.counts.len()
    }

    /// Env steps (summed over envs) when the last state was first seen.
    pub fn full_at_step(&self) -> Option<u64> {
        self.full_at_step
    }

    /// Episodes to full coverage, measured in episode lengths of summed
    /// env steps, so that runs with different env counts compare.
    pub fn episodes_to_full(&self) -> Option<f64> {
        self.full_at_step.map(|s| s as f64 / self.horizon as f64)
    }

    /// Visits summed over the least-visited tenth of states.
    pub fn rare_state_mass(&self) -> u64 {
        let mut sorted = self.counts.clone();
        sorted.sort_unstable();
        let k = self.counts.len().div_ceil(10);
        sorted[..k].iter().sum()
    }

    /// Flat state for checkpoints.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![
            self.counts.len() as f64,
            self.horizon as f64,
            self.steps as f64,
            self.full_at_step.map_or(-1.0, |s| s as f64),
            self.per_episode.len() as f64,
        ];
        v.extend(self.counts.iter().map(|&c| c as f64));
        v.extend(self.per_episode.iter().map(|&u| u as f64));
        v
    }

    pub fn from_vec(v: &[f64]) -> Result<Self> {
        if v.len() < 5 {
            return shape_err("coverage state too short");
        }
        let (n, episodes) = (v[0] as usize, v[4] as usize);
        if v.len() != 5 + n + episodes {
            return shape_err("coverage state has the wrong length");
        }
        let counts: Vec<u64> = v[5..5 + n].iter().map(|&c| c as u64).collect();
        Ok(Self {
            unique: counts.iter().filter(|&&c| c > 0).count(),
            counts,
            horizon: v[1] as usize,
            steps: v[2] as u64,
            full_at_step: (v[3] >= 0.0).then_some(v[3] as u64),
            per_episode: v[5 + n..].iter().map(|&u| u as usize).collect(),
        })
    }
}

/// Visit counts sorted in descending order, zeros dropped.
pub fn state_count_histogram(tracker: &CoverageTracker) -> Vec<u64> {
    let mut counts: Vec<u64> = tracker.counts().iter().copied().filter(|&c| c > 0).collect();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    counts
}

/// Per-cell totals over headings, laid out row-major over the open cells'
/// positions in a `height × width` grid.
pub fn cell_counts(counts: &[u64], open_cells: &[(usize, usize)], height: usize, width: usize) -> Result<Vec<u64>> {
    if counts.len() != open_cells.len() * 4 {
        return shape_err("state counts do not match the map");
    }
    let mut grid = vec![0; height * width];
    for (i, &(r, c)) in open_cells.iter().enumerate() {
        grid[r * width + c] = counts[4 * i..4 * i + 4].iter().sum();
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_state_histogram() {
        let mut t = CoverageTracker::new(844, 512);
        for _ in 0..10 {
            t.record(StateId(17)).unwrap();
        }
        assert_eq!(state_count_histogram(&t), vec![10]);
    }

    #[test]
    fn uniform_visits_give_flat_histogram() {
        let mut t = CoverageTracker::new(844, 512);
        for round in 0..3 {
            for s in 0..844 {
                t.record(StateId(s)).unwrap();
            }
            if round == 0 {
                assert_eq!(t.full_at_step(), Some(844));
            }
        }
        let h = state_count_histogram(&t);
        assert_eq!(h.len(), 844);
        assert!(h.iter().all(|&c| c == 3));
        assert_eq!(h.iter().sum::<u64>(), t.steps());
        assert_eq!(t.rare_state_mass(), 3 * 85);
    }

    #[test]
    fn episodes_and_round_trip() {
        let mut t = CoverageTracker::new(8, 4);
        for s in [0, 1, 1, 2] {
            t.record(StateId(s)).unwrap();
        }
        t.end_episode();
        assert_eq!(t.per_episode(), &[3]);
        assert_eq!(t.episodes_to_full(), None);
        assert!(t.record(StateId(8)).is_err());
        assert_eq!(CoverageTracker::from_vec(&t.to_vec()).unwrap(), t);
    }

    #[test]
    fn cells_sum_headings() {
        let counts = [1, 2, 3, 4, 0, 0, 0, 5];
        let grid = cell_counts(&counts, &[(0, 1), (1, 0)], 2, 2).unwrap();
        assert_eq!(grid, vec![0, 10, 5, 0]);
    }
}
