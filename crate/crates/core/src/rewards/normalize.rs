use crate::error::{shape_err, Result};

const STD_FLOOR: f64 = 1e-8;

/// Divides rewards by a running std of the per-env discounted return.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardNormalizer {
    gamma: f64,
    returns: Vec<f64>,
    count: f64,
    mean: f64,
    var: f64,
}

impl RewardNormalizer {
    pub fn new(num_envs: usize, gamma: f64) -> Self {
        Self {
            gamma,
            returns: vec![0.0; num_envs],
            count: 0.0,
            mean: 0.0,
            var: 0.0,
        }
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt().max(STD_FLOOR)
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    /// State as `[gamma, count, mean, var, returns...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.gamma, self.count, self.mean, self.var];
        v.extend_from_slice(&self.returns);
        v
    }

    pub fn from_vec(v: &[f64]) -> Result<Self> {
        if v.len() < 4 {
            return shape_err("normalizer state needs at least four values");
        }
        Ok(Self {
            gamma: v[0],
            count: v[1],
            mean: v[2],
            var: v[3],
            returns: v[4..].to_vec(),
        })
    }

    fn absorb(&mut self, rewards: &[f64], steps: usize) {
        let n_env = self.returns.len();
        let mut batch = Vec::with_capacity(rewards.len());
        for t in 0..steps {
            for e in 0..n_env {
                self.returns[e] = self.gamma * self.returns[e] + rewards[e * steps + t];
                batch.push(self.returns[e]);
            }
        }
        let n = batch.len() as f64;
        let mean = batch.iter().sum::<f64>() / n;
        let var = batch.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        let total = self.count + n;
        let delta = mean - self.mean;
        let m2 = self.var * self.count + var * n + delta * delta * self.count * n / total;
        self.mean += delta * n / total;
        self.var = m2 / total;
        self.count = total;
    }

    /// `rewards` is env-major: env e's steps are contiguous. Uses the current
    /// statistics, then folds this batch in. The very first batch is folded
    /// in before use, since there is nothing to divide by yet.
    pub fn normalize(&mut self, rewards: &[f64]) -> Result<Vec<f64>> {
        let n_env = self.returns.len();
        if n_env == 0 || rewards.len() % n_env != 0 {
            return shape_err(format!("{} rewards do not split over {n_env} envs", rewards.len()));
        }
        let steps = rewards.len() / n_env;
        if steps == 0 {
            return Ok(Vec::new());
        }
        let first = self.count == 0.0;
        if first {
            self.absorb(rewards, steps);
        }
        let std = self.std();
        let out = rewards.iter().map(|r| r / std).collect();
        if !first {
            self.absorb(rewards, steps);
        }
        Ok(out)
    }
}

/// Free-function form of [`RewardNormalizer::normalize`].
pub fn normalize_rewards(rewards: &[f64], normalizer: &mut RewardNormalizer) -> Result<Vec<f64>> {
    normalizer.normalize(rewards)
}
