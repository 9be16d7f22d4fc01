use rand::seq::SliceRandom;
use rand::Rng;

use super::policy::{log_softmax, PolicyGrads, PolicyModel};
use super::rollout::RolloutBuffer;
use crate::envs::Action;
use crate::error::{contract_err, shape_err, Error, Result};
use crate::numeric::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub lr: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            entropy_coef: 0.01,
            value_coef: 0.5,
            epochs: 3,
            minibatches: 4,
            lr: 1e-4,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::Config(format!("clip must lie in (0, 1), got {}", self.clip)));
        }
        if self.epochs == 0 || self.minibatches == 0 || self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::Config("epochs, minibatches and lr must be positive".into()));
        }
        Ok(())
    }
}

/// GAE over one env's segment. `dones[t]` marks that step `t` ended an
/// episode, which cuts both the bootstrap and the accumulation.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return shape_err(format!(
            "GAE inputs differ in length: {n} rewards, {} values, {} dones",
            values.len(),
            dones.len()
        ));
    }
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut running = 0.0;
    for t in (0..n).rev() {
        let keep = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * keep - values[t];
        running = delta + gamma * lambda * keep * running;
        adv[t] = running;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Mean 0, std 1. A constant input maps to zeros.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len().max(1) as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
    adv.iter().map(|a| (a - mean) / std.max(1e-8)).collect()
}

/// Flattened training data for one PPO update.
#[derive(Clone, Debug, PartialEq)]
pub struct PpoBatch {
    pub features: Matrix,
    pub actions: Vec<Action>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn select(&self, idx: &[usize]) -> PpoBatch {
        PpoBatch {
            features: self.features.select_rows(idx),
            actions: idx.iter().map(|&i| self.actions[i]).collect(),
            old_log_probs: idx.iter().map(|&i| self.old_log_probs[i]).collect(),
            advantages: idx.iter().map(|&i| self.advantages[i]).collect(),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PpoLosses {
    /// −mean clipped surrogate.
    pub policy: f64,
    /// ½·mean squared value error.
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Total loss `policy + c_v·value − c_e·entropy` on a batch and its gradient.
pub fn ppo_objective(policy: &PolicyModel, batch: &PpoBatch, cfg: &PpoConfig) -> Result<(PpoLosses, PolicyGrads)> {
    let n = batch.len();
    if n == 0 {
        return contract_err("empty PPO batch");
    }
    let (out, cache) = policy.forward_cached(&batch.features)?;
    let k = out.logits.cols();
    let nf = n as f64;
    let mut d_logits = Matrix::zeros(n, k);
    let mut d_values = vec![0.0; n];
    let mut l = PpoLosses::default();
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        let a = batch.actions[i].0;
        if a >= k {
            return contract_err(format!("action {a} out of range"));
        }
        let logp = log_softmax(out.logits.row(i))?;
        let probs: Vec<f64> = logp.iter().map(|x| x.exp()).collect();
        let log_ratio = logp[a] - batch.old_log_probs[i];
        let ratio = log_ratio.exp();
        let adv = batch.advantages[i];
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * adv;
        l.policy -= unclipped.min(clipped) / nf;
        l.approx_kl += ((ratio - 1.0) - log_ratio) / nf;
        if (ratio - 1.0).abs() > cfg.clip {
            l.clip_fraction += 1.0 / nf;
        }
        let entropy: f64 = -probs.iter().zip(&logp).map(|(p, lp)| p * lp).sum::<f64>();
        l.entropy += entropy / nf;
        let err = out.values[i] - batch.returns[i];
        l.value += 0.5 * err * err / nf;
        d_values[i] = cfg.value_coef * err / nf;

        let row = d_logits.row_mut(i);
        if unclipped <= clipped {
            let g = -adv * ratio / nf;
            for (j, d) in row.iter_mut().enumerate() {
                *d += g * ((j == a) as u8 as f64 - probs[j]);
            }
        }
        for (j, d) in row.iter_mut().enumerate() {
            *d += cfg.entropy_coef / nf * probs[j] * (logp[j] + entropy);
        }
    }
    l.total = l.policy + cfg.value_coef * l.value - cfg.entropy_coef * l.entropy;
    if !l.total.is_finite() {
        return Err(Error::NonFinite("PPO loss".into()));
    }
    let grads = policy.backward(&cache, &d_logits, &d_values)?;
    Ok((l, grads))
}

/// Statistics averaged over every minibatch step of an update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PpoStats {
    pub losses: PpoLosses,
    pub steps: usize,
}

/// Clipped-surrogate PPO over `batch` (advantages already normalized).
pub fn ppo_update_batch<R: Rng + ?Sized>(
    policy: &mut PolicyModel,
    batch: &PpoBatch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<PpoStats> {
    cfg.validate()?;
    if batch.is_empty() {
        return contract_err("empty PPO batch");
    }
    let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
    if !(finite(&batch.advantages) && finite(&batch.returns) && finite(&batch.old_log_probs) && batch.features.is_finite()) {
        return Err(Error::NonFinite("PPO batch".into()));
    }
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let size = batch.len().div_ceil(cfg.minibatches);
    let mut stats = PpoStats::default();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(size) {
            let (l, grads) = ppo_objective(policy, &batch.select(chunk), cfg)?;
            policy.apply_grads(&grads, cfg.lr)?;
            let s = &mut stats.losses;
            s.policy += l.policy;
            s.value += l.value;
            s.entropy += l.entropy;
            s.total += l.total;
            s.approx_kl += l.approx_kl;
            s.clip_fraction += l.clip_fraction;
            stats.steps += 1;
        }
    }
    let m = stats.steps as f64;
    let s = &mut stats.losses;
    for x in [&mut s.policy, &mut s.value, &mut s.entropy, &mut s.total, &mut s.approx_kl, &mut s.clip_fraction] {
        *x /= m;
    }
    Ok(stats)
}

/// GAE, advantage normalization and the PPO epochs for a collected rollout.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut PolicyModel,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<PpoStats> {
    let batch = buffer.ppo_batch(cfg)?;
    ppo_update_batch(policy, &batch, cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::VisualFeatures;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gae_base_cases() {
        let (a, r) = compute_gae(&[1.5], &[0.25], &[false], 2.0, 0.9, 0.95).unwrap();
        assert!((a[0] - (1.5 + 0.9 * 2.0 - 0.25)).abs() < 1e-12);
        assert!((r[0] - (a[0] + 0.25)).abs() < 1e-12);

        let rw = [0.3, -1.0, 2.0, 0.5];
        let v = [0.1, 0.7, -0.2, 0.4];
        let (a, _) = compute_gae(&rw, &v, &[false; 4], 1.1, 0.99, 0.0).unwrap();
        for t in 0..4 {
            let next = if t == 3 { 1.1 } else { v[t + 1] };
            assert_eq!(a[t], rw[t] + 0.99 * next - v[t]);
        }
    }

    #[test]
    fn gae_lambda_one_matches_reward_to_go() {
        let rw: Vec<f64> = (0..20).map(|i| ((i * 7) % 5) as f64 - 1.3).collect();
        let (a, _) = compute_gae(&rw, &[0.0; 20], &[false; 20], 0.0, 0.97, 1.0).unwrap();
        for (t, &at) in a.iter().enumerate() {
            let brute: f64 = (t..20).map(|k| 0.97f64.powi((k - t) as i32) * rw[k]).sum();
            assert!((at - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_done_cuts_bootstrap() {
        let (a, _) = compute_gae(&[1.0, 1.0], &[0.0, 0.0], &[true, false], 5.0, 0.5, 1.0).unwrap();
        assert_eq!(a[0], 1.0);
        assert_eq!(a[1], 1.0 + 0.5 * 5.0);
        assert!(compute_gae(&[1.0], &[0.0, 1.0], &[false], 0.0, 0.9, 0.9).is_err());
    }

    fn toy_batch(policy: &PolicyModel, rng: &mut ChaCha8Rng, n: usize) -> PpoBatch {
        let feats: Vec<VisualFeatures> = (0..n)
            .map(|_| VisualFeatures((0..policy.input_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let refs: Vec<&VisualFeatures> = feats.iter().collect();
        let out = policy.forward(&refs).unwrap();
        let actions: Vec<Action> = (0..n).map(|i| Action(i % policy.num_actions())).collect();
        let old_log_probs = (0..n)
            .map(|i| log_softmax(out.logits.row(i)).unwrap()[actions[i].0] + rng.gen_range(-0.1..0.1))
            .collect();
        PpoBatch {
            features: policy.stack(&refs).unwrap(),
            actions,
            old_log_probs,
            advantages: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            returns: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn first_step_surrogate_is_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = PolicyModel::with_hidden(4, 8, 3, &mut rng).unwrap();
        let mut b = toy_batch(&p, &mut rng, 32);
        let out = p.forward_matrix(&b.features).unwrap();
        for i in 0..b.len() {
            b.old_log_probs[i] = log_softmax(out.logits.row(i)).unwrap()[b.actions[i].0];
        }
        b.advantages = normalize_advantages(&b.advantages);
        let (l, _) = ppo_objective(&p, &b, &PpoConfig::default()).unwrap();
        assert!(l.policy.abs() < 1e-12);
        assert!(l.approx_kl.abs() < 1e-15 && l.clip_fraction == 0.0);
    }

    #[test]
    fn normalized_advantages_are_scale_free() {
        let adv = [0.3, -1.0, 2.5, 0.0, 0.7];
        let a = normalize_advantages(&adv);
        let b = normalize_advantages(&adv.map(|x| x * 37.0));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn nan_advantage_aborts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = PolicyModel::with_hidden(4, 8, 3, &mut rng).unwrap();
        let mut b = toy_batch(&p, &mut rng, 8);
        b.advantages[3] = f64::NAN;
        let before = p.clone();
        assert!(ppo_update_batch(&mut p, &b, &PpoConfig::default(), &mut rng).is_err());
        assert_eq!(p, before);
    }
}
