use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::policy::{sample_action, PolicyModel};
use super::ppo::{compute_gae, normalize_advantages, PpoBatch, PpoConfig};
use crate::envs::{Action, Environment, ExtrinsicScore, ObservationRecord, StateId};
use crate::error::{contract_err, Error, Result};
use crate::features::{add_feature_noise, AudioFeatures, FeaturePair, Featurizer, VisualFeatures};
use crate::numeric::{split_seed, Matrix};
use crate::rewards::{ExperienceBatch, RewardModule, Transition};

pub const ROLLOUT_LEN: usize = 128;

/// One env's share of a rollout.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnvSegment {
    pub features: Vec<VisualFeatures>,
    pub actions: Vec<Action>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    /// Normalised intrinsic reward (what PPO trains on).
    pub rewards: Vec<f64>,
    pub raw_rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value of the observation following the last step.
    pub bootstrap: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBuffer {
    pub segments: Vec<EnvSegment>,
}

impl RolloutBuffer {
    pub fn num_envs(&self) -> usize {
        self.segments.len()
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.actions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// GAE per segment, then advantages normalised over the whole buffer.
    pub fn ppo_batch(&self, cfg: &PpoConfig) -> Result<PpoBatch> {
        let n = self.len();
        if n == 0 {
            return contract_err("empty rollout buffer");
        }
        let dim = self.segments[0].features.first().map_or(0, |f| f.0.len());
        let mut data = Vec::with_capacity(n * dim);
        let (mut actions, mut old, mut adv, mut ret) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for s in &self.segments {
            let (a, r) = compute_gae(&s.rewards, &s.values, &s.dones, s.bootstrap, cfg.gamma, cfg.lambda)?;
            for f in &s.features {
                data.extend_from_slice(&f.0);
            }
            actions.extend_from_slice(&s.actions);
            old.extend_from_slice(&s.log_probs);
            adv.extend(a);
            ret.extend(r);
        }
        Ok(PpoBatch {
            features: Matrix::from_vec(n, dim, data)?,
            actions,
            old_log_probs: old,
            advantages: normalize_advantages(&adv),
            returns: ret,
        })
    }

    /// Digest of every stored value.
    pub fn digest(&self) -> u64 {
        let mut h = Sha256::new();
        for s in &self.segments {
            for f in &s.features {
                f.0.iter().for_each(|x| h.update(x.to_le_bytes()));
            }
            s.actions.iter().for_each(|a| h.update((a.0 as u64).to_le_bytes()));
            for x in s.log_probs.iter().chain(&s.values).chain(&s.rewards).chain(&s.raw_rewards) {
                h.update(x.to_le_bytes());
            }
            s.dones.iter().for_each(|d| h.update([*d as u8]));
            h.update(s.bootstrap.to_le_bytes());
        }
        u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
    }
}

/// Who picks actions.
#[derive(Clone, Copy, Debug)]
pub enum Actor<'a> {
    Policy(&'a PolicyModel),
    Uniform,
}

/// What happened on one env step, for metrics only.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub env: usize,
    pub t: usize,
    pub state_id: StateId,
    pub done: bool,
    pub score: ExtrinsicScore,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub buffer: RolloutBuffer,
    /// Reward-facing features (noise applied) for the reward module update.
    pub experience: ExperienceBatch,
    /// Step records in time-major order (t, then env).
    pub steps: Vec<StepRecord>,
    /// Reward-module fingerprint the rewards were computed with.
    pub reward_fingerprint: u64,
}

#[derive(Clone, Debug)]
struct Current {
    clean: VisualFeatures,
    pair: FeaturePair,
}

/// A set of environments stepped in lockstep, with their featurizer and
/// per-env generators.
#[derive(Debug)]
pub struct Workers<E: Environment> {
    envs: Vec<E>,
    current: Vec<Current>,
    action_rngs: Vec<ChaCha8Rng>,
    noise_rngs: Vec<ChaCha8Rng>,
    noise_sigma: f64,
    featurizer: Featurizer,
}

impl<E: Environment> Workers<E> {
    /// Resets every env and embeds its first observation.
    pub fn new(envs: Vec<E>, featurizer: Featurizer, noise_sigma: f64, seed: u64) -> Result<Self> {
        if envs.is_empty() {
            return contract_err("need at least one environment");
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma must be non-negative, got {noise_sigma}")));
        }
        let n = envs.len() as u64;
        let mut w = Self {
            envs,
            current: Vec::new(),
            action_rngs: (0..n).map(|i| ChaCha8Rng::seed_from_u64(split_seed(seed, "action", i))).collect(),
            noise_rngs: (0..n).map(|i| ChaCha8Rng::seed_from_u64(split_seed(seed, "noise", i))).collect(),
            noise_sigma,
            featurizer,
        };
        w.reset_all()?;
        Ok(w)
    }

    pub fn reset_all(&mut self) -> Result<()> {
        let obs: Vec<ObservationRecord> = self.envs.iter_mut().map(|e| e.reset()).collect();
        let idx: Vec<usize> = (0..self.envs.len()).collect();
        self.current = self.observe(&obs, &idx)?;
        Ok(())
    }

    pub fn envs(&self) -> &[E] {
        &self.envs
    }

    pub fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    pub fn num_envs(&self) -> usize {
        self.envs.len()
    }

    fn observe(&mut self, obs: &[ObservationRecord], env_of: &[usize]) -> Result<Vec<Current>> {
        let refs: Vec<&ObservationRecord> = obs.iter().collect();
        let visual = self.featurizer.visual.embed_batch(&refs)?;
        let mut out = Vec::with_capacity(obs.len());
        for ((o, v), &e) in obs.iter().zip(visual).zip(env_of) {
            let s = self.featurizer.audio.featurize(o.audio())?;
            let rng = &mut self.noise_rngs[e];
            let pair = FeaturePair {
                v: VisualFeatures(add_feature_noise(&v.0, self.noise_sigma, rng)?),
                s: AudioFeatures(add_feature_noise(&s.0, self.noise_sigma, rng)?),
                state_id: self.envs[e].state_id(),
                timestep: self.envs[e].state().step as u64,
            };
            if !pair.is_finite() {
                return Err(Error::NonFinite(format!("features of env {e}")));
            }
            out.push(Current { clean: v, pair });
        }
        Ok(out)
    }
}

/// Steps every env `steps` times, then scores the whole rollout with the
/// reward module as it stands (the update comes later, from the caller).
pub fn collect_rollout<E: Environment>(
    workers: &mut Workers<E>,
    actor: Actor<'_>,
    module: &mut RewardModule,
    steps: usize,
) -> Result<Rollout> {
    let n_env = workers.num_envs();
    let num_actions = workers.envs[0].num_actions();
    let mut segments = vec![EnvSegment::default(); n_env];
    let mut obs_lists: Vec<Vec<FeaturePair>> = workers.current.iter().map(|c| vec![c.pair.clone()]).collect();
    let mut transitions: Vec<Vec<(usize, Action, usize)>> = vec![Vec::new(); n_env];
    let mut records = Vec::with_capacity(steps * n_env);

    for t in 0..steps {
        let (logits, values) = match actor {
            Actor::Policy(p) => {
                let feats: Vec<&VisualFeatures> = workers.current.iter().map(|c| &c.clean).collect();
                let out = p.forward(&feats)?;
                (Some(out.logits), out.values)
            }
            Actor::Uniform => (None, vec![0.0; n_env]),
        };
        let mut new_obs = Vec::with_capacity(n_env);
        let mut env_of = Vec::with_capacity(n_env);
        let mut done_flags = vec![false; n_env];
        for e in 0..n_env {
            let uniform = vec![0.0; num_actions];
            let row = logits.as_ref().map_or(uniform.as_slice(), |l| l.row(e));
            let (action, logp) = sample_action(row, &mut workers.action_rngs[e])?;
            let result = workers.envs[e]
                .step(action)
                .map_err(|err| Error::Contract(format!("env {e} failed at step {t}: {err}")))?;
            let (agent, score) = result.into_parts();
            records.push(StepRecord {
                env: e,
                t,
                state_id: agent.state_id,
                done: agent.done,
                score,
            });
            let seg = &mut segments[e];
            seg.features.push(workers.current[e].clean.clone());
            seg.actions.push(action);
            seg.log_probs.push(logp);
            seg.values.push(values[e]);
            seg.dones.push(agent.done);
            done_flags[e] = agent.done;
            new_obs.push(agent.observation);
            env_of.push(e);
        }
        let produced = workers.observe(&new_obs, &env_of)?;
        for (e, cur) in produced.into_iter().enumerate() {
            let from = obs_lists[e].len() - 1;
            obs_lists[e].push(cur.pair.clone());
            transitions[e].push((from, segments[e].actions[t], from + 1));
            workers.current[e] = cur;
        }
        let resets: Vec<usize> = (0..n_env).filter(|&e| done_flags[e]).collect();
        if !resets.is_empty() {
            let obs: Vec<ObservationRecord> = resets.iter().map(|&e| workers.envs[e].reset()).collect();
            for (cur, &e) in workers.observe(&obs, &resets)?.into_iter().zip(&resets) {
                obs_lists[e].push(cur.pair.clone());
                workers.current[e] = cur;
            }
        }
    }

    match actor {
        Actor::Policy(p) => {
            let feats: Vec<&VisualFeatures> = workers.current.iter().map(|c| &c.clean).collect();
            for (s, v) in segments.iter_mut().zip(p.forward(&feats)?.values) {
                s.bootstrap = v;
            }
        }
        Actor::Uniform => {}
    }

    let mut experience = ExperienceBatch {
        num_envs: n_env,
        ..Default::default()
    };
    for (e, (obs, trans)) in obs_lists.into_iter().zip(transitions).enumerate() {
        let offset = experience.observations.len();
        experience.observations.extend(obs);
        experience.transitions.extend(trans.into_iter().map(|(from, action, to)| Transition {
            env: e,
            from: offset + from,
            action,
            to: offset + to,
        }));
    }

    let reward_fingerprint = module.fingerprint();
    let out = module.compute(&experience)?;
    if module.fingerprint() != reward_fingerprint {
        return contract_err("reward module parameters changed while scoring a rollout");
    }
    for (e, seg) in segments.iter_mut().enumerate() {
        seg.rewards = out.normalized[e * steps..(e + 1) * steps].to_vec();
        seg.raw_rewards = out.raw[e * steps..(e + 1) * steps].to_vec();
    }
    Ok(Rollout {
        buffer: RolloutBuffer { segments },
        experience,
        steps: records,
        reward_fingerprint,
    })
}
