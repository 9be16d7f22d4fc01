use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::coverage::CoverageTracker;
use crate::agent::{collect_rollout, ppo_update, Actor, PolicyModel, Workers};
use crate::envs::{CellKind, EnvConfig, Environment, GridEnv, StateId, StickyEnv};
use crate::error::{contract_err, Error, Result};
use crate::features::{Featurizer, FEATURE_DIM};
use crate::numeric::{split_seed, Checkpoint};
use crate::rewards::{ModuleDims, RewardModule, RewardModuleKind, TrainConfig};

pub type TrainEnv = StickyEnv<GridEnv>;

/// One row of `metrics.csv`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutMetrics {
    pub rollout: usize,
    pub frames: u64,
    pub episodes: u64,
    pub mean_intrinsic_reward: f64,
    pub mean_normalized_reward: f64,
    pub module_loss: f64,
    pub discriminator_accuracy: Option<f64>,
    pub extrinsic_score: f64,
    pub unique_states: usize,
    pub tv_steps: u64,
    pub button_steps: u64,
    pub policy_loss: Option<f64>,
    pub value_loss: Option<f64>,
    pub entropy: Option<f64>,
    pub approx_kl: Option<f64>,
    pub clip_fraction: Option<f64>,
}

impl RolloutMetrics {
    pub const HEADER: [&'static str; 16] = [
        "rollout",
        "frames",
        "episodes",
        "mean_intrinsic_reward",
        "mean_normalized_reward",
        "module_loss",
        "discriminator_accuracy",
        "extrinsic_score",
        "unique_states",
        "tv_steps",
        "button_steps",
        "policy_loss",
        "value_loss",
        "entropy",
        "approx_kl",
        "clip_fraction",
    ];

    pub fn record(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        vec![
            self.rollout.to_string(),
            self.frames.to_string(),
            self.episodes.to_string(),
            self.mean_intrinsic_reward.to_string(),
            self.mean_normalized_reward.to_string(),
            self.module_loss.to_string(),
            opt(self.discriminator_accuracy),
            self.extrinsic_score.to_string(),
            self.unique_states.to_string(),
            self.tv_steps.to_string(),
            self.button_steps.to_string(),
            opt(self.policy_loss),
            opt(self.value_loss),
            opt(self.entropy),
            opt(self.approx_kl),
            opt(self.clip_fraction),
        ]
    }
}

/// Wall-clock seconds per phase; kept apart from the metrics so that those
/// stay reproducible.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RolloutTiming {
    pub collect: f64,
    pub module: f64,
    pub ppo: f64,
}

/// The training loop for one seed: collect, score, update the reward
/// module, update the policy.
#[derive(Debug)]
pub struct Trainer {
    cfg: ExperimentConfig,
    seed: u64,
    kind: RewardModuleKind,
    env_cfg: EnvConfig,
    workers: Workers<TrainEnv>,
    policy: Option<PolicyModel>,
    module: RewardModule,
    coverage: CoverageTracker,
    ppo_rng: ChaCha8Rng,
    rollout: usize,
    frames: u64,
    episodes: u64,
}

fn build_workers(cfg: &ExperimentConfig, env_cfg: &EnvConfig, seed: u64, generation: u64) -> Result<Workers<TrainEnv>> {
    let base = split_seed(seed, "generation", generation);
    let envs = (0..cfg.envs as u64)
        .map(|i| StickyEnv::new(GridEnv::new(env_cfg.clone(), split_seed(base, "env", i))?, cfg.sticky_p))
        .collect::<Result<Vec<_>>>()?;
    let featurizer = Featurizer::new(split_seed(seed, "features", 0), cfg.embed_cache);
    Workers::new(envs, featurizer, cfg.noise_sigma, split_seed(base, "workers", 0))
}

impl Trainer {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let kind = cfg.method_kind()?;
        let env_cfg = cfg.env_config()?;
        let workers = build_workers(cfg, &env_cfg, seed, 0)?;
        let num_actions = env_cfg.kind.num_actions();
        let policy = if kind == RewardModuleKind::NoneRandomPolicy {
            None
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, "policy", 0));
            Some(PolicyModel::new(FEATURE_DIM, num_actions, &mut rng)?)
        };
        let dims = ModuleDims {
            visual: FEATURE_DIM,
            audio: FEATURE_DIM,
            num_actions,
            num_envs: cfg.envs,
        };
        let mut module = RewardModule::new(kind, dims, cfg.gamma, split_seed(seed, "module", 0))?;
        module.set_training(TrainConfig {
            lr: cfg.module_lr,
            epochs: cfg.module_epochs,
            minibatch: cfg.module_minibatch,
        });
        let num_states = workers.envs()[0].num_states();
        Ok(Self {
            cfg: cfg.clone(),
            seed,
            kind,
            coverage: CoverageTracker::new(num_states, env_cfg.horizon),
            env_cfg,
            workers,
            policy,
            module,
            ppo_rng: ChaCha8Rng::seed_from_u64(split_seed(seed, "ppo", 0)),
            rollout: 0,
            frames: 0,
            episodes: 0,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn env_config(&self) -> &EnvConfig {
        &self.env_cfg
    }

    pub fn kind(&self) -> RewardModuleKind {
        self.kind
    }

    pub fn rollouts_done(&self) -> usize {
        self.rollout
    }

    pub fn module(&self) -> &RewardModule {
        &self.module
    }

    pub fn policy(&self) -> Option<&PolicyModel> {
        self.policy.as_ref()
    }

    pub fn coverage(&self) -> &CoverageTracker {
        &self.coverage
    }

    pub fn workers(&self) -> &Workers<TrainEnv> {
        &self.workers
    }

    pub fn workers_mut(&mut self) -> &mut Workers<TrainEnv> {
        &mut self.workers
    }

    fn cell_kind(&self, state: StateId) -> CellKind {
        let map = &self.env_cfg.map;
        map.kind(map.open_cells()[state.0 / 4])
    }

    /// Runs one collect/update cycle.
    pub fn step(&mut self) -> Result<(RolloutMetrics, RolloutTiming)> {
        let mut timing = RolloutTiming::default();
        let t0 = Instant::now();
        let actor = match &self.policy {
            Some(p) => Actor::Policy(p),
            None => Actor::Uniform,
        };
        let rollout = collect_rollout(&mut self.workers, actor, &mut self.module, self.cfg.rollout_len)?;
        timing.collect = t0.elapsed().as_secs_f64();

        let mut m = RolloutMetrics::default();
        for rec in &rollout.steps {
            self.coverage.record(rec.state_id)?;
            m.extrinsic_score += rec.score.value();
            match self.cell_kind(rec.state_id) {
                CellKind::NoisyTv => m.tv_steps += 1,
                CellKind::Button => m.button_steps += 1,
                _ => {}
            }
            if rec.done {
                self.coverage.end_episode();
                self.episodes += 1;
            }
        }
        let n = rollout.buffer.len() as f64;
        let segs = &rollout.buffer.segments;
        m.mean_intrinsic_reward = segs.iter().flat_map(|s| &s.raw_rewards).sum::<f64>() / n;
        m.mean_normalized_reward = segs.iter().flat_map(|s| &s.rewards).sum::<f64>() / n;

        let t1 = Instant::now();
        if self.module.fingerprint() != rollout.reward_fingerprint {
            return contract_err("reward module changed between scoring and its update");
        }
        let stats = self
            .module
            .update(&rollout.experience)
            .map_err(|e| Error::Contract(format!("reward module update at rollout {}: {e}", self.rollout)))?;
        m.module_loss = stats.loss;
        m.discriminator_accuracy = stats.accuracy;
        timing.module = t1.elapsed().as_secs_f64();

        let t2 = Instant::now();
        if let Some(policy) = &mut self.policy {
            let ppo = ppo_update(policy, &rollout.buffer, &self.cfg.ppo(), &mut self.ppo_rng)
                .map_err(|e| Error::Contract(format!("PPO update at rollout {}: {e}", self.rollout)))?;
            let l = ppo.losses;
            m.policy_loss = Some(l.policy);
            m.value_loss = Some(l.value);
            m.entropy = Some(l.entropy);
            m.approx_kl = Some(l.approx_kl);
            m.clip_fraction = Some(l.clip_fraction);
        }
        timing.ppo = t2.elapsed().as_secs_f64();

        self.rollout += 1;
        self.frames += self.cfg.frames_per_rollout();
        m.rollout = self.rollout;
        m.frames = self.frames;
        m.episodes = self.episodes;
        m.unique_states = self.coverage.unique();
        Ok((m, timing))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.push_vector(
            "progress",
            vec![self.seed as f64, self.rollout as f64, self.frames as f64, self.episodes as f64],
        );
        ck.push_vector("coverage", self.coverage.to_vec());
        if let Some(p) = &self.policy {
            ck.merge(p.to_checkpoint());
        }
        ck.merge(self.module.to_checkpoint());
        ck
    }

    /// Restores learned state and counters. Environments restart from their
    /// start cells and every generator is reseeded from the rollout index.
    pub fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        let progress = ck.vector("progress")?;
        if progress.len() != 4 || progress[0] != self.seed as f64 {
            return Err(Error::Checkpoint("checkpoint belongs to another seed".into()));
        }
        self.rollout = progress[1] as usize;
        self.frames = progress[2] as u64;
        self.episodes = progress[3] as u64;
        self.coverage = CoverageTracker::from_vec(ck.vector("coverage")?)?;
        if self.policy.is_some() {
            self.policy = Some(PolicyModel::from_checkpoint(ck)?);
        }
        self.module.restore(ck)?;
        self.workers = build_workers(&self.cfg, &self.env_cfg, self.seed, self.rollout as u64)?;
        self.ppo_rng = ChaCha8Rng::seed_from_u64(split_seed(self.seed, "ppo", self.rollout as u64));
        Ok(())
    }
}
