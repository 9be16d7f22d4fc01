use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{PpoConfig, ROLLOUT_LEN};
use crate::envs::{EnvConfig, EnvKind, WorldMap, FRAME_STACK};
use crate::error::{Error, Result};
use crate::rewards::RewardModuleKind;

/// Flat experiment description. Every key is optional except `env` and
/// `method`; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// `acoustic-grid` or `chime-world`.
    pub env: String,
    /// ASCII map file; the built-in map when empty.
    pub map: String,
    /// Reward module tag.
    pub method: String,
    pub seeds: Vec<u64>,
    /// Budget in rendered frames (four per env step).
    pub total_frames: u64,
    pub envs: usize,
    pub rollout_len: usize,
    pub noise_sigma: f64,
    pub sticky_p: f64,
    /// Episode length; 0 takes the environment default.
    pub horizon: usize,
    /// Sub-steps per step that apply the action; 0 takes the default.
    pub action_repeat: usize,
    pub source_amplitude: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub ppo_epochs: usize,
    pub ppo_minibatches: usize,
    pub lr: f64,
    pub module_lr: f64,
    pub module_epochs: usize,
    pub module_minibatch: usize,
    pub checkpoint_every: usize,
    pub embed_cache: usize,
    pub out: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let ppo = PpoConfig::default();
        Self {
            env: String::new(),
            map: String::new(),
            method: String::new(),
            seeds: vec![0],
            total_frames: 2_000_000,
            envs: 8,
            rollout_len: ROLLOUT_LEN,
            noise_sigma: 0.0,
            sticky_p: 0.0,
            horizon: 0,
            action_repeat: 0,
            source_amplitude: 0.8,
            gamma: ppo.gamma,
            gae_lambda: ppo.lambda,
            clip: ppo.clip,
            entropy_coef: ppo.entropy_coef,
            value_coef: ppo.value_coef,
            ppo_epochs: ppo.epochs,
            ppo_minibatches: ppo.minibatches,
            lr: ppo.lr,
            module_lr: 1e-4,
            module_epochs: 3,
            module_minibatch: 256,
            checkpoint_every: 50,
            embed_cache: 1 << 16,
            out: String::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn env_kind(&self) -> Result<EnvKind> {
        match self.env.as_str() {
            "acoustic-grid" => Ok(EnvKind::AcousticGrid),
            "chime-world" => Ok(EnvKind::ChimeWorld),
            other => Err(Error::Config(format!("unknown env '{other}'"))),
        }
    }

    pub fn method_kind(&self) -> Result<RewardModuleKind> {
        self.method.parse()
    }

    pub fn env_config(&self) -> Result<EnvConfig> {
        let mut cfg = match self.env_kind()? {
            EnvKind::AcousticGrid => EnvConfig::acoustic_grid(),
            EnvKind::ChimeWorld => EnvConfig::chime_world(),
        };
        if !self.map.is_empty() {
            let text = std::fs::read_to_string(&self.map)
                .map_err(|e| Error::MapLoad(format!("{}: {e}", self.map)))?;
            cfg.map = WorldMap::parse(&text)?;
        }
        if self.horizon > 0 {
            cfg.horizon = self.horizon;
        }
        if self.action_repeat > 0 {
            cfg.action_repeat = self.action_repeat;
        }
        cfg.source_amplitude = self.source_amplitude;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn ppo(&self) -> PpoConfig {
        PpoConfig {
            gamma: self.gamma,
            lambda: self.gae_lambda,
            clip: self.clip,
            entropy_coef: self.entropy_coef,
            value_coef: self.value_coef,
            epochs: self.ppo_epochs,
            minibatches: self.ppo_minibatches,
            lr: self.lr,
        }
    }

    pub fn frames_per_rollout(&self) -> u64 {
        (self.envs * self.rollout_len * FRAME_STACK) as u64
    }

    /// Number of rollouts the frame budget pays for (at least one).
    pub fn rollouts(&self) -> usize {
        (self.total_frames / self.frames_per_rollout()).max(1) as usize
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.out)
    }

    pub fn validate(&self) -> Result<()> {
        self.env_kind()?;
        self.method_kind()?;
        self.ppo().validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.envs == 0 || self.rollout_len == 0 {
            return bad("envs and rollout_len must be positive".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        if !(0.0..1.0).contains(&self.sticky_p) {
            return bad(format!("sticky_p must lie in [0, 1), got {}", self.sticky_p));
        }
        if self.module_lr.is_nan() || self.module_lr <= 0.0 || self.module_epochs == 0 || self.module_minibatch == 0 {
            return bad("module_lr, module_epochs and module_minibatch must be positive".into());
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be positive".into());
        }
        self.env_config()?;
        Ok(())
    }
}
