//! PPO over intrinsic rewards: a categorical policy with a value head on the
//! visual embedding, GAE and the clipped surrogate.

mod policy;
mod ppo;
mod rollout;

pub use policy::{log_softmax, sample_action, PolicyGrads, PolicyModel, PolicyOutput, POLICY_HIDDEN};
pub use ppo::{
    compute_gae, normalize_advantages, ppo_objective, ppo_update, ppo_update_batch, PpoBatch, PpoConfig, PpoLosses,
    PpoStats,
};
pub use rollout::{collect_rollout, Actor, EnvSegment, Rollout, RolloutBuffer, StepRecord, Workers, ROLLOUT_LEN};
