//! Intrinsic reward modules. None of them can see the task score: their
//! only input is an [`ExperienceBatch`] of features and actions.

mod normalize;
mod predictors;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use normalize::{normalize_rewards, RewardNormalizer};
pub use predictors::{
    disagreement_reward, fp_reward, rnd_reward, Ensemble, ForwardModel, RndPair, TrainConfig, FORWARD_HIDDEN, RND_OUT,
};

use crate::alignment::{build_alignment_batch, discriminator_update, Discriminator, DiscriminatorConfig, CLAMP_EPS};
use crate::envs::Action;
use crate::error::{contract_err, shape_err, Error, Result};
use crate::features::FeaturePair;
use crate::numeric::Checkpoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RewardModuleKind {
    She,
    FuturePrediction,
    Disagreement,
    Rnd,
    Combined,
    FpAudioVisual,
    RndAudioVisual,
    NoneRandomPolicy,
}

impl RewardModuleKind {
    pub const ALL: [RewardModuleKind; 8] = [
        RewardModuleKind::She,
        RewardModuleKind::FuturePrediction,
        RewardModuleKind::Disagreement,
        RewardModuleKind::Rnd,
        RewardModuleKind::Combined,
        RewardModuleKind::FpAudioVisual,
        RewardModuleKind::RndAudioVisual,
        RewardModuleKind::NoneRandomPolicy,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            RewardModuleKind::She => "she",
            RewardModuleKind::FuturePrediction => "future-prediction",
            RewardModuleKind::Disagreement => "disagreement",
            RewardModuleKind::Rnd => "rnd",
            RewardModuleKind::Combined => "combined",
            RewardModuleKind::FpAudioVisual => "fp-audiovisual",
            RewardModuleKind::RndAudioVisual => "rnd-audiovisual",
            RewardModuleKind::NoneRandomPolicy => "none-random-policy",
        }
    }
}

impl fmt::Display for RewardModuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for RewardModuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

/// One environment step seen by a reward module: indices into
/// [`ExperienceBatch::observations`] plus the action taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub env: usize,
    pub from: usize,
    pub action: Action,
    pub to: usize,
}

/// Features of a rollout as reward modules see them (noise already applied).
/// Transitions are env-major: all of env 0's steps, then env 1's, and so on.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperienceBatch {
    pub observations: Vec<FeaturePair>,
    pub transitions: Vec<Transition>,
    pub num_envs: usize,
}

impl ExperienceBatch {
    pub fn validate(&self) -> Result<()> {
        if self.num_envs == 0 || self.transitions.len() % self.num_envs != 0 {
            return shape_err("transitions must split evenly over envs");
        }
        let steps = self.transitions.len() / self.num_envs;
        for (i, t) in self.transitions.iter().enumerate() {
            if t.env != i / steps.max(1) {
                return contract_err("transitions are not env-major");
            }
            if t.from >= self.observations.len() || t.to >= self.observations.len() {
                return contract_err("transition refers to a missing observation");
            }
        }
        Ok(())
    }

    /// Per-env sequences of the observations each action produced.
    pub fn trajectories(&self) -> Vec<Vec<FeaturePair>> {
        let mut out = vec![Vec::new(); self.num_envs];
        for t in &self.transitions {
            out[t.env].push(self.observations[t.to].clone());
        }
        out
    }

    fn visual(&self, i: usize) -> &[f64] {
        self.observations[i].v.as_slice()
    }

    fn audio_visual(&self, i: usize) -> Vec<f64> {
        av_concat_features(&self.observations[i].v.0, &self.observations[i].s.0)
    }
}

/// `[v; s]`.
pub fn av_concat_features(v: &[f64], s: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + s.len());
    out.extend_from_slice(v);
    out.extend_from_slice(s);
    out
}

/// r = −log p for a clamped discriminator output.
pub fn she_reward(p: f64) -> Result<f64> {
    if !(CLAMP_EPS..=1.0 - CLAMP_EPS).contains(&p) {
        return contract_err(format!("discriminator output {p} outside the clamp range"));
    }
    Ok(-p.ln())
}

/// Sum of the two (already normalised) component rewards.
pub fn combined_reward(she_r: f64, fp_r: f64) -> f64 {
    she_r + fp_r
}

#[derive(Clone, Debug, PartialEq)]
enum Model {
    She(Discriminator),
    Fp(ForwardModel),
    Disagreement(Ensemble),
    Rnd(RndPair),
    Combined(Discriminator, ForwardModel),
    Idle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardOutput {
    /// Raw module reward (for `combined`, the sum of raw components).
    pub raw: Vec<f64>,
    /// What the policy is trained on.
    pub normalized: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ModuleStats {
    pub loss: f64,
    /// Discriminator accuracy, when there is a discriminator.
    pub accuracy: Option<f64>,
}

/// Sizes every module is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModuleDims {
    pub visual: usize,
    pub audio: usize,
    pub num_actions: usize,
    pub num_envs: usize,
}

/// An intrinsic reward module with its own normalizer(s) and generator.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardModule {
    kind: RewardModuleKind,
    model: Model,
    normalizers: Vec<RewardNormalizer>,
    rng: ChaCha8Rng,
}

impl RewardModule {
    pub fn new(kind: RewardModuleKind, dims: ModuleDims, gamma: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train_rng = ChaCha8Rng::seed_from_u64(seed);
        train_rng.set_stream(1);
        let disc = |rng: &mut ChaCha8Rng| Discriminator::with_dims(dims.visual, dims.audio, &[512, 512], rng);
        let model = match kind {
            RewardModuleKind::She => Model::She(disc(&mut rng)?),
            RewardModuleKind::FuturePrediction => Model::Fp(ForwardModel::new(
                dims.visual,
                0,
                dims.num_actions,
                FORWARD_HIDDEN,
                true,
                &mut rng,
            )),
            RewardModuleKind::FpAudioVisual => Model::Fp(ForwardModel::new(
                dims.visual,
                dims.audio,
                dims.num_actions,
                FORWARD_HIDDEN,
                true,
                &mut rng,
            )),
            RewardModuleKind::Disagreement => Model::Disagreement(Ensemble::new(5, dims.visual, dims.num_actions, &mut rng)?),
            RewardModuleKind::Rnd => Model::Rnd(RndPair::new(dims.visual, &mut rng)),
            RewardModuleKind::RndAudioVisual => Model::Rnd(RndPair::new(dims.visual + dims.audio, &mut rng)),
            RewardModuleKind::Combined => {
                let d = disc(&mut rng)?;
                let f = ForwardModel::new(dims.visual, 0, dims.num_actions, FORWARD_HIDDEN, true, &mut rng);
                Model::Combined(d, f)
            }
            RewardModuleKind::NoneRandomPolicy => Model::Idle,
        };
        let parts = if kind == RewardModuleKind::Combined { 2 } else { 1 };
        Ok(Self {
            kind,
            model,
            normalizers: (0..parts).map(|_| RewardNormalizer::new(dims.num_envs, gamma)).collect(),
            rng: train_rng,
        })
    }

    pub fn kind(&self) -> RewardModuleKind {
        self.kind
    }

    /// Learning rate, epochs and minibatch size for every trained part.
    pub fn set_training(&mut self, train: TrainConfig) {
        let disc = DiscriminatorConfig {
            lr: train.lr,
            epochs: train.epochs,
            minibatch: train.minibatch,
        };
        match &mut self.model {
            Model::She(d) => d.config = disc,
            Model::Fp(f) => f.train = train,
            Model::Disagreement(e) => e.members_mut().iter_mut().for_each(|m| m.train = train),
            Model::Rnd(r) => r.train = train,
            Model::Combined(d, f) => {
                d.config = disc;
                f.train = train;
            }
            Model::Idle => {}
        }
    }

    pub fn discriminator(&self) -> Option<&Discriminator> {
        match &self.model {
            Model::She(d) | Model::Combined(d, _) => Some(d),
            _ => None,
        }
    }

    pub fn discriminator_mut(&mut self) -> Option<&mut Discriminator> {
        match &mut self.model {
            Model::She(d) | Model::Combined(d, _) => Some(d),
            _ => None,
        }
    }

    pub fn forward_model(&self) -> Option<&ForwardModel> {
        match &self.model {
            Model::Fp(f) | Model::Combined(_, f) => Some(f),
            _ => None,
        }
    }

    pub fn forward_model_mut(&mut self) -> Option<&mut ForwardModel> {
        match &mut self.model {
            Model::Fp(f) | Model::Combined(_, f) => Some(f),
            _ => None,
        }
    }

    pub fn rnd(&self) -> Option<&RndPair> {
        match &self.model {
            Model::Rnd(r) => Some(r),
            _ => None,
        }
    }

    pub fn normalizers(&self) -> &[RewardNormalizer] {
        &self.normalizers
    }

    /// Digest of every trainable parameter.
    pub fn fingerprint(&self) -> u64 {
        let prints: Vec<u64> = match &self.model {
            Model::She(d) => vec![d.fingerprint()],
            Model::Fp(f) => vec![f.mlp().fingerprint()],
            Model::Disagreement(e) => e.members().iter().map(|m| m.mlp().fingerprint()).collect(),
            Model::Rnd(r) => vec![r.predictor().fingerprint()],
            Model::Combined(d, f) => vec![d.fingerprint(), f.mlp().fingerprint()],
            Model::Idle => vec![0],
        };
        prints.into_iter().fold(0xcbf2_9ce4_8422_2325, |h, p| (h ^ p).wrapping_mul(0x1000_0000_01b3))
    }

    fn she_raw(d: &Discriminator, batch: &ExperienceBatch) -> Result<Vec<f64>> {
        let pairs: Vec<(&[f64], &[f64])> = batch
            .transitions
            .iter()
            .map(|t| {
                let o = &batch.observations[t.to];
                (o.v.as_slice(), o.s.as_slice())
            })
            .collect();
        d.probs(&pairs)?.into_iter().map(she_reward).collect()
    }

    fn fp_raw(f: &ForwardModel, batch: &ExperienceBatch, audio_visual: bool) -> Result<Vec<f64>> {
        if audio_visual {
            let owned: Vec<(Vec<f64>, Action, Vec<f64>)> = batch
                .transitions
                .iter()
                .map(|t| (batch.audio_visual(t.from), t.action, batch.audio_visual(t.to)))
                .collect();
            let items: Vec<(&[f64], Action, &[f64])> =
                owned.iter().map(|(x, a, y)| (x.as_slice(), *a, y.as_slice())).collect();
            f.rewards(&items)
        } else {
            let items: Vec<(&[f64], Action, &[f64])> = batch
                .transitions
                .iter()
                .map(|t| (batch.visual(t.from), t.action, batch.visual(t.to)))
                .collect();
            f.rewards(&items)
        }
    }

    fn is_audio_visual(&self) -> bool {
        matches!(self.kind, RewardModuleKind::FpAudioVisual | RewardModuleKind::RndAudioVisual)
    }

    /// Raw rewards of each component on the current (frozen) parameters.
    pub fn raw_components(&self, batch: &ExperienceBatch) -> Result<Vec<Vec<f64>>> {
        batch.validate()?;
        let av = self.is_audio_visual();
        Ok(match &self.model {
            Model::She(d) => vec![Self::she_raw(d, batch)?],
            Model::Fp(f) => vec![Self::fp_raw(f, batch, av)?],
            Model::Disagreement(e) => {
                let items: Vec<(&[f64], Action)> =
                    batch.transitions.iter().map(|t| (batch.visual(t.from), t.action)).collect();
                vec![e.rewards(&items)?]
            }
            Model::Rnd(r) => {
                if av {
                    let owned: Vec<Vec<f64>> = batch.transitions.iter().map(|t| batch.audio_visual(t.to)).collect();
                    let xs: Vec<&[f64]> = owned.iter().map(Vec::as_slice).collect();
                    vec![r.rewards(&xs)?]
                } else {
                    let xs: Vec<&[f64]> = batch.transitions.iter().map(|t| batch.visual(t.to)).collect();
                    vec![r.rewards(&xs)?]
                }
            }
            Model::Combined(d, f) => vec![Self::she_raw(d, batch)?, Self::fp_raw(f, batch, false)?],
            Model::Idle => vec![vec![0.0; batch.transitions.len()]],
        })
    }

    /// Rewards for a rollout, computed before this rollout's update, and
    /// their normalised versions (which advances the normalizer statistics).
    pub fn compute(&mut self, batch: &ExperienceBatch) -> Result<RewardOutput> {
        let parts = self.raw_components(batch)?;
        let n = batch.transitions.len();
        let mut raw = vec![0.0; n];
        let mut normalized = vec![0.0; n];
        for (part, norm) in parts.iter().zip(&mut self.normalizers) {
            let scaled = norm.normalize(part)?;
            for i in 0..n {
                raw[i] += part[i];
                normalized[i] = combined_reward(normalized[i], scaled[i]);
            }
        }
        if raw.iter().chain(&normalized).any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("intrinsic reward".into()));
        }
        Ok(RewardOutput { raw, normalized })
    }

    fn fit_forward(f: &mut ForwardModel, batch: &ExperienceBatch, av: bool, rng: &mut ChaCha8Rng) -> Result<f64> {
        let owned: Vec<(Vec<f64>, Action, Vec<f64>)> = batch
            .transitions
            .iter()
            .map(|t| {
                if av {
                    (batch.audio_visual(t.from), t.action, batch.audio_visual(t.to))
                } else {
                    (batch.visual(t.from).to_vec(), t.action, batch.visual(t.to).to_vec())
                }
            })
            .collect();
        let items: Vec<(&[f64], Action, &[f64])> = owned.iter().map(|(x, a, y)| (x.as_slice(), *a, y.as_slice())).collect();
        f.fit(&items, rng)
    }

    /// Trains the module on a rollout.
    pub fn update(&mut self, batch: &ExperienceBatch) -> Result<ModuleStats> {
        batch.validate()?;
        let av = self.is_audio_visual();
        let rng = &mut self.rng;
        match &mut self.model {
            Model::She(d) => {
                let ab = build_alignment_batch(&batch.trajectories(), rng)?;
                let stats = discriminator_update(d, &ab, rng)?;
                Ok(ModuleStats {
                    loss: stats.final_loss(),
                    accuracy: Some(stats.final_accuracy()),
                })
            }
            Model::Fp(f) => Ok(ModuleStats {
                loss: Self::fit_forward(f, batch, av, rng)?,
                accuracy: None,
            }),
            Model::Disagreement(e) => {
                let items: Vec<(&[f64], Action, &[f64])> = batch
                    .transitions
                    .iter()
                    .map(|t| (batch.visual(t.from), t.action, batch.visual(t.to)))
                    .collect();
                Ok(ModuleStats {
                    loss: e.fit(&items, rng)?,
                    accuracy: None,
                })
            }
            Model::Rnd(r) => {
                let owned: Vec<Vec<f64>> = batch
                    .transitions
                    .iter()
                    .map(|t| {
                        if av {
                            batch.audio_visual(t.to)
                        } else {
                            batch.visual(t.to).to_vec()
                        }
                    })
                    .collect();
                let xs: Vec<&[f64]> = owned.iter().map(Vec::as_slice).collect();
                Ok(ModuleStats {
                    loss: r.fit(&xs, rng)?,
                    accuracy: None,
                })
            }
            Model::Combined(d, f) => {
                let ab = build_alignment_batch(&batch.trajectories(), rng)?;
                let stats = discriminator_update(d, &ab, rng)?;
                Self::fit_forward(f, batch, false, rng)?;
                Ok(ModuleStats {
                    loss: stats.final_loss(),
                    accuracy: Some(stats.final_accuracy()),
                })
            }
            Model::Idle => Ok(ModuleStats::default()),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        match &self.model {
            Model::She(d) => push_disc(&mut ck, d),
            Model::Fp(f) => push_forward(&mut ck, "fp", f),
            Model::Disagreement(e) => {
                for (i, m) in e.members().iter().enumerate() {
                    push_forward(&mut ck, &format!("ensemble.{i}"), m);
                }
            }
            Model::Rnd(r) => {
                ck.push_mlp("rnd.target", r.target());
                ck.push_mlp("rnd.predictor", r.predictor());
                ck.push_adam("rnd.predictor.adam", r.adam());
            }
            Model::Combined(d, f) => {
                push_disc(&mut ck, d);
                push_forward(&mut ck, "fp", f);
            }
            Model::Idle => {}
        }
        for (i, n) in self.normalizers.iter().enumerate() {
            ck.push_vector(format!("normalizer.{i}"), n.to_vec());
        }
        ck
    }

    /// Restores parameters, optimizer moments and normalizers.
    pub fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        match &mut self.model {
            Model::She(d) => restore_disc(d, ck)?,
            Model::Fp(f) => f.set_state(ck.mlp("fp")?.clone(), ck.adam("fp.adam")?.clone())?,
            Model::Disagreement(e) => {
                for (i, m) in e.members_mut().iter_mut().enumerate() {
                    let name = format!("ensemble.{i}");
                    m.set_state(ck.mlp(&name)?.clone(), ck.adam(&format!("{name}.adam"))?.clone())?;
                }
            }
            Model::Rnd(r) => {
                if ck.mlp("rnd.target")? != r.target() {
                    return Err(Error::Checkpoint("RND target differs from this module's".into()));
                }
                r.set_state(ck.mlp("rnd.predictor")?.clone(), ck.adam("rnd.predictor.adam")?.clone())?;
            }
            Model::Combined(d, f) => {
                restore_disc(d, ck)?;
                f.set_state(ck.mlp("fp")?.clone(), ck.adam("fp.adam")?.clone())?;
            }
            Model::Idle => {}
        }
        for (i, n) in self.normalizers.iter_mut().enumerate() {
            *n = RewardNormalizer::from_vec(ck.vector(&format!("normalizer.{i}"))?)?;
        }
        Ok(())
    }
}

fn push_disc(ck: &mut Checkpoint, d: &Discriminator) {
    for (name, entry) in d.to_checkpoint().entries() {
        ck.push(name.clone(), entry.clone());
    }
}

fn restore_disc(d: &mut Discriminator, ck: &Checkpoint) -> Result<()> {
    let config = d.config;
    *d = Discriminator::from_checkpoint(ck)?;
    d.config = config;
    Ok(())
}

fn push_forward(ck: &mut Checkpoint, name: &str, f: &ForwardModel) {
    ck.push_mlp(name, f.mlp());
    ck.push_adam(format!("{name}.adam"), f.adam());
}
