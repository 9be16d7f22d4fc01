//! Audio-visual alignment discriminator.
//!
//! Positives pair a visual feature with the audio heard at the same step;
//! negatives swap in audio from a uniformly random step of the same
//! trajectory. Negatives are weighted by how far the swapped audio is from
//! the true audio, normalised to mean 1 over the batch.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{contract_err, shape_err, Error, Result};
use crate::features::{AudioFeatures, FeaturePair, VisualFeatures, FEATURE_DIM};
use crate::numeric::{sigmoid, Activation, AdamState, Checkpoint, Matrix, Mlp, MlpGrads};

/// Output clamp: p ∈ [ε, 1−ε].
pub const CLAMP_EPS: f64 = 1e-6;
pub const TRAJECTORY_LEN: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscriminatorConfig {
    pub lr: f64,
    pub epochs: usize,
    pub minibatch: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            epochs: 3,
            minibatch: 256,
        }
    }
}

/// MLP over `[v; s]` with a single logit output.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    mlp: Mlp,
    adam: AdamState,
    visual_dim: usize,
    pub config: DiscriminatorConfig,
}

impl Discriminator {
    /// 1024 → 512 → 512 → 1 with a zeroed output layer, so p = 0.5 at start.
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::with_dims(FEATURE_DIM, FEATURE_DIM, &[512, 512], rng).expect("valid sizes")
    }

    pub fn with_dims<R: Rng + ?Sized>(visual_dim: usize, audio_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut sizes = vec![visual_dim + audio_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut acts = vec![Activation::Relu; hidden.len()];
        acts.push(Activation::Identity);
        let mut mlp = Mlp::init(&sizes, &acts, rng)?;
        mlp.zero_last_layer();
        Self::from_mlp(mlp, visual_dim)
    }

    pub fn from_mlp(mlp: Mlp, visual_dim: usize) -> Result<Self> {
        if mlp.output_dim() != 1 || mlp.input_dim() <= visual_dim {
            return shape_err("discriminator needs a single output and room for both modalities");
        }
        let adam = AdamState::for_params(&mlp.params());
        Ok(Self {
            mlp,
            adam,
            visual_dim,
            config: DiscriminatorConfig::default(),
        })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn visual_dim(&self) -> usize {
        self.visual_dim
    }

    pub fn audio_dim(&self) -> usize {
        self.mlp.input_dim() - self.visual_dim
    }

    pub fn fingerprint(&self) -> u64 {
        self.mlp.fingerprint()
    }

    fn input_matrix(&self, pairs: &[(&[f64], &[f64])]) -> Result<Matrix> {
        let width = self.mlp.input_dim();
        let mut data = Vec::with_capacity(pairs.len() * width);
        for (v, s) in pairs {
            if v.len() != self.visual_dim || s.len() != self.audio_dim() {
                return shape_err(format!(
                    "discriminator expects {}+{} features, got {}+{}",
                    self.visual_dim,
                    self.audio_dim(),
                    v.len(),
                    s.len()
                ));
            }
            data.extend_from_slice(v);
            data.extend_from_slice(s);
        }
        Matrix::from_vec(pairs.len(), width, data)
    }

    /// Raw logits for a batch of (v, s) pairs.
    pub fn logits(&self, pairs: &[(&[f64], &[f64])]) -> Result<Vec<f64>> {
        Ok(self.mlp.forward_batch(&self.input_matrix(pairs)?)?.into_vec())
    }

    /// Clamped probabilities that each pair is aligned.
    pub fn probs(&self, pairs: &[(&[f64], &[f64])]) -> Result<Vec<f64>> {
        Ok(self.logits(pairs)?.into_iter().map(clamped_prob).collect())
    }

    pub fn prob(&self, v: &[f64], s: &[f64]) -> Result<f64> {
        Ok(self.probs(&[(v, s)])?[0])
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.push_mlp("discriminator", &self.mlp);
        ck.push_adam("discriminator.adam", &self.adam);
        ck.push_vector("discriminator.visual_dim", vec![self.visual_dim as f64]);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let visual_dim = ck.vector("discriminator.visual_dim")?.first().copied().unwrap_or(0.0) as usize;
        let mut d = Self::from_mlp(ck.mlp("discriminator")?.clone(), visual_dim)?;
        let adam = ck.adam("discriminator.adam")?.clone();
        if adam.first_moments().len() != d.mlp.params().len() {
            return Err(Error::Checkpoint("optimizer state does not match the model".into()));
        }
        d.adam = adam;
        Ok(d)
    }
}

fn clamped_prob(logit: f64) -> f64 {
    sigmoid(logit).clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
}

/// p = D(v, s), clamped to [ε, 1−ε].
pub fn discriminator_forward(model: &Discriminator, v: &VisualFeatures, s: &AudioFeatures) -> Result<f64> {
    model.prob(v.as_slice(), s.as_slice())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentSample {
    pub v: VisualFeatures,
    pub s_used: AudioFeatures,
    pub s_true: AudioFeatures,
    /// True when `s_used` is the audio that actually co-occurred with `v`.
    pub z: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AlignmentBatch {
    pub samples: Vec<AlignmentSample>,
    /// 1 for positives; normalised L2 distance for negatives.
    pub weights: Vec<f64>,
}

impl AlignmentBatch {
    /// Builds a batch and assigns weights from explicit samples.
    pub fn from_samples(samples: Vec<AlignmentSample>) -> Self {
        let weights = negative_weights(&samples);
        Self { samples, weights }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn negative_weights(samples: &[AlignmentSample]) -> Vec<f64> {
    let dists: Vec<Option<f64>> = samples
        .iter()
        .map(|s| (!s.z).then(|| l2_distance(s.s_used.as_slice(), s.s_true.as_slice())))
        .collect();
    let negatives: Vec<f64> = dists.iter().flatten().copied().collect();
    let mean = if negatives.is_empty() {
        0.0
    } else {
        negatives.iter().sum::<f64>() / negatives.len() as f64
    };
    dists
        .into_iter()
        .map(|d| match d {
            None => 1.0,
            Some(_) if mean == 0.0 => 0.0,
            Some(d) => d / mean,
        })
        .collect()
}

/// Uniform index into the trajectory (the current step included) and the
/// audio found there.
pub fn sample_misaligned<'a, R: Rng + ?Sized>(
    trajectory: &'a [FeaturePair],
    _t: usize,
    rng: &mut R,
) -> Result<(usize, &'a AudioFeatures)> {
    if trajectory.is_empty() {
        return contract_err("cannot sample from an empty trajectory");
    }
    let j = rng.gen_range(0..trajectory.len());
    Ok((j, &trajectory[j].s))
}

/// One sample per timestep of every trajectory, aligned with probability ½.
pub fn build_alignment_batch<R: Rng + ?Sized>(trajectories: &[Vec<FeaturePair>], rng: &mut R) -> Result<AlignmentBatch> {
    if trajectories.is_empty() {
        return contract_err("need at least one trajectory");
    }
    let mut samples = Vec::with_capacity(trajectories.iter().map(Vec::len).sum());
    for traj in trajectories {
        for (t, pair) in traj.iter().enumerate() {
            let z = rng.gen_bool(0.5);
            let s_used = if z {
                pair.s.clone()
            } else {
                sample_misaligned(traj, t, rng)?.1.clone()
            };
            samples.push(AlignmentSample {
                v: pair.v.clone(),
                s_used,
                s_true: pair.s.clone(),
                z,
            });
        }
    }
    Ok(AlignmentBatch::from_samples(samples))
}

/// Per-sample loss for a clamped probability: −log p or −w·log(1−p).
pub fn sample_loss(p: f64, z: bool, weight: f64) -> f64 {
    if z {
        -p.ln()
    } else if weight == 0.0 {
        0.0
    } else {
        -weight * (1.0 - p).ln()
    }
}

fn loss_and_grads(model: &Discriminator, batch: &AlignmentBatch, idx: &[usize]) -> Result<(f64, MlpGrads, Vec<f64>)> {
    let pairs: Vec<(&[f64], &[f64])> = idx
        .iter()
        .map(|&i| (batch.samples[i].v.as_slice(), batch.samples[i].s_used.as_slice()))
        .collect();
    let x = model.input_matrix(&pairs)?;
    let (logits, cache) = model.mlp.forward_cached(&x)?;
    let n = idx.len() as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(idx.len(), 1);
    let mut probs = Vec::with_capacity(idx.len());
    for (r, &i) in idx.iter().enumerate() {
        let logit = logits.get(r, 0);
        let p = clamped_prob(logit);
        let (z, w) = (batch.samples[i].z, batch.weights[i]);
        loss += sample_loss(p, z, w);
        // Gradient of the unclamped cross-entropy in logit space.
        let s = sigmoid(logit);
        grad.set(r, 0, if z { s - 1.0 } else { w * s } / n);
        probs.push(p);
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("alignment loss".into()));
    }
    let (grads, _) = model.mlp.backward(&cache, &grad)?;
    Ok((loss, grads, probs))
}

/// Mean weighted cross-entropy over the batch and its parameter gradient.
pub fn alignment_loss(batch: &AlignmentBatch, model: &Discriminator) -> Result<(f64, MlpGrads)> {
    if batch.is_empty() {
        return contract_err("empty alignment batch");
    }
    let idx: Vec<usize> = (0..batch.len()).collect();
    let (loss, grads, _) = loss_and_grads(model, batch, &idx)?;
    Ok((loss, grads))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainStats {
    pub epoch_loss: Vec<f64>,
    pub epoch_accuracy: Vec<f64>,
}

impl TrainStats {
    pub fn final_loss(&self) -> f64 {
        self.epoch_loss.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_accuracy(&self) -> f64 {
        self.epoch_accuracy.last().copied().unwrap_or(f64::NAN)
    }
}

/// Several Adam epochs over shuffled minibatches. A non-finite loss aborts
/// the update with the model left as it was before the offending step.
pub fn discriminator_update<R: Rng + ?Sized>(
    model: &mut Discriminator,
    batch: &AlignmentBatch,
    rng: &mut R,
) -> Result<TrainStats> {
    if batch.is_empty() {
        return contract_err("empty alignment batch");
    }
    let cfg = model.config;
    let mut stats = TrainStats::default();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(cfg.minibatch.max(1)) {
            let (loss, grads, probs) = loss_and_grads(model, batch, chunk)?;
            loss_sum += loss * chunk.len() as f64;
            correct += chunk
                .iter()
                .zip(&probs)
                .filter(|(&i, &p)| (p > 0.5) == batch.samples[i].z)
                .count();
            model.mlp.adam_update(&grads, &mut model.adam, cfg.lr)?;
        }
        stats.epoch_loss.push(loss_sum / batch.len() as f64);
        stats.epoch_accuracy.push(correct as f64 / batch.len() as f64);
    }
    Ok(stats)
}
