//! Oracles and toy problems shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use she_core::agent::{log_softmax, ppo_objective, ppo_update, sample_action, EnvSegment, PolicyModel, PpoBatch, PpoConfig, RolloutBuffer};
use she_core::alignment::{alignment_loss, AlignmentBatch, AlignmentSample, Discriminator};
use she_core::envs::{Action, AUDIO_SAMPLES};
use she_core::features::{featurize_audio, AudioFeatures, AudioFeaturizer, VisualFeatures};
use she_core::numeric::{Activation, Matrix, Mlp, MlpGrads};
use she_core::rewards::{ForwardModel, RndPair};

pub const FD_STEP: f64 = 1e-5;

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn flat(g: &MlpGrads) -> Vec<f64> {
    g.slices().concat()
}

/// Largest relative error between `analytic` and central differences of
/// `loss` over every parameter of the network picked out by `mlp`.
pub fn max_rel_err<M>(model: &mut M, mlp: impl Fn(&mut M) -> &mut Mlp, loss: impl Fn(&M) -> f64, analytic: &[f64]) -> f64 {
    let sizes: Vec<usize> = mlp(model).params_mut().iter().map(|p| p.len()).collect();
    assert_eq!(sizes.iter().sum::<usize>(), analytic.len());
    let mut worst = 0.0f64;
    let mut k = 0;
    for (s, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let orig = mlp(model).params_mut()[s][i];
            mlp(model).params_mut()[s][i] = orig + FD_STEP;
            let up = loss(model);
            mlp(model).params_mut()[s][i] = orig - FD_STEP;
            let down = loss(model);
            mlp(model).params_mut()[s][i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[k];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4));
            k += 1;
        }
    }
    worst
}

pub fn discriminator_grad_err(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Discriminator::with_dims(4, 4, &[6, 6], &mut rng).unwrap();
    let samples: Vec<AlignmentSample> = (0..8)
        .map(|i| {
            let v = VisualFeatures(rand_vec(&mut rng, 4));
            let s_true = AudioFeatures(rand_vec(&mut rng, 4));
            let s_used = if i % 2 == 0 { s_true.clone() } else { AudioFeatures(rand_vec(&mut rng, 4)) };
            AlignmentSample { v, s_used, s_true, z: i % 2 == 0 }
        })
        .collect();
    let batch = AlignmentBatch::from_samples(samples);
    let (_, grads) = alignment_loss(&batch, &d).unwrap();
    max_rel_err(&mut d, |d| d.mlp_mut(), |d| alignment_loss(&batch, d).unwrap().0, &flat(&grads))
}

fn toy_ppo_batch(rng: &mut ChaCha8Rng, policy: &PolicyModel, spread: f64) -> PpoBatch {
    let n = 12;
    let features = Matrix::from_vec(n, 4, rand_vec(rng, n * 4)).unwrap();
    let feats: Vec<VisualFeatures> = (0..n).map(|r| VisualFeatures(features.row(r).to_vec())).collect();
    let out = policy.forward(&feats.iter().collect::<Vec<_>>()).unwrap();
    let actions: Vec<Action> = (0..n).map(|i| Action(i % 3)).collect();
    let old_log_probs = (0..n)
        .map(|r| log_softmax(out.logits.row(r)).unwrap()[actions[r].0] + rng.gen_range(-spread..spread))
        .collect();
    PpoBatch {
        features,
        actions,
        old_log_probs,
        advantages: rand_vec(rng, n),
        returns: rand_vec(rng, n),
    }
}

/// Worst error over trunk, policy head and value head, plus the clip
/// fraction of the toy batch. A small `spread` keeps every ratio inside the
/// clip range; a large one pushes some outside.
pub fn ppo_grad_err(seed: u64, spread: f64) -> (f64, f64) {
    let cfg = PpoConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = PolicyModel::with_hidden(4, 5, 3, &mut rng).unwrap();
    // Undo the small head init so the logits respond to the trunk.
    policy.parts_mut()[1].scale_last_layer(100.0);
    let batch = toy_ppo_batch(&mut rng, &policy, spread);
    let (losses, grads) = ppo_objective(&policy, &batch, &cfg).unwrap();
    let total = |p: &PolicyModel| ppo_objective(p, &batch, &cfg).unwrap().0.total;
    let mut worst = 0.0f64;
    for (part, g) in [&grads.trunk, &grads.pi, &grads.vf].into_iter().enumerate() {
        worst = worst.max(max_rel_err(&mut policy, |p| p.parts_mut()[part], total, &flat(g)));
    }
    (worst, losses.clip_fraction)
}

pub fn forward_model_grad_err(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fm = ForwardModel::new(3, 2, 3, 6, false, &mut rng);
    let xs: Vec<Vec<f64>> = (0..6).map(|_| rand_vec(&mut rng, 5)).collect();
    let ys: Vec<Vec<f64>> = (0..6).map(|_| rand_vec(&mut rng, 5)).collect();
    let items: Vec<(&[f64], Action, &[f64])> = (0..6).map(|i| (&xs[i][..], Action(i % 3), &ys[i][..])).collect();
    let (_, grads) = fm.loss_and_grads(&items).unwrap();
    max_rel_err(&mut fm, |f| f.mlp_mut(), |f| f.loss_and_grads(&items).unwrap().0, &flat(&grads))
}

pub fn rnd_grad_err(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let acts = [Activation::Relu, Activation::Identity];
    let target = Mlp::init(&[4, 8, 3], &acts, &mut rng).unwrap();
    let predictor = Mlp::init(&[4, 8, 3], &acts, &mut rng).unwrap();
    let mut pair = RndPair::from_parts(target, predictor).unwrap();
    let xs: Vec<Vec<f64>> = (0..5).map(|_| rand_vec(&mut rng, 4)).collect();
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let (_, grads) = pair.loss_and_grads(&refs).unwrap();
    max_rel_err(&mut pair, |p| p.predictor_mut(), |p| p.loss_and_grads(&refs).unwrap().0, &flat(&grads))
}

/// |X_k| for k < n/2 of `x` zero-padded to `n`, summed directly.
pub fn naive_magnitudes(x: &[f64], n: usize) -> Vec<f64> {
    let (cos, sin): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|j| {
            let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            (th.cos(), th.sin())
        })
        .unzip();
    (0..n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &s) in x.iter().enumerate() {
                let j = (k * t) % n;
                re += s * cos[j];
                im -= s * sin[j];
            }
            re.hypot(im)
        })
        .collect()
}

/// Worst error of spectrum and pooled features against the direct DFT over
/// `count` random signals, relative to each signal's amplitude.
pub fn fft_oracle_err(count: usize, seed: u64) -> f64 {
    let f = AudioFeaturizer::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for i in 0..count {
        let scale = [1.0, 0.01, 100.0][i % 3];
        let x: Vec<f64> = (0..AUDIO_SAMPLES).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        let naive = naive_magnitudes(&x, f.fft_len());
        let fast = f.magnitude_spectrum(&x).unwrap();
        let pooled: Vec<f64> = naive.chunks(f.pool()).map(|w| w.iter().copied().fold(0.0, f64::max)).collect();
        let feats = featurize_audio(&x).unwrap();
        assert_eq!(feats.0.len(), pooled.len());
        for (a, b) in fast.iter().zip(&naive).chain(feats.0.iter().zip(&pooled)) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    worst
}

/// Two-armed bandit: arm 0 pays intrinsic reward 1, arm 1 pays 0. Returns
/// the number of PPO updates until P(arm 0) > 0.95 (or `max`) and the final
/// probability.
pub fn bandit(seed: u64, max: usize) -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = PolicyModel::new(512, 2, &mut rng).unwrap();
    let feature = VisualFeatures((0..512).map(|i| ((i % 7) as f64 - 3.0) / 3.0).collect());
    let cfg = PpoConfig::default();
    let prob = |p: &PolicyModel| log_softmax(p.forward(&[&feature]).unwrap().logits.row(0)).unwrap()[0].exp();
    let mut updates = 0;
    while prob(&policy) <= 0.95 && updates < max {
        let out = policy.forward(&[&feature]).unwrap();
        let mut seg = EnvSegment::default();
        for _ in 0..128 {
            let (a, lp) = sample_action(out.logits.row(0), &mut rng).unwrap();
            seg.features.push(feature.clone());
            seg.actions.push(a);
            seg.log_probs.push(lp);
            seg.values.push(out.values[0]);
            seg.rewards.push(if a.0 == 0 { 1.0 } else { 0.0 });
            seg.dones.push(true);
        }
        seg.raw_rewards = seg.rewards.clone();
        ppo_update(&mut policy, &RolloutBuffer { segments: vec![seg] }, &cfg, &mut rng).unwrap();
        updates += 1;
    }
    (updates, prob(&policy))
}
