use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use she_core::agent::{log_softmax, normalize_advantages, sample_action};
use she_core::alignment::{build_alignment_batch, discriminator_forward, Discriminator, CLAMP_EPS};
use she_core::envs::{Action, EnvConfig, Environment, GridEnv, StateId, AUDIO_SAMPLES};
use she_core::features::{featurize_audio, AudioFeatures, FeaturePair, VisualFeatures};
use she_core::harness::CoverageTracker;
use she_core::numeric::{adam_step, AdamState, Checkpoint, Matrix};
use she_core::rewards::{she_reward, RewardNormalizer};

fn vec_of(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_matches_triple_loop(
        (r, k, c) in (1usize..6, 1usize..40, 1usize..6),
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..r * k).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..k * c).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let m = Matrix::from_vec(r, k, a.clone()).unwrap().matmul(&Matrix::from_vec(k, c, b.clone()).unwrap()).unwrap();
        for i in 0..r {
            for j in 0..c {
                let want: f64 = (0..k).map(|t| a[i * k + t] * b[t * c + j]).sum();
                prop_assert!((m.get(i, j) - want).abs() < 1e-9);
            }
        }
        prop_assert!(m.is_finite());
    }

    #[test]
    fn audio_features_are_positively_homogeneous(x in vec_of(AUDIO_SAMPLES, -1.0, 1.0), alpha in 0.0f64..50.0) {
        let base = featurize_audio(&x).unwrap();
        let scaled: Vec<f64> = x.iter().map(|s| alpha * s).collect();
        let out = featurize_audio(&scaled).unwrap();
        prop_assert_eq!(out.0.len(), 512);
        for (a, b) in out.0.iter().zip(&base.0) {
            prop_assert!((a - alpha * b).abs() <= 1e-9 * (1.0 + alpha * b));
        }
    }

    #[test]
    fn discriminator_output_stays_clamped(v in vec_of(512, -1e6, 1e6), s in vec_of(512, -1e6, 1e6), seed in 0u64..4) {
        let d = Discriminator::new(&mut ChaCha8Rng::seed_from_u64(seed));
        let p = discriminator_forward(&d, &VisualFeatures(v), &AudioFeatures(s)).unwrap();
        prop_assert!((CLAMP_EPS..=1.0 - CLAMP_EPS).contains(&p));
        let r = she_reward(p).unwrap();
        prop_assert!(r.is_finite() && r >= 0.0);
    }

    #[test]
    fn alignment_batches_respect_labels_and_weights(
        lens in prop::collection::vec(2usize..20, 1..4),
        levels in 1usize..4,
        seed in any::<u64>(),
    ) {
        let trajs: Vec<Vec<FeaturePair>> = lens
            .iter()
            .enumerate()
            .map(|(e, &n)| {
                (0..n)
                    .map(|t| FeaturePair {
                        v: VisualFeatures(vec![(e * 100 + t) as f64; 512]),
                        s: AudioFeatures(vec![(t % levels) as f64; 512]),
                        state_id: StateId(t),
                        timestep: t as u64,
                    })
                    .collect()
            })
            .collect();
        let batch = build_alignment_batch(&trajs, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(batch.len(), lens.iter().sum::<usize>());
        let mut neg = Vec::new();
        for (smp, &w) in batch.samples.iter().zip(&batch.weights) {
            if smp.z {
                prop_assert_eq!(&smp.s_used, &smp.s_true);
                prop_assert_eq!(w, 1.0);
            } else {
                // Negative audio comes from the same trajectory as the visual.
                let e = (smp.v.0[0] as usize) / 100;
                prop_assert!(trajs[e].iter().any(|p| p.s == smp.s_used));
                neg.push(w);
            }
        }
        if !neg.is_empty() {
            let mean = neg.iter().sum::<f64>() / neg.len() as f64;
            prop_assert!(neg.iter().all(|&w| w == 0.0) || (mean - 1.0).abs() < 1e-9, "mean weight {}", mean);
        }
    }

    #[test]
    fn normalizer_keeps_signs_and_positive_scale(
        batches in prop::collection::vec(vec_of(8, -5.0, 5.0), 1..6),
    ) {
        let mut norm = RewardNormalizer::new(2, 0.99);
        for b in &batches {
            let out = norm.normalize(b).unwrap();
            prop_assert!(norm.std() > 0.0);
            for (r, n) in b.iter().zip(&out) {
                prop_assert!(r.signum() == n.signum() || *r == 0.0);
            }
        }
    }

    #[test]
    fn coverage_is_monotone_and_counts_sum_to_steps(visits in prop::collection::vec(0usize..20, 1..200), horizon in 1usize..10) {
        let mut cov = CoverageTracker::new(20, horizon);
        let mut last = 0;
        for (i, &s) in visits.iter().enumerate() {
            cov.record(StateId(s)).unwrap();
            prop_assert!(cov.unique() >= last);
            last = cov.unique();
            if (i + 1) % horizon == 0 {
                cov.end_episode();
            }
        }
        prop_assert_eq!(cov.counts().iter().sum::<u64>(), cov.steps());
        prop_assert!(cov.per_episode().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn action_distribution_is_normalised(logits in vec_of(6, -30.0, 30.0), seed in any::<u64>()) {
        let lp = log_softmax(&logits).unwrap();
        let total: f64 = lp.iter().map(|l| l.exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let (a, logp) = sample_action(&logits, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(a.0 < 6);
        prop_assert_eq!(logp, lp[a.0]);
    }

    #[test]
    fn advantage_normalisation_is_scale_free(adv in vec_of(16, -4.0, 4.0), scale in 0.01f64..100.0) {
        let a = normalize_advantages(&adv);
        let b = normalize_advantages(&adv.iter().map(|x| x * scale).collect::<Vec<_>>());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-6 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn adam_counts_steps_and_stays_finite(g in vec_of(5, -1e3, 1e3), steps in 1u64..20) {
        let mut p = [0.5; 5];
        let mut st = AdamState::new(&[5]);
        for k in 1..=steps {
            adam_step(&mut [&mut p[..]], &[&g[..]], &mut st, 1e-3).unwrap();
            prop_assert_eq!(st.step(), k);
        }
        prop_assert!(p.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn checkpoint_vectors_round_trip_bit_exact(v in prop::collection::vec(any::<f64>(), 0..64)) {
        let mut ck = Checkpoint::new();
        ck.push_vector("v", v.clone());
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        let got = back.vector("v").unwrap();
        prop_assert_eq!(got.len(), v.len());
        prop_assert!(got.iter().zip(&v).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn agent_stays_on_open_cells(actions in prop::collection::vec(0usize..3, 1..120), seed in any::<u64>()) {
        let mut env = GridEnv::new(EnvConfig::acoustic_grid(), seed).unwrap();
        env.reset();
        for a in actions {
            let step = env.step(Action(a)).unwrap();
            let st = env.state();
            prop_assert!(env.map().kind(st.cell).is_open());
            prop_assert!(step.agent().state_id.0 < 844);
            prop_assert_eq!(step.agent().state_id, env.state_id());
        }
    }

    #[test]
    fn chime_world_obs_are_in_range(actions in prop::collection::vec(0usize..6, 1..60), seed in any::<u64>()) {
        let mut env = GridEnv::new(EnvConfig::chime_world(), seed).unwrap();
        env.reset();
        for a in actions {
            let (agent, _) = env.step(Action(a)).unwrap().into_parts();
            prop_assert_eq!(agent.observation.audio().len(), AUDIO_SAMPLES);
            prop_assert!(agent.observation.audio().iter().all(|s| s.is_finite()));
        }
    }
}
