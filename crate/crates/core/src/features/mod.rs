//! Observation featurization: fixed random CNN embeddings of the frame stack
//! and max-pooled FFT magnitudes of the audio.

mod audio;
mod visual;

use rand::Rng;
use rand_distr::{Distribution, Normal};

pub use audio::{featurize_audio, AudioFeaturizer};
pub use visual::{embed_visual, CachedEmbedder, VisualEmbedder};

use crate::envs::{ObservationRecord, StateId};
use crate::error::{contract_err, Result};

pub const FEATURE_DIM: usize = 512;

/// Visual embedding `v`. The only feature type the policy accepts.
#[derive(Clone, Debug, PartialEq)]
pub struct VisualFeatures(pub Vec<f64>);

/// Audio feature `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioFeatures(pub Vec<f64>);

impl VisualFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl AudioFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePair {
    pub v: VisualFeatures,
    pub s: AudioFeatures,
    pub state_id: StateId,
    pub timestep: u64,
}

impl FeaturePair {
    pub fn is_finite(&self) -> bool {
        self.v.0.iter().chain(&self.s.0).all(|x| x.is_finite())
    }
}

/// Visual and audio featurizers bundled together.
#[derive(Clone, Debug)]
pub struct Featurizer {
    pub visual: CachedEmbedder,
    pub audio: AudioFeaturizer,
}

impl Featurizer {
    pub fn new(seed: u64, cache_capacity: usize) -> Self {
        Self {
            visual: CachedEmbedder::new(VisualEmbedder::new(seed), cache_capacity),
            audio: AudioFeaturizer::default(),
        }
    }

    pub fn featurize(&mut self, obs: &ObservationRecord) -> Result<(VisualFeatures, AudioFeatures)> {
        Ok((self.visual.embed(obs)?, self.audio.featurize(obs.audio())?))
    }
}

/// Adds i.i.d. N(0, σ²) noise to every element.
pub fn add_feature_noise<R: Rng + ?Sized>(x: &[f64], sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return contract_err(format!("noise scale must be non-negative, got {sigma}"));
    }
    if sigma == 0.0 {
        return Ok(x.to_vec());
    }
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    Ok(x.iter().map(|v| v + normal.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_sigma_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = vec![1.0, -2.0, 3.5];
        assert_eq!(add_feature_noise(&x, 0.0, &mut rng).unwrap(), x);
        assert!(add_feature_noise(&x, -1.0, &mut rng).is_err());
    }

    #[test]
    fn unit_noise_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = vec![2.0; 1_000_000];
        let y = add_feature_noise(&x, 1.0, &mut rng).unwrap();
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - 1.0).abs() < 0.01, "{std}");
        assert!((mean - 2.0).abs() < 0.01, "{mean}");
    }
}
