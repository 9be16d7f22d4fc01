use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{AudioFeatures, FEATURE_DIM};
use crate::envs::AUDIO_SAMPLES;
use crate::error::{shape_err, Result};

/// Magnitude spectrum of zero-padded audio, max-pooled down to 512 values.
#[derive(Clone)]
pub struct AudioFeaturizer {
    input_len: usize,
    fft_len: usize,
    pool: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for AudioFeaturizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AudioFeaturizer")
            .field("input_len", &self.input_len)
            .field("fft_len", &self.fft_len)
            .field("pool", &self.pool)
            .finish()
    }
}

impl Default for AudioFeaturizer {
    fn default() -> Self {
        Self::new(AUDIO_SAMPLES)
    }
}

impl AudioFeaturizer {
    /// Pads to the next power of two and picks the pooling window so the
    /// non-redundant half of the spectrum tiles exactly into 512 windows.
    pub fn new(input_len: usize) -> Self {
        let fft_len = input_len.max(2 * FEATURE_DIM).next_power_of_two();
        let pool = fft_len / 2 / FEATURE_DIM;
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        Self {
            input_len,
            fft_len,
            pool,
            fft,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    pub fn pool(&self) -> usize {
        self.pool
    }

    /// |X_k| for k in 0..fft_len/2.
    pub fn magnitude_spectrum(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.input_len {
            return shape_err(format!("audio needs {} samples, got {}", self.input_len, samples.len()));
        }
        let mut buf: Vec<Complex64> = samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        buf.resize(self.fft_len, Complex64::new(0.0, 0.0));
        self.fft.process(&mut buf);
        Ok(buf[..self.fft_len / 2].iter().map(|c| c.norm()).collect())
    }

    pub fn featurize(&self, samples: &[f64]) -> Result<AudioFeatures> {
        let mags = self.magnitude_spectrum(samples)?;
        let pooled = mags
            .chunks(self.pool)
            .map(|w| w.iter().copied().fold(0.0, f64::max))
            .collect();
        Ok(AudioFeatures(pooled))
    }
}

pub fn featurize_audio(samples: &[f64]) -> Result<AudioFeatures> {
    AudioFeaturizer::default().featurize(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry() {
        let f = AudioFeaturizer::default();
        assert_eq!((f.fft_len(), f.pool()), (4096, 4));
    }

    #[test]
    fn silence_maps_to_zero() {
        let out = featurize_audio(&vec![0.0; AUDIO_SAMPLES]).unwrap();
        assert_eq!(out.0.len(), FEATURE_DIM);
        assert!(out.0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn wrong_length_fails() {
        assert!(featurize_audio(&[0.0; 100]).is_err());
    }

    #[test]
    fn bin_centre_tone_lands_in_its_window() {
        let bin = 301;
        let x: Vec<f64> = (0..AUDIO_SAMPLES)
            .map(|n| (std::f64::consts::TAU * bin as f64 * n as f64 / 4096.0).sin())
            .collect();
        let feats = featurize_audio(&x).unwrap().0;
        let argmax = (0..FEATURE_DIM).max_by(|&a, &b| feats[a].total_cmp(&feats[b])).unwrap();
        assert_eq!(argmax, bin / 4);
    }
}
