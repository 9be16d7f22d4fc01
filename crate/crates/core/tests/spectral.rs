//! Audio features against a direct O(n²) DFT.

mod common;

use she_core::envs::AUDIO_SAMPLES;
use she_core::features::{featurize_audio, FEATURE_DIM};

#[test]
fn hundred_random_signals_match_direct_dft() {
    let worst = common::fft_oracle_err(100, 11);
    assert!(worst < 1e-9, "worst magnitude error {worst}");
}

#[test]
fn impulse_has_flat_spectrum() {
    let mut x = vec![0.0; AUDIO_SAMPLES];
    x[37] = 2.5;
    let feats = featurize_audio(&x).unwrap();
    assert_eq!(feats.0.len(), FEATURE_DIM);
    assert!(feats.0.iter().all(|&m| (m - 2.5).abs() < 1e-12));
}

#[test]
fn bin_centre_tone_peaks_in_its_window() {
    let (n, k) = (4096.0, 300.0);
    let x: Vec<f64> = (0..AUDIO_SAMPLES).map(|t| (2.0 * std::f64::consts::PI * k * t as f64 / n).sin()).collect();
    let feats = featurize_audio(&x).unwrap();
    let argmax = feats.0.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(argmax, 300 / 4);
}
