use std::sync::Arc;

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use crate::error::{shape_err, Error, Result};

pub const FRAME_SIDE: usize = 84;
pub const FRAME_PIXELS: usize = FRAME_SIDE * FRAME_SIDE;
pub const FRAME_STACK: usize = 4;
pub const SAMPLES_PER_SUBSTEP: usize = 530;
pub const AUDIO_SAMPLES: usize = SAMPLES_PER_SUBSTEP * FRAME_STACK;

/// One 84×84 grayscale image with values in [0, 1]. Cheap to clone.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pixels: Arc<[f64]>,
    key: u64,
}

impl Frame {
    pub fn new(pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != FRAME_PIXELS {
            return shape_err(format!("frame needs {FRAME_PIXELS} pixels, got {}", pixels.len()));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Contract("frame pixels must lie in [0, 1]".into()));
        }
        let key = content_key(&pixels);
        Ok(Self {
            pixels: pixels.into(),
            key,
        })
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// Content hash; equal frames have equal keys.
    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn pixel(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * FRAME_SIDE + x]
    }
}

fn content_key(values: &[f64]) -> u64 {
    let mut hasher = DefaultHasher::new();
    for v in values {
        hasher.write_u64(v.to_bits());
    }
    hasher.finish()
}

/// One agent timestep before featurization: the four most recent frames
/// (oldest first) and the raw audio heard during the step.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationRecord {
    frames: [Frame; FRAME_STACK],
    audio: Vec<f64>,
}

impl ObservationRecord {
    pub fn new(frames: [Frame; FRAME_STACK], audio: Vec<f64>) -> Result<Self> {
        if audio.len() != AUDIO_SAMPLES {
            return shape_err(format!("audio needs {AUDIO_SAMPLES} samples, got {}", audio.len()));
        }
        if audio.iter().any(|s| !(-1.0..=1.0).contains(s)) {
            return Err(Error::Contract("audio samples must lie in [-1, 1]".into()));
        }
        Ok(Self { frames, audio })
    }

    pub fn frames(&self) -> &[Frame; FRAME_STACK] {
        &self.frames
    }

    pub fn audio(&self) -> &[f64] {
        &self.audio
    }

    /// Key identifying the frame stack contents.
    pub fn stack_key(&self) -> [u64; FRAME_STACK] {
        [
            self.frames[0].key(),
            self.frames[1].key(),
            self.frames[2].key(),
            self.frames[3].key(),
        ]
    }

    /// Frames interleaved as an 84×84×4 grid (channel-minor).
    pub fn frames_hwc(&self) -> Vec<f64> {
        let mut out = vec![0.0; FRAME_PIXELS * FRAME_STACK];
        for (c, frame) in self.frames.iter().enumerate() {
            for (i, &p) in frame.pixels().iter().enumerate() {
                out[i * FRAME_STACK + c] = p;
            }
        }
        out
    }

    /// Raw audio and frames in a single byte string, for determinism checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(8 * (FRAME_PIXELS * FRAME_STACK + AUDIO_SAMPLES));
        for f in &self.frames {
            for p in f.pixels() {
                bytes.extend_from_slice(&p.to_le_bytes());
            }
        }
        for s in &self.audio {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
        bytes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_shapes_and_ranges() {
        assert!(Frame::new(vec![0.0; 10]).is_err());
        assert!(Frame::new(vec![1.5; FRAME_PIXELS]).is_err());
        let f = Frame::new(vec![0.25; FRAME_PIXELS]).unwrap();
        let frames = [f.clone(), f.clone(), f.clone(), f];
        assert!(ObservationRecord::new(frames.clone(), vec![0.0; 5]).is_err());
        assert!(ObservationRecord::new(frames.clone(), vec![2.0; AUDIO_SAMPLES]).is_err());
        assert!(ObservationRecord::new(frames, vec![0.0; AUDIO_SAMPLES]).is_ok());
    }

    #[test]
    fn keys_follow_content() {
        let a = Frame::new(vec![0.25; FRAME_PIXELS]).unwrap();
        let b = Frame::new(vec![0.25; FRAME_PIXELS]).unwrap();
        let mut px = vec![0.25; FRAME_PIXELS];
        px[100] = 0.5;
        let c = Frame::new(px).unwrap();
        assert_eq!(a.key(), b.key());
        assert_ne!(a.key(), c.key());
    }
}
