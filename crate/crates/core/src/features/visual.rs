use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{VisualFeatures, FEATURE_DIM};
use crate::envs::{ObservationRecord, FRAME_SIDE, FRAME_STACK};
use crate::error::{shape_err, Result};
use crate::numeric::{Conv2d, Grid3, Matrix};

/// Fixed random CNN: 8×8/4 → 4×4/2 → 3×3/1 convolutions with ReLU, then a
/// fixed linear projection to 512. Nothing here is ever trained.
#[derive(Clone, Debug, PartialEq)]
pub struct VisualEmbedder {
    seed: u64,
    convs: [Conv2d; 3],
    projection: Matrix,
}

impl VisualEmbedder {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let convs = [
            Conv2d::init_random(8, FRAME_STACK, 32, 4, &mut rng),
            Conv2d::init_random(4, 32, 64, 2, &mut rng),
            Conv2d::init_random(3, 64, 64, 1, &mut rng),
        ];
        let flat = Self::flat_dim_of(&convs);
        let limit = (3.0 / flat as f64).sqrt();
        let data = (0..FEATURE_DIM * flat).map(|_| rng.gen_range(-limit..=limit)).collect();
        Self {
            seed,
            projection: Matrix::from_vec(FEATURE_DIM, flat, data).expect("sized above"),
            convs,
        }
    }

    fn flat_dim_of(convs: &[Conv2d; 3]) -> usize {
        let (mut h, mut w) = (FRAME_SIDE, FRAME_SIDE);
        for c in convs {
            (h, w) = c.output_dims(h, w).expect("84×84 input fits every kernel");
        }
        h * w * convs[2].out_channels()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn flat_dim(&self) -> usize {
        self.projection.cols()
    }

    fn conv_trunk(&self, grid: &Grid3) -> Result<Vec<f64>> {
        if (grid.height(), grid.width(), grid.channels()) != (FRAME_SIDE, FRAME_SIDE, FRAME_STACK) {
            return shape_err(format!(
                "visual input must be {FRAME_SIDE}x{FRAME_SIDE}x{FRAME_STACK}, got {}x{}x{}",
                grid.height(),
                grid.width(),
                grid.channels()
            ));
        }
        let mut x = self.convs[0].forward(grid)?;
        relu(&mut x);
        for conv in &self.convs[1..] {
            x = conv.forward(&x)?;
            relu(&mut x);
        }
        Ok(x.into_vec())
    }

    /// Embeds an 84×84×4 channel-minor grid.
    pub fn embed_grid(&self, grid: &Grid3) -> Result<VisualFeatures> {
        let flat = Matrix::from_vec(1, self.flat_dim(), self.conv_trunk(grid)?)?;
        let out = flat.matmul_transposed(&self.projection)?;
        Ok(VisualFeatures(out.into_vec()))
    }

    pub fn embed(&self, obs: &ObservationRecord) -> Result<VisualFeatures> {
        self.embed_batch(&[obs]).map(|mut v| v.pop().expect("one input"))
    }

    /// Embeds several observations, sharing one pass over the projection.
    pub fn embed_batch(&self, batch: &[&ObservationRecord]) -> Result<Vec<VisualFeatures>> {
        let mut flat = Vec::with_capacity(batch.len() * self.flat_dim());
        for obs in batch {
            let grid = Grid3::new(FRAME_SIDE, FRAME_SIDE, FRAME_STACK, obs.frames_hwc())?;
            flat.extend(self.conv_trunk(&grid)?);
        }
        let flat = Matrix::from_vec(batch.len(), self.flat_dim(), flat)?;
        let out = flat.matmul_transposed(&self.projection)?;
        Ok((0..batch.len()).map(|r| VisualFeatures(out.row(r).to_vec())).collect())
    }
}

fn relu(g: &mut Grid3) {
    g.data_mut().iter_mut().for_each(|x| *x = x.max(0.0));
}

pub fn embed_visual(obs: &ObservationRecord, embedder: &VisualEmbedder) -> Result<VisualFeatures> {
    embedder.embed(obs)
}

/// Memoizes embeddings by frame-stack content. Cleared wholesale when full.
#[derive(Clone, Debug)]
pub struct CachedEmbedder {
    embedder: VisualEmbedder,
    cache: HashMap<[u64; FRAME_STACK], VisualFeatures>,
    capacity: usize,
    hits: u64,
    misses: u64,
}

impl CachedEmbedder {
    pub fn new(embedder: VisualEmbedder, capacity: usize) -> Self {
        Self {
            embedder,
            cache: HashMap::new(),
            capacity,
            hits: 0,
            misses: 0,
        }
    }

    pub fn embedder(&self) -> &VisualEmbedder {
        &self.embedder
    }

    pub fn embed(&mut self, obs: &ObservationRecord) -> Result<VisualFeatures> {
        let key = obs.stack_key();
        if let Some(v) = self.cache.get(&key) {
            self.hits += 1;
            return Ok(v.clone());
        }
        self.misses += 1;
        let v = self.embedder.embed(obs)?;
        if self.capacity > 0 {
            if self.cache.len() >= self.capacity {
                self.cache.clear();
            }
            self.cache.insert(key, v.clone());
        }
        Ok(v)
    }

    pub fn embed_batch(&mut self, batch: &[&ObservationRecord]) -> Result<Vec<VisualFeatures>> {
        let mut out: Vec<Option<VisualFeatures>> = Vec::with_capacity(batch.len());
        let mut missing = Vec::new();
        for (i, obs) in batch.iter().enumerate() {
            match self.cache.get(&obs.stack_key()) {
                Some(v) => {
                    self.hits += 1;
                    out.push(Some(v.clone()));
                }
                None => {
                    out.push(None);
                    missing.push(i);
                }
            }
        }
        if !missing.is_empty() {
            self.misses += missing.len() as u64;
            let todo: Vec<&ObservationRecord> = missing.iter().map(|&i| batch[i]).collect();
            let fresh = self.embedder.embed_batch(&todo)?;
            for (&i, v) in missing.iter().zip(fresh) {
                if self.capacity > 0 {
                    if self.cache.len() >= self.capacity {
                        self.cache.clear();
                    }
                    self.cache.insert(batch[i].stack_key(), v.clone());
                }
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled")).collect())
    }

    /// (hits, misses) since construction.
    pub fn stats(&self) -> (u64, u64) {
        (self.hits, self.misses)
    }
}
