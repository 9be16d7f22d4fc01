//! Learned predictors behind the prediction-error baselines.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::envs::Action;
use crate::error::{shape_err, Error, Result};
use crate::numeric::{Activation, AdamState, DenseLayer, Matrix, Mlp, MlpGrads};

pub const FORWARD_HIDDEN: usize = 256;
pub const RND_HIDDEN: usize = 256;
pub const RND_OUT: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub minibatch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            epochs: 3,
            minibatch: 256,
        }
    }
}

/// Sum of squared errors per row, averaged over rows, and its gradient.
pub(crate) fn squared_error_grads(mlp: &Mlp, x: &Matrix, y: &Matrix) -> Result<(f64, MlpGrads)> {
    let (pred, cache) = mlp.forward_cached(x)?;
    if pred.cols() != y.cols() || pred.rows() != y.rows() {
        return shape_err("prediction and target shapes differ");
    }
    let n = x.rows() as f64;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut loss = 0.0;
    for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(y.data()) {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("regression loss".into()));
    }
    let (grads, _) = mlp.backward(&cache, &grad)?;
    Ok((loss, grads))
}

/// Minibatch Adam regression of `mlp` onto rows of `y`. Returns the mean
/// loss of the last epoch.
pub(crate) fn regress<R: Rng + ?Sized>(
    mlp: &mut Mlp,
    adam: &mut AdamState,
    x: &Matrix,
    y: &Matrix,
    cfg: TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut last = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.minibatch.max(1)) {
            let (loss, grads) = squared_error_grads(mlp, &x.select_rows(chunk), &y.select_rows(chunk))?;
            total += loss * chunk.len() as f64;
            mlp.adam_update(&grads, adam, cfg.lr)?;
        }
        last = total / x.rows().max(1) as f64;
    }
    Ok(last)
}

fn row_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Predicts the next feature vector from the current one and the action.
///
/// Inputs are laid out `[visual, onehot(action), audio]`, so a model with
/// `audio_dim == 0` is the visual-only baseline and the audio-visual variant
/// draws identical initial weights for the shared columns.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardModel {
    mlp: Mlp,
    adam: AdamState,
    visual_dim: usize,
    audio_dim: usize,
    num_actions: usize,
    pub train: TrainConfig,
}

impl ForwardModel {
    pub fn new<R: Rng + ?Sized>(
        visual_dim: usize,
        audio_dim: usize,
        num_actions: usize,
        hidden: usize,
        zero_output: bool,
        rng: &mut R,
    ) -> Self {
        let shared = visual_dim + num_actions;
        let limit = (6.0 / (shared + hidden) as f64).sqrt();
        let mut w1 = Matrix::zeros(hidden, shared + audio_dim);
        for r in 0..hidden {
            for c in 0..shared {
                w1.set(r, c, rng.gen_range(-limit..=limit));
            }
        }
        for r in 0..hidden {
            for c in shared..shared + audio_dim {
                w1.set(r, c, rng.gen_range(-limit..=limit));
            }
        }
        let first = DenseLayer::new(w1, vec![0.0; hidden], Activation::Relu).expect("sized above");
        let out_dim = visual_dim + audio_dim;
        let second = if zero_output {
            DenseLayer::zeros(hidden, out_dim, Activation::Identity)
        } else {
            let limit = (6.0 / (hidden + visual_dim) as f64).sqrt();
            let mut w2 = Matrix::zeros(out_dim, hidden);
            for x in w2.data_mut() {
                *x = rng.gen_range(-limit..=limit);
            }
            DenseLayer::new(w2, vec![0.0; out_dim], Activation::Identity).expect("sized above")
        };
        let mlp = Mlp::new(vec![first, second]).expect("chained");
        let adam = AdamState::for_params(&mlp.params());
        Self {
            mlp,
            adam,
            visual_dim,
            audio_dim,
            num_actions,
            train: TrainConfig::default(),
        }
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

    pub(crate) fn set_state(&mut self, mlp: Mlp, adam: AdamState) -> Result<()> {
        self.mlp.copy_from(&mlp)?;
        self.adam = adam;
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.visual_dim + self.audio_dim
    }

    fn input_rows(&self, items: &[(&[f64], Action)]) -> Result<Matrix> {
        let width = self.mlp.input_dim();
        let mut data = Vec::with_capacity(items.len() * width);
        for &(x, a) in items {
            if x.len() != self.feature_dim() || a.0 >= self.num_actions {
                return shape_err(format!(
                    "forward model expects {} features and action < {}, got {} and {}",
                    self.feature_dim(),
                    self.num_actions,
                    x.len(),
                    a.0
                ));
            }
            data.extend_from_slice(&x[..self.visual_dim]);
            data.extend((0..self.num_actions).map(|i| if i == a.0 { 1.0 } else { 0.0 }));
            data.extend_from_slice(&x[self.visual_dim..]);
        }
        Matrix::from_vec(items.len(), width, data)
    }

    fn target_rows(&self, targets: &[&[f64]]) -> Result<Matrix> {
        let mut data = Vec::with_capacity(targets.len() * self.feature_dim());
        for t in targets {
            if t.len() != self.feature_dim() {
                return shape_err("target width differs from feature width");
            }
            data.extend_from_slice(t);
        }
        Matrix::from_vec(targets.len(), self.feature_dim(), data)
    }

    pub fn predict_batch(&self, items: &[(&[f64], Action)]) -> Result<Matrix> {
        self.mlp.forward_batch(&self.input_rows(items)?)
    }

    /// ‖f(x ⊕ a) − x′‖² / dim for each (x, a, x′).
    pub fn rewards(&self, items: &[(&[f64], Action, &[f64])]) -> Result<Vec<f64>> {
        let inputs: Vec<(&[f64], Action)> = items.iter().map(|&(x, a, _)| (x, a)).collect();
        let pred = self.predict_batch(&inputs)?;
        let dim = self.feature_dim() as f64;
        Ok(items
            .iter()
            .enumerate()
            .map(|(r, &(_, _, next))| row_sq_dist(pred.row(r), next) / dim)
            .collect())
    }

    /// Mean over samples of the summed squared error, with its gradient.
    pub fn loss_and_grads(&self, items: &[(&[f64], Action, &[f64])]) -> Result<(f64, MlpGrads)> {
        let inputs: Vec<(&[f64], Action)> = items.iter().map(|&(x, a, _)| (x, a)).collect();
        let targets: Vec<&[f64]> = items.iter().map(|&(_, _, t)| t).collect();
        squared_error_grads(&self.mlp, &self.input_rows(&inputs)?, &self.target_rows(&targets)?)
    }

    pub fn fit<R: Rng + ?Sized>(&mut self, items: &[(&[f64], Action, &[f64])], rng: &mut R) -> Result<f64> {
        if items.is_empty() {
            return Ok(0.0);
        }
        let inputs: Vec<(&[f64], Action)> = items.iter().map(|&(x, a, _)| (x, a)).collect();
        let targets: Vec<&[f64]> = items.iter().map(|&(_, _, t)| t).collect();
        let x = self.input_rows(&inputs)?;
        let y = self.target_rows(&targets)?;
        regress(&mut self.mlp, &mut self.adam, &x, &y, self.train, rng)
    }
}

/// Prediction-error reward for one transition.
pub fn fp_reward(model: &ForwardModel, v_t: &[f64], a_t: Action, v_next: &[f64]) -> Result<f64> {
    Ok(model.rewards(&[(v_t, a_t, v_next)])?[0])
}

/// Bootstrap ensemble of forward models; reward is their disagreement.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    members: Vec<ForwardModel>,
}

impl Ensemble {
    pub fn new<R: Rng + ?Sized>(k: usize, feature_dim: usize, num_actions: usize, rng: &mut R) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("disagreement needs at least 2 members, got {k}")));
        }
        let members = (0..k)
            .map(|_| ForwardModel::new(feature_dim, 0, num_actions, FORWARD_HIDDEN, false, rng))
            .collect();
        Ok(Self { members })
    }

    pub fn from_members(members: Vec<ForwardModel>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::Config("disagreement needs at least 2 members".into()));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[ForwardModel] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [ForwardModel] {
        &mut self.members
    }

    pub fn rewards(&self, items: &[(&[f64], Action)]) -> Result<Vec<f64>> {
        let preds = self
            .members
            .iter()
            .map(|m| m.predict_batch(items))
            .collect::<Result<Vec<_>>>()?;
        Ok(disagreement_of(&preds))
    }

    /// Each member trains on its own bootstrap resample.
    pub fn fit<R: Rng + ?Sized>(&mut self, items: &[(&[f64], Action, &[f64])], rng: &mut R) -> Result<f64> {
        if items.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for m in &mut self.members {
            let sample: Vec<(&[f64], Action, &[f64])> =
                (0..items.len()).map(|_| items[rng.gen_range(0..items.len())]).collect();
            total += m.fit(&sample, rng)?;
        }
        Ok(total / self.members.len() as f64)
    }
}

/// Mean over dimensions of the population variance across predictions.
pub(crate) fn disagreement_of(preds: &[Matrix]) -> Vec<f64> {
    let k = preds.len() as f64;
    let (rows, cols) = (preds[0].rows(), preds[0].cols());
    (0..rows)
        .map(|r| {
            let mut total = 0.0;
            for c in 0..cols {
                let mean = preds.iter().map(|p| p.get(r, c)).sum::<f64>() / k;
                total += preds.iter().map(|p| (p.get(r, c) - mean).powi(2)).sum::<f64>() / k;
            }
            total / cols as f64
        })
        .collect()
}

pub fn disagreement_reward(ensemble: &Ensemble, v_t: &[f64], a_t: Action) -> Result<f64> {
    Ok(ensemble.rewards(&[(v_t, a_t)])?[0])
}

/// Random network distillation: a frozen random target and a trained predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct RndPair {
    target: Mlp,
    predictor: Mlp,
    adam: AdamState,
    pub train: TrainConfig,
}

impl RndPair {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, rng: &mut R) -> Self {
        let sizes = [input_dim, RND_HIDDEN, RND_OUT];
        let acts = [Activation::Relu, Activation::Identity];
        let target = Mlp::init(&sizes, &acts, rng).expect("valid sizes");
        let predictor = Mlp::init(&sizes, &acts, rng).expect("valid sizes");
        let adam = AdamState::for_params(&predictor.params());
        Self {
            target,
            predictor,
            adam,
            train: TrainConfig::default(),
        }
    }

    pub fn from_parts(target: Mlp, predictor: Mlp) -> Result<Self> {
        if target.input_dim() != predictor.input_dim() || target.output_dim() != predictor.output_dim() {
            return shape_err("target and predictor shapes differ");
        }
        let adam = AdamState::for_params(&predictor.params());
        Ok(Self {
            target,
            predictor,
            adam,
            train: TrainConfig::default(),
        })
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn predictor(&self) -> &Mlp {
        &self.predictor
    }

    pub fn predictor_mut(&mut self) -> &mut Mlp {
        &mut self.predictor
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub(crate) fn set_state(&mut self, predictor: Mlp, adam: AdamState) -> Result<()> {
        self.predictor.copy_from(&predictor)?;
        self.adam = adam;
        Ok(())
    }

    fn rows(&self, xs: &[&[f64]]) -> Result<Matrix> {
        let d = self.target.input_dim();
        let mut data = Vec::with_capacity(xs.len() * d);
        for x in xs {
            if x.len() != d {
                return shape_err(format!("RND expects {d} features, got {}", x.len()));
            }
            data.extend_from_slice(x);
        }
        Matrix::from_vec(xs.len(), d, data)
    }

    pub fn rewards(&self, xs: &[&[f64]]) -> Result<Vec<f64>> {
        let x = self.rows(xs)?;
        let (p, t) = (self.predictor.forward_batch(&x)?, self.target.forward_batch(&x)?);
        let d = t.cols() as f64;
        Ok((0..x.rows()).map(|r| row_sq_dist(p.row(r), t.row(r)) / d).collect())
    }

    pub fn loss_and_grads(&self, xs: &[&[f64]]) -> Result<(f64, MlpGrads)> {
        let x = self.rows(xs)?;
        let y = self.target.forward_batch(&x)?;
        squared_error_grads(&self.predictor, &x, &y)
    }

    pub fn fit<R: Rng + ?Sized>(&mut self, xs: &[&[f64]], rng: &mut R) -> Result<f64> {
        if xs.is_empty() {
            return Ok(0.0);
        }
        let x = self.rows(xs)?;
        let y = self.target.forward_batch(&x)?;
        regress(&mut self.predictor, &mut self.adam, &x, &y, self.train, rng)
    }
}

pub fn rnd_reward(pair: &RndPair, v: &[f64]) -> Result<f64> {
    Ok(pair.rewards(&[v])?[0])
}
