use rand::Rng;

use crate::envs::Action;
use crate::error::{contract_err, shape_err, Error, Result};
use crate::features::VisualFeatures;
use crate::numeric::{Activation, AdamState, Checkpoint, Matrix, Mlp, MlpCache, MlpGrads};

pub const POLICY_HIDDEN: usize = 256;

/// Categorical policy and value head on a shared trunk. The only input is
/// the visual embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyModel {
    trunk: Mlp,
    pi: Mlp,
    vf: Mlp,
    adam: [AdamState; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub logits: Matrix,
    pub values: Vec<f64>,
}

/// Parameter gradients of the three parts.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyGrads {
    pub trunk: MlpGrads,
    pub pi: MlpGrads,
    pub vf: MlpGrads,
}

impl PolicyGrads {
    pub fn is_finite(&self) -> bool {
        self.trunk.is_finite() && self.pi.is_finite() && self.vf.is_finite()
    }
}

pub(crate) struct PolicyCache {
    trunk: MlpCache,
    pi: MlpCache,
    vf: MlpCache,
}

impl PolicyModel {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, num_actions: usize, rng: &mut R) -> Result<Self> {
        Self::with_hidden(input_dim, POLICY_HIDDEN, num_actions, rng)
    }

    pub fn with_hidden<R: Rng + ?Sized>(input_dim: usize, hidden: usize, num_actions: usize, rng: &mut R) -> Result<Self> {
        if num_actions < 2 {
            return contract_err("a policy needs at least two actions");
        }
        let trunk = Mlp::init(&[input_dim, hidden, hidden], &[Activation::Relu, Activation::Relu], rng)?;
        let mut pi = Mlp::init(&[hidden, num_actions], &[Activation::Identity], rng)?;
        pi.scale_last_layer(0.01);
        let vf = Mlp::init(&[hidden, 1], &[Activation::Identity], rng)?;
        let adam = [
            AdamState::for_params(&trunk.params()),
            AdamState::for_params(&pi.params()),
            AdamState::for_params(&vf.params()),
        ];
        Ok(Self { trunk, pi, vf, adam })
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn num_actions(&self) -> usize {
        self.pi.output_dim()
    }

    pub fn parts(&self) -> [&Mlp; 3] {
        [&self.trunk, &self.pi, &self.vf]
    }

    pub fn parts_mut(&mut self) -> [&mut Mlp; 3] {
        [&mut self.trunk, &mut self.pi, &mut self.vf]
    }

    pub fn fingerprint(&self) -> u64 {
        self.parts()
            .iter()
            .fold(0x9e37_79b9_7f4a_7c15, |h, m| (h ^ m.fingerprint()).wrapping_mul(0x1000_0000_01b3))
    }

    pub(crate) fn stack(&self, features: &[&VisualFeatures]) -> Result<Matrix> {
        let d = self.input_dim();
        let mut data = Vec::with_capacity(features.len() * d);
        for f in features {
            if f.0.len() != d {
                return shape_err(format!("policy expects {d} features, got {}", f.0.len()));
            }
            data.extend_from_slice(&f.0);
        }
        Matrix::from_vec(features.len(), d, data)
    }

    /// Logits and state values for a batch of visual embeddings.
    pub fn forward(&self, features: &[&VisualFeatures]) -> Result<PolicyOutput> {
        self.forward_matrix(&self.stack(features)?)
    }

    pub(crate) fn forward_matrix(&self, x: &Matrix) -> Result<PolicyOutput> {
        let h = self.trunk.forward_batch(x)?;
        let logits = self.pi.forward_batch(&h)?;
        let values = self.vf.forward_batch(&h)?.into_vec();
        if !logits.is_finite() {
            return Err(Error::NonFinite("policy logits".into()));
        }
        Ok(PolicyOutput { logits, values })
    }

    pub(crate) fn forward_cached(&self, x: &Matrix) -> Result<(PolicyOutput, PolicyCache)> {
        let (h, trunk) = self.trunk.forward_cached(x)?;
        let (logits, pi) = self.pi.forward_cached(&h)?;
        let (values, vf) = self.vf.forward_cached(&h)?;
        Ok((
            PolicyOutput {
                logits,
                values: values.into_vec(),
            },
            PolicyCache { trunk, pi, vf },
        ))
    }

    /// Backprop from logit and value gradients.
    pub(crate) fn backward(&self, cache: &PolicyCache, d_logits: &Matrix, d_values: &[f64]) -> Result<PolicyGrads> {
        let (pi, mut dh) = self.pi.backward(&cache.pi, d_logits)?;
        let dv = Matrix::from_vec(d_values.len(), 1, d_values.to_vec())?;
        let (vf, dh_v) = self.vf.backward(&cache.vf, &dv)?;
        for (a, b) in dh.data_mut().iter_mut().zip(dh_v.data()) {
            *a += b;
        }
        let (trunk, _) = self.trunk.backward(&cache.trunk, &dh)?;
        Ok(PolicyGrads { trunk, pi, vf })
    }

    pub fn apply_grads(&mut self, grads: &PolicyGrads, lr: f64) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite("policy gradient".into()));
        }
        let [a0, a1, a2] = &mut self.adam;
        self.trunk.adam_update(&grads.trunk, a0, lr)?;
        self.pi.adam_update(&grads.pi, a1, lr)?;
        self.vf.adam_update(&grads.vf, a2, lr)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        for ((name, m), a) in ["policy.trunk", "policy.pi", "policy.vf"]
            .into_iter()
            .zip(self.parts())
            .zip(&self.adam)
        {
            ck.push_mlp(name, m);
            ck.push_adam(format!("{name}.adam"), a);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let trunk = ck.mlp("policy.trunk")?.clone();
        let pi = ck.mlp("policy.pi")?.clone();
        let vf = ck.mlp("policy.vf")?.clone();
        if trunk.output_dim() != pi.input_dim() || trunk.output_dim() != vf.input_dim() || vf.output_dim() != 1 {
            return Err(Error::Checkpoint("policy parts do not fit together".into()));
        }
        let adam = [
            ck.adam("policy.trunk.adam")?.clone(),
            ck.adam("policy.pi.adam")?.clone(),
            ck.adam("policy.vf.adam")?.clone(),
        ];
        Ok(Self { trunk, pi, vf, adam })
    }
}

/// `log softmax(logits)`, rejecting non-finite input.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    Ok(logits.iter().map(|z| z - lse).collect())
}

/// Draws from softmax(logits); returns the action and its log-probability.
pub fn sample_action<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> Result<(Action, f64)> {
    if logits.len() < 2 {
        return contract_err("need at least two actions");
    }
    let logp = log_softmax(logits)?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, lp) in logp.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return Ok((Action(i), *lp));
        }
    }
    // Rounding left a sliver above the cumulative sum: take the last action
    // with non-zero mass.
    let i = logp.iter().rposition(|lp| lp.exp() > 0.0).expect("softmax has mass");
    Ok((Action(i), logp[i]))
}
