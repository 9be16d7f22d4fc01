use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use sha2::{Digest, Sha256};

use super::adam::{adam_step, AdamState};
use super::matrix::Matrix;
use crate::error::{contract_err, shape_err, Error, Result};

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed in terms of the pre-activation.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Sigmoid),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Logistic function, stable for large |z|.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One fully connected layer; weights are stored out×in.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    weights: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return shape_err(format!(
                "bias has {} entries but layer has {} outputs",
                bias.len(),
                weights.rows()
            ));
        }
        if !weights.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("layer parameters".into()));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Scaled uniform initialization in ±sqrt(6 / (fan_in + fan_out)), zero bias.
    pub fn init_uniform<R: Rng + ?Sized>(
        input_dim: usize,
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (input_dim + output_dim) as f64).sqrt();
        Self::init_with_limit(input_dim, output_dim, activation, limit, rng)
    }

    pub fn init_with_limit<R: Rng + ?Sized>(
        input_dim: usize,
        output_dim: usize,
        activation: Activation,
        limit: f64,
        rng: &mut R,
    ) -> Self {
        let data = (0..input_dim * output_dim)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        Self {
            weights: Matrix::from_vec(output_dim, input_dim, data).expect("sized above"),
            bias: vec![0.0; output_dim],
            activation,
        }
    }

    pub fn zeros(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Matrix::zeros(output_dim, input_dim),
            bias: vec![0.0; output_dim],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Returns `(pre_activation, output)` for a batch (one sample per row).
    pub fn forward_batch(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        if x.cols() != self.input_dim() {
            return shape_err(format!(
                "layer expects {} inputs, got {}",
                self.input_dim(),
                x.cols()
            ));
        }
        let mut pre = x.matmul_transposed(&self.weights)?;
        for r in 0..pre.rows() {
            for (z, b) in pre.row_mut(r).iter_mut().zip(&self.bias) {
                *z += b;
            }
        }
        let mut out = pre.clone();
        if self.activation != Activation::Identity {
            for z in out.data_mut() {
                *z = self.activation.apply(*z);
            }
        }
        Ok((pre, out))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.forward_batch(&batch)?.1.into_vec())
    }
}

/// `activation(W·x + b)` for a single input vector.
pub fn dense_forward(x: &[f64], layer: &DenseLayer) -> Result<Vec<f64>> {
    layer.forward(x)
}

/// Multi-layer perceptron. Every parameter mutation takes a new stamp so that
/// caches from earlier forward passes can be recognised as stale.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    stamp: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations recorded by [`Mlp::forward_cached`].
#[derive(Clone, Debug)]
pub struct MlpCache {
    stamp: u64,
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
}

/// Gradients shaped like the parameters of an [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.output_dim(), l.input_dim()))
                .collect(),
            biases: mlp.layers.iter().map(|l| vec![0.0; l.output_dim()]).collect(),
        }
    }

    /// Flat views in the same order as [`Mlp::params`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.data(), b.as_slice()])
            .collect()
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            w.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return contract_err("an MLP needs at least one layer");
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return shape_err(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].output_dim(),
                    k + 1,
                    pair[1].input_dim()
                ));
            }
        }
        Ok(Self {
            layers,
            stamp: fresh_stamp(),
        })
    }

    /// Builds an MLP with `sizes.len() - 1` layers using scaled uniform init.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 {
            return contract_err("need n+1 sizes for n activations");
        }
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| DenseLayer::init_uniform(w[0], w[1], act, rng))
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.output_dim() * (l.input_dim() + 1))
            .sum()
    }

    /// Sets every parameter of the last layer to zero.
    pub fn zero_last_layer(&mut self) {
        let last = self.layers.last_mut().expect("non-empty");
        last.weights_mut().data_mut().fill(0.0);
        last.bias_mut().fill(0.0);
        self.stamp = fresh_stamp();
    }

    /// Multiplies the last layer's weights by `factor`.
    pub fn scale_last_layer(&mut self, factor: f64) {
        let last = self.layers.last_mut().expect("non-empty");
        last.weights_mut().data_mut().iter_mut().for_each(|w| *w *= factor);
        self.stamp = fresh_stamp();
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.data(), l.bias.as_slice()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.stamp = fresh_stamp();
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.data_mut(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.forward_batch(&batch)?.into_vec())
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward_batch(&h)?.1;
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (z, out) = layer.forward_batch(&h)?;
            inputs.push(h);
            pre.push(z);
            h = out;
        }
        Ok((
            h,
            MlpCache {
                stamp: self.stamp,
                inputs,
                pre,
            },
        ))
    }

    /// Back-propagates `grad_output` (one row per sample) through the pass that
    /// produced `cache`. Gradients are summed over the batch.
    pub fn backward(&self, cache: &MlpCache, grad_output: &Matrix) -> Result<(MlpGrads, Matrix)> {
        if cache.stamp != self.stamp || cache.pre.len() != self.layers.len() {
            return contract_err("forward cache does not belong to the current parameters");
        }
        let batch = cache.inputs[0].rows();
        if grad_output.rows() != batch || grad_output.cols() != self.output_dim() {
            return shape_err(format!(
                "grad_output is {}x{}, expected {}x{}",
                grad_output.rows(),
                grad_output.cols(),
                batch,
                self.output_dim()
            ));
        }
        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        let mut delta = grad_output.clone();
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            if layer.activation != Activation::Identity {
                for (d, &z) in delta.data_mut().iter_mut().zip(cache.pre[k].data()) {
                    *d *= layer.activation.derivative(z);
                }
            }
            let gw = delta.transposed_matmul(&cache.inputs[k])?;
            let mut gb = vec![0.0; layer.output_dim()];
            for r in 0..delta.rows() {
                for (acc, d) in gb.iter_mut().zip(delta.row(r)) {
                    *acc += d;
                }
            }
            let next = delta.matmul(&layer.weights)?;
            weights.push(gw);
            biases.push(gb);
            delta = next;
        }
        weights.reverse();
        biases.reverse();
        Ok((MlpGrads { weights, biases }, delta))
    }
}

impl Mlp {
    /// One Adam step on all parameters.
    pub fn adam_update(&mut self, grads: &MlpGrads, state: &mut AdamState, lr: f64) -> Result<()> {
        let g = grads.slices();
        let mut p = self.params_mut();
        adam_step(&mut p, &g, state, lr)
    }

    /// Stable digest of every parameter bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        for layer in &self.layers {
            h.update((layer.input_dim() as u64).to_le_bytes());
            h.update((layer.output_dim() as u64).to_le_bytes());
            for x in layer.weights.data().iter().chain(&layer.bias) {
                h.update(x.to_le_bytes());
            }
        }
        u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
    }

    /// Overwrites all parameters with those of `other` (same shapes).
    pub fn copy_from(&mut self, other: &Mlp) -> Result<()> {
        if self.layers.len() != other.layers.len()
            || self
                .layers
                .iter()
                .zip(&other.layers)
                .any(|(a, b)| (a.input_dim(), a.output_dim()) != (b.input_dim(), b.output_dim()))
        {
            return shape_err("cannot copy parameters between differently shaped MLPs");
        }
        self.layers.clone_from(&other.layers);
        self.stamp = fresh_stamp();
        Ok(())
    }
}

/// Free-function form of [`Mlp::backward`].
pub fn mlp_backward(model: &Mlp, cache: &MlpCache, grad_output: &Matrix) -> Result<(MlpGrads, Matrix)> {
    model.backward(cache, grad_output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_forward_examples() {
        let id = DenseLayer::new(Matrix::identity(2), vec![0.0, 0.0], Activation::Identity).unwrap();
        assert_eq!(dense_forward(&[1.0, 2.0], &id).unwrap(), vec![1.0, 2.0]);

        let ones = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let relu = DenseLayer::new(ones, vec![0.0, 0.0], Activation::Relu).unwrap();
        assert_eq!(dense_forward(&[1.0, -1.0], &relu).unwrap(), vec![0.0, 0.0]);

        let sig = DenseLayer::new(Matrix::from_rows(&[vec![2.0]]).unwrap(), vec![-1.0], Activation::Sigmoid).unwrap();
        assert_eq!(dense_forward(&[0.5], &sig).unwrap(), vec![0.5]);
    }

    #[test]
    fn dense_forward_rejects_wrong_width() {
        let layer = DenseLayer::zeros(3, 2, Activation::Relu);
        assert!(matches!(dense_forward(&[1.0, 2.0], &layer), Err(Error::Shape(_))));
    }

    #[test]
    fn layer_chain_is_checked() {
        let a = DenseLayer::zeros(3, 4, Activation::Relu);
        let b = DenseLayer::zeros(5, 1, Activation::Identity);
        assert!(Mlp::new(vec![a, b]).is_err());
    }

    #[test]
    fn identity_layer_backward_is_transpose() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 4.0]]).unwrap();
        let mlp = Mlp::new(vec![DenseLayer::new(w.clone(), vec![0.0, 0.0], Activation::Identity).unwrap()]).unwrap();
        let x = Matrix::from_rows(&[vec![0.3, -0.2, 0.9]]).unwrap();
        let (_, cache) = mlp.forward_cached(&x).unwrap();
        let g = Matrix::from_rows(&[vec![2.0, -3.0]]).unwrap();
        let (_, gin) = mlp.backward(&cache, &g).unwrap();
        let expected: Vec<f64> = (0..3).map(|j| 2.0 * w.get(0, j) - 3.0 * w.get(1, j)).collect();
        assert_eq!(gin.data(), expected.as_slice());
    }

    #[test]
    fn zero_grad_output_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::init(&[4, 6, 3], &[Activation::Relu, Activation::Sigmoid], &mut rng).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, 0.2, -0.3, 0.4], vec![1.0, -1.0, 0.5, 0.0]]).unwrap();
        let (_, cache) = mlp.forward_cached(&x).unwrap();
        let (grads, gin) = mlp.backward(&cache, &Matrix::zeros(2, 3)).unwrap();
        assert!(grads.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
        assert!(gin.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut mlp = Mlp::init(&[2, 2], &[Activation::Identity], &mut rng).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let (_, cache) = mlp.forward_cached(&x).unwrap();
        mlp.params_mut()[0][0] += 1.0;
        let err = mlp.backward(&cache, &Matrix::zeros(1, 2)).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));

        let other = Mlp::init(&[2, 2], &[Activation::Identity], &mut rng).unwrap();
        assert!(other.backward(&cache, &Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mlp = Mlp::init(&[8, 16, 2], &[Activation::Relu, Activation::Identity], &mut rng).unwrap();
        let x: Vec<f64> = (0..8).map(|i| (i as f64).cos()).collect();
        assert_eq!(mlp.forward(&x).unwrap(), mlp.forward(&x).unwrap());
    }

    #[test]
    fn sigmoid_is_finite_at_extremes() {
        for z in [-1e6, -800.0, 0.0, 800.0, 1e6] {
            let s = sigmoid(z);
            assert!(s.is_finite() && (0.0..=1.0).contains(&s));
        }
    }
}
