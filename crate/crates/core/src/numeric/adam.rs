use crate::error::{contract_err, shape_err, Error, Result};

/// Adam moments for a list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zeroed moments for tensors of the given lengths, with β1=0.9, β2=0.999, ε=1e-8.
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_params(params: &[&[f64]]) -> Self {
        let shapes: Vec<usize> = params.iter().map(|p| p.len()).collect();
        Self::new(&shapes)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    pub(crate) fn from_parts(first: Vec<Vec<f64>>, second: Vec<Vec<f64>>, step: u64, betas: (f64, f64), eps: f64) -> Result<Self> {
        if first.len() != second.len() || first.iter().zip(&second).any(|(a, b)| a.len() != b.len()) {
            return shape_err("adam moment shapes disagree");
        }
        Ok(Self {
            first,
            second,
            step,
            beta1: betas.0,
            beta2: betas.1,
            eps,
        })
    }
}

/// One bias-corrected Adam update. Rejects the whole step, leaving parameters
/// and moments untouched, if any gradient is non-finite.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState, lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return contract_err(format!("learning rate must be positive, got {lr}"));
    }
    if params.len() != grads.len() || params.len() != state.first.len() {
        return shape_err(format!(
            "{} parameter tensors, {} gradient tensors, {} moment tensors",
            params.len(),
            grads.len(),
            state.first.len()
        ));
    }
    for (i, ((p, g), m)) in params.iter().zip(grads).zip(&state.first).enumerate() {
        if p.len() != g.len() || p.len() != m.len() {
            return shape_err(format!("tensor {i}: param {} grad {} moment {}", p.len(), g.len(), m.len()));
        }
    }
    if grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFinite("gradient".into()));
    }

    state.step += 1;
    let t = state.step as f64;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powf(t);
    let c2 = 1.0 - b2.powf(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [3.0, -0.25, 1e-3] {
            let mut p = vec![1.0];
            let mut state = AdamState::new(&[1]);
            adam_step(&mut [p.as_mut_slice()], &[&[g]], &mut state, 1e-4).unwrap();
            // m̂/√v̂ = g/|g| exactly; ε perturbs the magnitude by ~ε/|g|.
            let moved = 1.0 - p[0];
            assert!((moved.abs() - 1e-4).abs() < 1e-4 * 1e-8 / g.abs() * 10.0 + 1e-15);
            assert_eq!(moved.signum(), g.signum());
            assert_eq!(state.step(), 1);
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.5, -2.0];
        let mut state = AdamState::new(&[2]);
        adam_step(&mut [p.as_mut_slice()], &[&[0.0, 0.0]], &mut state, 1e-3).unwrap();
        assert_eq!(p, vec![0.5, -2.0]);
    }

    #[test]
    fn positive_gradient_decreases_twice() {
        let mut p = vec![0.0];
        let mut state = AdamState::new(&[1]);
        adam_step(&mut [p.as_mut_slice()], &[&[0.7]], &mut state, 1e-2).unwrap();
        let after_one = p[0];
        adam_step(&mut [p.as_mut_slice()], &[&[0.7]], &mut state, 1e-2).unwrap();
        assert!(after_one < 0.0 && p[0] < after_one);
        assert_eq!(state.step(), 2);
    }

    #[test]
    fn nan_gradient_is_rejected_without_side_effects() {
        let mut p = vec![1.0, 1.0];
        let mut state = AdamState::new(&[2]);
        let err = adam_step(&mut [p.as_mut_slice()], &[&[0.1, f64::NAN]], &mut state, 1e-3).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(state.step(), 0);
    }

    #[test]
    fn shape_and_lr_checks() {
        let mut p = vec![1.0];
        let mut state = AdamState::new(&[1]);
        assert!(adam_step(&mut [p.as_mut_slice()], &[&[0.1, 0.2]], &mut state, 1e-3).is_err());
        assert!(adam_step(&mut [p.as_mut_slice()], &[&[0.1]], &mut state, 0.0).is_err());
    }
}
