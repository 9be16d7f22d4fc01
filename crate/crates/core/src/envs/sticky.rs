use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::map::WorldMap;
use super::observation::ObservationRecord;
use super::world::{Action, EnvKind, EnvState, Environment, StateId, StepResult};
use crate::error::{Error, Result};

/// Repeats the previous action with probability `p`, drawing from the inner
/// environment's generator.
#[derive(Clone, Debug)]
pub struct StickyEnv<E> {
    inner: E,
    p: f64,
    previous: Option<Action>,
    stuck: u64,
    steps: u64,
}

impl<E: Environment> StickyEnv<E> {
    pub fn new(inner: E, p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("sticky probability must lie in [0, 1), got {p}")));
        }
        Ok(Self {
            inner,
            p,
            previous: None,
            stuck: 0,
            steps: 0,
        })
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut E {
        &mut self.inner
    }

    /// Fraction of steps so far on which the previous action was repeated.
    pub fn stick_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.stuck as f64 / self.steps as f64
        }
    }
}

pub fn sticky_wrap<E: Environment>(env: E, p: f64) -> Result<StickyEnv<E>> {
    StickyEnv::new(env, p)
}

impl<E: Environment> Environment for StickyEnv<E> {
    fn kind(&self) -> EnvKind {
        self.inner.kind()
    }

    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    fn reset(&mut self) -> ObservationRecord {
        self.previous = None;
        self.inner.reset()
    }

    fn step(&mut self, action: Action) -> Result<StepResult> {
        let mut chosen = action;
        if let Some(prev) = self.previous {
            if self.p > 0.0 && self.inner.rng_mut().gen::<f64>() < self.p {
                chosen = prev;
                self.stuck += 1;
            }
        }
        self.steps += 1;
        let result = self.inner.step(chosen)?;
        self.previous = Some(chosen);
        Ok(result)
    }

    fn state(&self) -> &EnvState {
        self.inner.state()
    }

    fn state_id(&self) -> StateId {
        self.inner.state_id()
    }

    fn map(&self) -> &WorldMap {
        self.inner.map()
    }

    fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        self.inner.rng_mut()
    }
}
