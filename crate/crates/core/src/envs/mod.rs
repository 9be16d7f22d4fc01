//! Grid worlds that emit paired frames and audio.
//!
//! `AcousticGrid` is a navigation map with one continuously sounding source.
//! `ChimeWorld` has chimes, pellets (hidden score), a noisy TV and a button
//! that plays one of three tones at random.

pub mod map;
pub mod observation;
pub mod render;
pub mod sticky;
pub mod world;

pub use map::{CellKind, WorldMap, ACOUSTIC_GRID_MAP, CHIME_WORLD_MAP};
pub use observation::{Frame, ObservationRecord, AUDIO_SAMPLES, FRAME_PIXELS, FRAME_SIDE, FRAME_STACK, SAMPLES_PER_SUBSTEP};
pub use sticky::{sticky_wrap, StickyEnv};
pub use world::{
    env_reset, Action, AgentStep, EnvConfig, EnvKind, EnvState, Environment, ExtrinsicScore, GridEnv, Heading, StateId,
    StepResult,
};
