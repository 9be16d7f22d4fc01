use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::map::{CellKind, WorldMap, ACOUSTIC_GRID_MAP, CHIME_WORLD_MAP};
use super::observation::{Frame, ObservationRecord, AUDIO_SAMPLES, FRAME_STACK};
use super::render::{self, Overlay, Tile, VIEW_CELLS};
use crate::error::{contract_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvKind {
    AcousticGrid,
    ChimeWorld,
}

impl EnvKind {
    pub fn num_actions(self) -> usize {
        match self {
            EnvKind::AcousticGrid => 3,
            EnvKind::ChimeWorld => 6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i % 4]
    }

    pub fn left(self) -> Self {
        Self::from_index(self.index() + 3)
    }

    pub fn right(self) -> Self {
        Self::from_index(self.index() + 1)
    }

    pub fn delta(self) -> (isize, isize) {
        match self {
            Heading::North => (-1, 0),
            Heading::East => (0, 1),
            Heading::South => (1, 0),
            Heading::West => (0, -1),
        }
    }
}

/// Dense id of a (cell, heading) pair: `open_index * 4 + heading`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(pub usize);

/// Action index; validity depends on the environment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Action(pub usize);

/// Hidden task score. Only the harness unwraps it, for logging.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExtrinsicScore(f64);

impl ExtrinsicScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// What the agent gets back from a step.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentStep {
    pub observation: ObservationRecord,
    pub done: bool,
    pub state_id: StateId,
}

/// Full step outcome. The score is reachable only by splitting the result,
/// so anything handed just the `AgentStep` cannot see it.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    agent: AgentStep,
    score: ExtrinsicScore,
}

impl StepResult {
    pub fn agent(&self) -> &AgentStep {
        &self.agent
    }

    pub fn into_parts(self) -> (AgentStep, ExtrinsicScore) {
        (self.agent, self.score)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub map: WorldMap,
    pub horizon: usize,
    /// Sub-steps (out of four) on which the chosen action is applied.
    pub action_repeat: usize,
    /// Source amplitude A (AcousticGrid only).
    pub source_amplitude: f64,
}

impl EnvConfig {
    pub fn acoustic_grid() -> Self {
        Self {
            kind: EnvKind::AcousticGrid,
            map: WorldMap::parse(ACOUSTIC_GRID_MAP).expect("built-in map"),
            horizon: 512,
            action_repeat: 1,
            source_amplitude: 0.8,
        }
    }

    pub fn chime_world() -> Self {
        Self {
            kind: EnvKind::ChimeWorld,
            map: WorldMap::parse(CHIME_WORLD_MAP).expect("built-in map"),
            horizon: 4096,
            action_repeat: 4,
            source_amplitude: 0.8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if !(1..=FRAME_STACK).contains(&self.action_repeat) {
            return Err(Error::Config(format!("action_repeat must be in 1..={FRAME_STACK}")));
        }
        if !(0.0..=1.0).contains(&self.source_amplitude) {
            return Err(Error::Config("source_amplitude must lie in [0, 1]".into()));
        }
        if self.kind == EnvKind::AcousticGrid && self.map.cells_of(CellKind::AudioSource).len() != 1 {
            return Err(Error::MapLoad("AcousticGrid maps need exactly one audio source".into()));
        }
        Ok(())
    }
}

/// Mutable world state.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub cell: (usize, usize),
    pub heading: Heading,
    pub step: usize,
    /// Per-open-cell "pellet already eaten" flags.
    pub eaten: Vec<bool>,
    pub source_reached: bool,
}

/// Common interface of the grid worlds and their wrappers.
pub trait Environment {
    fn kind(&self) -> EnvKind;
    fn num_actions(&self) -> usize;
    fn num_states(&self) -> usize;
    fn reset(&mut self) -> ObservationRecord;
    fn step(&mut self, action: Action) -> Result<StepResult>;
    fn state(&self) -> &EnvState;
    fn state_id(&self) -> StateId;
    fn map(&self) -> &WorldMap;
    fn rng_mut(&mut self) -> &mut ChaCha8Rng;
}

/// AcousticGrid or ChimeWorld, depending on the config.
#[derive(Clone, Debug)]
pub struct GridEnv {
    config: EnvConfig,
    state: EnvState,
    rng: ChaCha8Rng,
    source_dist: Vec<Option<usize>>,
    source_clip: Vec<f64>,
    chime_ids: Vec<Option<usize>>,
}

impl GridEnv {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let map = &config.map;
        let source_dist = match map.cells_of(CellKind::AudioSource).first() {
            Some(&src) => map.distances_from(src),
            None => vec![None; map.open_count()],
        };
        let mut chime_ids = vec![None; map.open_count()];
        for (k, cell) in map.cells_of(CellKind::Chime).into_iter().enumerate() {
            chime_ids[map.open_index(cell).expect("open")] = Some(k);
        }
        let state = EnvState {
            cell: map.start(),
            heading: Heading::North,
            step: 0,
            eaten: vec![false; map.open_count()],
            source_reached: false,
        };
        Ok(Self {
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
            source_dist,
            source_clip: render::source_clip(),
            chime_ids,
            config,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    fn open_index(&self, cell: (usize, usize)) -> usize {
        self.config.map.open_index(cell).expect("agent stays on open cells")
    }

    /// Cell kind after accounting for eaten pellets.
    fn live_kind(&self, cell: (usize, usize)) -> CellKind {
        match self.config.map.kind(cell) {
            CellKind::Pellet if self.state.eaten[self.open_index(cell)] => CellKind::Open,
            k => k,
        }
    }

    fn render_frame(&mut self, button_lit: bool) -> Frame {
        let map = &self.config.map;
        let (r0, c0) = (self.state.cell.0 as isize, self.state.cell.1 as isize);
        let pixels = if map.kind(self.state.cell) == CellKind::NoisyTv {
            render::static_frame(&mut self.rng)
        } else {
            let h = self.state.heading.index();
            let mut tiles = Vec::with_capacity(VIEW_CELLS * VIEW_CELLS);
            for (_, _, dr, dc) in render::view_offsets(h) {
                let (r, c) = (r0 + dr, c0 + dc);
                let tile = if !map.is_open(r, c) {
                    Tile::Wall
                } else {
                    let cell = (r as usize, c as usize);
                    let overlay = match self.live_kind(cell) {
                        CellKind::NoisyTv => {
                            tiles.push(Tile::Static);
                            continue;
                        }
                        CellKind::Chime => Overlay::Chime,
                        CellKind::Pellet => Overlay::Pellet,
                        CellKind::Button => Overlay::Button {
                            lit: button_lit && cell == self.state.cell,
                        },
                        CellKind::AudioSource => Overlay::Source,
                        _ => Overlay::None,
                    };
                    Tile::Floor {
                        shade: render::floor_shade(map.open_index(cell).expect("open")),
                        overlay,
                    }
                };
                tiles.push(tile);
            }
            render::paint_view(&tiles, h, &mut self.rng)
        };
        Frame::new(pixels).expect("renderer emits valid frames")
    }

    /// Source clip scaled by distance and heading gain.
    fn source_audio(&self) -> Vec<f64> {
        let oi = self.open_index(self.state.cell);
        let Some(d) = self.source_dist[oi] else {
            return vec![0.0; AUDIO_SAMPLES];
        };
        let gain = if d == 0 || self.facing_source_path(d) { 1.0 } else { 0.5 };
        let scale = self.config.source_amplitude * gain / (1.0 + d as f64);
        self.source_clip.iter().map(|s| s * scale).collect()
    }

    fn facing_source_path(&self, d: usize) -> bool {
        let (dr, dc) = self.state.heading.delta();
        let (r, c) = (self.state.cell.0 as isize + dr, self.state.cell.1 as isize + dc);
        if !self.config.map.is_open(r, c) {
            return false;
        }
        let next = self.open_index((r as usize, c as usize));
        self.source_dist[next] == Some(d - 1)
    }

    fn apply_move(&mut self, heading: Heading) -> bool {
        let (dr, dc) = heading.delta();
        let (r, c) = (self.state.cell.0 as isize + dr, self.state.cell.1 as isize + dc);
        if self.config.map.is_open(r, c) {
            self.state.cell = (r as usize, c as usize);
            true
        } else {
            false
        }
    }

    fn observation(&mut self, frames: Vec<Frame>, audio: Vec<f64>) -> ObservationRecord {
        let frames: [Frame; FRAME_STACK] = frames.try_into().expect("four sub-steps");
        ObservationRecord::new(frames, audio).expect("renderer emits valid observations")
    }

    fn state_id_of(&self) -> StateId {
        StateId(self.open_index(self.state.cell) * 4 + self.state.heading.index())
    }

    /// Renders the current state without acting, as a reset would.
    pub fn current_observation(&mut self) -> ObservationRecord {
        let frame = self.render_frame(false);
        let audio = match self.config.kind {
            EnvKind::AcousticGrid => self.source_audio(),
            EnvKind::ChimeWorld => {
                let mut audio = vec![0.0; AUDIO_SAMPLES];
                if self.config.map.kind(self.state.cell) == CellKind::NoisyTv {
                    render::add_tv_noise(&mut audio, &mut self.rng);
                    render::clamp_audio(&mut audio);
                }
                audio
            }
        };
        self.observation(vec![frame.clone(), frame.clone(), frame.clone(), frame], audio)
    }

    /// Places the agent directly (tests and probes).
    pub fn teleport(&mut self, cell: (usize, usize), heading: Heading) -> Result<()> {
        if self.config.map.open_index(cell).is_none() {
            return contract_err(format!("cell {cell:?} is not open"));
        }
        self.state.cell = cell;
        self.state.heading = heading;
        Ok(())
    }

    fn step_acoustic(&mut self, action: usize) -> (Vec<Frame>, Vec<f64>, f64) {
        let mut frames = Vec::with_capacity(FRAME_STACK);
        for sub in 0..FRAME_STACK {
            if sub < self.config.action_repeat {
                match action {
                    0 => self.state.heading = self.state.heading.left(),
                    1 => self.state.heading = self.state.heading.right(),
                    _ => {
                        self.apply_move(self.state.heading);
                    }
                }
            }
            frames.push(self.render_frame(false));
        }
        let mut score = 0.0;
        if !self.state.source_reached && self.config.map.kind(self.state.cell) == CellKind::AudioSource {
            self.state.source_reached = true;
            score = 1.0;
        }
        (frames, self.source_audio(), score)
    }

    fn step_chime(&mut self, action: usize) -> (Vec<Frame>, Vec<f64>, f64) {
        let mut frames = Vec::with_capacity(FRAME_STACK);
        let mut audio = vec![0.0; AUDIO_SAMPLES];
        let mut score = 0.0;
        let mut ringing = false;
        for sub in 0..FRAME_STACK {
            let block = render::block_range(sub);
            let acting = sub < self.config.action_repeat;
            let mut entered = false;
            if acting && action >= 2 {
                let heading = Heading::from_index(action - 2);
                self.state.heading = heading;
                entered = self.apply_move(heading);
            }
            let oi = self.open_index(self.state.cell);
            match self.live_kind(self.state.cell) {
                CellKind::Chime if entered => {
                    render::add_chime(&mut audio[block.clone()], self.chime_ids[oi].expect("chime"));
                }
                CellKind::Pellet => {
                    self.state.eaten[oi] = true;
                    score += 1.0;
                    render::add_pellet_blip(&mut audio[block.clone()]);
                }
                CellKind::NoisyTv => render::add_tv_noise(&mut audio[block.clone()], &mut self.rng),
                CellKind::Button if acting && action == 1 && !ringing => {
                    ringing = true;
                    let which = self.rng.gen_range(0..render::BUTTON_BINS.len());
                    render::add_button_tone(&mut audio[block.start..], which, block.start);
                }
                _ => {}
            }
            frames.push(self.render_frame(ringing));
        }
        render::clamp_audio(&mut audio);
        (frames, audio, score)
    }
}

impl Environment for GridEnv {
    fn kind(&self) -> EnvKind {
        self.config.kind
    }

    fn num_actions(&self) -> usize {
        self.config.kind.num_actions()
    }

    fn num_states(&self) -> usize {
        self.config.map.open_count() * 4
    }

    fn reset(&mut self) -> ObservationRecord {
        self.state.cell = self.config.map.start();
        self.state.heading = Heading::North;
        self.state.step = 0;
        self.state.eaten.iter_mut().for_each(|e| *e = false);
        self.state.source_reached = false;
        self.current_observation()
    }

    fn step(&mut self, action: Action) -> Result<StepResult> {
        if action.0 >= self.num_actions() {
            return contract_err(format!(
                "action {} out of range for {} actions",
                action.0,
                self.num_actions()
            ));
        }
        let (frames, audio, score) = match self.config.kind {
            EnvKind::AcousticGrid => self.step_acoustic(action.0),
            EnvKind::ChimeWorld => self.step_chime(action.0),
        };
        self.state.step += 1;
        let observation = self.observation(frames, audio);
        Ok(StepResult {
            agent: AgentStep {
                observation,
                done: self.state.step >= self.config.horizon,
                state_id: self.state_id_of(),
            },
            score: ExtrinsicScore(score),
        })
    }

    fn state(&self) -> &EnvState {
        &self.state
    }

    fn state_id(&self) -> StateId {
        self.state_id_of()
    }

    fn map(&self) -> &WorldMap {
        &self.config.map
    }

    fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Builds an environment from `config` seeded with `seed` and resets it.
pub fn env_reset(config: EnvConfig, seed: u64) -> Result<(GridEnv, ObservationRecord)> {
    let mut env = GridEnv::new(config, seed)?;
    let obs = env.reset();
    Ok((env, obs))
}
