//! Pixel and waveform synthesis for the grid worlds.

use std::f64::consts::TAU;

use rand::Rng;

use super::observation::{AUDIO_SAMPLES, FRAME_PIXELS, FRAME_SIDE, SAMPLES_PER_SUBSTEP};

pub const VIEW_CELLS: usize = 7;
pub const BLOCK_PX: usize = FRAME_SIDE / VIEW_CELLS;
const VIEW_CENTER: isize = (VIEW_CELLS / 2) as isize;
const MARKER_PX: usize = 2;
const MARKER_SHADE: f64 = 0.9;

/// Reference length for tone frequencies: every tone sits on a bin centre of
/// a transform of this size.
pub const TONE_GRID: usize = 4096;

pub const SOURCE_BINS: (usize, usize) = (180, 420);
pub const BUTTON_BINS: [usize; 3] = [300, 700, 1100];
pub const PELLET_BIN: usize = 1600;
const CHIME_BASE_BIN: usize = 140;
const CHIME_BIN_STEP: usize = 97;
const CHIME_AMPLITUDE: f64 = 0.8;
const BUTTON_AMPLITUDE: f64 = 0.7;
const PELLET_AMPLITUDE: f64 = 0.6;
const PELLET_LEN: usize = 160;
pub const TV_NOISE_AMPLITUDE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Overlay {
    None,
    Chime,
    Pellet,
    Button { lit: bool },
    Source,
}

/// What one view cell shows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tile {
    Wall,
    Floor { shade: f64, overlay: Overlay },
    Static,
}

/// Floor brightness for the open cell with dense index `i`; distinct per cell.
pub fn floor_shade(i: usize) -> f64 {
    let x = i as f64 * 0.618_034;
    0.05 + 0.35 * (x - x.floor())
}

/// Rotates a view offset (ahead = -row) into a world offset for a heading
/// (0 = N, 1 = E, 2 = S, 3 = W).
pub fn view_to_world(dr: isize, dc: isize, heading: usize) -> (isize, isize) {
    let (mut r, mut c) = (dr, dc);
    for _ in 0..heading % 4 {
        (r, c) = (c, -r);
    }
    (r, c)
}

/// Iterates the view grid as (view_row, view_col, world_dr, world_dc).
pub fn view_offsets(heading: usize) -> impl Iterator<Item = (usize, usize, isize, isize)> {
    (0..VIEW_CELLS).flat_map(move |vr| {
        (0..VIEW_CELLS).map(move |vc| {
            let (dr, dc) = view_to_world(vr as isize - VIEW_CENTER, vc as isize - VIEW_CENTER, heading);
            (vr, vc, dr, dc)
        })
    })
}

/// Paints a 7×7 egocentric tile grid into an 84×84 image. Floor tiles get a
/// strip on their world-north edge so that every heading looks different.
pub fn paint_view<R: Rng + ?Sized>(tiles: &[Tile], heading: usize, rng: &mut R) -> Vec<f64> {
    debug_assert_eq!(tiles.len(), VIEW_CELLS * VIEW_CELLS);
    let mut px = vec![0.0; FRAME_PIXELS];
    let north_edge = (4 - heading % 4) % 4;
    for (i, tile) in tiles.iter().enumerate() {
        let (y0, x0) = ((i / VIEW_CELLS) * BLOCK_PX, (i % VIEW_CELLS) * BLOCK_PX);
        for y in 0..BLOCK_PX {
            for x in 0..BLOCK_PX {
                let value = match *tile {
                    Tile::Wall => 1.0,
                    Tile::Static => rng.gen::<f64>(),
                    Tile::Floor { shade, overlay } => {
                        let on_marker = match north_edge {
                            0 => y < MARKER_PX,
                            1 => x >= BLOCK_PX - MARKER_PX,
                            2 => y >= BLOCK_PX - MARKER_PX,
                            _ => x < MARKER_PX,
                        };
                        if on_marker {
                            MARKER_SHADE
                        } else {
                            overlay_value(overlay, y, x).unwrap_or(shade)
                        }
                    }
                };
                px[(y0 + y) * FRAME_SIDE + x0 + x] = value;
            }
        }
    }
    px
}

/// Full-frame static, shown while the agent stands on the TV.
pub fn static_frame<R: Rng + ?Sized>(rng: &mut R) -> Vec<f64> {
    (0..FRAME_PIXELS).map(|_| rng.gen::<f64>()).collect()
}

fn overlay_value(overlay: Overlay, y: usize, x: usize) -> Option<f64> {
    let inner = (3..9).contains(&y) && (3..9).contains(&x);
    match overlay {
        Overlay::None => None,
        Overlay::Chime => inner.then_some(0.75),
        Overlay::Pellet => ((5..7).contains(&y) && (5..7).contains(&x)).then_some(0.98),
        Overlay::Button { lit } => {
            let ring = (2..10).contains(&y) && (2..10).contains(&x) && !((4..8).contains(&y) && (4..8).contains(&x));
            if ring {
                Some(0.6)
            } else if lit && inner {
                Some(0.95)
            } else {
                None
            }
        }
        Overlay::Source => (y == 6 || x == 6).then_some(0.8),
    }
}

fn tone(bin: usize, n: usize) -> f64 {
    (TAU * bin as f64 * n as f64 / TONE_GRID as f64).cos()
}

/// Fixed two-partial clip emitted by the audio source; peak 1 at sample 0.
pub fn source_clip() -> Vec<f64> {
    (0..AUDIO_SAMPLES)
        .map(|n| 0.6 * tone(SOURCE_BINS.0, n) + 0.4 * tone(SOURCE_BINS.1, n))
        .collect()
}

pub fn chime_bin(index: usize) -> usize {
    CHIME_BASE_BIN + CHIME_BIN_STEP * index
}

/// Decaying chime written over one sub-step block.
pub fn add_chime(block: &mut [f64], index: usize) {
    let bin = chime_bin(index);
    for (n, s) in block.iter_mut().enumerate() {
        let env = (-(n as f64) / 220.0).exp();
        *s += CHIME_AMPLITUDE * env * tone(bin, n);
    }
}

pub fn add_pellet_blip(block: &mut [f64]) {
    for (n, s) in block.iter_mut().take(PELLET_LEN).enumerate() {
        *s += PELLET_AMPLITUDE * tone(PELLET_BIN, n);
    }
}

/// Button tone over `samples`, phase counted from `offset` within the step.
pub fn add_button_tone(samples: &mut [f64], which: usize, offset: usize) {
    let bin = BUTTON_BINS[which];
    for (n, s) in samples.iter_mut().enumerate() {
        *s += BUTTON_AMPLITUDE * tone(bin, offset + n);
    }
}

pub fn add_tv_noise<R: Rng + ?Sized>(block: &mut [f64], rng: &mut R) {
    for s in block.iter_mut() {
        *s += rng.gen_range(-TV_NOISE_AMPLITUDE..=TV_NOISE_AMPLITUDE);
    }
}

pub fn clamp_audio(samples: &mut [f64]) {
    for s in samples {
        *s = s.clamp(-1.0, 1.0);
    }
}

pub fn block_range(sub: usize) -> std::ops::Range<usize> {
    sub * SAMPLES_PER_SUBSTEP..(sub + 1) * SAMPLES_PER_SUBSTEP
}
