use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::envs::{CellKind, WorldMap};
use crate::error::{shape_err, Result};

pub const CELL_PX: usize = 8;
const WALL_GRAY: u8 = 0;
const WALL_RGB: [u8; 3] = [40, 60, 110];
/// Gray level of the most visited cell; unvisited cells are white.
const DARKEST: f64 = 40.0;

/// Gray level per map cell: white when unvisited, darker with log(1+count).
fn cell_shades(counts: &[u64], map: &WorldMap) -> Vec<Option<u8>> {
    let max = counts.iter().copied().max().unwrap_or(0);
    let scale = (1.0 + max as f64).ln();
    (0..map.height() * map.width())
        .map(|i| {
            let cell = (i / map.width(), i % map.width());
            if !map.kind(cell).is_open() {
                return None;
            }
            let frac = if max == 0 { 0.0 } else { (1.0 + counts[i] as f64).ln() / scale };
            Some((255.0 - frac * (255.0 - DARKEST)).round() as u8)
        })
        .collect()
}

/// Binary PGM, `CELL_PX` pixels per cell.
pub fn heatmap_pgm(counts: &[u64], map: &WorldMap, cell_px: usize) -> Vec<u8> {
    let shades = cell_shades(counts, map);
    let (w, h) = (map.width() * cell_px, map.height() * cell_px);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            out.push(shades[(y / cell_px) * map.width() + x / cell_px].unwrap_or(WALL_GRAY));
        }
    }
    out
}

/// Binary PPM with walls in colour.
pub fn heatmap_ppm(counts: &[u64], map: &WorldMap, cell_px: usize) -> Vec<u8> {
    let shades = cell_shades(counts, map);
    let (w, h) = (map.width() * cell_px, map.height() * cell_px);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            match shades[(y / cell_px) * map.width() + x / cell_px] {
                Some(g) => out.extend_from_slice(&[g, g, g]),
                None => out.extend_from_slice(&WALL_RGB),
            }
        }
    }
    out
}

/// SVG of the same map with an arrow on the start cell, pointing north.
pub fn heatmap_svg(counts: &[u64], map: &WorldMap, cell_px: usize) -> String {
    let shades = cell_shades(counts, map);
    let (w, h) = (map.width() * cell_px, map.height() * cell_px);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    for (i, shade) in shades.iter().enumerate() {
        let (x, y) = ((i % map.width()) * cell_px, (i / map.width()) * cell_px);
        let fill = match shade {
            Some(g) => format!("rgb({g},{g},{g})"),
            None => format!("rgb({},{},{})", WALL_RGB[0], WALL_RGB[1], WALL_RGB[2]),
        };
        let _ = writeln!(s, r#"<rect x="{x}" y="{y}" width="{cell_px}" height="{cell_px}" fill="{fill}"/>"#);
    }
    let (r, c) = map.start();
    let p = cell_px as f64;
    let (cx, top, bottom) = (c as f64 * p + p / 2.0, r as f64 * p + p * 0.15, r as f64 * p + p * 0.85);
    let _ = writeln!(
        s,
        r#"<path d="M{cx} {top} L{:.2} {bottom} L{cx} {:.2} L{:.2} {bottom} Z" fill="red" stroke="black" stroke-width="0.5"/>"#,
        cx + p * 0.35,
        bottom - p * 0.2,
        cx - p * 0.35,
    );
    s.push_str("</svg>\n");
    s
}

/// Writes `<stem>.pgm`, `<stem>.ppm` and `<stem>.svg`; returns the paths.
pub fn emit_heatmap(counts: &[u64], map: &WorldMap, stem: &Path) -> Result<Vec<PathBuf>> {
    if counts.len() != map.height() * map.width() {
        return shape_err(format!(
            "{} counts for a {}×{} map",
            counts.len(),
            map.height(),
            map.width()
        ));
    }
    let paths: Vec<PathBuf> = ["pgm", "ppm", "svg"].iter().map(|e| stem.with_extension(e)).collect();
    fs::write(&paths[0], heatmap_pgm(counts, map, CELL_PX))?;
    fs::write(&paths[1], heatmap_ppm(counts, map, CELL_PX))?;
    fs::write(&paths[2], heatmap_svg(counts, map, CELL_PX))?;
    Ok(paths)
}

/// Counts over the special cells of a map, handy for quick inspection.
pub fn count_on(counts: &[u64], map: &WorldMap, kind: CellKind) -> u64 {
    map.cells_of(kind).iter().map(|&(r, c)| counts[r * map.width() + c]).sum()
}
