use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Built-in 211-cell navigation map with one fixed audio source.
pub const ACOUSTIC_GRID_MAP: &str = include_str!("../../maps/acoustic_grid.txt");

/// Built-in 16×16 map with chimes, pellets, a three-tone button and a noisy TV.
pub const CHIME_WORLD_MAP: &str = include_str!("../../maps/chime_world.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    Open,
    Obstacle,
    NoisyTv,
    Button,
    Chime,
    Pellet,
    AudioSource,
    Start,
}

impl CellKind {
    pub fn from_char(c: char) -> Option<Self> {
        Some(match c {
            '.' => CellKind::Open,
            '#' => CellKind::Obstacle,
            'T' => CellKind::NoisyTv,
            'B' => CellKind::Button,
            'C' => CellKind::Chime,
            'P' => CellKind::Pellet,
            'A' => CellKind::AudioSource,
            'S' => CellKind::Start,
            _ => return None,
        })
    }

    pub fn to_char(self) -> char {
        match self {
            CellKind::Open => '.',
            CellKind::Obstacle => '#',
            CellKind::NoisyTv => 'T',
            CellKind::Button => 'B',
            CellKind::Chime => 'C',
            CellKind::Pellet => 'P',
            CellKind::AudioSource => 'A',
            CellKind::Start => 'S',
        }
    }

    pub fn is_open(self) -> bool {
        self != CellKind::Obstacle
    }
}

/// Rectangular grid of cells parsed from ASCII, one character per cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorldMap {
    height: usize,
    width: usize,
    cells: Vec<CellKind>,
    /// Dense index of every open cell, `None` for obstacles.
    open_index: Vec<Option<usize>>,
    open_cells: Vec<(usize, usize)>,
    start: (usize, usize),
}

impl WorldMap {
    /// Parses a map. Rows must be rectangular, there must be exactly one
    /// start, and the open cells must form one 4-connected component.
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        if rows.is_empty() {
            return Err(Error::MapLoad("map is empty".into()));
        }
        let width = rows[0].chars().count();
        let mut cells = Vec::with_capacity(rows.len() * width);
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::MapLoad(format!(
                    "row {r} has {} cells, expected {width}",
                    row.chars().count()
                )));
            }
            for (c, ch) in row.chars().enumerate() {
                let kind = CellKind::from_char(ch)
                    .ok_or_else(|| Error::MapLoad(format!("unknown cell '{ch}' at row {r}, column {c}")))?;
                cells.push(kind);
            }
        }
        let height = rows.len();

        let starts: Vec<usize> = (0..cells.len()).filter(|&i| cells[i] == CellKind::Start).collect();
        if starts.len() != 1 {
            return Err(Error::MapLoad(format!("expected exactly one start, found {}", starts.len())));
        }
        let start = (starts[0] / width, starts[0] % width);

        let mut open_index = vec![None; cells.len()];
        let mut open_cells = Vec::new();
        for (i, kind) in cells.iter().enumerate() {
            if kind.is_open() {
                open_index[i] = Some(open_cells.len());
                open_cells.push((i / width, i % width));
            }
        }

        let map = Self {
            height,
            width,
            cells,
            open_index,
            open_cells,
            start,
        };
        let reached = map.distances_from(start).iter().filter(|d| d.is_some()).count();
        if reached != map.open_cells.len() {
            return Err(Error::MapLoad(format!(
                "open cells are not connected: {reached} of {} reachable from start",
                map.open_cells.len()
            )));
        }
        Ok(map)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn start(&self) -> (usize, usize) {
        self.start
    }

    /// Cell kind, with everything outside the grid treated as an obstacle.
    pub fn kind_at(&self, r: isize, c: isize) -> CellKind {
        if r < 0 || c < 0 || r as usize >= self.height || c as usize >= self.width {
            return CellKind::Obstacle;
        }
        self.cells[r as usize * self.width + c as usize]
    }

    pub fn kind(&self, cell: (usize, usize)) -> CellKind {
        self.cells[cell.0 * self.width + cell.1]
    }

    pub fn is_open(&self, r: isize, c: isize) -> bool {
        self.kind_at(r, c).is_open()
    }

    pub fn open_cells(&self) -> &[(usize, usize)] {
        &self.open_cells
    }

    pub fn open_count(&self) -> usize {
        self.open_cells.len()
    }

    pub fn open_index(&self, cell: (usize, usize)) -> Option<usize> {
        self.open_index[cell.0 * self.width + cell.1]
    }

    pub fn cells_of(&self, kind: CellKind) -> Vec<(usize, usize)> {
        self.open_cells
            .iter()
            .copied()
            .filter(|&c| self.kind(c) == kind)
            .collect()
    }

    /// Shortest-path (4-connected) distances over open cells, indexed like
    /// `open_cells`; `None` when unreachable.
    pub fn distances_from(&self, origin: (usize, usize)) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.open_cells.len()];
        let Some(o) = self.open_index(origin) else {
            return dist;
        };
        dist[o] = Some(0);
        let mut queue = VecDeque::from([origin]);
        while let Some((r, c)) = queue.pop_front() {
            let d = dist[self.open_index((r, c)).expect("open")].expect("set");
            for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if !self.is_open(nr, nc) {
                    continue;
                }
                let n = (nr as usize, nc as usize);
                let ni = self.open_index(n).expect("open");
                if dist[ni].is_none() {
                    dist[ni] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    pub fn to_ascii(&self) -> String {
        let mut s = String::with_capacity(self.height * (self.width + 1));
        for r in 0..self.height {
            for c in 0..self.width {
                s.push(self.kind((r, c)).to_char());
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_maps_parse() {
        let ag = WorldMap::parse(ACOUSTIC_GRID_MAP).unwrap();
        assert_eq!(ag.open_count(), 211);
        assert_eq!(ag.cells_of(CellKind::AudioSource).len(), 1);
        let cw = WorldMap::parse(CHIME_WORLD_MAP).unwrap();
        assert_eq!((cw.height(), cw.width()), (16, 16));
        assert_eq!(cw.cells_of(CellKind::Button).len(), 1);
        assert_eq!(cw.cells_of(CellKind::NoisyTv).len(), 1);
    }

    #[test]
    fn round_trips_ascii() {
        let text = "#####\n#S.C#\n#.#T#\n#####\n";
        assert_eq!(WorldMap::parse(text).unwrap().to_ascii(), text);
    }

    #[test]
    fn rejects_malformed_maps() {
        assert!(WorldMap::parse("").is_err());
        assert!(WorldMap::parse("###\n#S\n###").is_err());
        assert!(WorldMap::parse("####\n#..#\n####").is_err(), "no start");
        assert!(WorldMap::parse("####\n#SS#\n####").is_err(), "two starts");
        assert!(WorldMap::parse("#####\n#S#.#\n#####").is_err(), "disconnected");
        assert!(WorldMap::parse("####\n#Sx#\n####").is_err(), "unknown glyph");
    }

    #[test]
    fn bfs_distances() {
        let map = WorldMap::parse("#####\n#S..#\n###.#\n#####").unwrap();
        let d = map.distances_from(map.start());
        assert_eq!(d, vec![Some(0), Some(1), Some(2), Some(3)]);
    }
}
