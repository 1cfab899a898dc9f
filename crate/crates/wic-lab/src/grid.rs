//! Deterministic grid environments: the open 15x15 room and the four-rooms
//! layout, with feature encoders and an exact step-count distance.

use std::collections::VecDeque;

use crate::{Error, Result};

/// A cell the agent can occupy. Row 0 is the top row, column 0 the left edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridState {
    pub row: usize,
    pub col: usize,
}

impl GridState {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GridAction {
    Up,
    Down,
    Left,
    Right,
    NoOp,
}

impl GridAction {
    pub const ALL: [GridAction; 5] = [
        GridAction::Up,
        GridAction::Down,
        GridAction::Left,
        GridAction::Right,
        GridAction::NoOp,
    ];

    pub fn index(self) -> usize {
        match self {
            GridAction::Up => 0,
            GridAction::Down => 1,
            GridAction::Left => 2,
            GridAction::Right => 3,
            GridAction::NoOp => 4,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn to_char(self) -> char {
        match self {
            GridAction::Up => 'U',
            GridAction::Down => 'D',
            GridAction::Left => 'L',
            GridAction::Right => 'R',
            GridAction::NoOp => 'N',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'U' => Some(GridAction::Up),
            'D' => Some(GridAction::Down),
            'L' => Some(GridAction::Left),
            'R' => Some(GridAction::Right),
            'N' => Some(GridAction::NoOp),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureMode {
    OneHot,
    ScaledXy,
}

/// Static description of one grid layout.
#[derive(Clone, Debug)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    walls: Vec<bool>,
    pub start_cell: GridState,
    pub feature_mode: FeatureMode,
}

impl GridSpec {
    pub fn new(
        width: usize,
        height: usize,
        wall_cells: &[GridState],
        start_cell: GridState,
        feature_mode: FeatureMode,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Contract("grid dimensions must be positive".into()));
        }
        let mut walls = vec![false; width * height];
        for w in wall_cells {
            if w.row >= height || w.col >= width {
                return Err(Error::Contract(format!(
                    "wall cell ({}, {}) out of bounds",
                    w.row, w.col
                )));
            }
            walls[w.row * width + w.col] = true;
        }
        let spec = Self {
            width,
            height,
            walls,
            start_cell,
            feature_mode,
        };
        if !spec.in_bounds(start_cell) || spec.is_wall(start_cell) {
            return Err(Error::Contract("start cell blocked or out of bounds".into()));
        }
        Ok(spec)
    }

    /// The 15x15 open room with one-hot features, start at the center.
    pub fn open15() -> Self {
        Self::new(15, 15, &[], GridState::new(7, 7), FeatureMode::OneHot).unwrap()
    }

    /// The 13x13 four-rooms layout: boundary walls, a cross of walls at row 6
    /// and column 6 with four doorways, start at the bottom-left room center,
    /// scaled (x, y) features.
    pub fn four_rooms() -> Self {
        let mut walls = Vec::new();
        for r in 0..13 {
            for c in 0..13 {
                let boundary = r == 0 || r == 12 || c == 0 || c == 12;
                let cross = r == 6 || c == 6;
                let door = (r == 3 && c == 6)
                    || (r == 10 && c == 6)
                    || (r == 6 && c == 3)
                    || (r == 6 && c == 10);
                if (boundary || cross) && !door {
                    walls.push(GridState::new(r, c));
                }
            }
        }
        Self::new(13, 13, &walls, GridState::new(9, 3), FeatureMode::ScaledXy).unwrap()
    }

    /// Parses a plain-text map: '#' wall, '.' floor, 'S' start. Rows must be
    /// rectangular; exactly one start cell.
    pub fn from_map_str(text: &str, feature_mode: FeatureMode) -> Result<Self> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.is_empty() {
            return Err(Error::Parse("empty map".into()));
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut walls = Vec::new();
        let mut start = None;
        for (r, line) in rows.iter().enumerate() {
            let cells: Vec<char> = line.chars().collect();
            if cells.len() != width {
                return Err(Error::Parse(format!("row {r} is not {width} cells wide")));
            }
            for (c, ch) in cells.iter().enumerate() {
                match ch {
                    '#' => walls.push(GridState::new(r, c)),
                    '.' => {}
                    'S' => {
                        if start.replace(GridState::new(r, c)).is_some() {
                            return Err(Error::Parse("multiple start cells".into()));
                        }
                    }
                    other => return Err(Error::Parse(format!("unknown map char '{other}'"))),
                }
            }
        }
        let start = start.ok_or_else(|| Error::Parse("map has no start cell".into()))?;
        Self::new(width, height, &walls, start, feature_mode)
    }

    pub fn in_bounds(&self, s: GridState) -> bool {
        s.row < self.height && s.col < self.width
    }

    pub fn is_wall(&self, s: GridState) -> bool {
        self.walls[s.row * self.width + s.col]
    }

    pub fn is_valid(&self, s: GridState) -> bool {
        self.in_bounds(s) && !self.is_wall(s)
    }

    pub fn cell_index(&self, s: GridState) -> usize {
        s.row * self.width + s.col
    }

    /// All non-wall cells in row-major order.
    pub fn valid_states(&self) -> Vec<GridState> {
        let mut out = Vec::new();
        for r in 0..self.height {
            for c in 0..self.width {
                let s = GridState::new(r, c);
                if !self.is_wall(s) {
                    out.push(s);
                }
            }
        }
        out
    }

    pub fn feature_dim(&self) -> usize {
        match self.feature_mode {
            FeatureMode::OneHot => self.width * self.height,
            FeatureMode::ScaledXy => 2,
        }
    }

    /// One deterministic environment step; moving into a wall or off the grid
    /// leaves the state unchanged.
    pub fn step(&self, s: GridState, a: GridAction) -> Result<GridState> {
        if !self.is_valid(s) {
            return Err(Error::Contract(format!(
                "state ({}, {}) is not a valid cell",
                s.row, s.col
            )));
        }
        let (dr, dc): (isize, isize) = match a {
            GridAction::Up => (-1, 0),
            GridAction::Down => (1, 0),
            GridAction::Left => (0, -1),
            GridAction::Right => (0, 1),
            GridAction::NoOp => (0, 0),
        };
        let nr = s.row as isize + dr;
        let nc = s.col as isize + dc;
        if nr < 0 || nc < 0 {
            return Ok(s);
        }
        let next = GridState::new(nr as usize, nc as usize);
        if self.is_valid(next) {
            Ok(next)
        } else {
            Ok(s)
        }
    }

    pub fn featurize(&self, s: GridState) -> Result<Vec<f64>> {
        if !self.is_valid(s) {
            return Err(Error::Contract(format!(
                "state ({}, {}) is not a valid cell",
                s.row, s.col
            )));
        }
        match self.feature_mode {
            FeatureMode::OneHot => {
                let mut v = vec![0.0; self.width * self.height];
                v[self.cell_index(s)] = 1.0;
                Ok(v)
            }
            FeatureMode::ScaledXy => {
                let x = 2.0 * s.col as f64 / (self.width - 1) as f64 - 1.0;
                let y = 2.0 * s.row as f64 / (self.height - 1) as f64 - 1.0;
                Ok(vec![x, y])
            }
        }
    }

    /// Minimal step counts from `from` to every cell; `None` for walls and
    /// unreachable cells.
    pub fn bfs_distances(&self, from: GridState) -> Result<Vec<Option<u32>>> {
        if !self.is_valid(from) {
            return Err(Error::Contract("bfs source is not a valid cell".into()));
        }
        let mut dist = vec![None; self.width * self.height];
        dist[self.cell_index(from)] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(s) = queue.pop_front() {
            let d = dist[self.cell_index(s)].unwrap();
            for a in GridAction::ALL {
                let n = self.step(s, a).unwrap();
                let idx = self.cell_index(n);
                if dist[idx].is_none() {
                    dist[idx] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        Ok(dist)
    }

    /// Exact minimal number of steps between two cells, or `None` if
    /// unreachable.
    pub fn bfs_distance(&self, from: GridState, to: GridState) -> Result<Option<u32>> {
        if !self.is_valid(to) {
            return Err(Error::Contract("bfs target is not a valid cell".into()));
        }
        Ok(self.bfs_distances(from)?[self.cell_index(to)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_follows_direction_convention() {
        let g = GridSpec::open15();
        assert_eq!(
            g.step(GridState::new(7, 7), GridAction::Up).unwrap(),
            GridState::new(6, 7)
        );
        assert_eq!(
            g.step(GridState::new(7, 7), GridAction::Left).unwrap(),
            GridState::new(7, 6)
        );
    }

    #[test]
    fn step_clamps_at_boundary() {
        let g = GridSpec::open15();
        assert_eq!(
            g.step(GridState::new(0, 0), GridAction::Up).unwrap(),
            GridState::new(0, 0)
        );
        assert_eq!(
            g.step(GridState::new(0, 0), GridAction::Left).unwrap(),
            GridState::new(0, 0)
        );
    }

    #[test]
    fn noop_is_identity() {
        let g = GridSpec::open15();
        assert_eq!(
            g.step(GridState::new(3, 3), GridAction::NoOp).unwrap(),
            GridState::new(3, 3)
        );
    }

    #[test]
    fn step_rejects_invalid_state() {
        let g = GridSpec::four_rooms();
        assert!(g.step(GridState::new(0, 0), GridAction::NoOp).is_err());
        assert!(g.step(GridState::new(99, 0), GridAction::NoOp).is_err());
    }

    #[test]
    fn step_never_leaves_valid_cells() {
        for g in [GridSpec::open15(), GridSpec::four_rooms()] {
            for s in g.valid_states() {
                for a in GridAction::ALL {
                    assert!(g.is_valid(g.step(s, a).unwrap()));
                }
            }
        }
    }

    #[test]
    fn one_hot_features() {
        let g = GridSpec::open15();
        let v = g.featurize(GridState::new(0, 0)).unwrap();
        assert_eq!(v.len(), 225);
        assert_eq!(v[0], 1.0);
        assert_eq!(v.iter().sum::<f64>(), 1.0);
        let v = g.featurize(GridState::new(7, 7)).unwrap();
        assert_eq!(v[7 * 15 + 7], 1.0);
    }

    #[test]
    fn scaled_xy_features() {
        let g = GridSpec::four_rooms();
        // midpoint of a 13x13 grid maps to the origin (wall cell, so build a
        // wall-free 13x13 to probe it)
        let open = GridSpec::new(13, 13, &[], GridState::new(6, 6), FeatureMode::ScaledXy).unwrap();
        assert_eq!(open.featurize(GridState::new(6, 6)).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            open.featurize(GridState::new(0, 12)).unwrap(),
            vec![1.0, -1.0]
        );
        for s in g.valid_states() {
            for f in g.featurize(s).unwrap() {
                assert!((-1.0..=1.0).contains(&f));
            }
        }
    }

    #[test]
    fn bfs_identity_and_manhattan_in_open_room() {
        let g = GridSpec::open15();
        assert_eq!(
            g.bfs_distance(GridState::new(7, 7), GridState::new(7, 7))
                .unwrap(),
            Some(0)
        );
        assert_eq!(
            g.bfs_distance(GridState::new(7, 7), GridState::new(4, 9))
                .unwrap(),
            Some(5)
        );
        for a in g.valid_states() {
            let dist = g.bfs_distances(a).unwrap();
            for b in g.valid_states() {
                let manhattan = a.row.abs_diff(b.row) + a.col.abs_diff(b.col);
                assert_eq!(dist[g.cell_index(b)], Some(manhattan as u32));
            }
        }
    }

    #[test]
    fn bfs_triangle_inequality_four_rooms() {
        let g = GridSpec::four_rooms();
        let states = g.valid_states();
        let tables: Vec<Vec<Option<u32>>> = states
            .iter()
            .map(|&s| g.bfs_distances(s).unwrap())
            .collect();
        let d = |i: usize, b: GridState| tables[i][g.cell_index(b)].unwrap();
        for (i, &a) in states.iter().enumerate() {
            assert_eq!(d(i, a), 0);
            // triangle over a thinned triple set to keep runtime sane
            for (j, &b) in states.iter().enumerate().step_by(7) {
                for &c in states.iter().step_by(11) {
                    assert!(d(i, c) <= d(i, b) + d(j, c));
                }
            }
        }
    }

    #[test]
    fn four_rooms_layout_and_reachability() {
        let g = GridSpec::four_rooms();
        assert!(g.is_valid(GridState::new(9, 3)));
        assert!(g.is_wall(GridState::new(6, 6)));
        assert!(g.is_valid(GridState::new(3, 6))); // doorway
        // every valid cell reachable from the start
        let dist = g.bfs_distances(g.start_cell).unwrap();
        for s in g.valid_states() {
            assert!(dist[g.cell_index(s)].is_some());
        }
        // diagonal room center reachable within T=40
        let diag = g.bfs_distance(g.start_cell, GridState::new(3, 9)).unwrap();
        assert!(diag.unwrap() <= 40);
    }

    #[test]
    fn map_file_round_trip() {
        let text = "#####\n#S..#\n#.#.#\n#####\n";
        let g = GridSpec::from_map_str(text, FeatureMode::OneHot).unwrap();
        assert_eq!(g.width, 5);
        assert_eq!(g.height, 4);
        assert_eq!(g.start_cell, GridState::new(1, 1));
        assert!(g.is_wall(GridState::new(2, 2)));
        assert!(GridSpec::from_map_str("#.\n#", FeatureMode::OneHot).is_err());
        assert!(GridSpec::from_map_str("..\n..", FeatureMode::OneHot).is_err());
    }
}
