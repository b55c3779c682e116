//! The arrow gridworld: a finite example whose closed-loop operator can be
//! written down exactly.
//!
//! From a safe cell the system moves one cell in its arrow direction with
//! probability 0.6, to each of the other three 4-neighbours with
//! probability 0.1, and stays put with probability 0.1. Landing on a gray
//! cell or leaving the map sends it to `K`.

use std::fmt;

use super::mdp::{FiniteMdp, Kernel, SparseRows, TabularPolicy};
use crate::env::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// A 5×5 example with two gray cells and arrows funnelling into a facing
/// pair in the middle row.
pub const EXAMPLE_MAP: &str = include_str!("../../maps/example.txt");

pub const P_ARROW: f64 = 0.6;
pub const P_OTHER: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    fn delta(self) -> (i64, i64) {
        match self {
            Direction::Up => (-1, 0),
            Direction::Down => (1, 0),
            Direction::Left => (0, -1),
            Direction::Right => (0, 1),
        }
    }

    fn symbol(self) -> char {
        match self {
            Direction::Up => '^',
            Direction::Down => 'v',
            Direction::Left => '<',
            Direction::Right => '>',
        }
    }

    fn from_symbol(c: char) -> Option<Self> {
        Some(match c {
            '^' => Direction::Up,
            'v' => Direction::Down,
            '<' => Direction::Left,
            '>' => Direction::Right,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Gray,
    Safe(Direction),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridMap {
    pub width: usize,
    pub height: usize,
    /// Row-major, `height * width` cells.
    pub cells: Vec<Cell>,
}

impl GridMap {
    /// Parses the two-block text format: a `.`/`#` occupancy grid, a blank
    /// line, then an arrow grid using `^ v < >` on safe cells and `#` on
    /// gray ones.
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().map(str::trim_end).collect();
        let split = lines
            .iter()
            .position(|l| l.trim().is_empty())
            .ok_or_else(|| Error::parse("grid map needs a blank line between the cell and arrow grids"))?;
        let cell_rows = &lines[..split];
        let arrow_rows: Vec<&str> = lines[split + 1..]
            .iter()
            .copied()
            .skip_while(|l| l.trim().is_empty())
            .collect::<Vec<_>>();
        let arrow_rows: Vec<&str> = {
            let mut v = arrow_rows;
            while v.last().is_some_and(|l| l.trim().is_empty()) {
                v.pop();
            }
            v
        };
        let height = cell_rows.len();
        if height == 0 {
            return Err(Error::parse("grid map has no rows"));
        }
        let width = cell_rows[0].chars().count();
        if width == 0 {
            return Err(Error::parse("grid map row 0 is empty"));
        }
        if arrow_rows.len() != height {
            return Err(Error::parse(format!(
                "arrow grid has {} rows, cell grid has {height}",
                arrow_rows.len()
            )));
        }
        let mut cells = Vec::with_capacity(width * height);
        for (r, (crow, arow)) in cell_rows.iter().zip(&arrow_rows).enumerate() {
            let cs: Vec<char> = crow.chars().collect();
            let as_: Vec<char> = arow.chars().collect();
            if cs.len() != width || as_.len() != width {
                return Err(Error::parse(format!("row {r}: expected width {width}")));
            }
            for (c, (&occ, &arrow)) in cs.iter().zip(&as_).enumerate() {
                let cell = match (occ, arrow) {
                    ('#', '#') => Cell::Gray,
                    ('.', a) => Cell::Safe(Direction::from_symbol(a).ok_or_else(|| {
                        Error::parse(format!("cell ({r}, {c}): safe cell needs an arrow, found `{a}`"))
                    })?),
                    ('#', a) => {
                        return Err(Error::parse(format!("cell ({r}, {c}): gray cell carries `{a}`")))
                    }
                    (o, _) => return Err(Error::parse(format!("cell ({r}, {c}): unknown cell `{o}`"))),
                };
                cells.push(cell);
            }
        }
        Ok(Self { width, height, cells })
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.width + col]
    }

    /// `(row, col)` of each safe cell in row-major order; this is the state
    /// enumeration used by every tabular object built from the map.
    pub fn safe_cells(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .filter(|&(r, c)| matches!(self.cell(r, c), Cell::Safe(_)))
            .collect()
    }

    fn state_index(&self) -> Vec<Option<usize>> {
        let mut idx = vec![None; self.cells.len()];
        for (i, (r, c)) in self.safe_cells().into_iter().enumerate() {
            idx[r * self.width + c] = Some(i);
        }
        idx
    }

    fn neighbour(&self, row: usize, col: usize, d: Option<Direction>) -> Option<(usize, usize)> {
        let (dr, dc) = d.map_or((0, 0), Direction::delta);
        let (r, c) = (row as i64 + dr, col as i64 + dc);
        if r < 0 || c < 0 || r >= self.height as i64 || c >= self.width as i64 {
            return None;
        }
        Some((r as usize, c as usize))
    }

    /// The five outcomes of moving from `(row, col)` with arrow `arrow`:
    /// target cell (None when off-map) and probability.
    fn outcomes(&self, row: usize, col: usize, arrow: Direction) -> [(Option<(usize, usize)>, f64); 5] {
        let mut out = [(None, 0.0); 5];
        out[0] = (self.neighbour(row, col, Some(arrow)), P_ARROW);
        let mut k = 1;
        for d in Direction::ALL {
            if d != arrow {
                out[k] = (self.neighbour(row, col, Some(d)), P_OTHER);
                k += 1;
            }
        }
        out[4] = (Some((row, col)), P_OTHER);
        out
    }

    /// Kernel row for `(row, col)` with arrow `arrow`, sorted by target.
    fn transition_row(&self, index: &[Option<usize>], row: usize, col: usize, arrow: Direction) -> (Vec<(usize, f64)>, f64) {
        let mut entries = Vec::with_capacity(5);
        let mut exit = 0.0;
        for (target, p) in self.outcomes(row, col, arrow) {
            match target.and_then(|(r, c)| index[r * self.width + c]) {
                Some(y) => entries.push((y, p)),
                None => exit += p,
            }
        }
        entries.sort_by_key(|&(y, _)| y);
        (entries, exit)
    }

    /// The arrows as a deterministic policy over the four directions.
    pub fn arrow_policy(&self) -> TabularPolicy {
        let actions: Vec<usize> = self
            .safe_cells()
            .into_iter()
            .map(|(r, c)| match self.cell(r, c) {
                Cell::Safe(d) => d.index(),
                Cell::Gray => unreachable!(),
            })
            .collect();
        TabularPolicy::deterministic(&actions, 4).expect("directions are in range")
    }
}

impl fmt::Display for GridMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.height {
            for c in 0..self.width {
                f.write_str(if self.cell(r, c) == Cell::Gray { "#" } else { "." })?;
            }
            writeln!(f)?;
        }
        writeln!(f)?;
        for r in 0..self.height {
            for c in 0..self.width {
                let ch = match self.cell(r, c) {
                    Cell::Gray => '#',
                    Cell::Safe(d) => d.symbol(),
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Closed-loop matrix of the map under its own arrows.
pub fn build_gridworld(map: &GridMap) -> Result<FiniteMdp> {
    let index = map.state_index();
    let cells = map.safe_cells();
    let mut rows = SparseRows::new();
    for &(r, c) in &cells {
        let Cell::Safe(arrow) = map.cell(r, c) else { unreachable!() };
        let (entries, _) = map.transition_row(&index, r, c, arrow);
        rows.push_row(entries);
    }
    FiniteMdp::from_rows(cells.len(), rows)
}

/// Kernel with the four directions as actions, indexed by [`Direction::index`].
pub fn gridworld_kernel(map: &GridMap) -> Result<Kernel> {
    let index = map.state_index();
    let cells = map.safe_cells();
    let mut rows = SparseRows::new();
    let mut terminal = Vec::with_capacity(cells.len() * 4);
    for &(r, c) in &cells {
        for d in Direction::ALL {
            let (entries, exit) = map.transition_row(&index, r, c, d);
            rows.push_row(entries);
            terminal.push(exit);
        }
    }
    Kernel::new(cells.len(), 4, rows, terminal)
}

/// The gridworld as a sampled environment.
///
/// State coordinates are `(row, col)`; the single action coordinate is a
/// direction index in `{0, 1, 2, 3}` (up, down, left, right).
pub struct GridWorld {
    map: GridMap,
    spec: EnvSpec,
}

impl GridWorld {
    pub fn new(map: GridMap) -> Self {
        let spec = EnvSpec::new(2, vec![(0.0, 3.0)], None).expect("static spec");
        Self { map, spec }
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }
}

impl Environment for GridWorld {
    fn id(&self) -> &str {
        "grid"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn contains(&self, coords: &[f64]) -> bool {
        let (r, c) = (coords[0], coords[1]);
        if r.fract() != 0.0 || c.fract() != 0.0 || r < 0.0 || c < 0.0 {
            return false;
        }
        let (r, c) = (r as usize, c as usize);
        r < self.map.height && c < self.map.width && self.map.cell(r, c) != Cell::Gray
    }

    fn check_action(&self, action: &[f64]) -> Result<()> {
        match action {
            [a] if a.fract() == 0.0 && (0.0..=3.0).contains(a) => Ok(()),
            _ => Err(Error::validation(format!("grid action must be a direction index 0..=3, got {action:?}"))),
        }
    }

    fn transition(&self, state: &[f64], action: &[f64], rng: &mut SimRng) -> Vec<f64> {
        let (r, c) = (state[0] as usize, state[1] as usize);
        let arrow = Direction::from_index(action[0] as usize).expect("checked action");
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut pick = 4;
        for (k, p) in [P_ARROW, P_OTHER, P_OTHER, P_OTHER, P_OTHER].into_iter().enumerate() {
            acc += p;
            if u < acc {
                pick = k;
                break;
            }
        }
        // Index 0 is the arrow, 1..=3 the remaining directions, 4 stay.
        let dir = match pick {
            0 => Some(arrow),
            4 => None,
            k => Direction::ALL.into_iter().filter(|&d| d != arrow).nth(k - 1),
        };
        let (dr, dc) = dir.map_or((0, 0), Direction::delta);
        vec![r as f64 + dr as f64, c as f64 + dc as f64]
    }

    fn sampling_box(&self) -> Vec<(f64, f64)> {
        vec![(0.0, self.map.height as f64), (0.0, self.map.width as f64)]
    }

    fn sample_safe_state(&self, rng: &mut SimRng) -> crate::env::StateVector {
        let cells = self.map.safe_cells();
        let (r, c) = cells[rng.index(cells.len())];
        crate::env::StateVector::new(vec![r as f64, c as f64])
    }

    fn sample_action(&self, rng: &mut SimRng) -> crate::env::ActionVector {
        crate::env::ActionVector::scalar(rng.index(4) as f64)
    }
}
