//! Plain-text board layouts.
//!
//! One character per cell: `#` wall, `.` food, `o` pill, `P` agent start,
//! `G` ghost start, ` ` empty, `X` goal. Rows shorter than the widest row
//! are padded with empty cells, so trailing whitespace only ever means
//! "empty".

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid coordinate, `row` grows downwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub row: u16,
    pub col: u16,
}

impl Pos {
    pub const fn new(row: u16, col: u16) -> Self {
        Pos { row, col }
    }

    pub fn euclidean(self, other: Pos) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        (dr * dr + dc * dc).sqrt()
    }

    pub fn manhattan(self, other: Pos) -> usize {
        (self.row.abs_diff(other.row) + self.col.abs_diff(other.col)) as usize
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tile {
    Wall,
    Food,
    Pill,
    AgentStart,
    GhostStart,
    Empty,
    Goal,
}

impl Tile {
    fn from_char(ch: char) -> Option<Tile> {
        Some(match ch {
            '#' => Tile::Wall,
            '.' => Tile::Food,
            'o' => Tile::Pill,
            'P' => Tile::AgentStart,
            'G' => Tile::GhostStart,
            ' ' => Tile::Empty,
            'X' => Tile::Goal,
            _ => return None,
        })
    }

    fn to_char(self) -> char {
        match self {
            Tile::Wall => '#',
            Tile::Food => '.',
            Tile::Pill => 'o',
            Tile::AgentStart => 'P',
            Tile::GhostStart => 'G',
            Tile::Empty => ' ',
            Tile::Goal => 'X',
        }
    }
}

/// A parsed board: dimensions plus one [`Tile`] per cell, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    rows: usize,
    cols: usize,
    tiles: Vec<Tile>,
}

impl Layout {
    pub fn parse(text: &str) -> Result<Layout> {
        let mut lines: Vec<&str> = text.split('\n').collect();
        if lines.last().is_some_and(|l| l.is_empty()) {
            lines.pop();
        }
        let lines: Vec<&str> = lines
            .into_iter()
            .map(|l| l.strip_suffix('\r').unwrap_or(l))
            .collect();
        let rows = lines.len();
        let cols = lines.iter().map(|l| l.chars().count()).max().unwrap_or(0);
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig("empty layout".into()));
        }
        let mut tiles = vec![Tile::Empty; rows * cols];
        for (r, line) in lines.iter().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                tiles[r * cols + c] = Tile::from_char(ch).ok_or(Error::LayoutParse {
                    line: r + 1,
                    col: c + 1,
                    ch,
                })?;
            }
        }
        Ok(Layout { rows, cols, tiles })
    }

    pub fn from_tiles(rows: usize, cols: usize, tiles: Vec<Tile>) -> Result<Layout> {
        if tiles.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: tiles.len(),
            });
        }
        Ok(Layout { rows, cols, tiles })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn tile(&self, p: Pos) -> Tile {
        self.tiles[self.offset(p)]
    }

    pub fn offset(&self, p: Pos) -> usize {
        p.row as usize * self.cols + p.col as usize
    }

    pub fn pos_of(&self, offset: usize) -> Pos {
        Pos::new((offset / self.cols) as u16, (offset % self.cols) as u16)
    }

    pub fn in_bounds(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.rows && (col as usize) < self.cols
    }

    pub fn is_wall(&self, p: Pos) -> bool {
        self.tile(p) == Tile::Wall
    }

    pub fn cells(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.rows * self.cols).map(|i| self.pos_of(i))
    }

    pub fn open_cells(&self) -> impl Iterator<Item = Pos> + '_ {
        self.cells().filter(|&p| !self.is_wall(p))
    }

    pub fn find(&self, tile: Tile) -> Vec<Pos> {
        self.cells().filter(|&p| self.tile(p) == tile).collect()
    }

    /// Number of connected components of the non-wall region (4-neighbourhood).
    pub fn open_components(&self) -> usize {
        let mut seen = vec![false; self.tiles.len()];
        let mut components = 0;
        for start in self.open_cells() {
            if seen[self.offset(start)] {
                continue;
            }
            components += 1;
            let mut stack = vec![start];
            seen[self.offset(start)] = true;
            while let Some(p) = stack.pop() {
                for q in self.neighbours(p) {
                    if !seen[self.offset(q)] {
                        seen[self.offset(q)] = true;
                        stack.push(q);
                    }
                }
            }
        }
        components
    }

    /// Open 4-neighbours of `p` in up, down, left, right order.
    pub fn neighbours(&self, p: Pos) -> impl Iterator<Item = Pos> + '_ {
        const STEPS: [(i64, i64); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
        STEPS.iter().filter_map(move |&(dr, dc)| {
            let (r, c) = (p.row as i64 + dr, p.col as i64 + dc);
            if self.in_bounds(r, c) {
                let q = Pos::new(r as u16, c as u16);
                (!self.is_wall(q)).then_some(q)
            } else {
                None
            }
        })
    }

    /// Breadth-first step distances from `from` to every cell (`None` for
    /// walls and unreachable cells).
    pub fn bfs_distances(&self, from: Pos) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.tiles.len()];
        if self.is_wall(from) {
            return dist;
        }
        let mut queue = std::collections::VecDeque::new();
        dist[self.offset(from)] = Some(0);
        queue.push_back(from);
        while let Some(p) = queue.pop_front() {
            let d = dist[self.offset(p)].unwrap();
            for q in self.neighbours(p) {
                if dist[self.offset(q)].is_none() {
                    dist[self.offset(q)] = Some(d + 1);
                    queue.push_back(q);
                }
            }
        }
        dist
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            let line: String = (0..self.cols)
                .map(|c| self.tiles[r * self.cols + c].to_char())
                .collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_tile_kind() {
        let layout = Layout::parse("#.oP\nG X \n").unwrap();
        assert_eq!(layout.rows(), 2);
        assert_eq!(layout.cols(), 4);
        assert_eq!(layout.tile(Pos::new(0, 0)), Tile::Wall);
        assert_eq!(layout.tile(Pos::new(0, 1)), Tile::Food);
        assert_eq!(layout.tile(Pos::new(0, 2)), Tile::Pill);
        assert_eq!(layout.tile(Pos::new(0, 3)), Tile::AgentStart);
        assert_eq!(layout.tile(Pos::new(1, 0)), Tile::GhostStart);
        assert_eq!(layout.tile(Pos::new(1, 1)), Tile::Empty);
        assert_eq!(layout.tile(Pos::new(1, 2)), Tile::Goal);
        assert_eq!(layout.tile(Pos::new(1, 3)), Tile::Empty);
    }

    #[test]
    fn short_rows_pad_with_empty_cells() {
        let layout = Layout::parse("....\n#").unwrap();
        assert_eq!(layout.cols(), 4);
        assert_eq!(layout.tile(Pos::new(1, 0)), Tile::Wall);
        assert_eq!(layout.tile(Pos::new(1, 3)), Tile::Empty);
    }

    #[test]
    fn display_round_trips() {
        let text = "#.oP\nG X \n";
        assert_eq!(Layout::parse(text).unwrap().to_string(), text);
    }

    #[test]
    fn rejects_unknown_characters() {
        let err = Layout::parse("..\n.z").unwrap_err();
        assert!(matches!(err, Error::LayoutParse { line: 2, col: 2, ch: 'z' }));
    }

    #[test]
    fn counts_components() {
        assert_eq!(Layout::parse("..#..").unwrap().open_components(), 2);
        assert_eq!(Layout::parse("...\n#.#").unwrap().open_components(), 1);
    }
}
