use serde::{Deserialize, Serialize};

use super::layout::Pos;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dir {
    Up,
    Down,
    Left,
    Right,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::Up, Dir::Down, Dir::Left, Dir::Right];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Dir::Up => (-1, 0),
            Dir::Down => (1, 0),
            Dir::Left => (0, -1),
            Dir::Right => (0, 1),
        }
    }

    pub fn reverse(self) -> Dir {
        match self {
            Dir::Up => Dir::Down,
            Dir::Down => Dir::Up,
            Dir::Left => Dir::Right,
            Dir::Right => Dir::Left,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dir::Up => "up",
            Dir::Down => "down",
            Dir::Left => "left",
            Dir::Right => "right",
        }
    }

    fn letter(self) -> char {
        match self {
            Dir::Up => 'U',
            Dir::Down => 'D',
            Dir::Left => 'L',
            Dir::Right => 'R',
        }
    }

    fn from_letter(c: char) -> Option<Dir> {
        Some(match c {
            'U' => Dir::Up,
            'D' => Dir::Down,
            'L' => Dir::Left,
            'R' => Dir::Right,
            _ => return None,
        })
    }
}

/// Ghost position plus the direction of its last move, which the
/// no-reversal rule needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Ghost {
    pub pos: Pos,
    pub heading: Option<Dir>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Status {
    Playing,
    Dead,
    GhostEaten,
    Cleared,
}

impl Status {
    fn letter(self) -> char {
        match self {
            Status::Playing => 'P',
            Status::Dead => 'D',
            Status::GhostEaten => 'G',
            Status::Cleared => 'C',
        }
    }

    fn from_letter(c: &str) -> Option<Status> {
        Some(match c {
            "P" => Status::Playing,
            "D" => Status::Dead,
            "G" => Status::GhostEaten,
            "C" => Status::Cleared,
            _ => return None,
        })
    }
}

/// A full board state. Gridworlds only use `agent`; the remaining fields
/// stay at their defaults.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridState {
    pub agent: Pos,
    pub ghost: Option<Ghost>,
    /// Remaining food, one bit per layout cell offset.
    pub food: u128,
    pub pill: bool,
    /// Turns of ghost edibility remaining.
    pub edible: u8,
    pub status: Status,
}

impl GridState {
    pub fn at(agent: Pos) -> GridState {
        GridState {
            agent,
            ghost: None,
            food: 0,
            pill: false,
            edible: 0,
            status: Status::Playing,
        }
    }

    pub fn food_count(&self) -> u32 {
        self.food.count_ones()
    }

    pub fn has_food(&self, offset: usize) -> bool {
        self.food >> offset & 1 == 1
    }

    /// `a=r,c;g=r,c,H;f=<hex>;p=0|1;e=<n>;s=<status>`, with `g=-` when
    /// there is no ghost and `H` one of `UDLR-`.
    pub(crate) fn encode(&self) -> String {
        let ghost = match self.ghost {
            Some(g) => format!("{},{}", g.pos, g.heading.map_or('-', Dir::letter)),
            None => "-".to_string(),
        };
        format!(
            "a={};g={};f={:x};p={};e={};s={}",
            self.agent,
            ghost,
            self.food,
            self.pill as u8,
            self.edible,
            self.status.letter()
        )
    }

    pub(crate) fn decode(text: &str) -> Result<GridState> {
        let bad = || Error::Decode(text.to_string());
        let mut fields = text.split(';');
        let mut field = |key: &str| -> Result<&str> {
            fields
                .next()
                .and_then(|f| f.strip_prefix(key))
                .and_then(|f| f.strip_prefix('='))
                .ok_or_else(bad)
        };
        let agent = parse_pos(field("a")?)?;
        let ghost = match field("g")? {
            "-" => None,
            g => {
                let (pos, heading) = g.rsplit_once(',').ok_or_else(bad)?;
                let heading = match heading {
                    "-" => None,
                    h => Some(Dir::from_letter(h.chars().next().ok_or_else(bad)?).ok_or_else(bad)?),
                };
                Some(Ghost { pos: parse_pos(pos)?, heading })
            }
        };
        let food = u128::from_str_radix(field("f")?, 16).map_err(|_| bad())?;
        let pill = match field("p")? {
            "0" => false,
            "1" => true,
            _ => return Err(bad()),
        };
        let edible = field("e")?.parse().map_err(|_| bad())?;
        let status = Status::from_letter(field("s")?).ok_or_else(bad)?;
        if fields.next().is_some() {
            return Err(bad());
        }
        Ok(GridState { agent, ghost, food, pill, edible, status })
    }
}

pub(crate) fn parse_pos(text: &str) -> Result<Pos> {
    let bad = || Error::Decode(text.to_string());
    let (r, c) = text.split_once(',').ok_or_else(bad)?;
    Ok(Pos::new(
        r.trim().parse().map_err(|_| bad())?,
        c.trim().parse().map_err(|_| bad())?,
    ))
}
