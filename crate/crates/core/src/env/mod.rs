//! Discrete grid environments: Four Rooms style gridworlds and a small
//! pacman board with a stochastic ghost.
//!
//! Every environment is an immutable [`EnvModel`]. Stepping is a pure
//! function from `(state, action)` to a list of weighted outcomes, which is
//! all the downstream path machinery needs.

mod layout;
mod state;

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use layout::{Layout, Pos, Tile};
pub use state::{Dir, Ghost, GridState, Status};

use crate::error::{Error, Result};

/// Agent action. Moving into a wall or off the board leaves the agent in place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Move(Dir),
    Stay,
}

impl Action {
    pub fn name(self) -> &'static str {
        match self {
            Action::Move(d) => d.name(),
            Action::Stay => "stay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardScheme {
    FourRoomsGoal,
    Eat,
    Hunt,
}

impl RewardScheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "four_rooms_goal" | "goal" => Some(RewardScheme::FourRoomsGoal),
            "eat" => Some(RewardScheme::Eat),
            "hunt" => Some(RewardScheme::Hunt),
            _ => None,
        }
    }
}

/// Reward magnitudes and ghost edibility for the pacman board.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiniPacParams {
    pub edible_turns: u8,
    pub food_reward: f64,
    pub pill_reward: f64,
    pub ghost_reward: f64,
}

impl Default for MiniPacParams {
    fn default() -> Self {
        MiniPacParams {
            edible_turns: 8,
            food_reward: 1.0,
            pill_reward: -1.0,
            ghost_reward: 10.0,
        }
    }
}

/// Geometry of a generated four-rooms board.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourRooms {
    /// Row and column index of the two interior walls.
    pub wall: u16,
    /// Doors in order: top (vertical wall), bottom (vertical wall),
    /// left (horizontal wall), right (horizontal wall).
    pub doors: [Pos; 4],
}

impl FourRooms {
    /// Room index of a non-door cell: 0 top-left, 1 top-right,
    /// 2 bottom-left, 3 bottom-right. Doors and walls have no room.
    pub fn room_of(&self, p: Pos) -> Option<usize> {
        if p.row == self.wall || p.col == self.wall {
            return None;
        }
        let bottom = (p.row > self.wall) as usize;
        let right = (p.col > self.wall) as usize;
        Some(bottom * 2 + right)
    }

    pub fn is_door(&self, p: Pos) -> bool {
        self.doors.contains(&p)
    }

    /// Rooms joined by each door, in `doors` order.
    pub fn door_rooms(&self) -> [(usize, usize); 4] {
        [(0, 1), (2, 3), (0, 2), (1, 3)]
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Gridworld { goals: Vec<Pos>, four_rooms: Option<FourRooms> },
    MiniPac { scheme: RewardScheme, pill: Option<Pos>, params: MiniPacParams },
}

/// One weighted result of stepping an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub next: GridState,
    pub prob: f64,
    pub reward: f64,
}

/// An immutable environment description.
#[derive(Debug, Clone)]
pub struct EnvModel {
    layout: Layout,
    actions: Vec<Action>,
    kind: Kind,
}

const MOVES: [Action; 4] = [
    Action::Move(Dir::Up),
    Action::Move(Dir::Down),
    Action::Move(Dir::Left),
    Action::Move(Dir::Right),
];

/// The default 10x7 pacman board.
pub const DEFAULT_MINIPAC_LAYOUT: &str = "\
P......
.#####.
.#...#.
.#.#.#.
...o...
.#.#.#.
.#...#.
.#####.
...G...
.......
";

impl EnvModel {
    /// A gridworld with four moves, wall bounce and absorbing `X` goal cells.
    pub fn gridworld(layout: Layout) -> Result<EnvModel> {
        let goals = layout.find(Tile::Goal);
        if goals.is_empty() {
            return Err(Error::InvalidConfig("gridworld layout has no goal cell".into()));
        }
        Ok(EnvModel {
            layout,
            actions: MOVES.to_vec(),
            kind: Kind::Gridworld { goals, four_rooms: None },
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn reward_scheme(&self) -> RewardScheme {
        match &self.kind {
            Kind::Gridworld { .. } => RewardScheme::FourRoomsGoal,
            Kind::MiniPac { scheme, .. } => *scheme,
        }
    }

    pub fn is_minipac(&self) -> bool {
        matches!(self.kind, Kind::MiniPac { .. })
    }

    pub fn four_rooms(&self) -> Option<&FourRooms> {
        match &self.kind {
            Kind::Gridworld { four_rooms, .. } => four_rooms.as_ref(),
            Kind::MiniPac { .. } => None,
        }
    }

    pub fn goal_cells(&self) -> &[Pos] {
        match &self.kind {
            Kind::Gridworld { goals, .. } => goals,
            Kind::MiniPac { .. } => &[],
        }
    }

    pub fn pill_cell(&self) -> Option<Pos> {
        match &self.kind {
            Kind::MiniPac { pill, .. } => *pill,
            Kind::Gridworld { .. } => None,
        }
    }

    pub fn minipac_params(&self) -> Option<MiniPacParams> {
        match &self.kind {
            Kind::MiniPac { params, .. } => Some(*params),
            Kind::Gridworld { .. } => None,
        }
    }

    /// Layout cell offsets that carry a food bit.
    pub fn food_cells(&self) -> Vec<Pos> {
        self.layout.find(Tile::Food)
    }

    /// Start state read from the layout (`P`, `G`, food and pill tiles).
    pub fn start_state(&self) -> GridState {
        let agent = self
            .layout
            .find(Tile::AgentStart)
            .first()
            .copied()
            .or_else(|| self.layout.open_cells().next())
            .expect("layout has at least one open cell");
        match &self.kind {
            Kind::Gridworld { .. } => GridState::at(agent),
            Kind::MiniPac { pill, .. } => {
                let mut food = 0u128;
                for p in self.food_cells() {
                    food |= 1u128 << self.layout.offset(p);
                }
                GridState {
                    agent,
                    ghost: self
                        .layout
                        .find(Tile::GhostStart)
                        .first()
                        .map(|&pos| Ghost { pos, heading: None }),
                    food,
                    pill: pill.is_some(),
                    edible: 0,
                    status: Status::Playing,
                }
            }
        }
    }

    pub fn is_goal(&self, s: &GridState) -> bool {
        match &self.kind {
            Kind::Gridworld { goals, .. } => goals.contains(&s.agent),
            Kind::MiniPac { scheme, .. } => match scheme {
                RewardScheme::Hunt => s.status == Status::GhostEaten,
                _ => s.status == Status::Cleared,
            },
        }
    }

    pub fn is_absorbing(&self, s: &GridState) -> bool {
        match &self.kind {
            Kind::Gridworld { goals, .. } => goals.contains(&s.agent),
            Kind::MiniPac { .. } => s.status != Status::Playing,
        }
    }

    /// Checks the structural invariants of a state for this environment.
    pub fn is_valid(&self, s: &GridState) -> bool {
        let l = &self.layout;
        let on_board = |p: Pos| (p.row as usize) < l.rows() && (p.col as usize) < l.cols();
        if !on_board(s.agent) || l.is_wall(s.agent) {
            return false;
        }
        match &self.kind {
            Kind::Gridworld { .. } => {
                s.ghost.is_none() && s.food == 0 && !s.pill && s.edible == 0 && s.status == Status::Playing
            }
            Kind::MiniPac { pill, .. } => {
                if let Some(g) = s.ghost {
                    if !on_board(g.pos) || l.is_wall(g.pos) {
                        return false;
                    }
                }
                let cells = l.rows() * l.cols();
                if cells < 128 && s.food >> cells != 0 {
                    return false;
                }
                let mut food = s.food;
                while food != 0 {
                    let bit = food.trailing_zeros() as usize;
                    if l.is_wall(l.pos_of(bit)) {
                        return false;
                    }
                    food &= food - 1;
                }
                !(s.pill && pill.is_none())
            }
        }
    }

    /// Agent position after applying `action` at `from`.
    pub fn move_agent(&self, from: Pos, action: Action) -> Pos {
        match action {
            Action::Stay => from,
            Action::Move(d) => self.neighbour(from, d).unwrap_or(from),
        }
    }

    /// Open cell one step from `p` in direction `d`, if any.
    pub fn neighbour(&self, p: Pos, d: Dir) -> Option<Pos> {
        let (dr, dc) = d.delta();
        let (r, c) = (p.row as i64 + dr, p.col as i64 + dc);
        if !self.layout.in_bounds(r, c) {
            return None;
        }
        let q = Pos::new(r as u16, c as u16);
        (!self.layout.is_wall(q)).then_some(q)
    }

    /// Distribution over next states and rewards for `action` (an index into
    /// [`EnvModel::actions`]). Probabilities sum to one; identical next
    /// states are merged.
    pub fn step_distribution(&self, s: &GridState, action: usize) -> Vec<Outcome> {
        let action = self.actions[action];
        if self.is_absorbing(s) {
            return vec![Outcome { next: s.clone(), prob: 1.0, reward: 0.0 }];
        }
        match &self.kind {
            Kind::Gridworld { goals, .. } => {
                let agent = self.move_agent(s.agent, action);
                let reward = if goals.contains(&agent) { 1.0 } else { 0.0 };
                vec![Outcome { next: GridState::at(agent), prob: 1.0, reward }]
            }
            Kind::MiniPac { scheme, pill, params } => {
                self.minipac_step(s, action, *scheme, *pill, params)
            }
        }
    }

    fn minipac_step(
        &self,
        s: &GridState,
        action: Action,
        scheme: RewardScheme,
        pill_cell: Option<Pos>,
        params: &MiniPacParams,
    ) -> Vec<Outcome> {
        let mut next = s.clone();
        let mut reward = 0.0;
        next.agent = self.move_agent(s.agent, action);
        let bit = 1u128 << self.layout.offset(next.agent);
        if next.food & bit != 0 {
            next.food &= !bit;
            if scheme == RewardScheme::Eat {
                reward += params.food_reward;
            }
        }
        if next.pill && Some(next.agent) == pill_cell {
            next.pill = false;
            next.edible = params.edible_turns;
            if scheme == RewardScheme::Eat {
                reward += params.pill_reward;
            }
        } else {
            next.edible = next.edible.saturating_sub(1);
        }
        let capture_reward = if scheme == RewardScheme::Hunt { params.ghost_reward } else { 0.0 };
        let cleared = s.food != 0 && next.food == 0;

        let Some(ghost) = s.ghost else {
            if cleared {
                next.status = Status::Cleared;
            }
            return vec![Outcome { next, prob: 1.0, reward }];
        };

        // Agent walked onto the ghost before it moved.
        if ghost.pos == next.agent {
            return vec![self.collide(next, reward, capture_reward)];
        }

        let moves = self.ghost_moves(ghost);
        let p = 1.0 / moves.len() as f64;
        let mut out: Vec<Outcome> = Vec::with_capacity(moves.len());
        for g in moves {
            let mut n = next.clone();
            n.ghost = Some(g);
            let o = if g.pos == n.agent {
                self.collide(n, reward, capture_reward)
            } else {
                if cleared {
                    n.status = Status::Cleared;
                }
                Outcome { next: n, prob: 1.0, reward }
            };
            match out.iter_mut().find(|e| e.next == o.next) {
                Some(e) => e.prob += p,
                None => out.push(Outcome { prob: p, ..o }),
            }
        }
        out
    }

    fn collide(&self, mut next: GridState, reward: f64, capture_reward: f64) -> Outcome {
        next.ghost = Some(Ghost { pos: next.agent, heading: None });
        if next.edible > 0 {
            next.status = Status::GhostEaten;
            next.edible = 0;
            Outcome { next, prob: 1.0, reward: reward + capture_reward }
        } else {
            next.status = Status::Dead;
            Outcome { next, prob: 1.0, reward }
        }
    }

    /// Legal ghost moves: every open neighbour except the reverse of the
    /// current heading, unless reversing is the only option. A ghost boxed
    /// in on all sides stays put.
    pub fn ghost_moves(&self, ghost: Ghost) -> Vec<Ghost> {
        let legal: Vec<Ghost> = Dir::ALL
            .iter()
            .filter_map(|&d| {
                self.neighbour(ghost.pos, d)
                    .map(|pos| Ghost { pos, heading: Some(d) })
            })
            .collect();
        if legal.is_empty() {
            return vec![ghost];
        }
        let forward: Vec<Ghost> = match ghost.heading {
            Some(h) => legal
                .iter()
                .copied()
                .filter(|g| g.heading != Some(h.reverse()))
                .collect(),
            None => legal.clone(),
        };
        if forward.is_empty() {
            legal
        } else {
            forward
        }
    }

    /// Canonical string encoding of a state.
    pub fn encode(&self, s: &GridState) -> String {
        match &self.kind {
            Kind::Gridworld { .. } => s.agent.to_string(),
            Kind::MiniPac { .. } => s.encode(),
        }
    }

    pub fn decode(&self, text: &str) -> Result<GridState> {
        let s = match &self.kind {
            Kind::Gridworld { .. } => GridState::at(state::parse_pos(text)?),
            Kind::MiniPac { .. } => GridState::decode(text)?,
        };
        if self.is_valid(&s) {
            Ok(s)
        } else {
            Err(Error::Decode(text.to_string()))
        }
    }

    /// Stable hash of the layout and dynamics parameters.
    pub fn layout_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.layout.to_string().as_bytes());
        h.update(format!("{:?}", self.reward_scheme()).as_bytes());
        if let Some(p) = self.minipac_params() {
            h.update(format!("{p:?}").as_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Four Rooms board of side `grid_size`: one horizontal and one vertical
/// interior wall at the centre line, each wall half pierced by one door.
pub fn four_rooms_env(grid_size: usize, goal: Pos) -> Result<EnvModel> {
    if grid_size < 5 {
        return Err(Error::InvalidConfig(format!(
            "four rooms grid size must be at least 5, got {grid_size}"
        )));
    }
    let n = grid_size as u16;
    let wall = n / 2;
    let door_in = |lo: u16, hi: u16| lo + (hi - lo) / 2;
    let doors = [
        Pos::new(door_in(0, wall), wall),
        Pos::new(door_in(wall + 1, n), wall),
        Pos::new(wall, door_in(0, wall)),
        Pos::new(wall, door_in(wall + 1, n)),
    ];
    let mut tiles = vec![Tile::Empty; grid_size * grid_size];
    for i in 0..n {
        for p in [Pos::new(i, wall), Pos::new(wall, i)] {
            if !doors.contains(&p) {
                tiles[p.row as usize * grid_size + p.col as usize] = Tile::Wall;
            }
        }
    }
    if goal.row >= n || goal.col >= n {
        return Err(Error::InvalidConfig(format!("goal {goal} is off the board")));
    }
    let g = goal.row as usize * grid_size + goal.col as usize;
    if tiles[g] == Tile::Wall {
        return Err(Error::InvalidConfig(format!("goal {goal} lies on a wall")));
    }
    tiles[g] = Tile::Goal;
    let layout = Layout::from_tiles(grid_size, grid_size, tiles)?;
    let mut env = EnvModel::gridworld(layout)?;
    if let Kind::Gridworld { four_rooms, .. } = &mut env.kind {
        *four_rooms = Some(FourRooms { wall, doors });
    }
    Ok(env)
}

/// Pacman board with a stochastic ghost. `layout` must describe a connected
/// open region of at most 128 cells with at most one pill.
pub fn minipac_env(layout: Layout, scheme: RewardScheme, params: MiniPacParams) -> Result<EnvModel> {
    if layout.rows() * layout.cols() > 128 {
        return Err(Error::InvalidConfig(format!(
            "pacman board has {} cells, at most 128 supported",
            layout.rows() * layout.cols()
        )));
    }
    if layout.open_components() != 1 {
        return Err(Error::InvalidConfig("pacman layout open region is not connected".into()));
    }
    let pills = layout.find(Tile::Pill);
    if pills.len() > 1 {
        return Err(Error::InvalidConfig(format!("pacman layout has {} pills", pills.len())));
    }
    if layout.find(Tile::AgentStart).len() > 1 || layout.find(Tile::GhostStart).len() > 1 {
        return Err(Error::InvalidConfig("pacman layout has several agents or ghosts".into()));
    }
    Ok(EnvModel {
        layout,
        actions: MOVES.iter().copied().chain([Action::Stay]).collect(),
        kind: Kind::MiniPac { scheme, pill: pills.first().copied(), params },
    })
}

/// The default 10x7 pacman board under `scheme`.
pub fn default_minipac(scheme: RewardScheme) -> EnvModel {
    let layout = Layout::parse(DEFAULT_MINIPAC_LAYOUT).expect("default layout parses");
    minipac_env(layout, scheme, MiniPacParams::default()).expect("default layout is valid")
}

/// An enumerated set of states with a dense index.
#[derive(Debug, Clone, Default)]
pub struct StateSpace {
    states: Vec<GridState>,
    index: HashMap<GridState, usize>,
    boundary: Vec<bool>,
}

impl StateSpace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a space from distinct states. Duplicates are dropped.
    pub fn from_states(states: impl IntoIterator<Item = GridState>) -> Self {
        let mut space = StateSpace::new();
        for s in states {
            space.insert(s, false);
        }
        space
    }

    /// Inserts a state and returns its id (existing id if already present).
    pub fn insert(&mut self, s: GridState, boundary: bool) -> usize {
        if let Some(&id) = self.index.get(&s) {
            return id;
        }
        let id = self.states.len();
        self.index.insert(s.clone(), id);
        self.states.push(s);
        self.boundary.push(boundary);
        id
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, id: usize) -> &GridState {
        &self.states[id]
    }

    pub fn states(&self) -> &[GridState] {
        &self.states
    }

    pub fn id_of(&self, s: &GridState) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn is_boundary(&self, id: usize) -> bool {
        self.boundary[id]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub(crate) fn set_boundary(&mut self, id: usize, flag: bool) {
        self.boundary[id] = flag;
    }
}

/// Breadth-first closure of `start` under every action and every outcome,
/// in BFS order with action-then-outcome tie-breaking.
pub fn enumerate_reachable(env: &EnvModel, start: &GridState, max_states: usize) -> Result<StateSpace> {
    if !env.is_valid(start) {
        return Err(Error::UnknownState(env.encode(start)));
    }
    let mut space = StateSpace::new();
    space.insert(start.clone(), false);
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        let s = space.state(id).clone();
        for a in 0..env.actions().len() {
            for o in env.step_distribution(&s, a) {
                if space.id_of(&o.next).is_none() {
                    if space.len() >= max_states {
                        return Err(Error::Truncated { cap: max_states });
                    }
                    queue.push_back(space.insert(o.next, false));
                }
            }
        }
    }
    Ok(space)
}
