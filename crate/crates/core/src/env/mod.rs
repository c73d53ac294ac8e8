//! Deterministic, resettable simulator abstraction and the gridworld tasks.

mod map;

pub use map::{Cell, GridMap, MapError};

use thiserror::Error;

/// Episodes end with reward 0 after this many actions if nothing else ends them.
pub const STEP_LIMIT: u16 = 200;

/// Number of one-hot cell classes in compact observations.
pub const CELL_CLASSES: usize = 5;

const CLASS_FLOOR: usize = 0;
const CLASS_WALL: usize = 1;
const CLASS_KEY: usize = 2;
const CLASS_DOOR: usize = 3;
const CLASS_AGENT: usize = 4;

/// RGB colors per cell class, in class-index order.
const CLASS_COLORS: [[u8; 3]; CELL_CLASSES] = [
    [0, 0, 0],       // floor: black
    [255, 255, 255], // wall: white
    [255, 0, 0],     // key: red
    [0, 255, 0],     // door: green
    [0, 0, 255],     // agent: blue
];

/// Rendered image observations are scaled to this square size.
pub const IMAGE_SIZE: usize = 84;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Noop,
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    /// Canonical action order; also the tie-break order used everywhere.
    pub const ALL: [Action; 5] = [Action::Noop, Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        match self {
            Action::Noop => 0,
            Action::Up => 1,
            Action::Down => 2,
            Action::Left => 3,
            Action::Right => 4,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Noop => "noop",
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        }
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Noop => (0, 0),
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }
}

/// Which observation encoding the simulator produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsMode {
    Compact,
    Image,
}

/// A rendered view of one state. Values are already in network order:
/// compact data is one-hot per cell, image data is row-major RGB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Observation {
    Compact { rows: usize, cols: usize, classes: usize, data: Vec<u8> },
    Image { height: usize, width: usize, data: Vec<u8> },
}

impl Observation {
    /// Flattens to network inputs scaled into [0, 1].
    pub fn to_input(&self) -> Vec<f64> {
        match self {
            Observation::Compact { data, .. } => data.iter().map(|&v| f64::from(v)).collect(),
            Observation::Image { data, .. } => data.iter().map(|&v| f64::from(v) / 255.0).collect(),
        }
    }

    pub fn input_len(&self) -> usize {
        match self {
            Observation::Compact { data, .. } => data.len(),
            Observation::Image { data, .. } => data.len(),
        }
    }
}

/// Agent-visible outcome of applying one action.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminal: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("cannot step a terminal state")]
    StepOnTerminal,
    #[error("action index {action} out of range for {num_actions} actions")]
    BadAction { action: usize, num_actions: usize },
}

/// Deterministic simulator with value-like, cloneable states.
///
/// `step` never mutates the passed state; planners clone states freely and
/// replay them. Identical (state, action) pairs always produce identical
/// successors and observations.
pub trait Simulator {
    type State: Clone;
    /// Stable identity used for trajectory statistics; excludes transient
    /// bookkeeping such as the step counter.
    type StateKey: Eq + std::hash::Hash + Clone;

    fn num_actions(&self) -> usize;
    fn reset(&self) -> (Self::State, Observation);
    fn step(&self, state: &Self::State, action: usize) -> Result<(Self::State, StepResult), EnvError>;
    fn observe(&self, state: &Self::State) -> Observation;
    /// Grid-aligned one-hot view of the state, independent of the configured
    /// observation mode. Feature extractors that read tiles use this.
    fn compact_observation(&self, state: &Self::State) -> Observation;
    fn state_key(&self, state: &Self::State) -> Self::StateKey;
    fn is_terminal(&self, state: &Self::State) -> bool;
}

/// Current situation within one episode. Cheap to copy; stepping produces a
/// fresh value and leaves the source untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridState {
    pub row: u16,
    pub col: u16,
    pub has_key: bool,
    pub steps: u16,
    pub terminal: bool,
}

/// Gridworld on a fixed [`GridMap`].
///
/// Rewards: +1 for reaching the door while holding the key (terminal), -1 for
/// walking into a wall (terminal, the agent stays in place), 0 otherwise.
/// Picking up the key is silent and irreversible; entering the door without
/// the key is ordinary floor traversal. Episodes are cut at [`STEP_LIMIT`]
/// actions with reward 0.
#[derive(Debug, Clone)]
pub struct GridEnv {
    map: GridMap,
    mode: ObsMode,
}

impl GridEnv {
    pub fn new(map: GridMap, mode: ObsMode) -> Self {
        GridEnv { map, mode }
    }

    /// Builds the environment a config describes. `map` is tried as a builtin
    /// name first and read as an ASCII map file otherwise.
    pub fn from_config(cfg: &crate::config::ExperimentConfig) -> Result<Self, crate::Error> {
        let map = match GridMap::builtin(&cfg.map) {
            Some(text) => GridMap::parse(text)?,
            None => {
                let text = std::fs::read_to_string(&cfg.map).map_err(|e| {
                    crate::Error::contract(format!(
                        "map {:?} is neither a builtin name nor a readable file: {e}",
                        cfg.map
                    ))
                })?;
                GridMap::parse(&text)?
            }
        };
        Ok(GridEnv::new(map, cfg.obs))
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn mode(&self) -> ObsMode {
        self.mode
    }

    /// Length of the flattened network input for this env's observations.
    pub fn input_len(&self) -> usize {
        match self.mode {
            ObsMode::Compact => self.map.rows() * self.map.cols() * CELL_CLASSES,
            ObsMode::Image => IMAGE_SIZE * IMAGE_SIZE * 3,
        }
    }

    fn class_at(&self, state: &GridState, r: usize, c: usize) -> usize {
        if r == state.row as usize && c == state.col as usize {
            return CLASS_AGENT;
        }
        match self.map.cell(r, c) {
            Cell::Floor => CLASS_FLOOR,
            Cell::Wall => CLASS_WALL,
            Cell::Key => {
                if state.has_key {
                    CLASS_FLOOR
                } else {
                    CLASS_KEY
                }
            }
            Cell::Door => CLASS_DOOR,
        }
    }

    fn compact(&self, state: &GridState) -> Observation {
        let (rows, cols) = (self.map.rows(), self.map.cols());
        let mut data = vec![0u8; rows * cols * CELL_CLASSES];
        for r in 0..rows {
            for c in 0..cols {
                data[(r * cols + c) * CELL_CLASSES + self.class_at(state, r, c)] = 1;
            }
        }
        Observation::Compact { rows, cols, classes: CELL_CLASSES, data }
    }

    fn image(&self, state: &GridState) -> Observation {
        let (rows, cols) = (self.map.rows(), self.map.cols());
        let mut data = vec![0u8; IMAGE_SIZE * IMAGE_SIZE * 3];
        for y in 0..IMAGE_SIZE {
            let r = y * rows / IMAGE_SIZE;
            for x in 0..IMAGE_SIZE {
                let c = x * cols / IMAGE_SIZE;
                let color = CLASS_COLORS[self.class_at(state, r, c)];
                let at = (y * IMAGE_SIZE + x) * 3;
                data[at..at + 3].copy_from_slice(&color);
            }
        }
        Observation::Image { height: IMAGE_SIZE, width: IMAGE_SIZE, data }
    }
}

impl Simulator for GridEnv {
    type State = GridState;
    type StateKey = (u16, u16, bool);

    fn num_actions(&self) -> usize {
        Action::ALL.len()
    }

    fn reset(&self) -> (GridState, Observation) {
        let (r, c) = self.map.start();
        let state = GridState {
            row: r as u16,
            col: c as u16,
            has_key: false,
            steps: 0,
            terminal: false,
        };
        let obs = self.observe(&state);
        (state, obs)
    }

    fn step(&self, state: &GridState, action: usize) -> Result<(GridState, StepResult), EnvError> {
        if state.terminal {
            return Err(EnvError::StepOnTerminal);
        }
        let act = Action::from_index(action).ok_or(EnvError::BadAction {
            action,
            num_actions: self.num_actions(),
        })?;

        let (dr, dc) = act.delta();
        let tr = (state.row as isize + dr) as usize;
        let tc = (state.col as isize + dc) as usize;

        let mut next = *state;
        next.steps += 1;
        let mut reward = 0.0;
        match self.map.cell(tr, tc) {
            Cell::Wall => {
                // Bump: stay in place, lose the episode.
                reward = -1.0;
                next.terminal = true;
            }
            Cell::Key => {
                next.row = tr as u16;
                next.col = tc as u16;
                next.has_key = true;
            }
            Cell::Door => {
                next.row = tr as u16;
                next.col = tc as u16;
                if state.has_key {
                    reward = 1.0;
                    next.terminal = true;
                }
            }
            Cell::Floor => {
                next.row = tr as u16;
                next.col = tc as u16;
            }
        }
        if next.steps >= STEP_LIMIT {
            next.terminal = true;
        }

        let observation = self.observe(&next);
        Ok((next, StepResult { observation, reward, terminal: next.terminal }))
    }

    fn observe(&self, state: &GridState) -> Observation {
        match self.mode {
            ObsMode::Compact => self.compact(state),
            ObsMode::Image => self.image(state),
        }
    }

    fn compact_observation(&self, state: &GridState) -> Observation {
        self.compact(state)
    }

    fn state_key(&self, state: &GridState) -> (u16, u16, bool) {
        (state.row, state.col, state.has_key)
    }

    fn is_terminal(&self, state: &GridState) -> bool {
        state.terminal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corridor_env(mode: ObsMode) -> GridEnv {
        GridEnv::new(GridMap::parse(map::CORRIDOR).unwrap(), mode)
    }

    fn maze_env() -> GridEnv {
        GridEnv::new(GridMap::parse(map::MAZE_1_WALL).unwrap(), ObsMode::Compact)
    }

    #[test]
    fn reset_starts_at_start_cell_without_key() {
        let env = corridor_env(ObsMode::Compact);
        let (s, obs) = env.reset();
        assert_eq!((s.row, s.col), (1, 7));
        assert!(!s.has_key && !s.terminal && s.steps == 0);
        assert_eq!(obs, env.observe(&s));
    }

    #[test]
    fn wall_bump_terminates_with_minus_one_and_agent_stays() {
        let env = corridor_env(ObsMode::Compact);
        let (s, _) = env.reset();
        let (next, r) = env.step(&s, Action::Up.index()).unwrap();
        assert_eq!(r.reward, -1.0);
        assert!(r.terminal && next.terminal);
        assert_eq!((next.row, next.col), (s.row, s.col));
        assert_eq!(env.step(&next, 0), Err(EnvError::StepOnTerminal));
    }

    #[test]
    fn key_pickup_is_silent_and_removes_key_from_observations() {
        let env = corridor_env(ObsMode::Compact);
        let (mut s, _) = env.reset();
        for _ in 0..6 {
            let (next, r) = env.step(&s, Action::Left.index()).unwrap();
            assert_eq!(r.reward, 0.0);
            assert!(!r.terminal);
            s = next;
        }
        assert!(s.has_key);
        assert_eq!((s.row, s.col), (1, 1));
        // Step off the key cell: it must now render as floor.
        let (s2, _) = env.step(&s, Action::Right.index()).unwrap();
        match env.observe(&s2) {
            Observation::Compact { cols, classes, data, .. } => {
                let base = (1 * cols + 1) * classes;
                assert_eq!(data[base + CLASS_FLOOR], 1);
                assert_eq!(data[base + CLASS_KEY], 0);
            }
            _ => unreachable!(),
        }
        // Walking back over the empty key cell is an ordinary move.
        let (s3, r) = env.step(&s2, Action::Left.index()).unwrap();
        assert!(s3.has_key && r.reward == 0.0 && !r.terminal);
    }

    #[test]
    fn door_with_key_rewards_and_terminates_and_without_key_is_floor() {
        let env = corridor_env(ObsMode::Compact);
        let (s, _) = env.reset();
        // Right moves onto the door without the key: plain traversal.
        let (on_door, r) = env.step(&s, Action::Right.index()).unwrap();
        assert_eq!(r.reward, 0.0);
        assert!(!r.terminal);
        assert_eq!((on_door.row, on_door.col), (1, 8));

        // Full plan: 6 left to the key, 7 right to the door.
        let (mut s, _) = env.reset();
        for _ in 0..6 {
            s = env.step(&s, Action::Left.index()).unwrap().0;
        }
        let mut last = None;
        for _ in 0..7 {
            let (next, r) = env.step(&s, Action::Right.index()).unwrap();
            s = next;
            last = Some(r);
        }
        let last = last.unwrap();
        assert_eq!(last.reward, 1.0);
        assert!(last.terminal);
        assert_eq!(s.steps, 13);
    }

    #[test]
    fn episode_is_cut_at_step_limit_with_zero_reward() {
        let env = maze_env();
        let (mut s, _) = env.reset();
        for i in 0..STEP_LIMIT {
            let (next, r) = env.step(&s, Action::Noop.index()).unwrap();
            if i + 1 == STEP_LIMIT {
                assert!(r.terminal && next.terminal);
                assert_eq!(r.reward, 0.0);
            } else {
                assert!(!r.terminal);
            }
            s = next;
        }
        assert_eq!(s.steps, STEP_LIMIT);
    }

    #[test]
    fn noop_keeps_position_but_counts_as_a_step() {
        let env = maze_env();
        let (s, _) = env.reset();
        let (next, _) = env.step(&s, Action::Noop.index()).unwrap();
        assert_eq!((next.row, next.col), (s.row, s.col));
        assert_eq!(next.steps, s.steps + 1);
        assert_eq!(env.observe(&next), env.observe(&s));
    }

    #[test]
    fn stepping_leaves_the_source_state_untouched() {
        let env = maze_env();
        let (s, _) = env.reset();
        let snapshot = s;
        let _ = env.step(&s, Action::Down.index()).unwrap();
        assert_eq!(s, snapshot);
    }

    #[test]
    fn rewards_are_nonzero_only_on_terminal_transitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for name in GridMap::builtin_names() {
            let env = GridEnv::new(GridMap::parse(GridMap::builtin(name).unwrap()).unwrap(), ObsMode::Compact);
            for _ in 0..50 {
                let (mut s, _) = env.reset();
                while !s.terminal {
                    let a = rng.random_range(0..env.num_actions());
                    let (next, r) = env.step(&s, a).unwrap();
                    if r.reward != 0.0 {
                        assert!(r.terminal, "nonzero reward {} on non-terminal step", r.reward);
                    }
                    assert!(next.steps <= STEP_LIMIT);
                    s = next;
                }
            }
        }
    }

    #[test]
    fn identical_state_action_pairs_give_identical_results() {
        let env = maze_env();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut s, _) = env.reset();
        for _ in 0..1000 {
            if s.terminal {
                s = env.reset().0;
            }
            let a = rng.random_range(0..env.num_actions());
            let (n1, r1) = env.step(&s, a).unwrap();
            let (n2, r2) = env.step(&s, a).unwrap();
            assert_eq!(n1, n2);
            assert_eq!(r1.reward, r2.reward);
            assert_eq!(r1.observation, r2.observation);
            s = n1;
        }
    }

    #[test]
    fn compact_observation_is_one_hot_per_cell() {
        let env = maze_env();
        let (s, obs) = env.reset();
        let Observation::Compact { rows, cols, classes, data } = obs else {
            unreachable!()
        };
        assert_eq!(data.len(), rows * cols * classes);
        let mut agent_cells = 0;
        for cell in 0..rows * cols {
            let hot: Vec<usize> =
                (0..classes).filter(|k| data[cell * classes + k] == 1).collect();
            assert_eq!(hot.len(), 1, "cell {cell} must have exactly one hot class");
            if hot[0] == CLASS_AGENT {
                agent_cells += 1;
            }
        }
        assert_eq!(agent_cells, 1);
        let agent_cell = (s.row as usize) * cols + s.col as usize;
        assert_eq!(data[agent_cell * classes + CLASS_AGENT], 1);
    }

    #[test]
    fn image_decodes_back_to_the_compact_observation() {
        let env = corridor_env(ObsMode::Image);
        let (mut s, _) = env.reset();
        for step in 0..8 {
            let Observation::Image { height, width, data } = env.observe(&s) else {
                unreachable!()
            };
            assert_eq!((height, width), (IMAGE_SIZE, IMAGE_SIZE));
            let (rows, cols) = (env.map().rows(), env.map().cols());
            // Decode independently: sample one pixel inside each cell's block.
            let Observation::Compact { classes, data: compact, .. } = env.compact_observation(&s)
            else {
                unreachable!()
            };
            for r in 0..rows {
                for c in 0..cols {
                    let y = (r * IMAGE_SIZE).div_ceil(rows);
                    let x = (c * IMAGE_SIZE).div_ceil(cols);
                    let px = (y * IMAGE_SIZE + x) * 3;
                    let color = [data[px], data[px + 1], data[px + 2]];
                    let class = CLASS_COLORS.iter().position(|&c| c == color).unwrap();
                    assert_eq!(
                        compact[(r * cols + c) * classes + class],
                        1,
                        "step {step}: cell ({r},{c}) decoded class {class} not hot"
                    );
                }
            }
            if env.is_terminal(&s) {
                assert!(step >= 7, "corridor walk hit a wall too early");
                break;
            }
            s = env.step(&s, Action::Left.index()).unwrap().0;
        }
    }

    #[test]
    fn state_key_ignores_the_step_counter() {
        let env = maze_env();
        let (s, _) = env.reset();
        let (looped, _) = env.step(&s, Action::Noop.index()).unwrap();
        assert_ne!(s.steps, looped.steps);
        assert_eq!(env.state_key(&s), env.state_key(&looped));
    }

    #[test]
    fn bad_action_index_is_rejected() {
        let env = maze_env();
        let (s, _) = env.reset();
        assert_eq!(env.step(&s, 9), Err(EnvError::BadAction { action: 9, num_actions: 5 }));
    }
}
