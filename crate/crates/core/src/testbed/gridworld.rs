use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::mdp::{TabularMdp, MAX_STATES};
use super::TestbedError;
use crate::labeling::Trajectory;
use crate::progress::Progress;

pub type Cell = (usize, usize);

/// Moves: up, down, left, right.
pub const ACTIONS: [(isize, isize); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWorldSpec {
    pub width: usize,
    pub height: usize,
    pub walls: BTreeSet<Cell>,
    /// Cells a demonstration passes through in order. Used as keyframes.
    pub subgoal_cells: Vec<Cell>,
    pub start_cell: Cell,
    pub goal_cell: Cell,
    /// Chance that a uniformly random move replaces the chosen one.
    pub slip_probability: f64,
}

impl GridWorldSpec {
    /// 10×10 maze with two wall columns forcing a detour:
    /// up and over the first, down and under the second.
    pub fn canonical() -> Self {
        let mut walls = BTreeSet::new();
        for y in 3..10 {
            walls.insert((3, y));
        }
        for y in 0..7 {
            walls.insert((6, y));
        }
        Self {
            width: 10,
            height: 10,
            walls,
            subgoal_cells: vec![(3, 2), (6, 7)],
            start_cell: (0, 9),
            goal_cell: (9, 9),
            slip_probability: 0.1,
        }
    }

    /// Open `width × height` room, start top-left, goal bottom-right.
    pub fn open(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            walls: BTreeSet::new(),
            subgoal_cells: Vec::new(),
            start_cell: (0, 0),
            goal_cell: (width - 1, height - 1),
            slip_probability: 0.0,
        }
    }

    pub fn state_of(&self, c: Cell) -> usize {
        c.1 * self.width + c.0
    }

    pub fn cell_of(&self, s: usize) -> Cell {
        (s % self.width, s / self.width)
    }

    fn inside(&self, c: Cell) -> bool {
        c.0 < self.width && c.1 < self.height
    }

    fn open_cell(&self, c: Cell) -> bool {
        self.inside(c) && !self.walls.contains(&c)
    }

    fn step_cell(&self, c: Cell, a: usize) -> Cell {
        let (dx, dy) = ACTIONS[a];
        let nx = c.0 as isize + dx;
        let ny = c.1 as isize + dy;
        if nx < 0 || ny < 0 {
            return c;
        }
        let n = (nx as usize, ny as usize);
        if self.open_cell(n) {
            n
        } else {
            c
        }
    }

    /// Shortest-path distance to `target` for every open cell reachable
    /// from it (moves are reversible, so this is also distance *to* target).
    pub fn distances_to(&self, target: Cell) -> BTreeMap<Cell, usize> {
        let mut dist = BTreeMap::new();
        let mut queue = VecDeque::new();
        dist.insert(target, 0);
        queue.push_back(target);
        while let Some(c) = queue.pop_front() {
            let d = dist[&c];
            for a in 0..ACTIONS.len() {
                let n = self.step_cell(c, a);
                if n != c && !dist.contains_key(&n) {
                    dist.insert(n, d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    pub fn validate(&self) -> Result<(), TestbedError> {
        let bad = |s: &str| Err(TestbedError::InvalidSpec(s.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("grid must be non-empty");
        }
        if self.width * self.height > MAX_STATES {
            return bad("grid exceeds the state cap");
        }
        if !(0.0..1.0).contains(&self.slip_probability) {
            return bad("slip_probability must be in [0, 1)");
        }
        for c in [self.start_cell, self.goal_cell].iter().chain(&self.subgoal_cells) {
            if !self.open_cell(*c) {
                return bad("start, goal and subgoals must be open cells inside the grid");
            }
        }
        if self.start_cell == self.goal_cell {
            return bad("start and goal must differ");
        }
        if !self.distances_to(self.goal_cell).contains_key(&self.start_cell) {
            return Err(TestbedError::Unreachable);
        }
        Ok(())
    }

    pub fn build(&self) -> Result<GridWorld, TestbedError> {
        self.validate()?;
        let n = self.width * self.height;
        let k = ACTIONS.len();
        let goal = self.state_of(self.goal_cell);
        let mut transitions = Vec::with_capacity(n * k);
        for s in 0..n {
            let c = self.cell_of(s);
            for a in 0..k {
                if s == goal || !self.open_cell(c) {
                    transitions.push(vec![(s, 1.0)]);
                    continue;
                }
                let mut row: BTreeMap<usize, f64> = BTreeMap::new();
                let slip = self.slip_probability;
                *row.entry(self.state_of(self.step_cell(c, a))).or_default() += 1.0 - slip;
                if slip > 0.0 {
                    for b in 0..k {
                        *row.entry(self.state_of(self.step_cell(c, b))).or_default() += slip / k as f64;
                    }
                }
                transitions.push(row.into_iter().collect());
            }
        }
        let dist = self.distances_to(self.goal_cell);
        let d0 = dist[&self.start_cell] as f64;
        let true_potential = (0..n)
            .map(|s| match dist.get(&self.cell_of(s)) {
                Some(&d) if self.open_cell(self.cell_of(s)) => Progress::clamped(1.0 - d as f64 / d0),
                _ => Progress::ZERO,
            })
            .collect();
        let mdp = TabularMdp {
            n_states: n,
            n_actions: k,
            transitions,
            gold_states: [goal].into_iter().collect(),
            start_state: self.state_of(self.start_cell),
            terminal_states: [goal].into_iter().collect(),
            true_potential,
        };
        mdp.validate()?;
        let scale = |v: usize, len: usize| if len <= 1 { 0.0 } else { v as f64 / (len - 1) as f64 };
        let coords = (0..n)
            .map(|s| {
                let (x, y) = self.cell_of(s);
                vec![scale(x, self.width), scale(y, self.height)]
            })
            .collect();
        Ok(GridWorld {
            spec: self.clone(),
            mdp,
            coords,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    pub spec: GridWorldSpec,
    pub mdp: TabularMdp,
    /// Cell coordinates scaled into `[0, 1]²`, one row per state.
    pub coords: Vec<Vec<f64>>,
}

impl GridWorld {
    /// Shortest path between two open cells, as states, both ends included.
    /// Ties prefer the lowest action index.
    pub fn shortest_path(&self, from: Cell, to: Cell) -> Result<Vec<usize>, TestbedError> {
        let dist = self.spec.distances_to(to);
        if !dist.contains_key(&from) {
            return Err(TestbedError::Unreachable);
        }
        let mut path = vec![self.spec.state_of(from)];
        let mut c = from;
        while c != to {
            let d = dist[&c];
            c = (0..ACTIONS.len())
                .map(|a| self.spec.step_cell(c, a))
                .find(|n| dist.get(n) == Some(&(d - 1)))
                .ok_or(TestbedError::Unreachable)?;
            path.push(self.spec.state_of(c));
        }
        Ok(path)
    }

    /// Demonstration from start to goal through the subgoals. Frames are
    /// state ids; keyframes sit at the start, each subgoal and the goal.
    pub fn demonstration(&self, id: &str) -> Result<Trajectory, TestbedError> {
        let mut waypoints = vec![self.spec.start_cell];
        waypoints.extend(self.spec.subgoal_cells.iter().copied());
        waypoints.push(self.spec.goal_cell);
        let mut states = vec![self.spec.state_of(self.spec.start_cell)];
        let mut keyframes = vec![0];
        for w in waypoints.windows(2) {
            let leg = self.shortest_path(w[0], w[1])?;
            states.extend_from_slice(&leg[1..]);
            keyframes.push(states.len() - 1);
        }
        keyframes.dedup();
        let frames: Vec<String> = states.iter().map(|s| s.to_string()).collect();
        let mut frames_per_view = BTreeMap::new();
        frames_per_view.insert("grid".to_string(), frames);
        Ok(Trajectory {
            id: id.to_string(),
            task_text: "reach the goal cell".to_string(),
            num_frames: states.len(),
            views: vec!["grid".to_string()],
            keyframes,
            frames_per_view,
        })
    }

    /// Open cells other than the goal.
    pub fn live_states(&self) -> Vec<usize> {
        (0..self.mdp.n_states)
            .filter(|&s| self.spec.open_cell(self.spec.cell_of(s)) && !self.mdp.is_terminal(s))
            .collect()
    }
}
