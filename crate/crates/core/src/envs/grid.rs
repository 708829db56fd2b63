use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{Action, ActionSpace, EnvSpec, Environment, Observation, ObservationSpace, Transition};
use crate::cmdp::EpisodicCmdp;
use crate::math;
use crate::rng::SeededRng;
use crate::{Error, Result};

/// `S` start, `G` goal (reward 1 per step spent there), `H` hazard (cost 1).
pub const HAZARD_LAYOUT: &str = "\
..HHH.
..HHH.
S.HHHG
...H..
...HH.
...HH.";

/// `S` start, `T` target, `H` hazard (first cost), `#` impassable pillar;
/// free cells next to a pillar carry the second cost.
pub const NAVIGATION_LAYOUT: &str = "\
S.......
........
........
........
.....HH.
....HH#.
....HHT#
......#.";

const MOVES: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Free,
    Hazard,
    Pillar,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RewardRule {
    /// Reward 1 whenever the next state is the goal.
    Goal(usize),
    /// Euclidean distance to the target before minus after the move.
    DistanceDecrease(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridWorldParams {
    pub layout: String,
    pub horizon: usize,
    pub slip: f64,
    pub thresholds: Vec<f64>,
    /// Start uniformly in one of the four corners instead of at `S`.
    pub corner_start: bool,
}

/// Four-connected gridworld. With probability `slip` the intended move is
/// replaced by a uniformly random direction; moves into walls or pillars
/// leave the agent in place.
#[derive(Debug, Clone)]
pub struct GridWorld {
    spec: EnvSpec,
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    pillar_adjacent: Vec<bool>,
    starts: Vec<usize>,
    slip: f64,
    reward: RewardRule,
    navigation: bool,
}

impl GridWorld {
    /// Single-constraint goal-reaching task.
    pub fn hazard(params: GridWorldParams) -> Result<Self> {
        Self::build("hazard_gridworld", params, false)
    }

    /// Two-constraint target-reaching task with pillars.
    pub fn navigation(params: GridWorldParams) -> Result<Self> {
        Self::build("navigation_gridworld", params, true)
    }

    pub fn hazard_default() -> Self {
        Self::hazard(GridWorldParams {
            layout: HAZARD_LAYOUT.into(),
            horizon: 30,
            slip: 0.1,
            thresholds: vec![2.0],
            corner_start: false,
        })
        .unwrap()
    }

    pub fn navigation_default() -> Self {
        Self::navigation(GridWorldParams {
            layout: NAVIGATION_LAYOUT.into(),
            horizon: 40,
            slip: 0.1,
            thresholds: vec![3.0, 5.0],
            corner_start: false,
        })
        .unwrap()
    }

    fn build(name: &str, params: GridWorldParams, navigation: bool) -> Result<Self> {
        let lines: Vec<&str> = params.layout.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let rows = lines.len();
        let cols = lines.first().map_or(0, |l| l.len());
        if rows == 0 || cols == 0 || lines.iter().any(|l| l.len() != cols) {
            return Err(Error::InvalidConfig("grid layout must be a non-empty rectangle".into()));
        }
        if !(0.0..=1.0).contains(&params.slip) {
            return Err(Error::InvalidConfig(format!("slip probability {} outside [0, 1]", params.slip)));
        }
        if params.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        let expected = if navigation { 2 } else { 1 };
        if params.thresholds.len() != expected {
            return Err(Error::InvalidConfig(format!("{name} takes {expected} thresholds")));
        }
        let mut cells = Vec::with_capacity(rows * cols);
        let mut starts = Vec::new();
        let mut goal = None;
        for (r, line) in lines.iter().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                let idx = r * cols + c;
                cells.push(match ch {
                    '.' => Cell::Free,
                    'H' => Cell::Hazard,
                    '#' => Cell::Pillar,
                    'S' => {
                        starts.push(idx);
                        Cell::Free
                    }
                    'G' | 'T' => {
                        goal = Some(idx);
                        Cell::Free
                    }
                    other => return Err(Error::InvalidConfig(format!("unknown layout character '{other}'"))),
                });
            }
        }
        let goal = goal.ok_or_else(|| Error::InvalidConfig("layout needs a goal cell".into()))?;
        if params.corner_start {
            starts = vec![0, cols - 1, (rows - 1) * cols, rows * cols - 1];
            if starts.iter().any(|s| cells[*s] == Cell::Pillar) {
                return Err(Error::InvalidConfig("a corner start cell is a pillar".into()));
            }
        }
        if starts.is_empty() {
            return Err(Error::InvalidConfig("layout needs a start cell".into()));
        }
        let pillar_adjacent = (0..rows * cols)
            .map(|idx| {
                let (r, c) = (idx / cols, idx % cols);
                cells[idx] != Cell::Pillar
                    && MOVES.iter().any(|(dr, dc)| {
                        let (nr, nc) = (r as isize + dr, c as isize + dc);
                        nr >= 0
                            && nc >= 0
                            && (nr as usize) < rows
                            && (nc as usize) < cols
                            && cells[nr as usize * cols + nc as usize] == Cell::Pillar
                    })
            })
            .collect();
        let spec = EnvSpec {
            name: name.into(),
            horizon: params.horizon,
            observation: ObservationSpace::Discrete { n: rows * cols },
            action: ActionSpace::Discrete { n: 4 },
            thresholds: params.thresholds,
        };
        let reward = if navigation { RewardRule::DistanceDecrease(goal) } else { RewardRule::Goal(goal) };
        Ok(Self { spec, rows, cols, cells, pillar_adjacent, starts, slip: params.slip, reward, navigation })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn moved(&self, s: usize, dir: usize) -> usize {
        let (r, c) = ((s / self.cols) as isize, (s % self.cols) as isize);
        let (nr, nc) = (r + MOVES[dir].0, c + MOVES[dir].1);
        if nr < 0 || nc < 0 || nr as usize >= self.rows || nc as usize >= self.cols {
            return s;
        }
        let next = nr as usize * self.cols + nc as usize;
        if self.cells[next] == Cell::Pillar {
            s
        } else {
            next
        }
    }

    fn distance(&self, a: usize, b: usize) -> f64 {
        let dr = (a / self.cols) as f64 - (b / self.cols) as f64;
        let dc = (a % self.cols) as f64 - (b % self.cols) as f64;
        math::sqrt(dr * dr + dc * dc)
    }

    fn reward(&self, s: usize, s2: usize) -> f64 {
        match self.reward {
            RewardRule::Goal(g) => (s2 == g) as u8 as f64,
            RewardRule::DistanceDecrease(g) => self.distance(s, g) - self.distance(s2, g),
        }
    }

    fn costs(&self, s2: usize) -> Vec<f64> {
        let hazard = (self.cells[s2] == Cell::Hazard) as u8 as f64;
        if self.navigation {
            vec![hazard, self.pillar_adjacent[s2] as u8 as f64]
        } else {
            vec![hazard]
        }
    }

    /// Distribution of the next state for an intended move.
    fn next_distribution(&self, s: usize, a: usize) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(5);
        let mut add = |s2: usize, p: f64| match out.iter_mut().find(|(x, _)| *x == s2) {
            Some(e) => e.1 += p,
            None => out.push((s2, p)),
        };
        add(self.moved(s, a), 1.0 - self.slip);
        for dir in 0..4 {
            add(self.moved(s, dir), self.slip / 4.0);
        }
        out
    }
}

impl Environment for GridWorld {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, rng: &mut SeededRng) -> Observation {
        let i = if self.starts.len() == 1 { 0 } else { rng.random_range(0..self.starts.len()) };
        Observation::Discrete(self.starts[i])
    }

    fn step(&self, state: &Observation, action: &Action, rng: &mut SeededRng) -> Result<Transition> {
        let s = state.discrete()?;
        if s >= self.cells.len() {
            return Err(Error::ObservationMismatch(format!("state {s} outside the grid")));
        }
        let a = action.discrete()?;
        if a >= 4 {
            return Err(Error::InvalidAction(format!("gridworld action {a} not in 0..4")));
        }
        let u: f64 = rng.random();
        let dir = if u < self.slip { rng.random_range(0..4) } else { a };
        let s2 = self.moved(s, dir);
        Ok(Transition { next_state: Observation::Discrete(s2), reward: self.reward(s, s2), costs: self.costs(s2) })
    }

    fn to_cmdp(&self) -> Option<EpisodicCmdp> {
        let n = self.rows * self.cols;
        let m = self.spec.num_constraints();
        let mut transition = vec![0.0; n * 4 * n];
        let mut reward = vec![0.0; n * 4 * n];
        let mut costs = vec![vec![0.0; n * 4 * n]; m];
        for s in 0..n {
            for a in 0..4 {
                for (s2, p) in self.next_distribution(s, a) {
                    let idx = (s * 4 + a) * n + s2;
                    transition[idx] = p;
                }
                for s2 in 0..n {
                    let idx = (s * 4 + a) * n + s2;
                    reward[idx] = self.reward(s, s2);
                    for (i, c) in self.costs(s2).into_iter().enumerate() {
                        costs[i][idx] = c;
                    }
                }
            }
        }
        let mut initial = vec![0.0; n];
        for s in &self.starts {
            initial[*s] += 1.0 / self.starts.len() as f64;
        }
        EpisodicCmdp::new(n, 4, self.spec.horizon, transition, reward, costs, self.spec.thresholds.clone(), initial).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn walls_block_moves() {
        let g = GridWorld::hazard_default();
        assert_eq!(g.moved(0, 0), 0);
        assert_eq!(g.moved(0, 3), 0);
        assert_eq!(g.moved(0, 1), 1);
    }

    #[test]
    fn pillars_block_and_mark_neighbours() {
        let g = GridWorld::navigation_default();
        let target = 6 * 8 + 6;
        assert_eq!(g.moved(target, 1), target);
        assert!(g.pillar_adjacent[target]);
        assert!(!g.pillar_adjacent[0]);
    }

    #[test]
    fn export_is_valid() {
        for env in [GridWorld::hazard_default(), GridWorld::navigation_default()] {
            let cmdp = env.to_cmdp().unwrap();
            assert_eq!(cmdp.num_constraints(), env.spec().num_constraints());
        }
    }

    #[test]
    fn hazard_free_episode_has_zero_cost() {
        let g = GridWorld::hazard(GridWorldParams { slip: 0.0, ..grid_params() }).unwrap();
        let mut rng = rng_from_seed(1);
        let mut s = g.reset(&mut rng);
        let mut cost = 0.0;
        for a in [2, 2, 1, 1, 0, 3, 3, 0] {
            let tr = g.step(&s, &Action::Discrete(a), &mut rng).unwrap();
            cost += tr.costs[0];
            s = tr.next_state;
        }
        assert_eq!(cost, 0.0);
    }

    #[test]
    fn invalid_action() {
        let g = GridWorld::hazard_default();
        let mut rng = rng_from_seed(0);
        assert!(g.step(&Observation::Discrete(0), &Action::Discrete(4), &mut rng).is_err());
    }

    fn grid_params() -> GridWorldParams {
        GridWorldParams { layout: HAZARD_LAYOUT.into(), horizon: 30, slip: 0.1, thresholds: vec![2.0], corner_start: false }
    }
}
