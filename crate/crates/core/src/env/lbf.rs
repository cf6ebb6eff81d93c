//! Level-based foraging.
//!
//! Agents of type `t` have level `t + 1`; food levels are drawn uniformly from
//! `{1, 2, 3}` at every reset. Entities occupy distinct cells.
//!
//! Observation layout for agent `i` (length `3 + 4F + 2(N-1)`), coordinates
//! scaled by `1 / (grid - 1)`:
//!
//! ```text
//! [x_i, y_i, level_i,
//!  per food f: x_f, y_f, level_f, present_f      (zeros once collected)
//!  per agent j != i: x_j, y_j]                   (other agents' levels hidden)
//! ```
//!
//! Actions: 0 noop, 1 up (y - 1), 2 down (y + 1), 3 left (x - 1), 4 right
//! (x + 1), 5 load. Moves into a wall, a food, a currently occupied cell, or a
//! cell targeted by another agent are cancelled. After moving, each loading
//! agent attaches to its first adjacent food (up, down, left, right order); a
//! food is collected when the summed level of its loaders reaches its level.
//! Loader `j` then receives `level_j * level_f / (sum loader levels * sum of
//! all food levels this episode)`, so clearing every food pays out 1 in total.

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{check_actions, EnvSpec, MultiAgentEnv, StepInfo, StepResult};
use crate::error::Result;
use crate::rng::{self, Rng};

pub const LBF_ACTIONS: usize = 6;
pub const LOAD: usize = 5;
const MAX_FOOD_LEVEL: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Food {
    pub pos: (usize, usize),
    pub level: u32,
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfState {
    pub grid: usize,
    pub agents: Vec<(usize, usize)>,
    pub levels: Vec<u32>,
    pub foods: Vec<Food>,
    pub t: usize,
}

impl LbfState {
    pub fn remaining(&self) -> usize {
        self.foods.iter().filter(|f| f.present).count()
    }

    fn total_food_level(&self) -> u32 {
        self.foods.iter().map(|f| f.level).sum()
    }

    fn food_at(&self, pos: (usize, usize)) -> Option<usize> {
        self.foods.iter().position(|f| f.present && f.pos == pos)
    }
}

#[derive(Debug, Clone)]
pub struct Lbf {
    horizon: usize,
    types: Vec<usize>,
    state: LbfState,
    rng: Rng,
}

fn neighbours(pos: (usize, usize), grid: usize) -> impl Iterator<Item = (usize, usize)> {
    let (x, y) = pos;
    [
        (y > 0).then(|| (x, y - 1)),
        (y + 1 < grid).then(|| (x, y + 1)),
        (x > 0).then(|| (x - 1, y)),
        (x + 1 < grid).then(|| (x + 1, y)),
    ]
    .into_iter()
    .flatten()
}

impl Lbf {
    pub fn new(spec: &EnvSpec) -> Self {
        let types = spec.agent_types();
        let levels = types.iter().map(|&t| t as u32 + 1).collect();
        let mut env = Self {
            horizon: spec.horizon,
            state: LbfState {
                grid: spec.grid,
                agents: vec![(0, 0); types.len()],
                levels,
                foods: vec![
                    Food {
                        pos: (0, 0),
                        level: 1,
                        present: true,
                    };
                    spec.foods
                ],
                t: 0,
            },
            types,
            rng: rng::stream(spec.seed, rng::STREAM_ENV, 0),
        };
        env.reset();
        env
    }

    pub fn from_state(spec: &EnvSpec, state: LbfState) -> Self {
        let mut env = Self::new(spec);
        env.state = state;
        env
    }

    pub fn state(&self) -> &LbfState {
        &self.state
    }

    pub fn observations(&self) -> Vec<Vec<f64>> {
        (0..self.state.agents.len()).map(|i| self.observe(i)).collect()
    }

    fn observe(&self, i: usize) -> Vec<f64> {
        let s = &self.state;
        let scale = 1.0 / (s.grid.max(2) - 1) as f64;
        let mut obs = Vec::with_capacity(3 + 4 * s.foods.len() + 2 * (s.agents.len() - 1));
        let (x, y) = s.agents[i];
        obs.extend([x as f64 * scale, y as f64 * scale, s.levels[i] as f64]);
        for f in &s.foods {
            if f.present {
                obs.extend([
                    f.pos.0 as f64 * scale,
                    f.pos.1 as f64 * scale,
                    f.level as f64,
                    1.0,
                ]);
            } else {
                obs.extend([0.0; 4]);
            }
        }
        for (j, &(ox, oy)) in s.agents.iter().enumerate() {
            if j != i {
                obs.extend([ox as f64 * scale, oy as f64 * scale]);
            }
        }
        obs
    }

    fn target(&self, pos: (usize, usize), action: usize) -> Option<(usize, usize)> {
        let (x, y) = pos;
        let g = self.state.grid;
        match action {
            1 if y > 0 => Some((x, y - 1)),
            2 if y + 1 < g => Some((x, y + 1)),
            3 if x > 0 => Some((x - 1, y)),
            4 if x + 1 < g => Some((x + 1, y)),
            _ => None,
        }
    }
}

impl MultiAgentEnv for Lbf {
    fn n_agents(&self) -> usize {
        self.state.agents.len()
    }

    fn obs_dim(&self) -> usize {
        3 + 4 * self.state.foods.len() + 2 * (self.state.agents.len() - 1)
    }

    fn action_dim(&self) -> usize {
        LBF_ACTIONS
    }

    fn agent_types(&self) -> Vec<usize> {
        self.types.clone()
    }

    fn reset(&mut self) -> Vec<Vec<f64>> {
        let g = self.state.grid;
        let mut cells: Vec<(usize, usize)> =
            (0..g).flat_map(|y| (0..g).map(move |x| (x, y))).collect();
        cells.shuffle(&mut self.rng);
        let n = self.state.agents.len();
        self.state.agents.copy_from_slice(&cells[..n]);
        for (f, &pos) in self.state.foods.iter_mut().zip(&cells[n..]) {
            f.pos = pos;
            f.level = self.rng.random_range(1..=MAX_FOOD_LEVEL);
            f.present = true;
        }
        self.state.t = 0;
        self.observations()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        let n = self.state.agents.len();
        check_actions(actions, n, LBF_ACTIONS)?;

        let targets: Vec<Option<(usize, usize)>> = (0..n)
            .map(|i| {
                self.target(self.state.agents[i], actions[i]).filter(|&c| {
                    self.state.food_at(c).is_none() && !self.state.agents.contains(&c)
                })
            })
            .collect();
        for i in 0..n {
            if let Some(c) = targets[i] {
                let contested = targets
                    .iter()
                    .enumerate()
                    .any(|(j, t)| j != i && *t == Some(c));
                if !contested {
                    self.state.agents[i] = c;
                }
            }
        }

        let mut loaders: Vec<Vec<usize>> = vec![Vec::new(); self.state.foods.len()];
        for i in 0..n {
            if actions[i] != LOAD {
                continue;
            }
            let food = neighbours(self.state.agents[i], self.state.grid)
                .find_map(|c| self.state.food_at(c));
            if let Some(f) = food {
                loaders[f].push(i);
            }
        }

        let total = self.state.total_food_level() as f64;
        let mut rewards = vec![0.0; n];
        let mut collected = 0;
        for (f, group) in loaders.iter().enumerate() {
            if group.is_empty() {
                continue;
            }
            let sum: u32 = group.iter().map(|&i| self.state.levels[i]).sum();
            let level = self.state.foods[f].level;
            if sum >= level {
                for &i in group {
                    rewards[i] +=
                        self.state.levels[i] as f64 * level as f64 / (sum as f64 * total);
                }
                self.state.foods[f].present = false;
                collected += 1;
            }
        }

        self.state.t += 1;
        let done = self.state.t >= self.horizon || self.state.remaining() == 0;
        Ok(StepResult {
            observations: self.observations(),
            rewards,
            done,
            info: StepInfo {
                t: self.state.t,
                collected,
            },
        })
    }
}
