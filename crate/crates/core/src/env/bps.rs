//! Blind particle spread.
//!
//! Observation layout for agent `i` (length `2T + 2(N-1)`):
//!
//! ```text
//! [landmark_0 - pos_i, ..., landmark_{T-1} - pos_i,   (x, y) per type, type order)
//!  pos_j - pos_i for every j != i                      (x, y) per agent, index order]
//! ```
//!
//! Actions: 0 stay, 1 up (+y), 2 down (-y), 3 left (-x), 4 right (+x), each a
//! move of [`BPS_STEP`] clamped to the unit square. The reward of agent `i` is
//! minus its Euclidean distance (after moving) to the landmark of its type.

use rand::Rng as _;

use super::{check_actions, EnvSpec, MultiAgentEnv, StepInfo, StepResult};
use crate::error::Result;
use crate::rng::{self, Rng};

pub const BPS_ACTIONS: usize = 5;
pub const BPS_STEP: f64 = 0.05;

const MOVES: [(f64, f64); BPS_ACTIONS] = [
    (0.0, 0.0),
    (0.0, BPS_STEP),
    (0.0, -BPS_STEP),
    (-BPS_STEP, 0.0),
    (BPS_STEP, 0.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct BpsState {
    pub agents: Vec<[f64; 2]>,
    /// One landmark per type.
    pub landmarks: Vec<[f64; 2]>,
    /// Hidden type of every agent.
    pub types: Vec<usize>,
    pub t: usize,
}

#[derive(Debug, Clone)]
pub struct Bps {
    horizon: usize,
    n_types: usize,
    state: BpsState,
    rng: Rng,
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl Bps {
    pub fn new(spec: &EnvSpec) -> Self {
        let types = spec.agent_types();
        let mut env = Self {
            horizon: spec.horizon,
            n_types: spec.n_types(),
            state: BpsState {
                agents: vec![[0.0; 2]; types.len()],
                landmarks: vec![[0.0; 2]; spec.n_types()],
                types,
                t: 0,
            },
            rng: rng::stream(spec.seed, rng::STREAM_ENV, 0),
        };
        env.reset();
        env
    }

    /// Environment positioned at an explicit state (tests, scripted analysis).
    pub fn from_state(spec: &EnvSpec, state: BpsState) -> Self {
        let mut env = Self::new(spec);
        env.state = state;
        env
    }

    pub fn state(&self) -> &BpsState {
        &self.state
    }

    pub fn observations(&self) -> Vec<Vec<f64>> {
        (0..self.state.agents.len()).map(|i| self.observe(i)).collect()
    }

    fn observe(&self, i: usize) -> Vec<f64> {
        let p = self.state.agents[i];
        let mut obs = Vec::with_capacity(2 * self.n_types + 2 * (self.state.agents.len() - 1));
        for l in &self.state.landmarks {
            obs.push(l[0] - p[0]);
            obs.push(l[1] - p[1]);
        }
        for (j, q) in self.state.agents.iter().enumerate() {
            if j != i {
                obs.push(q[0] - p[0]);
                obs.push(q[1] - p[1]);
            }
        }
        obs
    }

    fn reward(&self, i: usize) -> f64 {
        -distance(self.state.agents[i], self.state.landmarks[self.state.types[i]])
    }

    /// Privileged greedy controller: the move that brings each agent closest
    /// to its own landmark (ties broken by lowest action index).
    pub fn oracle_actions(&self) -> Vec<usize> {
        (0..self.state.agents.len())
            .map(|i| {
                let p = self.state.agents[i];
                let goal = self.state.landmarks[self.state.types[i]];
                let mut best = (0, f64::INFINITY);
                for (a, (dx, dy)) in MOVES.iter().enumerate() {
                    let q = [(p[0] + dx).clamp(0.0, 1.0), (p[1] + dy).clamp(0.0, 1.0)];
                    let d = distance(q, goal);
                    if d < best.1 {
                        best = (a, d);
                    }
                }
                best.0
            })
            .collect()
    }
}

impl MultiAgentEnv for Bps {
    fn n_agents(&self) -> usize {
        self.state.agents.len()
    }

    fn obs_dim(&self) -> usize {
        2 * self.n_types + 2 * (self.state.agents.len() - 1)
    }

    fn action_dim(&self) -> usize {
        BPS_ACTIONS
    }

    fn agent_types(&self) -> Vec<usize> {
        self.state.types.clone()
    }

    fn reset(&mut self) -> Vec<Vec<f64>> {
        for l in self.state.landmarks.iter_mut() {
            *l = [self.rng.random::<f64>(), self.rng.random::<f64>()];
        }
        for a in self.state.agents.iter_mut() {
            *a = [self.rng.random::<f64>(), self.rng.random::<f64>()];
        }
        self.state.t = 0;
        self.observations()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_actions(actions, self.state.agents.len(), BPS_ACTIONS)?;
        for (p, &a) in self.state.agents.iter_mut().zip(actions) {
            let (dx, dy) = MOVES[a];
            p[0] = (p[0] + dx).clamp(0.0, 1.0);
            p[1] = (p[1] + dy).clamp(0.0, 1.0);
        }
        self.state.t += 1;
        let rewards = (0..self.state.agents.len()).map(|i| self.reward(i)).collect();
        Ok(StepResult {
            observations: self.observations(),
            rewards,
            done: self.state.t >= self.horizon,
            info: StepInfo {
                t: self.state.t,
                collected: 0,
            },
        })
    }
}
