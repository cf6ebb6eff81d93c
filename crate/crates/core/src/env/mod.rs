//! Multi-agent environments.
//!
//! Two simulators share the [`MultiAgentEnv`] interface:
//!
//! * [`Bps`] (blind particle spread): agents in the unit square must reach the
//!   landmark of their own type without ever observing any type label.
//! * [`Lbf`] (level-based foraging): agents on a grid cooperatively load food
//!   whose level does not exceed the summed level of the loading agents.

mod bps;
mod lbf;
mod trajectory;

pub use bps::{Bps, BpsState, BPS_ACTIONS, BPS_STEP};
pub use lbf::{Lbf, LbfState, LBF_ACTIONS};
pub use trajectory::TrajectoryWriter;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    Bps,
    Lbf,
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvKind::Bps => "bps",
            EnvKind::Lbf => "lbf",
        })
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bps" => Ok(EnvKind::Bps),
            "lbf" => Ok(EnvKind::Lbf),
            other => Err(Error::Parse(format!("unknown environment {other:?}"))),
        }
    }
}

/// Static description of an environment instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    /// Agent count per type, e.g. `[10, 10, 10]`.
    pub agents_per_type: Vec<usize>,
    pub horizon: usize,
    /// LBF grid side length (ignored by BPS).
    pub grid: usize,
    /// LBF food count (ignored by BPS).
    pub foods: usize,
    pub seed: u64,
}

impl EnvSpec {
    pub fn bps(agents_per_type: &[usize]) -> Self {
        Self {
            kind: EnvKind::Bps,
            agents_per_type: agents_per_type.to_vec(),
            horizon: 25,
            grid: 8,
            foods: 3,
            seed: 0,
        }
    }

    pub fn lbf(agents_per_type: &[usize]) -> Self {
        Self {
            kind: EnvKind::Lbf,
            agents_per_type: agents_per_type.to_vec(),
            horizon: 50,
            grid: 8,
            foods: 3,
            seed: 0,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn n_agents(&self) -> usize {
        self.agents_per_type.iter().sum()
    }

    pub fn n_types(&self) -> usize {
        self.agents_per_type.len()
    }

    /// Type of every agent, agents numbered type-major.
    pub fn agent_types(&self) -> Vec<usize> {
        self.agents_per_type
            .iter()
            .enumerate()
            .flat_map(|(t, &n)| std::iter::repeat_n(t, n))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents_per_type.contains(&0) {
            return Err(Error::Config("every agent type needs at least one agent".into()));
        }
        if self.n_agents() < 2 {
            return Err(Error::Config(format!(
                "need at least two agents, got {}",
                self.n_agents()
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.kind == EnvKind::Lbf {
            if self.foods == 0 {
                return Err(Error::Config("LBF needs at least one food".into()));
            }
            if self.grid * self.grid < self.n_agents() + self.foods {
                return Err(Error::Config(format!(
                    "{}x{} grid cannot hold {} agents and {} foods",
                    self.grid,
                    self.grid,
                    self.n_agents(),
                    self.foods
                )));
            }
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        let n = self.n_agents();
        match self.kind {
            EnvKind::Bps => 2 * self.n_types() + 2 * (n - 1),
            EnvKind::Lbf => 3 + 4 * self.foods + 2 * (n - 1),
        }
    }

    pub fn action_dim(&self) -> usize {
        match self.kind {
            EnvKind::Bps => BPS_ACTIONS,
            EnvKind::Lbf => LBF_ACTIONS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepInfo {
    /// Steps taken in the current episode, including this one.
    pub t: usize,
    /// LBF: foods collected during this step.
    pub collected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub done: bool,
    pub info: StepInfo,
}

/// Interface shared by every simulator the trainer can drive.
pub trait MultiAgentEnv: Send {
    fn n_agents(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Ground-truth type per agent. Never part of any observation.
    fn agent_types(&self) -> Vec<usize>;
    /// Starts a new episode and returns the initial observations.
    fn reset(&mut self) -> Vec<Vec<f64>>;
    fn step(&mut self, actions: &[usize]) -> Result<StepResult>;
}

/// Either simulator, selected by an [`EnvSpec`].
#[derive(Debug, Clone)]
pub enum Env {
    Bps(Bps),
    Lbf(Lbf),
}

impl Env {
    pub fn new(spec: &EnvSpec) -> Result<Self> {
        spec.validate()?;
        Ok(match spec.kind {
            EnvKind::Bps => Env::Bps(Bps::new(spec)),
            EnvKind::Lbf => Env::Lbf(Lbf::new(spec)),
        })
    }
}

impl MultiAgentEnv for Env {
    fn n_agents(&self) -> usize {
        match self {
            Env::Bps(e) => e.n_agents(),
            Env::Lbf(e) => e.n_agents(),
        }
    }

    fn obs_dim(&self) -> usize {
        match self {
            Env::Bps(e) => e.obs_dim(),
            Env::Lbf(e) => e.obs_dim(),
        }
    }

    fn action_dim(&self) -> usize {
        match self {
            Env::Bps(e) => e.action_dim(),
            Env::Lbf(e) => e.action_dim(),
        }
    }

    fn agent_types(&self) -> Vec<usize> {
        match self {
            Env::Bps(e) => e.agent_types(),
            Env::Lbf(e) => e.agent_types(),
        }
    }

    fn reset(&mut self) -> Vec<Vec<f64>> {
        match self {
            Env::Bps(e) => e.reset(),
            Env::Lbf(e) => e.reset(),
        }
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        match self {
            Env::Bps(e) => e.step(actions),
            Env::Lbf(e) => e.step(actions),
        }
    }
}

pub(crate) fn check_actions(actions: &[usize], n_agents: usize, action_dim: usize) -> Result<()> {
    if actions.len() != n_agents {
        return Err(Error::Contract(format!(
            "joint action has {} entries for {n_agents} agents",
            actions.len()
        )));
    }
    if let Some((agent, &a)) = actions.iter().enumerate().find(|(_, &a)| a >= action_dim) {
        return Err(Error::Contract(format!(
            "agent {agent} chose action {a}, valid range is 0..{action_dim}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_dims() {
        assert_eq!(EnvSpec::lbf(&[3, 3, 3]).action_dim(), 6);
        assert_eq!(EnvSpec::bps(&[3, 3, 3]).action_dim(), 5);
    }

    #[test]
    fn obs_dim_uniform_across_agents() {
        for spec in [EnvSpec::bps(&[2, 3]), EnvSpec::lbf(&[3, 3, 3])] {
            let mut env = Env::new(&spec).unwrap();
            let obs = env.reset();
            assert!(obs.iter().all(|o| o.len() == spec.obs_dim()));
            assert_eq!(env.obs_dim(), spec.obs_dim());
        }
    }

    #[test]
    fn spec_validation() {
        assert!(EnvSpec::bps(&[1]).validate().is_err());
        assert!(EnvSpec::bps(&[1, 0]).validate().is_err());
        let mut s = EnvSpec::lbf(&[2, 2]);
        s.horizon = 0;
        assert!(s.validate().is_err());
        let mut s = EnvSpec::lbf(&[5, 5]);
        s.grid = 3;
        assert!(s.validate().is_err());
    }

    #[test]
    fn agent_types_are_type_major() {
        assert_eq!(EnvSpec::bps(&[2, 1, 3]).agent_types(), vec![0, 0, 1, 2, 2, 2]);
    }

    #[test]
    fn out_of_range_action_names_agent() {
        let mut env = Env::new(&EnvSpec::lbf(&[1, 1])).unwrap();
        env.reset();
        let err = env.step(&[0, 6]).unwrap_err();
        assert!(err.to_string().contains("agent 1"), "{err}");
    }
}
