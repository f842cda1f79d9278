use thiserror::Error;

use crate::params::Params;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("environment must be reset before stepping")]
    NotReset,
    #[error("action {action} outside action space of size {size}")]
    InvalidAction { action: usize, size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Space {
    Discrete(usize),
    Box { low: f64, high: f64, dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub info: Params,
}

/// Step/reset environment over a discrete action space.
///
/// `step` is only valid after `reset`; once an episode terminates, `step`
/// fails with [`EnvError::NotReset`] until the next `reset`.
pub trait Environment: Send {
    fn action_space(&self) -> Space;

    fn observation_space(&self) -> Space;

    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError>;
}

/// Multi-armed bandit with a fixed deterministic reward per arm.
#[derive(Debug, Clone, PartialEq)]
pub struct KArmedBandit {
    rewards: Vec<f64>,
    episode_len: usize,
    steps: Option<usize>,
}

impl KArmedBandit {
    /// Panics if `rewards` is empty or contains a non-finite value.
    pub fn new(rewards: Vec<f64>) -> Self {
        assert!(!rewards.is_empty(), "bandit needs at least one arm");
        assert!(rewards.iter().all(|r| r.is_finite()), "rewards must be finite");
        Self { rewards, episode_len: 1, steps: None }
    }

    /// Arms paying 0.0 and 1.0.
    pub fn two_arm() -> Self {
        Self::new(vec![0.0, 1.0])
    }

    pub fn with_episode_len(mut self, len: usize) -> Self {
        self.episode_len = len.max(1);
        self
    }

    pub fn arms(&self) -> usize {
        self.rewards.len()
    }
}

impl Environment for KArmedBandit {
    fn action_space(&self) -> Space {
        Space::Discrete(self.rewards.len())
    }

    fn observation_space(&self) -> Space {
        Space::Box { low: 0.0, high: 0.0, dim: 1 }
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.steps = Some(0);
        vec![0.0]
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        let steps = self.steps.ok_or(EnvError::NotReset)?;
        let reward = *self.rewards.get(action).ok_or(EnvError::InvalidAction { action, size: self.rewards.len() })?;
        let taken = steps + 1;
        let terminated = taken >= self.episode_len;
        self.steps = if terminated { None } else { Some(taken) };
        Ok(StepResult {
            observation: vec![0.0],
            reward,
            terminated,
            info: Params::new().with("arm", action as i64).with("step", taken as i64),
        })
    }
}
