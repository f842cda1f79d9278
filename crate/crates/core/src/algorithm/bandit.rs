use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    decode_state, encode_state, Algorithm, AlgorithmError, AlgorithmManifest, Environment, RlAlgorithm, Space,
};
use crate::params::Params;

/// ε-greedy agent with incremental-mean value estimates.
///
/// During training ε decays linearly from its initial value to 0 over the
/// requested number of episodes. All randomness comes from a ChaCha stream
/// seeded with `seed`; the stream position is part of the saved state, so a
/// restored agent continues the same action sequence.
#[derive(Debug, Clone)]
pub struct EpsilonGreedyBandit {
    n_arms: usize,
    epsilon: f64,
    seed: u64,
    values: Vec<f64>,
    counts: Vec<u64>,
    rng: ChaCha8Rng,
}

#[derive(Serialize, Deserialize)]
struct BanditState {
    values: Vec<f64>,
    counts: Vec<u64>,
    rng_word_pos: String,
}

impl PartialEq for EpsilonGreedyBandit {
    fn eq(&self, other: &Self) -> bool {
        self.n_arms == other.n_arms
            && self.epsilon == other.epsilon
            && self.seed == other.seed
            && self.values == other.values
            && self.counts == other.counts
            && self.rng.get_word_pos() == other.rng.get_word_pos()
    }
}

impl EpsilonGreedyBandit {
    pub const KIND: &'static str = "epsilon_greedy_bandit";

    pub fn new(n_arms: usize, epsilon: f64, seed: u64) -> Self {
        Self {
            n_arms,
            epsilon: epsilon.clamp(0.0, 1.0),
            seed,
            values: vec![0.0; n_arms],
            counts: vec![0; n_arms],
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Highest value estimate; ties go to the lowest arm.
    pub fn greedy(&self) -> usize {
        self.values.iter().enumerate().fold(0, |best, (i, v)| if *v > self.values[best] { i } else { best })
    }

    fn choose(&mut self, epsilon: f64) -> usize {
        if self.n_arms > 1 && self.rng.gen::<f64>() < epsilon {
            self.rng.gen_range(0..self.n_arms)
        } else {
            self.greedy()
        }
    }

    /// ε-greedy action at the configured ε; advances the random stream.
    pub fn act(&mut self) -> usize {
        self.choose(self.epsilon)
    }

    pub fn update(&mut self, action: usize, reward: f64) {
        self.counts[action] += 1;
        self.values[action] += (reward - self.values[action]) / self.counts[action] as f64;
    }

    pub fn train(&self, env: &mut dyn Environment, episodes: u32) -> Result<Self, AlgorithmError> {
        if episodes == 0 {
            return Err(AlgorithmError::InvalidParam("episodes must be at least 1".into()));
        }
        match env.action_space() {
            Space::Discrete(n) if n == self.n_arms => {}
            other => {
                return Err(AlgorithmError::InvalidParam(format!(
                    "agent has {} arms, environment action space is {other:?}",
                    self.n_arms
                )))
            }
        }
        let mut agent = self.clone();
        let last = f64::from(episodes.saturating_sub(1).max(1));
        for e in 0..episodes {
            let eps = self.epsilon * (1.0 - f64::from(e) / last).max(0.0);
            env.reset(self.seed.wrapping_add(u64::from(e)));
            loop {
                let a = agent.choose(eps);
                let step = env.step(a)?;
                agent.update(a, step.reward);
                if step.terminated {
                    break;
                }
            }
        }
        Ok(agent)
    }

    pub fn load(m: &AlgorithmManifest) -> Result<Self, AlgorithmError> {
        let n_arms = m.params.non_negative("n_arms")? as usize;
        let epsilon = m.params.real("epsilon")?;
        let seed = m.params.int("seed")? as u64;
        let mut agent = Self::new(n_arms, epsilon, seed);
        if !m.state_blob.is_empty() {
            let s: BanditState = decode_state(Self::KIND, &m.state_blob)?;
            let corrupt = |reason: &str| AlgorithmError::CorruptBlob { kind: Self::KIND.into(), reason: reason.into() };
            if s.values.len() != n_arms || s.counts.len() != n_arms {
                return Err(corrupt("arm count mismatch"));
            }
            let pos: u128 = s.rng_word_pos.parse().map_err(|_| corrupt("bad rng position"))?;
            agent.values = s.values;
            agent.counts = s.counts;
            agent.rng.set_word_pos(pos);
        }
        Ok(agent)
    }

    pub(super) fn load_boxed(m: &AlgorithmManifest) -> Result<Box<dyn Algorithm>, AlgorithmError> {
        Ok(Box::new(Self::load(m)?))
    }
}

impl Algorithm for EpsilonGreedyBandit {
    fn kind(&self) -> &str {
        Self::KIND
    }

    fn params(&self) -> Params {
        Params::new()
            .with("n_arms", self.n_arms as i64)
            .with("epsilon", self.epsilon)
            // stored as the same 64 bits, reinterpreted
            .with("seed", self.seed as i64)
    }

    fn state_blob(&self) -> Result<Vec<u8>, AlgorithmError> {
        encode_state(&BanditState {
            values: self.values.clone(),
            counts: self.counts.clone(),
            rng_word_pos: self.rng.get_word_pos().to_string(),
        })
    }

    fn clone_box(&self) -> Box<dyn Algorithm> {
        Box::new(self.clone())
    }

    fn as_rl(&self) -> Option<&dyn RlAlgorithm> {
        Some(self)
    }
}

impl RlAlgorithm for EpsilonGreedyBandit {
    fn rng_seed(&self) -> u64 {
        self.seed
    }

    fn greedy_action(&self, _observation: &[f64]) -> usize {
        self.greedy()
    }

    fn train_boxed(&self, env: &mut dyn Environment, episodes: u32) -> Result<Box<dyn Algorithm>, AlgorithmError> {
        Ok(Box::new(self.train(env, episodes)?))
    }
}
