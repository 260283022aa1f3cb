//! Baseline agents: a tutor-backed oracle, a memorizer and a tabular
//! Q-learner.

mod qlearning;

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::TutorRegistry;
use crate::model::{ProblemState, Reward, Sai};
use crate::trainer::Agent;

pub use qlearning::{q_update, EpsilonSchedule, QAgent, QConfig, QTable};

/// Acts with the tutor's own demonstration for the current state.
#[derive(Debug, Clone)]
pub struct OracleAgent {
    tutors: Arc<TutorRegistry>,
}

impl OracleAgent {
    pub fn new(tutors: Arc<TutorRegistry>) -> Self {
        OracleAgent { tutors }
    }
}

impl Agent for OracleAgent {
    fn act(&mut self, state: &ProblemState) -> Option<Sai> {
        if state.done {
            return None;
        }
        self.tutors.demo(state)
    }

    fn train(&mut self, _state: &ProblemState, _action: &Sai, _reward: Reward) {}

    fn name(&self) -> &str {
        "oracle"
    }
}

/// Remembers every (state, action, reward) it is trained on and replays
/// actions that last earned +1 in the same state.
#[derive(Debug, Clone, Default)]
pub struct MemorizingAgent {
    store: HashMap<String, Vec<(Sai, Reward)>>,
}

impl MemorizingAgent {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn store(&self) -> &HashMap<String, Vec<(Sai, Reward)>> {
        &self.store
    }
}

impl Agent for MemorizingAgent {
    fn act(&mut self, state: &ProblemState) -> Option<Sai> {
        self.store
            .get(&state.to_canonical_json())?
            .iter()
            .find(|(_, r)| r.is_correct())
            .map(|(s, _)| s.clone())
    }

    fn train(&mut self, state: &ProblemState, action: &Sai, reward: Reward) {
        let entries = self.store.entry(state.to_canonical_json()).or_default();
        match entries.iter_mut().find(|(s, _)| s == action) {
            Some(entry) => entry.1 = reward,
            None => entries.push((action.clone(), reward)),
        }
    }

    fn name(&self) -> &str {
        "memorizing"
    }
}

/// Never acts, so every step is demonstrated.
#[derive(Debug, Clone, Default)]
pub struct PassiveAgent;

impl Agent for PassiveAgent {
    fn act(&mut self, _state: &ProblemState) -> Option<Sai> {
        None
    }

    fn train(&mut self, _state: &ProblemState, _action: &Sai, _reward: Reward) {}

    fn name(&self) -> &str {
        "passive"
    }
}

/// Picks uniformly from a fixed action alphabet.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    actions: Vec<Sai>,
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(actions: Vec<Sai>, seed: u64) -> Self {
        RandomAgent {
            actions,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Agent for RandomAgent {
    fn act(&mut self, _state: &ProblemState) -> Option<Sai> {
        if self.actions.is_empty() {
            return None;
        }
        let i = self.rng.random_range(0..self.actions.len());
        Some(self.actions[i].clone())
    }

    fn train(&mut self, _state: &ProblemState, _action: &Sai, _reward: Reward) {}

    fn name(&self) -> &str {
        "random"
    }
}
