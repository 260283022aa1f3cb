use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{ProblemState, Reward, Sai};
use crate::rl::{EncodingTable, RlError};
use crate::trainer::Agent;

/// Dense table of action values, one row per state index.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    rows: Vec<Vec<f64>>,
    n_actions: usize,
    pub alpha: f64,
    pub gamma: f64,
}

impl QTable {
    pub fn new(n_actions: usize, alpha: f64, gamma: f64) -> Self {
        QTable {
            rows: Vec::new(),
            n_actions,
            alpha,
            gamma,
        }
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Adds a zero row and returns its index.
    pub fn add_state(&mut self) -> usize {
        self.rows.push(vec![0.0; self.n_actions]);
        self.rows.len() - 1
    }

    pub fn get(&self, s: usize, a: usize) -> Result<f64, RlError> {
        self.check(s, a)?;
        Ok(self.rows[s][a])
    }

    pub fn row(&self, s: usize) -> Result<&[f64], RlError> {
        self.rows.get(s).map(Vec::as_slice).ok_or(RlError::IndexOutOfRange {
            index: s,
            len: self.rows.len(),
        })
    }

    /// Largest value in row `s`; 0 when there are no actions.
    pub fn max(&self, s: usize) -> Result<f64, RlError> {
        let row = self.row(s)?;
        if row.is_empty() {
            return Ok(0.0);
        }
        Ok(row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    fn check(&self, s: usize, a: usize) -> Result<(), RlError> {
        if s >= self.rows.len() {
            return Err(RlError::IndexOutOfRange {
                index: s,
                len: self.rows.len(),
            });
        }
        if a >= self.n_actions {
            return Err(RlError::IndexOutOfRange {
                index: a,
                len: self.n_actions,
            });
        }
        Ok(())
    }
}

/// One-step Q-learning update. `next` is `None` for terminal transitions.
pub fn q_update(q: &mut QTable, s: usize, a: usize, r: f64, next: Option<usize>) -> Result<f64, RlError> {
    q.check(s, a)?;
    let future = match next {
        Some(n) => q.max(n)?,
        None => 0.0,
    };
    let old = q.rows[s][a];
    let new = old + q.alpha * (r + q.gamma * future - old);
    q.rows[s][a] = new;
    Ok(new)
}

/// Linear decay from `start` to `end` over `horizon` action selections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            horizon: 10_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, step: u64) -> f64 {
        if self.horizon == 0 || step >= self.horizon {
            return self.end;
        }
        let frac = step as f64 / self.horizon as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub seed: u64,
}

impl Default for QConfig {
    fn default() -> Self {
        QConfig {
            alpha: 0.5,
            gamma: 0.9,
            epsilon: EpsilonSchedule::default(),
            seed: 0,
        }
    }
}

struct Pending {
    state: usize,
    action: usize,
    reward: f64,
    problem: String,
}

/// Tabular epsilon-greedy Q-learner over an [`EncodingTable`]'s action set.
/// States are indexed by canonical serialization. The update for an action
/// waits until the next state is observed; moving to a different problem
/// closes the previous transition as terminal.
pub struct QAgent {
    table: Arc<EncodingTable>,
    q: QTable,
    states: HashMap<String, usize>,
    pending: Option<Pending>,
    epsilon: EpsilonSchedule,
    steps: u64,
    rng: ChaCha8Rng,
}

impl QAgent {
    pub fn new(table: Arc<EncodingTable>, cfg: QConfig) -> Self {
        let n = table.n_actions();
        QAgent {
            table,
            q: QTable::new(n, cfg.alpha, cfg.gamma),
            states: HashMap::new(),
            pending: None,
            epsilon: cfg.epsilon,
            steps: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        }
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.at(self.steps)
    }

    fn state_index(&mut self, state: &ProblemState) -> usize {
        let key = state.to_canonical_json();
        if let Some(i) = self.states.get(&key) {
            return *i;
        }
        let i = self.q.add_state();
        self.states.insert(key, i);
        i
    }

    fn settle_pending(&mut self, next: Option<(usize, &str)>) {
        if let Some(p) = self.pending.take() {
            let next = next.filter(|(_, problem)| *problem == p.problem).map(|(s, _)| s);
            q_update(&mut self.q, p.state, p.action, p.reward, next).expect("indices in range");
        }
    }

    /// Applies any outstanding update as terminal.
    pub fn finish(&mut self) {
        self.settle_pending(None);
    }
}

impl Agent for QAgent {
    fn end_problem(&mut self) {
        self.finish();
    }

    fn act(&mut self, state: &ProblemState) -> Option<Sai> {
        let s = self.state_index(state);
        self.settle_pending(Some((s, &state.problem_id)));
        let n = self.q.n_actions();
        if n == 0 || state.done {
            return None;
        }
        let eps = self.epsilon.at(self.steps);
        self.steps += 1;
        let a = if self.rng.random_bool(eps.clamp(0.0, 1.0)) {
            self.rng.random_range(0..n)
        } else {
            let row = self.q.row(s).expect("state indexed");
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let ties: Vec<usize> = (0..n).filter(|i| row[*i] == best).collect();
            ties[self.rng.random_range(0..ties.len())]
        };
        self.table.decode_action(a).ok().cloned()
    }

    fn train(&mut self, state: &ProblemState, action: &Sai, reward: Reward) {
        let Some(a) = self.table.action_index(action) else {
            return;
        };
        let s = self.state_index(state);
        self.settle_pending(Some((s, &state.problem_id)));
        self.pending = Some(Pending {
            state: s,
            action: a,
            reward: reward.value() as f64,
            problem: state.problem_id.clone(),
        });
    }

    fn name(&self) -> &str {
        "qlearning"
    }
}
