//! Runs agents against tutors: query, grade, reward, demo fallback and
//! logging.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::first_attempt_correctness;
use crate::datashop::{SinkError, TransactionSink};
use crate::graph::{BehaviorGraph, GraphCursor, GraphError};
use crate::model::{Outcome, ProblemState, Reward, Sai, Transaction};

pub const DEFAULT_MAX_ACTIONS: u32 = 500;

/// The two endpoints every agent implements.
pub trait Agent {
    /// Next action for `state`, or `None` when the agent cannot act.
    fn act(&mut self, state: &ProblemState) -> Option<Sai>;

    fn train(&mut self, state: &ProblemState, action: &Sai, reward: Reward);

    /// Called once the problem is finished.
    fn end_problem(&mut self) {}

    fn name(&self) -> &str {
        "agent"
    }
}

impl<A: Agent + ?Sized> Agent for Box<A> {
    fn act(&mut self, state: &ProblemState) -> Option<Sai> {
        (**self).act(state)
    }

    fn train(&mut self, state: &ProblemState, action: &Sai, reward: Reward) {
        (**self).train(state, action, reward)
    }

    fn end_problem(&mut self) {
        (**self).end_problem()
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("problem {problem} not finished after {actions} agent actions")]
    ActionBoundExceeded { problem: String, actions: u32 },
    #[error("trainer configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sink(#[from] SinkError),
}

#[derive(Clone)]
pub struct TrainerConfig {
    /// Force a demo after this many consecutive incorrect actions.
    pub max_incorrect_before_demo: Option<u32>,
    pub max_actions_per_problem: u32,
    pub loggers: Vec<Arc<dyn TransactionSink>>,
    pub student_id: String,
    pub session_id: String,
    /// Milliseconds since the epoch of the first transaction; each later
    /// transaction is one second after the previous one.
    pub start_time_ms: i64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            max_incorrect_before_demo: None,
            max_actions_per_problem: DEFAULT_MAX_ACTIONS,
            loggers: Vec::new(),
            student_id: "agent".into(),
            session_id: "session-1".into(),
            start_time_ms: 1_700_000_000_000,
        }
    }
}

impl std::fmt::Debug for TrainerConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrainerConfig")
            .field("max_incorrect_before_demo", &self.max_incorrect_before_demo)
            .field("max_actions_per_problem", &self.max_actions_per_problem)
            .field("loggers", &self.loggers.len())
            .field("student_id", &self.student_id)
            .field("session_id", &self.session_id)
            .finish()
    }
}

impl TrainerConfig {
    pub fn with_max_incorrect(mut self, n: u32) -> Self {
        self.max_incorrect_before_demo = Some(n);
        self
    }

    pub fn with_logger(mut self, sink: Arc<dyn TransactionSink>) -> Self {
        self.loggers.push(sink);
        self
    }

    pub fn validate(&self) -> Result<(), TrainerError> {
        if self.max_actions_per_problem == 0 {
            return Err(TrainerError::Config("max_actions_per_problem must be positive".into()));
        }
        if self.max_incorrect_before_demo == Some(0) {
            return Err(TrainerError::Config(
                "max_incorrect_before_demo must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One training session. Skill opportunities and problem views accumulate
/// across every problem run through the same trainer.
#[derive(Debug)]
pub struct Trainer {
    cfg: TrainerConfig,
    opportunities: HashMap<String, u32>,
    views: HashMap<String, u32>,
    clock: i64,
}

#[derive(Default)]
struct ProblemCounters {
    attempts: HashMap<String, u32>,
    step_opportunity: HashMap<String, u32>,
}

impl Trainer {
    pub fn new(cfg: TrainerConfig) -> Result<Self, TrainerError> {
        cfg.validate()?;
        let clock = cfg.start_time_ms;
        Ok(Trainer {
            cfg,
            opportunities: HashMap::new(),
            views: HashMap::new(),
            clock,
        })
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    pub fn run_problem<A: Agent + ?Sized>(
        &mut self,
        agent: &mut A,
        mut cursor: GraphCursor,
    ) -> Result<Vec<Transaction>, TrainerError> {
        let graph = cursor.graph().clone();
        let problem = graph.problem_id().to_string();
        let view = {
            let v = self.views.entry(problem.clone()).or_insert(0);
            *v += 1;
            *v
        };
        let mut counters = ProblemCounters::default();
        let mut out = Vec::new();
        let mut actions = 0u32;
        let mut streak = 0u32;
        while !cursor.is_done() {
            let state = cursor.state().clone();
            let forced = match agent.act(&state) {
                None => true,
                Some(sai) => {
                    if actions >= self.cfg.max_actions_per_problem {
                        return Err(TrainerError::ActionBoundExceeded { problem, actions });
                    }
                    actions += 1;
                    let grade = cursor.check(&sai);
                    let outcome = if grade.is_correct() {
                        Outcome::Correct
                    } else {
                        Outcome::Incorrect
                    };
                    let skill = step_skill(&cursor, &graph, &sai);
                    let t = self.record(&graph, view, &mut counters, outcome, &sai, &skill)?;
                    out.push(t);
                    agent.train(&state, &sai, grade.reward);
                    if grade.is_correct() {
                        cursor.apply(&sai)?;
                        streak = 0;
                        false
                    } else {
                        streak += 1;
                        self.cfg.max_incorrect_before_demo.is_some_and(|max| streak >= max)
                    }
                }
            };
            if forced {
                // the worked example is rewarded +1 and applied
                let demo = cursor.get_demo()?;
                let skill = step_skill(&cursor, &graph, &demo);
                let t = self.record(&graph, view, &mut counters, Outcome::Hint, &demo, &skill)?;
                out.push(t);
                agent.train(&state, &demo, Reward::CORRECT);
                cursor.apply(&demo)?;
                streak = 0;
            }
        }
        agent.end_problem();
        Ok(out)
    }

    /// Runs problems in the given order.
    pub fn run_curriculum<A: Agent + ?Sized>(
        &mut self,
        agent: &mut A,
        problems: &[Arc<BehaviorGraph>],
    ) -> Result<Vec<Transaction>, TrainerError> {
        if problems.is_empty() {
            return Err(TrainerError::Config("curriculum is empty".into()));
        }
        let mut out = Vec::new();
        for g in problems {
            out.extend(self.run_problem(agent, GraphCursor::new(g.clone()))?);
        }
        for sink in &self.cfg.loggers {
            sink.flush()?;
        }
        Ok(out)
    }

    /// Cycles through `pool` until a full pass reaches `threshold`
    /// first-attempt correctness or `max_passes` passes have run.
    pub fn train_until<A: Agent + ?Sized>(
        &mut self,
        agent: &mut A,
        pool: &[Arc<BehaviorGraph>],
        threshold: f64,
        max_passes: usize,
    ) -> Result<Progress, TrainerError> {
        if pool.is_empty() {
            return Err(TrainerError::Config("problem pool is empty".into()));
        }
        let mut progress = Progress::default();
        for pass in 1..=max_passes {
            let log = self.run_curriculum(agent, pool)?;
            let rate = first_attempt_correctness(&log);
            progress.passes.push(PassRecord {
                pass,
                problems_seen: pass * pool.len(),
                first_attempt_correctness: rate,
            });
            if rate >= threshold {
                progress.problems_needed = Some((pass - 1) * pool.len());
                break;
            }
        }
        Ok(progress)
    }

    fn record(
        &mut self,
        graph: &BehaviorGraph,
        view: u32,
        counters: &mut ProblemCounters,
        outcome: Outcome,
        sai: &Sai,
        skill: &str,
    ) -> Result<Transaction, TrainerError> {
        let attempt = {
            let a = counters.attempts.entry(sai.selection.clone()).or_insert(0);
            *a += 1;
            *a
        };
        let opportunity = if skill.is_empty() {
            0
        } else {
            *counters
                .step_opportunity
                .entry(sai.selection.clone())
                .or_insert_with(|| {
                    let o = self.opportunities.entry(skill.to_string()).or_insert(0);
                    *o += 1;
                    *o
                })
        };
        let t = Transaction {
            student_id: self.cfg.student_id.clone(),
            session_id: self.cfg.session_id.clone(),
            timestamp: self.clock,
            level: graph
                .generator()
                .map(|g| g.domain_id.clone())
                .unwrap_or_else(|| "unknown".into()),
            problem_name: graph.problem_id().to_string(),
            problem_view: view,
            step_name: sai.selection.clone(),
            attempt_at_step: attempt,
            outcome,
            sai: sai.clone(),
            skill: skill.to_string(),
            opportunity,
        };
        self.clock += 1000;
        for sink in &self.cfg.loggers {
            sink.log(&t)?;
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassRecord {
    pub pass: usize,
    /// Problems presented so far, this pass included.
    pub problems_seen: usize,
    pub first_attempt_correctness: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub passes: Vec<PassRecord>,
    /// Problems of experience before the first pass at the threshold.
    pub problems_needed: Option<usize>,
}

/// Skill of the step an action addresses: the matched or enabled edge on
/// its selection, else any edge on that selection.
fn step_skill(cursor: &GraphCursor, graph: &BehaviorGraph, sai: &Sai) -> String {
    cursor
        .skill_for(sai)
        .map(str::to_string)
        .or_else(|| {
            graph
                .edges()
                .iter()
                .find(|e| e.selection == sai.selection)
                .map(|e| e.skill.clone())
        })
        .unwrap_or_default()
}

/// Single-problem convenience wrapper around [`Trainer::run_problem`].
pub fn run_problem<A: Agent + ?Sized>(
    agent: &mut A,
    cursor: GraphCursor,
    cfg: &TrainerConfig,
) -> Result<Vec<Transaction>, TrainerError> {
    Trainer::new(cfg.clone())?.run_problem(agent, cursor)
}

pub fn run_curriculum<A: Agent + ?Sized>(
    agent: &mut A,
    problems: &[Arc<BehaviorGraph>],
    cfg: &TrainerConfig,
) -> Result<Vec<Transaction>, TrainerError> {
    Trainer::new(cfg.clone())?.run_curriculum(agent, problems)
}
