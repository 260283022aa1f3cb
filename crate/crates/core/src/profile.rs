//! Completeness profiles: reachable tutor states paired with every correct
//! next action and sampled incorrect ones, and metrics for agents acting as
//! graders or demonstrators over them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{BehaviorGraph, GraphCursor, TutorRegistry};
use crate::matcher::parse_number;
use crate::model::{Outcome, ProblemState, Sai, Transaction, WidgetKind};

pub const DEFAULT_INCORRECT_PER_ENTRY: usize = 2;
const DRAWS_PER_STRATEGY: usize = 40;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProfileError {
    #[error("unknown problem {0:?}")]
    UnknownProblem(String),
    #[error("transaction {index} ({sai}) on {problem:?} does not replay as logged")]
    ReplayMismatch { index: usize, problem: String, sai: String },
    #[error("state of problem {problem:?} cannot be reached in its graph")]
    UnreachableState { problem: String },
    #[error("no incorrect action could be generated for {problem:?} at {fingerprint:?}")]
    ExhaustedPerturbations { problem: String, fingerprint: String },
    #[error("profile line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncorrectSource {
    StudentData,
    AgentGenerated,
    Perturbation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncorrectAction {
    pub sai: Sai,
    pub source: IncorrectSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub problem_id: String,
    /// Satisfied edge ids of the tutor position, comma separated.
    pub fingerprint: String,
    pub state: ProblemState,
    pub correct_actions: Vec<Sai>,
    #[serde(default)]
    pub incorrect_actions: Vec<IncorrectAction>,
}

impl ProfileEntry {
    pub fn from_cursor(cursor: &GraphCursor) -> Self {
        ProfileEntry {
            problem_id: cursor.graph().problem_id().to_string(),
            fingerprint: fingerprint(cursor),
            state: cursor.state().clone(),
            correct_actions: cursor.get_all_demos().unwrap_or_default(),
            incorrect_actions: Vec::new(),
        }
    }
}

pub fn fingerprint(cursor: &GraphCursor) -> String {
    cursor
        .satisfied_edges()
        .iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Derives an independent seed for `key` from a base seed.
pub fn sub_seed(seed: u64, key: &str) -> u64 {
    let digest = Sha256::digest(key.as_bytes());
    seed ^ u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn sample_graph(graph: &Arc<BehaviorGraph>, n_paths: usize, seed: u64) -> Vec<ProfileEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, graph.problem_id()));
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for _ in 0..n_paths.max(1) {
        let mut cursor = GraphCursor::new(graph.clone());
        while let Ok(demos) = cursor.get_all_demos() {
            if seen.insert(cursor.state().to_canonical_json()) {
                out.push(ProfileEntry::from_cursor(&cursor));
            }
            let pick = &demos[rng.random_range(0..demos.len())];
            cursor.apply(pick).expect("demo applies");
        }
    }
    out
}

/// Union of the non-done states visited by `n_paths` sampled solution paths
/// per problem, deduplicated, in problem order then visit order.
pub fn build_profile(graphs: &[Arc<BehaviorGraph>], n_paths: usize, seed: u64) -> Vec<ProfileEntry> {
    graphs.iter().flat_map(|g| sample_graph(g, n_paths, seed)).collect()
}

/// [`build_profile`] spread over `jobs` threads; identical output.
pub fn build_profile_parallel(
    graphs: &[Arc<BehaviorGraph>],
    n_paths: usize,
    seed: u64,
    jobs: usize,
) -> Vec<ProfileEntry> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        graphs
            .par_iter()
            .map(|g| sample_graph(g, n_paths, seed))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    })
}

/// Rebuilds the states students saw by replaying logged sessions. Correct
/// and hint transactions are applied; incorrect ones are attached to the
/// state they were made in.
pub fn build_profile_from_log(log: &[Transaction], tutors: &TutorRegistry) -> Result<Vec<ProfileEntry>, ProfileError> {
    let mut entries: Vec<ProfileEntry> = Vec::new();
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    let mut sessions: HashMap<(String, String, String, u32), GraphCursor> = HashMap::new();
    for (i, t) in log.iter().enumerate() {
        let key = (
            t.student_id.clone(),
            t.session_id.clone(),
            t.problem_name.clone(),
            t.problem_view,
        );
        if !sessions.contains_key(&key) {
            let g = tutors
                .graph(&t.problem_name)
                .ok_or_else(|| ProfileError::UnknownProblem(t.problem_name.clone()))?;
            sessions.insert(key.clone(), GraphCursor::new(g.clone()));
        }
        let cursor = sessions.get_mut(&key).expect("inserted");
        let mismatch = || ProfileError::ReplayMismatch {
            index: i,
            problem: t.problem_name.clone(),
            sai: t.sai.to_string(),
        };
        if cursor.is_done() {
            return Err(mismatch());
        }
        let state_key = (t.problem_name.clone(), cursor.state().to_canonical_json());
        let slot = *index.entry(state_key).or_insert_with(|| {
            entries.push(ProfileEntry::from_cursor(cursor));
            entries.len() - 1
        });
        let grade = cursor.check(&t.sai);
        match t.outcome {
            Outcome::Correct | Outcome::Hint => {
                if !grade.is_correct() {
                    return Err(mismatch());
                }
                cursor.apply(&t.sai).map_err(|_| mismatch())?;
            }
            Outcome::Incorrect => {
                if grade.is_correct() {
                    return Err(mismatch());
                }
                let e = &mut entries[slot];
                if !e.incorrect_actions.iter().any(|a| a.sai == t.sai) {
                    e.incorrect_actions.push(IncorrectAction {
                        sai: t.sai.clone(),
                        source: IncorrectSource::StudentData,
                    });
                }
            }
        }
    }
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    PerturbNumeric,
    SwapField,
    OffByOne,
}

impl Perturbation {
    pub const ALL: [Perturbation; 3] = [
        Perturbation::PerturbNumeric,
        Perturbation::SwapField,
        Perturbation::OffByOne,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Perturbation::PerturbNumeric => "perturb_numeric",
            Perturbation::SwapField => "swap_field",
            Perturbation::OffByOne => "off_by_one",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }

    fn candidate(self, base: &Sai, state: &ProblemState, rng: &mut ChaCha8Rng) -> Option<Sai> {
        match self {
            Perturbation::PerturbNumeric => {
                let v = parse_number(&base.input)?;
                let delta = rng.random_range(2..=9) * if rng.random_bool(0.5) { 1 } else { -1 };
                let shifted = match rng.random_range(0..3) {
                    0 => v.clone() + num_rational::BigRational::from_integer(delta.into()),
                    1 => v.clone() * num_rational::BigRational::from_integer(2.into()),
                    _ => -v.clone(),
                };
                Some(Sai {
                    input: crate::generators::format_rational(&shifted),
                    ..base.clone()
                })
            }
            Perturbation::OffByOne => {
                let v = parse_number(&base.input)?;
                let one = num_rational::BigRational::from_integer(1.into());
                let shifted = if rng.random_bool(0.5) { v + one } else { v - one };
                Some(Sai {
                    input: crate::generators::format_rational(&shifted),
                    ..base.clone()
                })
            }
            Perturbation::SwapField => {
                let mut fields: Vec<&str> = state
                    .widgets
                    .values()
                    .filter(|w| w.kind == WidgetKind::TextField && w.widget_id != base.selection)
                    .map(|w| w.widget_id.as_str())
                    .collect();
                fields.shuffle(rng);
                let target = fields.first()?;
                Some(Sai {
                    selection: target.to_string(),
                    action_type: crate::model::action_types::UPDATE_TEXT_FIELD.into(),
                    input: base.input.clone(),
                })
            }
        }
    }
}

fn entry_cursor(tutors: &TutorRegistry, e: &ProfileEntry) -> Result<GraphCursor, ProfileError> {
    if tutors.graph(&e.problem_id).is_none() {
        return Err(ProfileError::UnknownProblem(e.problem_id.clone()));
    }
    tutors
        .cursor_for(&e.state)
        .ok_or_else(|| ProfileError::UnreachableState {
            problem: e.problem_id.clone(),
        })
}

/// Adds up to `per_entry` incorrect actions to every non-done entry, each
/// verified to grade -1. `strategy` is tried first, the others after it.
pub fn inject_incorrect(
    profile: &[ProfileEntry],
    tutors: &TutorRegistry,
    strategy: Perturbation,
    per_entry: usize,
    seed: u64,
) -> Result<Vec<ProfileEntry>, ProfileError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<Perturbation> = std::iter::once(strategy)
        .chain(Perturbation::ALL.into_iter().filter(|p| *p != strategy))
        .collect();
    let mut out = Vec::with_capacity(profile.len());
    for e in profile {
        let mut e = e.clone();
        if e.correct_actions.is_empty() {
            out.push(e);
            continue;
        }
        let cursor = entry_cursor(tutors, &e)?;
        let mut added = 0;
        'strategies: for p in &order {
            for _ in 0..DRAWS_PER_STRATEGY {
                if added >= per_entry {
                    break 'strategies;
                }
                let base = &e.correct_actions[rng.random_range(0..e.correct_actions.len())];
                let Some(c) = p.candidate(base, &e.state, &mut rng) else {
                    continue;
                };
                let duplicate = e.correct_actions.contains(&c) || e.incorrect_actions.iter().any(|a| a.sai == c);
                if duplicate || cursor.check(&c).is_correct() {
                    continue;
                }
                e.incorrect_actions.push(IncorrectAction {
                    sai: c,
                    source: IncorrectSource::Perturbation,
                });
                added += 1;
            }
        }
        if added == 0 && per_entry > 0 {
            return Err(ProfileError::ExhaustedPerturbations {
                problem: e.problem_id.clone(),
                fingerprint: e.fingerprint.clone(),
            });
        }
        out.push(e);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Yes,
    No,
}

/// Judges whether an action is correct in a state. `None` means the grader
/// produced no usable answer, which scores as a miss.
pub trait Grader: Sync {
    fn grade(&self, state: &ProblemState, action: &Sai) -> Option<Verdict>;
}

impl<F> Grader for F
where
    F: Fn(&ProblemState, &Sai) -> Option<Verdict> + Sync,
{
    fn grade(&self, state: &ProblemState, action: &Sai) -> Option<Verdict> {
        self(state, action)
    }
}

/// Produces a worked example for a state.
pub trait Demoer: Sync {
    fn demo(&self, state: &ProblemState) -> Option<Sai>;
}

impl<F> Demoer for F
where
    F: Fn(&ProblemState) -> Option<Sai> + Sync,
{
    fn demo(&self, state: &ProblemState) -> Option<Sai> {
        self(state)
    }
}

/// The tutor's own check used as a grader.
pub struct CheckGrader {
    pub tutors: Arc<TutorRegistry>,
}

impl Grader for CheckGrader {
    fn grade(&self, state: &ProblemState, action: &Sai) -> Option<Verdict> {
        let g = self.tutors.check(state, action)?;
        Some(if g.is_correct() { Verdict::Yes } else { Verdict::No })
    }
}

/// The tutor's own demonstration used as a demoer.
pub struct OracleDemoer {
    pub tutors: Arc<TutorRegistry>,
}

impl Demoer for OracleDemoer {
    fn demo(&self, state: &ProblemState) -> Option<Sai> {
        self.tutors.demo(state)
    }
}

/// Answers yes or no with equal probability, deterministically per
/// (seed, state, action).
pub struct RandomGrader {
    pub seed: u64,
}

impl Grader for RandomGrader {
    fn grade(&self, state: &ProblemState, action: &Sai) -> Option<Verdict> {
        let key = format!("{}|{}", state.to_canonical_json(), action);
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.seed, &key));
        Some(if rng.random_bool(0.5) {
            Verdict::Yes
        } else {
            Verdict::No
        })
    }
}

pub struct ConstantGrader(pub Verdict);

impl Grader for ConstantGrader {
    fn grade(&self, _state: &ProblemState, _action: &Sai) -> Option<Verdict> {
        Some(self.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TutorEvalMetrics {
    pub correct_hits: usize,
    pub correct_total: usize,
    pub incorrect_hits: usize,
    pub incorrect_total: usize,
    pub demo_hits: usize,
    pub demo_total: usize,
    /// Grader or demoer responses that could not be interpreted.
    pub unparseable: usize,
}

fn ratio(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

impl TutorEvalMetrics {
    pub fn correct_accuracy(&self) -> f64 {
        ratio(self.correct_hits, self.correct_total)
    }

    pub fn incorrect_accuracy(&self) -> f64 {
        ratio(self.incorrect_hits, self.incorrect_total)
    }

    pub fn demo_accuracy(&self) -> f64 {
        ratio(self.demo_hits, self.demo_total)
    }

    pub fn merge(&mut self, other: &TutorEvalMetrics) {
        self.correct_hits += other.correct_hits;
        self.correct_total += other.correct_total;
        self.incorrect_hits += other.incorrect_hits;
        self.incorrect_total += other.incorrect_total;
        self.demo_hits += other.demo_hits;
        self.demo_total += other.demo_total;
        self.unparseable += other.unparseable;
    }

    /// Three-column text table of accuracies with hit counts.
    pub fn table(&self, label: &str) -> String {
        let cell = |h: usize, t: usize| {
            if t == 0 {
                "-".to_string()
            } else {
                format!("{:.2}% ({h}/{t})", 100.0 * ratio(h, t))
            }
        };
        format!(
            "{:<16} {:>22} {:>22} {:>22}\n{:<16} {:>22} {:>22} {:>22}\n",
            "grader",
            "Correct Accuracy",
            "Incorrect Accuracy",
            "Demo Accuracy",
            label,
            cell(self.correct_hits, self.correct_total),
            cell(self.incorrect_hits, self.incorrect_total),
            cell(self.demo_hits, self.demo_total),
        )
    }
}

/// Grades every correct and incorrect action in the profile, issuing at most
/// `jobs` grader calls at a time.
pub fn grade_profile<G: Grader + ?Sized>(grader: &G, profile: &[ProfileEntry], jobs: usize) -> TutorEvalMetrics {
    let items: Vec<(&ProblemState, &Sai, bool)> = profile
        .iter()
        .flat_map(|e| {
            e.correct_actions
                .iter()
                .map(move |a| (&e.state, a, true))
                .chain(e.incorrect_actions.iter().map(move |a| (&e.state, &a.sai, false)))
        })
        .collect();
    let judge = |(state, sai, is_correct): &(&ProblemState, &Sai, bool)| {
        let mut m = TutorEvalMetrics::default();
        let verdict = grader.grade(state, sai);
        if verdict.is_none() {
            m.unparseable += 1;
        }
        if *is_correct {
            m.correct_total += 1;
            m.correct_hits += usize::from(verdict == Some(Verdict::Yes));
        } else {
            m.incorrect_total += 1;
            m.incorrect_hits += usize::from(verdict == Some(Verdict::No));
        }
        m
    };
    let parts: Vec<TutorEvalMetrics> = if jobs <= 1 {
        items.iter().map(judge).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool");
        pool.install(|| items.par_iter().map(judge).collect())
    };
    let mut total = TutorEvalMetrics::default();
    for p in &parts {
        total.merge(p);
    }
    total
}

/// Fraction of non-done entries for which the demoer's action grades +1.
pub fn demo_eval<D: Demoer + ?Sized>(
    demoer: &D,
    profile: &[ProfileEntry],
    tutors: &TutorRegistry,
    jobs: usize,
) -> Result<TutorEvalMetrics, ProfileError> {
    let entries: Vec<&ProfileEntry> = profile.iter().filter(|e| !e.state.done).collect();
    let judge = |e: &&ProfileEntry| -> Result<TutorEvalMetrics, ProfileError> {
        let cursor = entry_cursor(tutors, e)?;
        let mut m = TutorEvalMetrics {
            demo_total: 1,
            ..Default::default()
        };
        match demoer.demo(&e.state) {
            Some(sai) => m.demo_hits = usize::from(cursor.check(&sai).is_correct()),
            None => m.unparseable = 1,
        }
        Ok(m)
    };
    let parts: Vec<Result<TutorEvalMetrics, ProfileError>> = if jobs <= 1 {
        entries.iter().map(judge).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool");
        pool.install(|| entries.par_iter().map(judge).collect())
    };
    let mut total = TutorEvalMetrics::default();
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// One JSON object per line, keys in sorted order.
pub fn write_profile(profile: &[ProfileEntry]) -> String {
    let mut out = String::new();
    for e in profile {
        out.push_str(&crate::model::canonical_json(e));
        out.push('\n');
    }
    out
}

pub fn parse_profile(text: &str) -> Result<Vec<ProfileEntry>, ProfileError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ProfileError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Counts of entries per problem, for summaries.
pub fn entries_per_problem(profile: &[ProfileEntry]) -> BTreeMap<&str, usize> {
    let mut out = BTreeMap::new();
    for e in profile {
        *out.entry(e.problem_id.as_str()).or_insert(0) += 1;
    }
    out
}
