//! Fixed-size observation and action encodings, and a step/reset
//! environment over behavior-graph tutors.
//!
//! Observations concatenate one one-hot block per widget (widgets sorted by
//! id). Each block indexes the shared value vocabulary, where index 0 is the
//! unknown value and index 1 the empty string. Hidden or absent widgets
//! encode as an all-zero block.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::graph::{enumerate_reachable, BehaviorGraph, GraphCursor};
use crate::model::{ProblemState, Reward, Sai};

pub const UNK: usize = 0;
pub const EMPTY: usize = 1;
const REACHABLE_LIMIT: usize = 100_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RlError {
    #[error("graph {0:?} has no generator metadata; only generated problem sets can be encoded")]
    MissingGenerator(String),
    #[error("no graphs to encode")]
    Empty,
    #[error("index {index} out of range (size {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("environment has no active problem; call reset first")]
    NotReset,
    #[error("encoding table is frozen")]
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodingTable {
    widgets: Vec<String>,
    values: Vec<String>,
    value_index: HashMap<String, usize>,
    actions: Vec<Sai>,
    action_index: HashMap<Sai, usize>,
    frozen: bool,
}

impl Default for EncodingTable {
    fn default() -> Self {
        Self::new()
    }
}

impl EncodingTable {
    pub fn new() -> Self {
        let mut t = EncodingTable {
            widgets: Vec::new(),
            values: Vec::new(),
            value_index: HashMap::new(),
            actions: Vec::new(),
            action_index: HashMap::new(),
            frozen: false,
        };
        t.values.push("<unk>".into());
        t.values.push(String::new());
        t.value_index.insert(String::new(), EMPTY);
        t
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn n_values(&self) -> usize {
        self.values.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.widgets.len() * self.values.len()
    }

    pub fn widgets(&self) -> &[String] {
        &self.widgets
    }

    pub fn actions(&self) -> &[Sai] {
        &self.actions
    }

    /// Index of a value; the reserved unknown index for unseen values.
    pub fn value_index(&self, value: &str) -> usize {
        self.value_index.get(value).copied().unwrap_or(UNK)
    }

    pub fn value(&self, index: usize) -> Result<&str, RlError> {
        self.values
            .get(index)
            .map(String::as_str)
            .ok_or(RlError::IndexOutOfRange {
                index,
                len: self.values.len(),
            })
    }

    pub fn action_index(&self, sai: &Sai) -> Option<usize> {
        self.action_index.get(sai).copied()
    }

    pub fn decode_action(&self, index: usize) -> Result<&Sai, RlError> {
        self.actions.get(index).ok_or(RlError::IndexOutOfRange {
            index,
            len: self.actions.len(),
        })
    }

    pub fn encode_action(&self, sai: &Sai) -> Option<usize> {
        self.action_index(sai)
    }

    fn intern_value(&mut self, v: &str) -> Result<usize, RlError> {
        if let Some(i) = self.value_index.get(v) {
            return Ok(*i);
        }
        if self.frozen {
            return Err(RlError::Frozen);
        }
        self.values.push(v.to_string());
        self.value_index.insert(v.to_string(), self.values.len() - 1);
        Ok(self.values.len() - 1)
    }

    fn intern_action(&mut self, sai: &Sai) -> Result<usize, RlError> {
        if let Some(i) = self.action_index.get(sai) {
            return Ok(*i);
        }
        if self.frozen {
            return Err(RlError::Frozen);
        }
        self.actions.push(sai.clone());
        self.action_index.insert(sai.clone(), self.actions.len() - 1);
        Ok(self.actions.len() - 1)
    }

    pub fn encode_state(&self, state: &ProblemState) -> Vec<f32> {
        let nv = self.values.len();
        let mut v = vec![0.0; self.obs_dim()];
        for (i, w) in self.widgets.iter().enumerate() {
            if let Some(view) = state.widget(w).filter(|w| w.visible) {
                v[i * nv + self.value_index(&view.value)] = 1.0;
            }
        }
        v
    }
}

/// Builds a frozen table covering every widget, every widget value and every
/// demonstrable action reachable in `graphs`. Values and actions are indexed
/// in sorted order so the table does not depend on graph order.
pub fn build_encoding(graphs: &[Arc<BehaviorGraph>]) -> Result<EncodingTable, RlError> {
    if graphs.is_empty() {
        return Err(RlError::Empty);
    }
    let mut widgets = BTreeSet::new();
    let mut values = BTreeSet::new();
    let mut actions = BTreeSet::new();
    for g in graphs {
        if g.generator().is_none() {
            return Err(RlError::MissingGenerator(g.problem_id().to_string()));
        }
        for cursor in enumerate_reachable(g, REACHABLE_LIMIT) {
            for w in cursor.state().widgets.values() {
                widgets.insert(w.widget_id.clone());
                values.insert(w.value.clone());
            }
            if let Ok(demos) = cursor.get_all_demos() {
                for d in demos {
                    values.insert(d.input.clone());
                    actions.insert((d.selection.clone(), d.action_type.clone(), d.input.clone()));
                }
            }
        }
    }
    let mut table = EncodingTable::new();
    table.widgets = widgets.into_iter().collect();
    for v in values {
        table.intern_value(&v)?;
    }
    for (s, a, i) in actions {
        table.intern_action(&Sai {
            selection: s,
            action_type: a,
            input: i,
        })?;
    }
    table.freeze();
    Ok(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f32>,
    pub reward: Reward,
    pub done: bool,
}

/// Step/reset environment over one problem at a time.
#[derive(Debug, Clone)]
pub struct TutorEnv {
    table: Arc<EncodingTable>,
    cursor: Option<GraphCursor>,
}

impl TutorEnv {
    pub fn new(table: Arc<EncodingTable>) -> Self {
        TutorEnv { table, cursor: None }
    }

    pub fn table(&self) -> &EncodingTable {
        &self.table
    }

    pub fn cursor(&self) -> Option<&GraphCursor> {
        self.cursor.as_ref()
    }

    pub fn reset(&mut self, graph: Arc<BehaviorGraph>) -> Result<Vec<f32>, RlError> {
        if graph.generator().is_none() {
            return Err(RlError::MissingGenerator(graph.problem_id().to_string()));
        }
        let cursor = GraphCursor::new(graph);
        let obs = self.table.encode_state(cursor.state());
        self.cursor = Some(cursor);
        Ok(obs)
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, RlError> {
        let sai = self.table.decode_action(action)?.clone();
        let cursor = self.cursor.as_mut().ok_or(RlError::NotReset)?;
        let grade = cursor.check(&sai);
        if grade.is_correct() {
            cursor.apply(&sai).expect("graded correct");
        }
        Ok(StepResult {
            observation: self.table.encode_state(cursor.state()),
            reward: grade.reward,
            done: cursor.is_done(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_fraction, FractionKind};

    fn pool() -> Vec<Arc<BehaviorGraph>> {
        (0..3)
            .map(|s| Arc::new(gen_fraction(FractionKind::SameDenominator, s).1))
            .collect()
    }

    #[test]
    fn refuses_graphs_without_generator() {
        let doc = gen_fraction(FractionKind::Multiply, 1).1.document().clone();
        let mut doc = doc;
        doc.generator = None;
        let g = Arc::new(BehaviorGraph::from_document(doc).unwrap());
        assert!(matches!(build_encoding(&[g]), Err(RlError::MissingGenerator(_))));
        assert_eq!(build_encoding(&[]), Err(RlError::Empty));
    }

    #[test]
    fn one_hot_blocks() {
        let graphs = pool();
        let t = build_encoding(&graphs).unwrap();
        let c = GraphCursor::new(graphs[0].clone());
        let obs = t.encode_state(c.state());
        assert_eq!(obs.len(), t.obs_dim());
        let visible = c.state().widgets.values().filter(|w| w.visible).count();
        assert_eq!(obs.iter().filter(|x| **x == 1.0).count(), visible);
        let blank = t.widgets().iter().position(|w| w == "answer_num").unwrap();
        assert_eq!(obs[blank * t.n_values() + EMPTY], 1.0);
    }

    #[test]
    fn env_steps() {
        let graphs = pool();
        let t = Arc::new(build_encoding(&graphs).unwrap());
        let mut env = TutorEnv::new(t.clone());
        assert_eq!(env.step(0), Err(RlError::NotReset));
        let obs0 = env.reset(graphs[0].clone()).unwrap();
        let wrong = (0..t.n_actions())
            .find(|i| !env.cursor().unwrap().check(t.decode_action(*i).unwrap()).is_correct())
            .unwrap();
        let r = env.step(wrong).unwrap();
        assert_eq!(r.reward, Reward::INCORRECT);
        assert_eq!(r.observation, obs0);
        assert!(matches!(env.step(t.n_actions()), Err(RlError::IndexOutOfRange { .. })));
        let mut done = false;
        while !done {
            let demo = env.cursor().unwrap().get_demo().unwrap();
            let r = env.step(t.action_index(&demo).unwrap()).unwrap();
            assert_eq!(r.reward, Reward::CORRECT);
            done = r.done;
        }
    }
}
