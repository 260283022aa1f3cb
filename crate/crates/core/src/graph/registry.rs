use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use super::{BehaviorGraph, Grade, GraphCursor};
use crate::model::{ProblemState, Sai};

const CACHE_LIMIT: usize = 100_000;

/// Graphs by problem id, with a cache from rendered states back to cursors.
/// Lets state-only consumers (graders, demoers, oracle agents) ask the tutor
/// questions without holding a cursor.
#[derive(Debug, Default)]
pub struct TutorRegistry {
    graphs: BTreeMap<String, Arc<BehaviorGraph>>,
    cache: Mutex<HashMap<String, GraphCursor>>,
}

impl TutorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_graphs<I: IntoIterator<Item = Arc<BehaviorGraph>>>(graphs: I) -> Self {
        let mut reg = Self::new();
        for g in graphs {
            reg.insert(g);
        }
        reg
    }

    pub fn insert(&mut self, graph: Arc<BehaviorGraph>) {
        self.graphs.insert(graph.problem_id().to_string(), graph);
    }

    pub fn graph(&self, problem_id: &str) -> Option<&Arc<BehaviorGraph>> {
        self.graphs.get(problem_id)
    }

    pub fn graphs(&self) -> impl Iterator<Item = &Arc<BehaviorGraph>> {
        self.graphs.values()
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Cursor for a state, or `None` for unknown problems and states the
    /// tutor cannot reach.
    pub fn cursor_for(&self, state: &ProblemState) -> Option<GraphCursor> {
        let key = state.to_canonical_json();
        if let Some(c) = self.cache.lock().expect("cache lock").get(&key) {
            return Some(c.clone());
        }
        let graph = self.graphs.get(&state.problem_id)?.clone();
        let cursor = GraphCursor::from_state(graph, state)?;
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, cursor.clone());
        Some(cursor)
    }

    /// Remembers a cursor the caller already has, so later lookups skip the
    /// replay search.
    pub fn remember(&self, cursor: &GraphCursor) {
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(cursor.state().to_canonical_json(), cursor.clone());
    }

    pub fn check(&self, state: &ProblemState, sai: &Sai) -> Option<Grade> {
        self.cursor_for(state).map(|c| c.check(sai))
    }

    pub fn demo(&self, state: &ProblemState) -> Option<Sai> {
        self.cursor_for(state).and_then(|c| c.get_demo().ok())
    }
}
