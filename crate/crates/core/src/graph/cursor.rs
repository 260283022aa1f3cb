use std::collections::{BTreeSet, HashSet, VecDeque};
use std::sync::Arc;

use super::{BehaviorGraph, EdgeId, EdgeKind, GraphError, Step};
use crate::model::{action_types, ProblemState, Reward, Sai};

/// Result of grading one action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grade {
    pub reward: Reward,
    /// The edge the action matched, if any.
    pub edge: Option<EdgeId>,
}

impl Grade {
    pub fn correct(edge: EdgeId) -> Self {
        Grade {
            reward: Reward::CORRECT,
            edge: Some(edge),
        }
    }

    pub fn incorrect() -> Self {
        Grade {
            reward: Reward::INCORRECT,
            edge: None,
        }
    }

    pub fn is_correct(&self) -> bool {
        self.reward.is_correct()
    }
}

#[derive(Default)]
struct Frontier {
    enabled: BTreeSet<EdgeId>,
    done: bool,
}

/// A position in a behavior graph: the set of traversed edges plus the
/// rendered problem state.
#[derive(Debug, Clone)]
pub struct GraphCursor {
    graph: Arc<BehaviorGraph>,
    satisfied: BTreeSet<EdgeId>,
    state: ProblemState,
    enabled: Vec<EdgeId>,
}

impl PartialEq for GraphCursor {
    fn eq(&self, other: &Self) -> bool {
        self.satisfied == other.satisfied && self.state == other.state && *self.graph == *other.graph
    }
}

impl GraphCursor {
    pub fn new(graph: Arc<BehaviorGraph>) -> Self {
        let mut state = graph.template().clone();
        state.problem_id = graph.problem_id().to_string();
        let mut cursor = GraphCursor {
            graph,
            satisfied: BTreeSet::new(),
            state,
            enabled: Vec::new(),
        };
        cursor.settle();
        cursor
    }

    pub fn graph(&self) -> &Arc<BehaviorGraph> {
        &self.graph
    }

    pub fn state(&self) -> &ProblemState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.done
    }

    pub fn satisfied_edges(&self) -> &BTreeSet<EdgeId> {
        &self.satisfied
    }

    /// Student edges that a correct next action may traverse, by id.
    pub fn enabled_edges(&self) -> &[EdgeId] {
        &self.enabled
    }

    /// Grades `sai` without changing the cursor. When several enabled edges
    /// accept the action the lowest edge id wins.
    pub fn check(&self, sai: &Sai) -> Grade {
        for id in &self.enabled {
            let edge = self.graph.edge(*id).expect("enabled edge exists");
            if edge.selection != sai.selection || edge.action_type != sai.action_type {
                continue;
            }
            let accepted = edge
                .matcher
                .as_ref()
                .is_some_and(|m| m.matches_in(&self.state, &sai.input));
            if accepted {
                return Grade::correct(*id);
            }
        }
        Grade::incorrect()
    }

    /// Traverses the edge matched by `sai`, then any tutor-performed edges
    /// that become due.
    pub fn apply(&mut self, sai: &Sai) -> Result<Grade, GraphError> {
        let grade = self.check(sai);
        let Some(id) = grade.edge else {
            return Err(GraphError::IllegalApply(sai.to_string()));
        };
        self.satisfied.insert(id);
        apply_effect(&mut self.state, sai);
        self.settle();
        Ok(grade)
    }

    /// Consuming variant of [`GraphCursor::apply`].
    pub fn applied(mut self, sai: &Sai) -> Result<Self, GraphError> {
        self.apply(sai)?;
        Ok(self)
    }

    /// One demonstration per enabled edge, in edge-id order.
    pub fn get_all_demos(&self) -> Result<Vec<Sai>, GraphError> {
        if self.enabled.is_empty() {
            return Err(GraphError::NoDemoAvailable);
        }
        Ok(self.enabled.iter().map(|id| self.demo_for(*id)).collect())
    }

    pub fn get_demo(&self) -> Result<Sai, GraphError> {
        self.enabled
            .first()
            .map(|id| self.demo_for(*id))
            .ok_or(GraphError::NoDemoAvailable)
    }

    fn demo_for(&self, id: EdgeId) -> Sai {
        let edge = self.graph.edge(id).expect("enabled edge exists");
        let input = edge
            .matcher
            .as_ref()
            .map(|m| m.witness_in(&self.state))
            .unwrap_or_default();
        Sai {
            selection: edge.selection.clone(),
            action_type: edge.action_type.clone(),
            input,
        }
    }

    /// Hint chain of the first enabled edge on `selection`, falling back to
    /// the first enabled edge.
    pub fn hint(&self, selection: Option<&str>) -> Result<Vec<String>, GraphError> {
        let mut edges = self.enabled.iter().filter_map(|id| self.graph.edge(*id));
        let first = edges.clone().next().ok_or(GraphError::NoDemoAvailable)?;
        let edge = selection
            .and_then(|s| edges.find(|e| e.selection == s))
            .unwrap_or(first);
        Ok(edge
            .hints
            .iter()
            .map(|h| crate::matcher::resolve(h, &self.state))
            .collect())
    }

    /// Skill of the enabled edge that `sai` targets, falling back to the
    /// first enabled edge on the same selection.
    pub fn skill_for(&self, sai: &Sai) -> Option<&str> {
        let grade = self.check(sai);
        let id = grade.edge.or_else(|| {
            self.enabled
                .iter()
                .copied()
                .find(|id| self.graph.edge(*id).is_some_and(|e| e.selection == sai.selection))
        })?;
        self.graph.edge(id).map(|e| e.skill.as_str())
    }

    /// Rebuilds a cursor whose state equals `target`, replaying locked
    /// widget values. `None` when no sequence of correct actions leads there.
    pub fn from_state(graph: Arc<BehaviorGraph>, target: &ProblemState) -> Option<Self> {
        if target.problem_id != graph.problem_id() {
            return None;
        }
        let start = GraphCursor::new(graph);
        let mut seen = HashSet::new();
        replay(start, target, &mut seen)
    }

    fn settle(&mut self) {
        loop {
            let frontier = self.frontier();
            let tutor = frontier
                .enabled
                .iter()
                .copied()
                .find(|id| self.graph.edge(*id).is_some_and(|e| e.kind == EdgeKind::TutorPerformed));
            match tutor {
                Some(id) => {
                    let edge = self.graph.edge(id).expect("edge exists");
                    let sai = Sai {
                        selection: edge.selection.clone(),
                        action_type: edge.action_type.clone(),
                        input: edge.input.clone().unwrap_or_default(),
                    };
                    self.satisfied.insert(id);
                    apply_effect(&mut self.state, &sai);
                }
                None => {
                    self.state.done = frontier.done;
                    self.enabled = frontier.enabled.into_iter().collect();
                    return;
                }
            }
        }
    }

    fn frontier(&self) -> Frontier {
        let mut out = Frontier::default();
        let mut candidates = Vec::new();
        self.walk(self.graph.start_node(), 0, &mut candidates, &mut out);
        if out.done {
            out.enabled.clear();
        }
        out
    }

    // Walks every start-to-done path one step at a time. A step is passed
    // when its required edges are all satisfied; the first unpassed step
    // ends the walk and the unsatisfied edges seen so far become enabled,
    // provided every satisfied edge lies on the walked prefix.
    fn walk(&self, node: &str, consumed: usize, candidates: &mut Vec<EdgeId>, out: &mut Frontier) {
        if self.graph.is_done_node(node) {
            if consumed == self.satisfied.len() {
                out.done = true;
            }
            return;
        }
        for step in self.graph.steps_from(node) {
            if !self.graph.can_finish(self.graph.step_exit(step)) {
                continue;
            }
            let mark = candidates.len();
            let (passed, used) = match step {
                Step::Edge(i) => {
                    let edge = self.graph.edge_at(*i);
                    if self.satisfied.contains(&edge.id) {
                        (true, 1)
                    } else {
                        candidates.push(edge.id);
                        (edge.skippable, 0)
                    }
                }
                Step::Group { members, .. } => {
                    let mut used = 0;
                    let mut missing_required = false;
                    for i in members {
                        let edge = self.graph.edge_at(*i);
                        if self.satisfied.contains(&edge.id) {
                            used += 1;
                        } else {
                            candidates.push(edge.id);
                            missing_required |= !edge.skippable;
                        }
                    }
                    (!missing_required, used)
                }
            };
            if passed {
                self.walk(self.graph.step_exit(step), consumed + used, candidates, out);
            } else if consumed + used == self.satisfied.len() {
                out.enabled.extend(candidates.iter().copied());
            }
            candidates.truncate(mark);
        }
    }
}

fn replay(cursor: GraphCursor, target: &ProblemState, seen: &mut HashSet<BTreeSet<EdgeId>>) -> Option<GraphCursor> {
    if cursor.state == *target {
        return Some(cursor);
    }
    if !seen.insert(cursor.satisfied.clone()) {
        return None;
    }
    for id in cursor.enabled.clone() {
        let edge = cursor.graph.edge(id).expect("edge exists");
        let (Some(want), Some(have)) = (target.widget(&edge.selection), cursor.state.widget(&edge.selection)) else {
            continue;
        };
        if !want.locked || have.locked {
            continue;
        }
        let sai = Sai {
            selection: edge.selection.clone(),
            action_type: edge.action_type.clone(),
            input: want.value.clone(),
        };
        if cursor.check(&sai).edge != Some(id) {
            continue;
        }
        let mut next = cursor.clone();
        next.satisfied.insert(id);
        apply_effect(&mut next.state, &sai);
        next.settle();
        if let Some(found) = replay(next, target, seen) {
            return Some(found);
        }
    }
    None
}

fn apply_effect(state: &mut ProblemState, sai: &Sai) {
    let Some(widget) = state.widgets.get_mut(&sai.selection) else {
        return;
    };
    match sai.action_type.as_str() {
        action_types::SHOW_WIDGET => widget.visible = true,
        action_types::HIDE_WIDGET => widget.visible = false,
        _ => {
            widget.value = sai.input.clone();
            widget.locked = true;
        }
    }
}

/// Every cursor reachable by demonstrated actions, breadth first and
/// deduplicated by state. Stops after `limit` cursors.
pub fn enumerate_reachable(graph: &Arc<BehaviorGraph>, limit: usize) -> Vec<GraphCursor> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut queue = VecDeque::new();
    let start = GraphCursor::new(graph.clone());
    seen.insert(start.state.to_canonical_json());
    queue.push_back(start);
    while let Some(cursor) = queue.pop_front() {
        if out.len() >= limit {
            break;
        }
        if let Ok(demos) = cursor.get_all_demos() {
            for sai in demos {
                let Ok(next) = cursor.clone().applied(&sai) else {
                    continue;
                };
                if seen.insert(next.state.to_canonical_json()) {
                    queue.push_back(next);
                }
            }
        }
        out.push(cursor);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, GraphBuilder};
    use crate::matcher::MatcherSpec;
    use crate::model::{WidgetKind, WidgetView};

    fn fractions_like() -> Arc<BehaviorGraph> {
        let t = ProblemState::new("p")
            .with_widget(WidgetView::new("a", WidgetKind::TextField))
            .with_widget(WidgetView::new("b", WidgetKind::TextField))
            .with_widget(WidgetView::new("c", WidgetKind::TextField).hidden())
            .with_widget(WidgetView::new("done", WidgetKind::Button));
        let g = GraphBuilder::new("p", t)
            .nodes(["s", "m", "x", "y", "d"])
            .done("d")
            .edge(
                Edge::student(1, "s", "m", "a", "UpdateTextField", MatcherSpec::numeric("2", "0"))
                    .with_hints(["a hint", "type 2"])
                    .with_skill("a"),
            )
            .edge(
                Edge::student(2, "m", "x", "b", "UpdateTextField", MatcherSpec::numeric("3", "0"))
                    .with_hints(["b hint"])
                    .with_skill("b"),
            )
            .edge(Edge::tutor(3, "x", "y", "c", "ShowWidget", ""))
            .edge(
                Edge::student(
                    4,
                    "y",
                    "d",
                    "done",
                    "ButtonPressed",
                    MatcherSpec::exact("").with_witness(""),
                )
                .with_hints(["press done"]),
            )
            .group("ab", &[1, 2], true)
            .build()
            .unwrap();
        Arc::new(g)
    }

    fn sai(s: &str, a: &str, i: &str) -> Sai {
        Sai::new(s, a, i).unwrap()
    }

    #[test]
    fn unordered_group_any_order() {
        let g = fractions_like();
        let c = GraphCursor::new(g);
        assert_eq!(c.enabled_edges(), &[1, 2]);
        let c = c.applied(&sai("b", "UpdateTextField", "3")).unwrap();
        assert_eq!(c.enabled_edges(), &[1]);
        assert!(!c.state().widget("c").unwrap().visible);
        let c = c.applied(&sai("a", "UpdateTextField", "4/2")).unwrap();
        assert_eq!(c.enabled_edges(), &[4]);
        assert!(c.state().widget("c").unwrap().visible);
        assert!(c.satisfied_edges().contains(&3));
        assert_eq!(c.state().value_of("a"), Some("4/2"));
        let c = c.applied(&sai("done", "ButtonPressed", "")).unwrap();
        assert!(c.is_done());
        assert!(c.state().done);
        assert_eq!(c.get_demo(), Err(GraphError::NoDemoAvailable));
        assert!(!c.check(&sai("done", "ButtonPressed", "")).is_correct());
    }

    #[test]
    fn wrong_actions_do_not_move() {
        let c = GraphCursor::new(fractions_like());
        assert_eq!(c.check(&sai("a", "UpdateTextField", "5")), Grade::incorrect());
        assert!(!c.check(&sai("done", "ButtonPressed", "")).is_correct());
        let mut c2 = c.clone();
        assert!(matches!(
            c2.apply(&sai("a", "UpdateTextField", "5")),
            Err(GraphError::IllegalApply(_))
        ));
        assert_eq!(c, c2);
    }

    #[test]
    fn demos_and_hints() {
        let c = GraphCursor::new(fractions_like());
        let demos = c.get_all_demos().unwrap();
        assert_eq!(demos.len(), 2);
        for d in &demos {
            assert!(c.check(d).is_correct());
        }
        assert_eq!(c.hint(None).unwrap(), vec!["a hint", "type 2"]);
        assert_eq!(c.hint(Some("b")).unwrap(), vec!["b hint"]);
        assert_eq!(c.hint(Some("zzz")).unwrap(), vec!["a hint", "type 2"]);
    }

    #[test]
    fn reachable_and_replay() {
        let g = fractions_like();
        let all = enumerate_reachable(&g, 100);
        // start, a, b, ab, done
        assert_eq!(all.len(), 5);
        for c in &all {
            let back = GraphCursor::from_state(g.clone(), c.state()).unwrap();
            assert_eq!(back.satisfied_edges(), c.satisfied_edges());
        }
        assert_eq!(enumerate_reachable(&g, 2).len(), 2);
    }
}
