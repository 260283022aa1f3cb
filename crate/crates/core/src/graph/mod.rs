//! Behavior-graph tutor models.
//!
//! A graph is a DAG of state nodes connected by action edges. Edges may be
//! skippable, performed by the tutor itself, or collected into unordered
//! groups whose members can be completed in any order. [`GraphCursor`] tracks
//! one student's progress through a loaded graph.

mod convert;
mod cursor;
mod registry;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generators::ProblemSpec;
use crate::matcher::MatcherSpec;
use crate::model::{action_types, ProblemState};

pub use convert::{convert_brd, ConvertError};
pub use cursor::{enumerate_reachable, Grade, GraphCursor};
pub use registry::TutorRegistry;

pub const FORMAT_NAME: &str = "behavior-graph";
pub const FORMAT_VERSION: u32 = 1;

pub type EdgeId = u32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("edge {edge} references missing node {node:?}")]
    DanglingEdge { edge: EdgeId, node: String },
    #[error("no done node is reachable from the start node")]
    UnreachableDone,
    #[error("action {0} is not a correct next step")]
    IllegalApply(String),
    #[error("no demonstration available: the problem is done")]
    NoDemoAvailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Student,
    TutorPerformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub source: String,
    pub target: String,
    pub selection: String,
    pub action_type: String,
    pub kind: EdgeKind,
    /// Student edges only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matcher: Option<MatcherSpec>,
    /// Concrete input of a tutor-performed edge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default)]
    pub skippable: bool,
    /// Ordered hints; the last one is the bottom-out demonstration text.
    #[serde(default)]
    pub hints: Vec<String>,
    #[serde(default)]
    pub skill: String,
}

impl Edge {
    pub fn student(
        id: EdgeId,
        source: &str,
        target: &str,
        selection: &str,
        action_type: &str,
        matcher: MatcherSpec,
    ) -> Self {
        Edge {
            id,
            source: source.into(),
            target: target.into(),
            selection: selection.into(),
            action_type: action_type.into(),
            kind: EdgeKind::Student,
            matcher: Some(matcher),
            input: None,
            skippable: false,
            hints: Vec::new(),
            skill: String::new(),
        }
    }

    pub fn tutor(id: EdgeId, source: &str, target: &str, selection: &str, action_type: &str, input: &str) -> Self {
        Edge {
            id,
            source: source.into(),
            target: target.into(),
            selection: selection.into(),
            action_type: action_type.into(),
            kind: EdgeKind::TutorPerformed,
            matcher: None,
            input: Some(input.into()),
            skippable: false,
            hints: Vec::new(),
            skill: String::new(),
        }
    }

    pub fn with_hints<I, S>(mut self, hints: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.hints = hints.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_skill(mut self, skill: &str) -> Self {
        self.skill = skill.into();
        self
    }

    pub fn skippable(mut self, skippable: bool) -> Self {
        self.skippable = skippable;
        self
    }

    pub fn is_student(&self) -> bool {
        self.kind == EdgeKind::Student
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnorderedGroup {
    pub group_id: String,
    pub edge_ids: Vec<EdgeId>,
    #[serde(default = "default_true")]
    pub reorderable: bool,
}

fn default_true() -> bool {
    true
}

/// On-disk form of a behavior graph (`docs/graph-format.md`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub format: String,
    pub version: u32,
    pub problem_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<ProblemSpec>,
    /// Action types beyond the built-in set.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub action_types: Vec<String>,
    pub nodes: Vec<String>,
    pub start: String,
    pub done_nodes: Vec<String>,
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub groups: Vec<UnorderedGroup>,
    pub template: ProblemState,
}

/// One unit of progress out of a node: a single edge or a whole reorderable
/// group (entered at its chain head, left at its chain tail).
#[derive(Debug, Clone)]
pub(crate) enum Step {
    Edge(usize),
    Group { members: Vec<usize>, exit: String },
}

impl Step {
    fn exit<'a>(&'a self, edges: &'a [Edge]) -> &'a str {
        match self {
            Step::Edge(i) => &edges[*i].target,
            Step::Group { exit, .. } => exit,
        }
    }
}

/// A validated, immutable behavior graph.
#[derive(Debug, Clone)]
pub struct BehaviorGraph {
    doc: GraphDocument,
    edge_index: HashMap<EdgeId, usize>,
    steps: HashMap<String, Vec<Step>>,
    can_finish: HashSet<String>,
    done_nodes: HashSet<String>,
}

impl PartialEq for BehaviorGraph {
    fn eq(&self, other: &Self) -> bool {
        self.doc == other.doc
    }
}

impl BehaviorGraph {
    pub fn from_document(mut doc: GraphDocument) -> Result<Self, GraphError> {
        let schema = |msg: String| GraphError::Schema(msg);
        if doc.format != FORMAT_NAME {
            return Err(schema(format!("format must be {FORMAT_NAME:?}, got {:?}", doc.format)));
        }
        if doc.version != FORMAT_VERSION {
            return Err(schema(format!("unsupported version {}", doc.version)));
        }
        if doc.problem_id.is_empty() {
            return Err(schema("problem_id: must be non-empty".into()));
        }
        doc.edges.sort_by_key(|e| e.id);
        doc.template.problem_id = doc.problem_id.clone();

        let nodes: HashSet<&str> = doc.nodes.iter().map(String::as_str).collect();
        if nodes.len() != doc.nodes.len() {
            return Err(schema("nodes: duplicate node id".into()));
        }
        if !nodes.contains(doc.start.as_str()) {
            return Err(schema(format!("start: unknown node {:?}", doc.start)));
        }
        for d in &doc.done_nodes {
            if !nodes.contains(d.as_str()) {
                return Err(schema(format!("done_nodes: unknown node {d:?}")));
            }
        }
        let registered: HashSet<&str> = action_types::BUILTIN
            .iter()
            .copied()
            .chain(doc.action_types.iter().map(String::as_str))
            .collect();

        let mut edge_index = HashMap::new();
        for (i, e) in doc.edges.iter().enumerate() {
            if edge_index.insert(e.id, i).is_some() {
                return Err(schema(format!("edges: duplicate edge id {}", e.id)));
            }
            for node in [&e.source, &e.target] {
                if !nodes.contains(node.as_str()) {
                    return Err(GraphError::DanglingEdge {
                        edge: e.id,
                        node: node.clone(),
                    });
                }
            }
            validate_edge(e, &registered, &doc.template)?;
        }

        let done_nodes: HashSet<String> = doc.done_nodes.iter().cloned().collect();
        let mut out_edges: HashMap<&str, Vec<usize>> = HashMap::new();
        let mut in_edges: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, e) in doc.edges.iter().enumerate() {
            out_edges.entry(e.source.as_str()).or_default().push(i);
            in_edges.entry(e.target.as_str()).or_default().push(i);
        }
        for d in &done_nodes {
            if out_edges.contains_key(d.as_str()) {
                return Err(schema(format!("done node {d:?} has outgoing edges")));
            }
        }
        for (node, outs) in &out_edges {
            let tutor = outs.iter().any(|i| doc.edges[*i].kind == EdgeKind::TutorPerformed);
            if tutor && outs.len() > 1 {
                return Err(schema(format!(
                    "node {node:?}: a tutor-performed edge must be the only outgoing edge"
                )));
            }
        }
        check_acyclic(&doc, &out_edges)?;

        // groups
        let mut group_of: HashMap<usize, usize> = HashMap::new();
        let mut chains: Vec<Option<Vec<usize>>> = Vec::new();
        for (g, group) in doc.groups.iter().enumerate() {
            if group.edge_ids.len() < 2 {
                return Err(schema(format!("group {:?}: needs at least two edges", group.group_id)));
            }
            let mut members = Vec::new();
            for id in &group.edge_ids {
                let i = *edge_index
                    .get(id)
                    .ok_or_else(|| schema(format!("group {:?}: unknown edge {id}", group.group_id)))?;
                if group_of.insert(i, g).is_some() {
                    return Err(schema(format!("edge {id} belongs to more than one group")));
                }
                if !doc.edges[i].is_student() {
                    return Err(schema(format!(
                        "group {:?}: edge {id} is tutor-performed",
                        group.group_id
                    )));
                }
                members.push(i);
            }
            let chain = order_chain(&doc, &members, &out_edges, &in_edges).ok_or_else(|| {
                schema(format!(
                    "group {:?}: edges must form a simple chain with no outside edges at inner nodes",
                    group.group_id
                ))
            })?;
            chains.push(group.reorderable.then_some(chain));
        }

        let mut steps: HashMap<String, Vec<Step>> = HashMap::new();
        for (i, e) in doc.edges.iter().enumerate() {
            let step = match group_of.get(&i).and_then(|g| chains[*g].as_ref()) {
                Some(chain) if chain[0] == i => Step::Group {
                    members: chain.clone(),
                    exit: doc.edges[*chain.last().unwrap()].target.clone(),
                },
                Some(_) => continue,
                None => Step::Edge(i),
            };
            steps.entry(e.source.clone()).or_default().push(step);
        }

        // nodes that can still reach a done node, by backward propagation
        let mut can_finish: HashSet<String> = done_nodes.clone();
        loop {
            let mut changed = false;
            for (node, list) in &steps {
                if !can_finish.contains(node) && list.iter().any(|s| can_finish.contains(s.exit(&doc.edges))) {
                    can_finish.insert(node.clone());
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if !can_finish.contains(&doc.start) {
            return Err(GraphError::UnreachableDone);
        }

        Ok(BehaviorGraph {
            doc,
            edge_index,
            steps,
            can_finish,
            done_nodes,
        })
    }

    pub fn problem_id(&self) -> &str {
        &self.doc.problem_id
    }

    pub fn generator(&self) -> Option<&ProblemSpec> {
        self.doc.generator.as_ref()
    }

    pub fn document(&self) -> &GraphDocument {
        &self.doc
    }

    pub fn nodes(&self) -> &[String] {
        &self.doc.nodes
    }

    pub fn start_node(&self) -> &str {
        &self.doc.start
    }

    pub fn done_nodes(&self) -> impl Iterator<Item = &str> {
        self.doc.done_nodes.iter().map(String::as_str)
    }

    pub fn is_done_node(&self, node: &str) -> bool {
        self.done_nodes.contains(node)
    }

    /// Edges sorted by id.
    pub fn edges(&self) -> &[Edge] {
        &self.doc.edges
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edge_index.get(&id).map(|i| &self.doc.edges[*i])
    }

    pub fn groups(&self) -> &[UnorderedGroup] {
        &self.doc.groups
    }

    pub fn template(&self) -> &ProblemState {
        &self.doc.template
    }

    pub(crate) fn steps_from(&self, node: &str) -> &[Step] {
        self.steps.get(node).map(Vec::as_slice).unwrap_or(&[])
    }

    pub(crate) fn can_finish(&self, node: &str) -> bool {
        self.can_finish.contains(node)
    }

    pub(crate) fn edge_at(&self, index: usize) -> &Edge {
        &self.doc.edges[index]
    }

    pub(crate) fn step_exit<'a>(&'a self, step: &'a Step) -> &'a str {
        step.exit(&self.doc.edges)
    }

    /// Pretty JSON with stable key order; reloading yields an equal graph.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(&self.doc).expect("graph serializes");
        let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
        text.push('\n');
        text
    }
}

fn validate_edge(e: &Edge, registered: &HashSet<&str>, template: &ProblemState) -> Result<(), GraphError> {
    let schema = |msg: String| GraphError::Schema(format!("edge {}: {msg}", e.id));
    if e.selection.is_empty() {
        return Err(schema("selection: must be non-empty".into()));
    }
    if !registered.contains(e.action_type.as_str()) {
        return Err(schema(format!("action_type: {:?} is not registered", e.action_type)));
    }
    if template.widget(&e.selection).is_none() {
        return Err(schema(format!("selection: no widget {:?} in template", e.selection)));
    }
    match e.kind {
        EdgeKind::Student => {
            let matcher = e
                .matcher
                .as_ref()
                .ok_or_else(|| schema("matcher: required for student edges".into()))?;
            matcher.validate().map_err(|err| schema(format!("matcher: {err}")))?;
            if e.hints.is_empty() {
                return Err(schema("hints: student edges need at least one hint".into()));
            }
            if e.input.is_some() {
                return Err(schema("input: only tutor-performed edges carry an input".into()));
            }
        }
        EdgeKind::TutorPerformed => {
            if e.input.is_none() {
                return Err(schema("input: tutor-performed edges need a concrete input".into()));
            }
            if e.matcher.is_some() {
                return Err(schema("matcher: not allowed on tutor-performed edges".into()));
            }
            if e.skippable {
                return Err(schema("skippable: tutor-performed edges cannot be skipped".into()));
            }
        }
    }
    Ok(())
}

fn check_acyclic(doc: &GraphDocument, out: &HashMap<&str, Vec<usize>>) -> Result<(), GraphError> {
    // iterative three-color DFS
    let mut color: HashMap<&str, u8> = HashMap::new();
    for root in &doc.nodes {
        if color.contains_key(root.as_str()) {
            continue;
        }
        let mut stack: Vec<(&str, usize)> = vec![(root.as_str(), 0)];
        color.insert(root.as_str(), 1);
        while let Some((node, next)) = stack.pop() {
            let outs = out.get(node).map(Vec::as_slice).unwrap_or(&[]);
            if next < outs.len() {
                stack.push((node, next + 1));
                let target = doc.edges[outs[next]].target.as_str();
                match color.get(target) {
                    Some(1) => {
                        return Err(GraphError::Schema(format!(
                            "graph contains a cycle through node {target:?}"
                        )))
                    }
                    Some(_) => {}
                    None => {
                        color.insert(target, 1);
                        stack.push((target, 0));
                    }
                }
            } else {
                color.insert(node, 2);
            }
        }
    }
    Ok(())
}

/// Orders group members head-to-tail; `None` when they do not form a chain
/// whose inner nodes touch only group edges.
fn order_chain(
    doc: &GraphDocument,
    members: &[usize],
    out: &HashMap<&str, Vec<usize>>,
    inn: &HashMap<&str, Vec<usize>>,
) -> Option<Vec<usize>> {
    let set: BTreeSet<usize> = members.iter().copied().collect();
    let targets: HashSet<&str> = members.iter().map(|i| doc.edges[*i].target.as_str()).collect();
    let heads: Vec<usize> = members
        .iter()
        .copied()
        .filter(|i| !targets.contains(doc.edges[*i].source.as_str()))
        .collect();
    if heads.len() != 1 {
        return None;
    }
    let mut chain = vec![heads[0]];
    while chain.len() < members.len() {
        let node = doc.edges[*chain.last().unwrap()].target.as_str();
        let outs = out.get(node)?;
        let ins = inn.get(node)?;
        if outs.len() != 1 || ins.len() != 1 || !set.contains(&outs[0]) {
            return None;
        }
        chain.push(outs[0]);
    }
    Some(chain)
}

pub fn load_graph(document: &str) -> Result<BehaviorGraph, GraphError> {
    let doc: GraphDocument = serde_json::from_str(document)
        .map_err(|e| GraphError::Schema(format!("line {} column {}: {e}", e.line(), e.column())))?;
    BehaviorGraph::from_document(doc)
}

/// Fluent construction of graph documents in code and tests.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    doc: GraphDocument,
}

impl GraphBuilder {
    pub fn new(problem_id: &str, template: ProblemState) -> Self {
        GraphBuilder {
            doc: GraphDocument {
                format: FORMAT_NAME.into(),
                version: FORMAT_VERSION,
                problem_id: problem_id.into(),
                generator: None,
                action_types: Vec::new(),
                nodes: Vec::new(),
                start: String::new(),
                done_nodes: Vec::new(),
                edges: Vec::new(),
                groups: Vec::new(),
                template,
            },
        }
    }

    pub fn nodes<I: IntoIterator<Item = S>, S: Into<String>>(mut self, nodes: I) -> Self {
        self.doc.nodes.extend(nodes.into_iter().map(Into::into));
        if self.doc.start.is_empty() {
            self.doc.start = self.doc.nodes.first().cloned().unwrap_or_default();
        }
        self
    }

    pub fn start(mut self, node: &str) -> Self {
        self.doc.start = node.into();
        self
    }

    pub fn done(mut self, node: &str) -> Self {
        self.doc.done_nodes.push(node.into());
        self
    }

    pub fn edge(mut self, edge: Edge) -> Self {
        self.doc.edges.push(edge);
        self
    }

    pub fn group(mut self, group_id: &str, edge_ids: &[EdgeId], reorderable: bool) -> Self {
        self.doc.groups.push(UnorderedGroup {
            group_id: group_id.into(),
            edge_ids: edge_ids.to_vec(),
            reorderable,
        });
        self
    }

    pub fn generator(mut self, spec: ProblemSpec) -> Self {
        self.doc.generator = Some(spec);
        self
    }

    pub fn action_type(mut self, action_type: &str) -> Self {
        self.doc.action_types.push(action_type.into());
        self
    }

    pub fn document(self) -> GraphDocument {
        self.doc
    }

    pub fn build(self) -> Result<BehaviorGraph, GraphError> {
        BehaviorGraph::from_document(self.doc)
    }
}

/// Extra summary data handy for tooling.
pub fn edge_counts(graph: &BehaviorGraph) -> BTreeMap<&'static str, usize> {
    let mut out = BTreeMap::new();
    for e in graph.edges() {
        let key = match (e.kind, e.skippable) {
            (EdgeKind::TutorPerformed, _) => "tutor_performed",
            (EdgeKind::Student, true) => "skippable",
            (EdgeKind::Student, false) => "required",
        };
        *out.entry(key).or_insert(0) += 1;
    }
    out
}
