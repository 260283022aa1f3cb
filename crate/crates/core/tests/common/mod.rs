//! Shared helpers for integration tests: an independent path-enumeration
//! model of graph grading, random graph construction and fixture pools.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tutorsim::generators::{
    gen_fraction, gen_multicolumn_addition, gen_sequential_scaffold, generate, linear_equation_template, FractionKind,
    ProblemSpec, FRACTION_DOMAIN,
};
use tutorsim::graph::{BehaviorGraph, Edge, EdgeKind, GraphBuilder, GraphCursor};
use tutorsim::matcher::MatcherSpec;
use tutorsim::model::{ProblemState, Sai, WidgetKind, WidgetView};

/// Every start-to-done path as a list of edge ids.
pub fn full_paths(g: &BehaviorGraph) -> Vec<Vec<u32>> {
    fn go(g: &BehaviorGraph, node: &str, path: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if g.is_done_node(node) {
            out.push(path.clone());
            return;
        }
        for e in g.edges().iter().filter(|e| e.source == node) {
            path.push(e.id);
            go(g, &e.target, path, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    go(g, g.start_node(), &mut Vec::new(), &mut out);
    out
}

/// Splits a path into blocks: consecutive members of one reorderable group
/// form a block, everything else is a block of its own.
pub fn blocks(g: &BehaviorGraph, path: &[u32]) -> Vec<Vec<u32>> {
    let group_of: HashMap<u32, usize> = g
        .groups()
        .iter()
        .enumerate()
        .filter(|(_, gr)| gr.reorderable)
        .flat_map(|(i, gr)| gr.edge_ids.iter().map(move |id| (*id, i)))
        .collect();
    let mut out: Vec<(Option<usize>, Vec<u32>)> = Vec::new();
    for id in path {
        let grp = group_of.get(id).copied();
        match out.last_mut() {
            Some((Some(last), ids)) if grp == Some(*last) => ids.push(*id),
            _ => out.push((grp, vec![*id])),
        }
    }
    out.into_iter().map(|(_, ids)| ids).collect()
}

/// Enabled edges and done flag for a satisfied set, by brute force over all
/// complete paths.
pub fn oracle_frontier(g: &BehaviorGraph, sat: &BTreeSet<u32>) -> (BTreeSet<u32>, bool) {
    let mut enabled = BTreeSet::new();
    let mut done = false;
    for path in full_paths(g) {
        let bl = blocks(g, &path);
        let required_missing = |b: &Vec<u32>| b.iter().any(|id| !sat.contains(id) && !g.edge(*id).unwrap().skippable);
        match bl.iter().position(required_missing) {
            None => {
                if sat.iter().all(|id| path.contains(id)) {
                    done = true;
                }
            }
            Some(j) => {
                let prefix: BTreeSet<u32> = bl[..=j].iter().flatten().copied().collect();
                if sat.is_subset(&prefix) {
                    enabled.extend(prefix.difference(sat).copied());
                }
            }
        }
    }
    if done {
        enabled.clear();
    }
    (enabled, done)
}

/// Oracle grade: does any oracle-enabled student edge accept `sai`?
pub fn oracle_accepts(g: &BehaviorGraph, sat: &BTreeSet<u32>, state: &ProblemState, sai: &Sai) -> bool {
    let (enabled, _) = oracle_frontier(g, sat);
    enabled.iter().any(|id| {
        let e = g.edge(*id).unwrap();
        e.kind == EdgeKind::Student
            && e.selection == sai.selection
            && e.action_type == sai.action_type
            && e.matcher.as_ref().unwrap().matches_in(state, &sai.input)
    })
}

/// Finite action alphabet: every (selection, action_type) in the graph
/// crossed with every witness plus a few distractors.
pub fn action_alphabet(g: &BehaviorGraph) -> Vec<Sai> {
    let pairs: BTreeSet<(String, String)> = g
        .edges()
        .iter()
        .filter(|e| e.kind == EdgeKind::Student)
        .map(|e| (e.selection.clone(), e.action_type.clone()))
        .collect();
    let mut inputs: BTreeSet<String> = g
        .edges()
        .iter()
        .filter_map(|e| e.matcher.as_ref().map(|m| m.witness.clone()))
        .collect();
    for d in ["0", "-1", "99", "1/2", "x"] {
        inputs.insert(d.to_string());
    }
    let mut out = Vec::new();
    for (s, a) in &pairs {
        for i in &inputs {
            out.push(Sai::new(s.clone(), a.clone(), i.clone()).unwrap());
        }
    }
    out.push(Sai::new("no_such_widget", "UpdateTextField", "1").unwrap());
    out
}

/// Breadth-first closure over applying every demo, keyed by satisfied set.
pub fn reachable_by_edges(g: &Arc<BehaviorGraph>) -> Vec<GraphCursor> {
    let mut seen = BTreeSet::new();
    let mut queue = std::collections::VecDeque::new();
    let mut out = Vec::new();
    let start = GraphCursor::new(g.clone());
    seen.insert(start.satisfied_edges().clone());
    queue.push_back(start);
    while let Some(c) = queue.pop_front() {
        if let Ok(demos) = c.get_all_demos() {
            for d in demos {
                let next = c.clone().applied(&d).unwrap();
                if seen.insert(next.satisfied_edges().clone()) {
                    queue.push_back(next);
                }
            }
        }
        out.push(c);
    }
    out
}

/// Compares cursor grading with the oracle at every reachable cursor.
/// Returns the number of mismatches and the number of comparisons.
pub fn audit_graph(g: &Arc<BehaviorGraph>) -> (usize, usize) {
    let alphabet = action_alphabet(g);
    let mut mismatches = 0;
    let mut checked = 0;
    for c in reachable_by_edges(g) {
        let sat = c.satisfied_edges();
        let (enabled, done) = oracle_frontier(g, sat);
        let cursor_enabled: BTreeSet<u32> = c.enabled_edges().iter().copied().collect();
        checked += 1;
        if enabled != cursor_enabled || done != c.is_done() {
            mismatches += 1;
        }
        for sai in &alphabet {
            checked += 1;
            if c.check(sai).is_correct() != oracle_accepts(g, sat, c.state(), sai) {
                mismatches += 1;
            }
        }
    }
    (mismatches, checked)
}

/// Generated graphs of at most eight edges, across all three domains.
pub fn small_generated_graphs(seeds: u64) -> Vec<Arc<BehaviorGraph>> {
    let mut out = Vec::new();
    for seed in 0..seeds {
        for kind in FractionKind::ALL {
            out.push(Arc::new(gen_fraction(kind, seed).1));
        }
        for (kind, extra) in [
            ("same_denominator", "convert_stage"),
            ("same_denominator", "simplify_stage"),
            ("multiply", "simplify_stage"),
        ] {
            let spec = ProblemSpec::new(FRACTION_DOMAIN, seed)
                .with_param("kind", kind)
                .with_param(extra, true);
            out.push(Arc::new(generate(&spec).unwrap()));
        }
        for digits in [2, 3] {
            out.push(Arc::new(gen_multicolumn_addition(digits, seed).unwrap().1));
        }
        out.push(Arc::new(
            gen_sequential_scaffold(&linear_equation_template(), seed).unwrap().1,
        ));
    }
    out.retain(|g| g.edges().len() <= 8);
    out
}

/// A random DAG built from segments: single edges, reorderable or ordered
/// groups, two-way branches and tutor-performed reveals. Selections and
/// inputs are drawn from small pools so different edges can collide.
pub fn random_graph(seed: u64, max_edges: usize) -> Arc<BehaviorGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widgets = ["w0", "w1", "w2", "w3"];
    let values = ["1", "2", "3"];
    let mut template = ProblemState::new("rand");
    for w in widgets {
        template = template.with_widget(WidgetView::new(w, WidgetKind::TextField));
    }
    template = template.with_widget(WidgetView::new("done", WidgetKind::Button));
    let mut nodes = vec!["n0".to_string()];
    let mut edges: Vec<Edge> = Vec::new();
    let mut groups: Vec<(Vec<u32>, bool)> = Vec::new();
    let mut cur = "n0".to_string();
    let fresh = |nodes: &mut Vec<String>| {
        let n = format!("n{}", nodes.len());
        nodes.push(n.clone());
        n
    };
    let student = |rng: &mut ChaCha8Rng, id: u32, s: &str, t: &str| {
        let w = widgets[rng.random_range(0..widgets.len())];
        let v = values[rng.random_range(0..values.len())];
        Edge::student(id, s, t, w, "UpdateTextField", MatcherSpec::exact(v))
            .with_hints([format!("enter {v}")])
            .skippable(rng.random_bool(0.3))
    };
    let budget = max_edges - 1;
    while edges.len() < budget {
        let left = budget - edges.len();
        let next_id = edges.len() as u32 + 1;
        match rng.random_range(0..4) {
            1 if left >= 2 => {
                let k = rng.random_range(2..=left.min(3));
                let mut ids = Vec::new();
                for i in 0..k {
                    let t = fresh(&mut nodes);
                    edges.push(student(&mut rng, next_id + i as u32, &cur, &t));
                    ids.push(next_id + i as u32);
                    cur = t;
                }
                groups.push((ids, rng.random_bool(0.8)));
            }
            2 if left >= 2 => {
                let join = fresh(&mut nodes);
                let mut id = next_id;
                for _ in 0..2 {
                    let len = if left - (id - next_id) as usize >= 3 && rng.random_bool(0.5) {
                        2
                    } else {
                        1
                    };
                    let mut at = cur.clone();
                    for step in 0..len {
                        let t = if step + 1 == len {
                            join.clone()
                        } else {
                            fresh(&mut nodes)
                        };
                        edges.push(student(&mut rng, id, &at, &t));
                        id += 1;
                        at = t;
                    }
                }
                cur = join;
            }
            3 => {
                let label = format!("t{next_id}");
                template = template
                    .clone()
                    .with_widget(WidgetView::new(&label, WidgetKind::Label).hidden());
                let t = fresh(&mut nodes);
                edges.push(Edge::tutor(next_id, &cur, &t, &label, "ShowWidget", ""));
                cur = t;
            }
            _ => {
                let t = fresh(&mut nodes);
                edges.push(student(&mut rng, next_id, &cur, &t));
                cur = t;
            }
        }
    }
    let done_id = edges.len() as u32 + 1;
    edges.push(
        Edge::student(done_id, &cur, "done", "done", "ButtonPressed", MatcherSpec::exact("-1"))
            .with_hints(["press done (-1)"]),
    );
    nodes.push("done".into());
    let mut b = GraphBuilder::new("rand", template)
        .nodes(nodes)
        .start("n0")
        .done("done");
    for e in edges {
        b = b.edge(e);
    }
    for (i, (ids, reorderable)) in groups.iter().enumerate() {
        b = b.group(&format!("g{i}"), ids, *reorderable);
    }
    Arc::new(b.build().expect("random graph is valid"))
}
