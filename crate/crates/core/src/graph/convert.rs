//! Import of CTAT `.brd` behavior-recorder files (a common subset).
//!
//! Supported: `node`, `edge` with `actionLabel` (Correct Action only; buggy
//! and fireable-buggy links are dropped), `minTraversals="0"` as skippable,
//! `actor` containing "Tutor" as tutor-performed, `hintMessage`, edge `rule`
//! text as the skill, and `EdgesGroups` unordered groups. Every matcher is
//! imported as an exact match on the recorded input. Nodes without outgoing
//! correct edges become done nodes.

use std::collections::{BTreeMap, BTreeSet};

use roxmltree::{Document, Node};
use thiserror::Error;

use super::{BehaviorGraph, Edge, GraphBuilder, GraphError};
use crate::matcher::MatcherSpec;
use crate::model::{action_types, ProblemState, WidgetKind, WidgetView};

#[derive(Debug, Error)]
pub enum ConvertError {
    #[error("malformed XML: {0}")]
    Xml(#[from] roxmltree::Error),
    #[error("unsupported BRD content: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn child<'a>(node: Node<'a, 'a>, name: &str) -> Option<Node<'a, 'a>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn child_text(node: Node, name: &str) -> Option<String> {
    child(node, name).map(|c| c.text().unwrap_or("").trim().to_string())
}

fn property(props: Node, name: &str) -> Option<String> {
    let p = child(props, name)?;
    Some(child_text(p, "value").unwrap_or_else(|| p.text().unwrap_or("").trim().to_string()))
}

pub fn convert_brd(xml: &str, problem_id: &str) -> Result<BehaviorGraph, ConvertError> {
    let doc = Document::parse(xml)?;
    let root = doc.root_element();
    if !root.has_tag_name("stateGraph") {
        return Err(ConvertError::Unsupported(format!(
            "root element <{}>",
            root.tag_name().name()
        )));
    }

    let mut nodes = Vec::new();
    for n in root.children().filter(|c| c.has_tag_name("node")) {
        let id = child_text(n, "uniqueID").ok_or_else(|| ConvertError::Unsupported("node without uniqueID".into()))?;
        nodes.push(id);
    }
    let start = nodes
        .first()
        .cloned()
        .ok_or_else(|| ConvertError::Unsupported("graph has no nodes".into()))?;

    let mut edges = Vec::new();
    let mut widgets: BTreeMap<String, WidgetKind> = BTreeMap::new();
    let mut sources = BTreeSet::new();
    for e in root.children().filter(|c| c.has_tag_name("edge")) {
        let label =
            child(e, "actionLabel").ok_or_else(|| ConvertError::Unsupported("edge without actionLabel".into()))?;
        let kind = child_text(label, "actionType").unwrap_or_else(|| "Correct Action".into());
        if kind != "Correct Action" {
            continue;
        }
        let id: u32 = child_text(label, "uniqueID")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ConvertError::Unsupported("edge without numeric uniqueID".into()))?;
        let props = child(label, "message")
            .and_then(|m| child(m, "properties"))
            .ok_or_else(|| ConvertError::Unsupported(format!("edge {id}: no message properties")))?;
        let selection = property(props, "Selection").unwrap_or_default();
        let action = property(props, "Action").unwrap_or_default();
        let input = property(props, "Input").unwrap_or_default();
        let source = child_text(e, "sourceID").unwrap_or_default();
        let target = child_text(e, "destID").unwrap_or_default();
        let skill = child(e, "rule").and_then(|r| child_text(r, "text")).unwrap_or_default();
        let tutor = child_text(label, "actor").is_some_and(|a| a.contains("Tutor"));
        let skippable = label.attribute("minTraversals") == Some("0");

        widgets.entry(selection.clone()).or_insert(match action.as_str() {
            action_types::UPDATE_TEXT_FIELD => WidgetKind::TextField,
            action_types::BUTTON_PRESSED => WidgetKind::Button,
            action_types::UPDATE_CHECKBOX => WidgetKind::Checkbox,
            _ => WidgetKind::Label,
        });
        sources.insert(source.clone());

        let edge = if tutor {
            Edge::tutor(id, &source, &target, &selection, &action, &input)
        } else {
            let mut hints: Vec<String> = label
                .children()
                .filter(|c| c.has_tag_name("hintMessage"))
                .filter_map(|c| c.text().map(|t| t.trim().to_string()))
                .filter(|t| !t.is_empty())
                .collect();
            hints.push(format!("Enter {input} in {selection}."));
            Edge::student(id, &source, &target, &selection, &action, MatcherSpec::exact(input))
                .with_hints(hints)
                .skippable(skippable)
        };
        edges.push(edge.with_skill(&skill));
    }

    let mut template = ProblemState::new(problem_id);
    for (id, kind) in widgets {
        template = template.with_widget(WidgetView::new(id, kind));
    }
    let reachable_targets: BTreeSet<&str> = edges.iter().map(|e| e.target.as_str()).collect();
    let mut builder = GraphBuilder::new(problem_id, template)
        .nodes(nodes.iter().cloned())
        .start(&start);
    for n in &nodes {
        if !sources.contains(n) && reachable_targets.contains(n.as_str()) {
            builder = builder.done(n);
        }
    }
    for edge in edges {
        builder = builder.edge(edge);
    }

    if let Some(groups) = child(root, "EdgesGroups") {
        for g in groups.children().filter(|c| c.has_tag_name("group")) {
            let name = g.attribute("name").unwrap_or("group");
            let ids: Vec<u32> = g
                .children()
                .filter(|c| c.has_tag_name("link"))
                .filter_map(|c| c.attribute("id").and_then(|s| s.parse().ok()))
                .collect();
            let reorderable = g.attribute("ordered") != Some("true");
            builder = builder.group(name, &ids, reorderable);
        }
    }
    Ok(builder.build()?)
}
