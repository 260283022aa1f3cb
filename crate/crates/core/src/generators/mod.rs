//! Seeded problem generators that compile instances into behavior graphs.
//!
//! Every generator is a pure function of its [`ProblemSpec`]: the same
//! domain, seed and params always produce a byte-identical graph.

mod fraction;
mod multicolumn;
mod scaffold;

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{BehaviorGraph, Edge, GraphBuilder, GraphError};
use crate::matcher::MatcherSpec;
use crate::model::{action_types, ProblemState, WidgetKind, WidgetView};

pub use fraction::{gen_fraction, FractionKind};
pub use multicolumn::gen_multicolumn_addition;
pub use scaffold::{gen_sequential_scaffold, linear_equation_template, OperandSpec, ScaffoldStep, ScaffoldTemplate};

pub const FRACTION_DOMAIN: &str = "fraction_arithmetic";
pub const MULTICOLUMN_DOMAIN: &str = "multicolumn_addition";
pub const SCAFFOLD_DOMAIN: &str = "sequential_scaffold";

#[derive(Debug, Error)]
pub enum GenError {
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error("bad parameter {name:?}: {message}")]
    BadParam { name: String, message: String },
    #[error("template error: {0}")]
    Template(String),
    #[error("generated graph is invalid: {0}")]
    Graph(#[from] GraphError),
}

pub(crate) fn bad_param(name: &str, message: impl Into<String>) -> GenError {
    GenError::BadParam {
        name: name.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub domain_id: String,
    pub seed: u64,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    #[serde(default)]
    pub display_text: String,
}

impl ProblemSpec {
    pub fn new(domain_id: &str, seed: u64) -> Self {
        ProblemSpec {
            domain_id: domain_id.into(),
            seed,
            params: BTreeMap::new(),
            display_text: String::new(),
        }
    }

    pub fn with_param(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.params.insert(name.into(), value.into());
        self
    }

    pub(crate) fn param_u64(&self, name: &str) -> Result<Option<u64>, GenError> {
        match self.params.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| bad_param(name, "expected a non-negative integer")),
        }
    }

    pub(crate) fn param_bool(&self, name: &str) -> Result<Option<bool>, GenError> {
        match self.params.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_bool()
                .map(Some)
                .ok_or_else(|| bad_param(name, "expected true or false")),
        }
    }

    pub(crate) fn param_str(&self, name: &str) -> Result<Option<&str>, GenError> {
        match self.params.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v.as_str().map(Some).ok_or_else(|| bad_param(name, "expected a string")),
        }
    }

    pub(crate) fn param_u64_list(&self, name: &str) -> Result<Option<Vec<u64>>, GenError> {
        match self.params.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_u64().ok_or_else(|| bad_param(name, "expected integers")))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(_) => Err(bad_param(name, "expected a list of integers")),
        }
    }

    /// Stable problem id derived from the spec.
    pub fn problem_id(&self) -> String {
        let mut id = format!("{}-{}", self.domain_id, self.seed);
        for (k, v) in &self.params {
            let v = match v {
                Value::String(s) => s.clone(),
                Value::Object(_) => {
                    let digest = Sha256::digest(crate::model::canonical_json(v).as_bytes());
                    hex::encode(&digest[..4])
                }
                other => other.to_string(),
            };
            let v: String = v
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
                .collect();
            id.push_str(&format!("-{k}_{v}"));
        }
        id
    }
}

/// Builds the graph described by `spec`. The returned graph carries the spec
/// (with `display_text` filled in) as generator metadata.
pub fn generate(spec: &ProblemSpec) -> Result<BehaviorGraph, GenError> {
    match spec.domain_id.as_str() {
        FRACTION_DOMAIN => fraction::generate(spec),
        MULTICOLUMN_DOMAIN => multicolumn::generate(spec),
        SCAFFOLD_DOMAIN => scaffold::generate(spec),
        other => Err(GenError::UnknownDomain(other.into())),
    }
}

/// Renders a rational as an integer, a terminating decimal, or `p/q`.
pub fn format_rational(r: &BigRational) -> String {
    if r.is_integer() {
        return r.to_integer().to_string();
    }
    let mut den = r.denom().clone();
    let two = num_bigint::BigInt::from(2);
    let five = num_bigint::BigInt::from(5);
    let mut places = 0usize;
    while (&den % &two).is_zero() {
        den /= &two;
        places += 1;
    }
    let mut fives = 0usize;
    while (&den % &five).is_zero() {
        den /= &five;
        fives += 1;
    }
    if !den.is_one() {
        return format!("{}/{}", r.numer(), r.denom());
    }
    let places = places.max(fives);
    let scaled = (r.abs() * BigRational::from_integer(num_bigint::BigInt::from(10).pow(places as u32)))
        .to_integer()
        .to_string();
    let padded = format!("{scaled:0>width$}", width = places + 1);
    let (int, frac) = padded.split_at(padded.len() - places);
    let sign = if r.is_negative() { "-" } else { "" };
    format!("{sign}{int}.{frac}")
}

/// One answer field in a stage.
pub(crate) struct FieldStep {
    pub field: String,
    pub value: String,
    pub skill: String,
    pub hints: Vec<String>,
    pub skippable: bool,
}

impl FieldStep {
    pub fn new(field: &str, value: impl ToString, skill: &str, first_hint: String) -> Self {
        let value = value.to_string();
        let hints = vec![first_hint, format!("Enter {value} in the {field} field.")];
        FieldStep {
            field: field.into(),
            value,
            skill: skill.into(),
            hints,
            skippable: false,
        }
    }

    pub fn skippable(mut self, skippable: bool) -> Self {
        self.skippable = skippable;
        self
    }
}

/// Lays out stages as a chain of nodes; multi-field unordered stages become
/// reorderable groups.
pub(crate) struct Plan {
    template: ProblemState,
    nodes: Vec<String>,
    edges: Vec<Edge>,
    groups: Vec<(String, Vec<u32>)>,
    current: String,
}

pub(crate) const DONE_WIDGET: &str = "done";

impl Plan {
    pub fn new(problem_id: &str) -> Self {
        Plan {
            template: ProblemState::new(problem_id),
            nodes: vec!["n0".into()],
            edges: Vec::new(),
            groups: Vec::new(),
            current: "n0".into(),
        }
    }

    pub fn label(&mut self, id: &str, value: impl ToString) {
        let w = WidgetView::new(id, WidgetKind::Label)
            .with_value(value.to_string())
            .locked();
        self.template.widgets.insert(id.into(), w);
    }

    pub fn stage(&mut self, name: &str, fields: Vec<FieldStep>, unordered: bool) {
        let mut ids = Vec::new();
        for f in fields {
            self.template
                .widgets
                .insert(f.field.clone(), WidgetView::new(f.field.clone(), WidgetKind::TextField));
            let id = self.edges.len() as u32 + 1;
            let target = format!("n{}", self.nodes.len());
            let matcher = MatcherSpec::numeric(f.value.clone(), "0");
            let edge = Edge::student(
                id,
                &self.current,
                &target,
                &f.field,
                action_types::UPDATE_TEXT_FIELD,
                matcher,
            )
            .with_hints(f.hints)
            .with_skill(&f.skill)
            .skippable(f.skippable);
            self.edges.push(edge);
            self.nodes.push(target.clone());
            self.current = target;
            ids.push(id);
        }
        if unordered && ids.len() >= 2 {
            self.groups.push((name.into(), ids));
        }
    }

    pub fn finish(mut self, spec: ProblemSpec) -> Result<BehaviorGraph, GenError> {
        self.template
            .widgets
            .insert(DONE_WIDGET.into(), WidgetView::new(DONE_WIDGET, WidgetKind::Button));
        let id = self.edges.len() as u32 + 1;
        let done = Edge::student(
            id,
            &self.current,
            "done",
            DONE_WIDGET,
            action_types::BUTTON_PRESSED,
            MatcherSpec::pattern(".*", "-1"),
        )
        .with_hints([
            "Every answer field is filled in.".to_string(),
            "Press the done button (input -1).".to_string(),
        ])
        .with_skill("done");
        self.nodes.push("done".into());
        let problem_id = self.template.problem_id.clone();
        let mut b = GraphBuilder::new(&problem_id, self.template)
            .nodes(self.nodes)
            .start("n0")
            .done("done")
            .generator(spec);
        for e in self.edges {
            b = b.edge(e);
        }
        b = b.edge(done);
        for (name, ids) in &self.groups {
            b = b.group(name, ids, true);
        }
        Ok(b.build()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_formatting() {
        let r = |n: i64, d: i64| BigRational::new(n.into(), d.into());
        assert_eq!(format_rational(&r(3, 1)), "3");
        assert_eq!(format_rational(&r(-3, 1)), "-3");
        assert_eq!(format_rational(&r(1, 4)), "0.25");
        assert_eq!(format_rational(&r(-1, 20)), "-0.05");
        assert_eq!(format_rational(&r(1, 3)), "1/3");
        assert_eq!(format_rational(&r(7, 2)), "3.5");
    }

    #[test]
    fn unknown_domain() {
        assert!(matches!(
            generate(&ProblemSpec::new("chemistry", 1)),
            Err(GenError::UnknownDomain(_))
        ));
    }

    #[test]
    fn problem_id_is_stable() {
        let spec = ProblemSpec::new(FRACTION_DOMAIN, 7).with_param("kind", "multiply");
        assert_eq!(spec.problem_id(), "fraction_arithmetic-7-kind_multiply");
    }
}
