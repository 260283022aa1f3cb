use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{bad_param, format_rational, FieldStep, GenError, Plan, ProblemSpec, SCAFFOLD_DOMAIN};
use crate::graph::BehaviorGraph;
use crate::matcher::parse_expr;

/// An operand is either drawn uniformly from `[min, max]` or computed from
/// earlier operands by `formula`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperandSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula: Option<String>,
}

impl OperandSpec {
    pub fn range(name: &str, min: i64, max: i64) -> Self {
        OperandSpec {
            name: name.into(),
            min: Some(min),
            max: Some(max),
            formula: None,
        }
    }

    pub fn derived(name: &str, formula: &str) -> Self {
        OperandSpec {
            name: name.into(),
            min: None,
            max: None,
            formula: Some(formula.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaffoldStep {
    pub field: String,
    pub label: String,
    pub formula: String,
    /// Included when the requested scaffold level is at least this value.
    pub scaffold_level: u32,
    pub skill: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaffoldTemplate {
    pub name: String,
    /// Operand names are single letters so formulas can refer to them.
    pub operands: Vec<OperandSpec>,
    pub steps: Vec<ScaffoldStep>,
    /// Problem text with `${name}` placeholders.
    pub display: String,
}

impl ScaffoldTemplate {
    pub fn max_level(&self) -> u32 {
        self.steps.iter().map(|s| s.scaffold_level).max().unwrap_or(0)
    }
}

/// `a x + b = c`, solved by subtracting `b` and then dividing by `a`.
pub fn linear_equation_template() -> ScaffoldTemplate {
    ScaffoldTemplate {
        name: "linear_equation".into(),
        operands: vec![
            OperandSpec::range("a", 2, 9),
            OperandSpec::range("x", 1, 9),
            OperandSpec::range("b", 1, 9),
            OperandSpec::derived("c", "a*x + b"),
        ],
        steps: vec![
            ScaffoldStep {
                field: "subtract_b".into(),
                label: "subtract b".into(),
                formula: "c - b".into(),
                scaffold_level: 1,
                skill: "subtract-constant".into(),
            },
            ScaffoldStep {
                field: "answer".into(),
                label: "divide a".into(),
                formula: "(c - b)/a".into(),
                scaffold_level: 0,
                skill: "divide-coefficient".into(),
            },
        ],
        display: "${a}x + ${b} = ${c}".into(),
    }
}

/// Generates a scaffolded instance at the template's full scaffold level.
pub fn gen_sequential_scaffold(
    template: &ScaffoldTemplate,
    seed: u64,
) -> Result<(ProblemSpec, BehaviorGraph), GenError> {
    let spec = ProblemSpec::new(SCAFFOLD_DOMAIN, seed)
        .with_param("template", serde_json::to_value(template).expect("template serializes"));
    let graph = generate(&spec)?;
    let spec = graph.generator().cloned().expect("generator metadata");
    Ok((spec, graph))
}

// Params:
//   template: ScaffoldTemplate object, or the name of a built-in template
//             (default "linear_equation")
//   level: requested scaffold level (default: the template's maximum)
//   operands: {name: integer} overrides; overridden derived operands skip
//             their formula
pub(super) fn generate(spec: &ProblemSpec) -> Result<BehaviorGraph, GenError> {
    let template = match spec.params.get("template") {
        None | Some(Value::Null) => linear_equation_template(),
        Some(Value::String(name)) if name == "linear_equation" => linear_equation_template(),
        Some(Value::String(name)) => return Err(bad_param("template", format!("unknown built-in template {name:?}"))),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| bad_param("template", e.to_string()))?,
    };
    let level = match spec.param_u64("level")? {
        Some(l) => u32::try_from(l).map_err(|_| bad_param("level", "too large"))?,
        None => template.max_level(),
    };
    let overrides: BTreeMap<String, i64> = match spec.params.get("operands") {
        None | Some(Value::Null) => BTreeMap::new(),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| bad_param("operands", e.to_string()))?,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut env: BTreeMap<String, BigRational> = BTreeMap::new();
    for op in &template.operands {
        if op.name.chars().count() != 1 || !op.name.chars().all(|c| c.is_ascii_alphabetic()) {
            return Err(GenError::Template(format!(
                "operand name {:?} must be a single letter",
                op.name
            )));
        }
        // draw even when overridden so later operands keep their values
        let drawn = match (op.min, op.max, &op.formula) {
            (Some(lo), Some(hi), None) if lo <= hi => {
                Some(BigRational::from_integer(BigInt::from(rng.random_range(lo..=hi))))
            }
            (None, None, Some(f)) => {
                if overrides.contains_key(&op.name) {
                    None
                } else {
                    Some(evaluate(f, &env)?)
                }
            }
            _ => {
                return Err(GenError::Template(format!(
                    "operand {:?} needs either a valid min/max range or a formula",
                    op.name
                )))
            }
        };
        let value = match overrides.get(&op.name) {
            Some(v) => BigRational::from_integer(BigInt::from(*v)),
            None => drawn.expect("drawn when not overridden"),
        };
        env.insert(op.name.clone(), value);
    }

    let mut spec = spec.clone();
    spec.display_text = template.display.clone();
    for (name, value) in &env {
        spec.display_text = spec
            .display_text
            .replace(&format!("${{{name}}}"), &format_rational(value));
    }

    let mut plan = Plan::new(&spec.problem_id());
    plan.label("problem", &spec.display_text);
    let mut included = 0;
    for step in template.steps.iter().filter(|s| s.scaffold_level <= level) {
        let value = format_rational(&evaluate(&step.formula, &env)?);
        plan.stage(
            &step.field,
            vec![FieldStep::new(
                &step.field,
                value,
                &step.skill,
                format!("Next: {}.", step.label),
            )],
            false,
        );
        included += 1;
    }
    if included == 0 {
        return Err(GenError::Template(format!("no steps at scaffold level {level}")));
    }
    plan.finish(spec)
}

fn evaluate(formula: &str, env: &BTreeMap<String, BigRational>) -> Result<BigRational, GenError> {
    let expr = parse_expr(formula).map_err(|e| GenError::Template(format!("formula {formula:?}: {e}")))?;
    expr.eval(&|name| env.get(name).cloned())
        .map_err(|e| GenError::Template(format!("formula {formula:?}: {e}")))
}
