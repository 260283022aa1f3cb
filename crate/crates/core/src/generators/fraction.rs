use num_integer::Integer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bad_param, FieldStep, GenError, Plan, ProblemSpec, FRACTION_DOMAIN};
use crate::graph::BehaviorGraph;

const OPERAND_MIN: u64 = 1;
const OPERAND_MAX: u64 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FractionKind {
    SameDenominator,
    DifferentDenominator,
    Multiply,
}

impl FractionKind {
    pub const ALL: [FractionKind; 3] = [
        FractionKind::SameDenominator,
        FractionKind::DifferentDenominator,
        FractionKind::Multiply,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FractionKind::SameDenominator => "same_denominator",
            FractionKind::DifferentDenominator => "different_denominator",
            FractionKind::Multiply => "multiply",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// Generates a fraction problem with default options.
pub fn gen_fraction(kind: FractionKind, seed: u64) -> (ProblemSpec, BehaviorGraph) {
    let spec = ProblemSpec::new(FRACTION_DOMAIN, seed).with_param("kind", kind.as_str());
    let graph = generate(&spec).expect("default fraction spec is valid");
    let spec = graph.generator().cloned().expect("generator metadata");
    (spec, graph)
}

// Params:
//   kind: same_denominator | different_denominator | multiply
//   operands: [n1, d1, n2, d2] (optional; drawn from the seed otherwise)
//   convert_stage: bool (default: true for different_denominator only)
//   simplify_stage: bool (default false)
pub(super) fn generate(spec: &ProblemSpec) -> Result<BehaviorGraph, GenError> {
    let kind_name = spec.param_str("kind")?.ok_or_else(|| bad_param("kind", "required"))?;
    let kind = FractionKind::parse(kind_name)
        .ok_or_else(|| bad_param("kind", format!("unknown fraction kind {kind_name:?}")))?;
    let [n1, d1, n2, d2] = match spec.param_u64_list("operands")? {
        Some(ops) => {
            let ops: [u64; 4] = ops
                .try_into()
                .map_err(|_| bad_param("operands", "expected [n1, d1, n2, d2]"))?;
            if ops.iter().any(|v| !(OPERAND_MIN..=OPERAND_MAX).contains(v)) {
                return Err(bad_param("operands", "values must lie in 1..=15"));
            }
            match kind {
                FractionKind::SameDenominator if ops[1] != ops[3] => {
                    return Err(bad_param("operands", "denominators must be equal"))
                }
                FractionKind::DifferentDenominator if ops[1] == ops[3] => {
                    return Err(bad_param("operands", "denominators must differ"))
                }
                _ => {}
            }
            ops
        }
        None => draw(kind, spec.seed),
    };
    let convert = match kind {
        FractionKind::Multiply => false,
        FractionKind::SameDenominator => spec.param_bool("convert_stage")?.unwrap_or(false),
        FractionKind::DifferentDenominator => spec.param_bool("convert_stage")?.unwrap_or(true),
    };
    if kind == FractionKind::Multiply && spec.param_bool("convert_stage")? == Some(true) {
        return Err(bad_param("convert_stage", "not available for multiply"));
    }
    let simplify = spec.param_bool("simplify_stage")?.unwrap_or(false);

    let op = if kind == FractionKind::Multiply { "*" } else { "+" };
    let mut spec = spec.clone();
    spec.display_text = format!("{n1}/{d1} {op} {n2}/{d2}");
    let mut plan = Plan::new(&spec.problem_id());
    plan.label("num_1", n1);
    plan.label("den_1", d1);
    plan.label("op", op);
    plan.label("num_2", n2);
    plan.label("den_2", d2);

    let (ans_num, ans_den) = match kind {
        FractionKind::Multiply => {
            plan.stage(
                "answer",
                vec![
                    FieldStep::new(
                        "answer_num",
                        n1 * n2,
                        "multiply-numerators",
                        "Multiply the two numerators.".into(),
                    ),
                    FieldStep::new(
                        "answer_den",
                        d1 * d2,
                        "multiply-denominators",
                        "Multiply the two denominators.".into(),
                    ),
                ],
                true,
            );
            (n1 * n2, d1 * d2)
        }
        _ => {
            let common = d1.lcm(&d2);
            let (c1, c2) = (n1 * (common / d1), n2 * (common / d2));
            if convert {
                plan.stage(
                    "convert",
                    vec![
                        FieldStep::new(
                            "conv_num_1",
                            c1,
                            "convert-numerator",
                            "Scale the first numerator by the same factor as its denominator.".into(),
                        ),
                        FieldStep::new(
                            "conv_den_1",
                            common,
                            "common-denominator",
                            "Find a common denominator of both fractions.".into(),
                        ),
                        FieldStep::new(
                            "conv_num_2",
                            c2,
                            "convert-numerator",
                            "Scale the second numerator by the same factor as its denominator.".into(),
                        ),
                        FieldStep::new(
                            "conv_den_2",
                            common,
                            "common-denominator",
                            "Find a common denominator of both fractions.".into(),
                        ),
                    ],
                    true,
                );
            }
            plan.stage(
                "answer",
                vec![
                    FieldStep::new(
                        "answer_num",
                        c1 + c2,
                        "add-numerators",
                        "Add the numerators over the common denominator.".into(),
                    ),
                    FieldStep::new(
                        "answer_den",
                        common,
                        "copy-denominator",
                        "The denominator stays the common denominator.".into(),
                    ),
                ],
                true,
            );
            (c1 + c2, common)
        }
    };

    if simplify {
        let g = ans_num.gcd(&ans_den);
        plan.stage(
            "simplify",
            vec![
                FieldStep::new(
                    "simp_num",
                    ans_num / g,
                    "simplify",
                    "Divide the numerator by the greatest common factor.".into(),
                ),
                FieldStep::new(
                    "simp_den",
                    ans_den / g,
                    "simplify",
                    "Divide the denominator by the greatest common factor.".into(),
                ),
            ],
            true,
        );
    }
    plan.finish(spec)
}

fn draw(kind: FractionKind, seed: u64) -> [u64; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = || rng.random_range(OPERAND_MIN..=OPERAND_MAX);
    let (n1, d1, n2) = (pick(), pick(), pick());
    let d2 = match kind {
        FractionKind::SameDenominator => d1,
        FractionKind::DifferentDenominator => loop {
            let d = pick();
            if d != d1 {
                break d;
            }
        },
        FractionKind::Multiply => pick(),
    };
    [n1, d1, n2, d2]
}
