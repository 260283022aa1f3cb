use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{bad_param, FieldStep, GenError, Plan, ProblemSpec, MULTICOLUMN_DOMAIN};
use crate::graph::BehaviorGraph;

pub const MIN_DIGITS: u64 = 2;
pub const MAX_DIGITS: u64 = 6;

/// Generates an `n_digits` + `n_digits` addition problem.
pub fn gen_multicolumn_addition(n_digits: u32, seed: u64) -> Result<(ProblemSpec, BehaviorGraph), GenError> {
    let spec = ProblemSpec::new(MULTICOLUMN_DOMAIN, seed).with_param("digits", n_digits);
    let graph = generate(&spec)?;
    let spec = graph.generator().cloned().expect("generator metadata");
    Ok((spec, graph))
}

// Params:
//   digits: 2..=6
//   operands: [a, b] (optional; both must have exactly `digits` digits)
//
// Layout, for columns i = 0 (ones) .. n-1 and one extra leading column n:
//   ans_0, carry_1, ans_1, carry_2, ..., carry_n, ans_n, done
// carry_i is skippable exactly when the carry into column i is 0, and ans_n
// (which equals the final carry) is skippable when that carry is 0.
pub(super) fn generate(spec: &ProblemSpec) -> Result<BehaviorGraph, GenError> {
    let n = spec
        .param_u64("digits")?
        .ok_or_else(|| bad_param("digits", "required"))?;
    if !(MIN_DIGITS..=MAX_DIGITS).contains(&n) {
        return Err(bad_param("digits", "must lie in 2..=6"));
    }
    let lo = 10u64.pow(n as u32 - 1);
    let hi = 10u64.pow(n as u32) - 1;
    let (a, b) = match spec.param_u64_list("operands")? {
        Some(ops) => {
            let [a, b]: [u64; 2] = ops.try_into().map_err(|_| bad_param("operands", "expected [a, b]"))?;
            if !(lo..=hi).contains(&a) || !(lo..=hi).contains(&b) {
                return Err(bad_param("operands", format!("operands must have {n} digits")));
            }
            (a, b)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            (rng.random_range(lo..=hi), rng.random_range(lo..=hi))
        }
    };

    let mut spec = spec.clone();
    spec.display_text = format!("{a} + {b}");
    let mut plan = Plan::new(&spec.problem_id());
    let digit = |v: u64, i: u64| (v / 10u64.pow(i as u32)) % 10;
    for i in 0..n {
        plan.label(&format!("top_{i}"), digit(a, i));
        plan.label(&format!("bottom_{i}"), digit(b, i));
    }

    let mut carry = 0;
    for i in 0..n {
        if i > 0 {
            plan.stage(&format!("carry_{i}"), vec![carry_step(i, carry)], false);
        }
        let sum = digit(a, i) + digit(b, i) + carry;
        plan.stage(
            &format!("column_{i}"),
            vec![FieldStep::new(
                &format!("ans_{i}"),
                sum % 10,
                "add-column",
                format!("Add the digits in column {i} and any carry, then keep the ones digit."),
            )],
            false,
        );
        carry = sum / 10;
    }
    plan.stage(&format!("carry_{n}"), vec![carry_step(n, carry)], false);
    plan.stage(
        &format!("column_{n}"),
        vec![FieldStep::new(
            &format!("ans_{n}"),
            carry,
            "write-final-carry",
            "Bring the final carry down into the leading column.".into(),
        )
        .skippable(carry == 0)],
        false,
    );
    plan.finish(spec)
}

fn carry_step(column: u64, carry: u64) -> FieldStep {
    FieldStep::new(
        &format!("carry_{column}"),
        carry,
        "carry",
        format!("Did the previous column sum reach 10? Carry into column {column}."),
    )
    .skippable(carry == 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{enumerate_reachable, GraphCursor};
    use crate::model::Sai;
    use serde_json::json;
    use std::sync::Arc;

    fn with_ops(n: u64, a: u64, b: u64) -> Arc<BehaviorGraph> {
        let spec = ProblemSpec::new(MULTICOLUMN_DOMAIN, 0)
            .with_param("digits", n)
            .with_param("operands", json!([a, b]));
        Arc::new(generate(&spec).unwrap())
    }

    fn text(f: &str, v: &str) -> Sai {
        Sai::new(f, "UpdateTextField", v).unwrap()
    }

    #[test]
    fn carries_are_required() {
        let g = with_ops(2, 57, 86);
        assert_eq!(g.edges().len(), 6);
        let mut c = GraphCursor::new(g);
        assert!(!c.check(&text("ans_1", "4")).is_correct());
        c.apply(&text("ans_0", "3")).unwrap();
        assert!(!c.check(&text("ans_1", "4")).is_correct());
        c.apply(&text("carry_1", "1")).unwrap();
        c.apply(&text("ans_1", "4")).unwrap();
        c.apply(&text("carry_2", "1")).unwrap();
        c.apply(&text("ans_2", "1")).unwrap();
        c.apply(&Sai::new("done", "ButtonPressed", "-1").unwrap()).unwrap();
        assert!(c.is_done());
    }

    #[test]
    fn no_carry_skips() {
        let g = with_ops(2, 11, 22);
        let skippable: Vec<_> = g
            .edges()
            .iter()
            .filter(|e| e.skippable)
            .map(|e| e.selection.as_str())
            .collect();
        assert_eq!(skippable, ["carry_1", "carry_2", "ans_2"]);
        let c = GraphCursor::new(g)
            .applied(&text("ans_0", "3"))
            .unwrap()
            .applied(&text("ans_1", "3"))
            .unwrap()
            .applied(&Sai::new("done", "ButtonPressed", "-1").unwrap())
            .unwrap();
        assert!(c.is_done());
    }

    #[test]
    fn digit_bounds() {
        assert!(gen_multicolumn_addition(1, 0).is_err());
        assert!(gen_multicolumn_addition(7, 0).is_err());
        let (spec, g) = gen_multicolumn_addition(6, 3).unwrap();
        assert_eq!(g.edges().len(), 14);
        assert!(spec.display_text.contains('+'));
        assert!(!enumerate_reachable(&Arc::new(g), 10).is_empty());
    }
}
