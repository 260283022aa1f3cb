mod common;

use std::collections::HashMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use proptest::prelude::*;
use tutorsim::agents::{MemorizingAgent, OracleAgent, PassiveAgent};
use tutorsim::analytics::{
    curve_distance, export_curves, first_attempt_curve, first_attempt_curves, parse_curves, weighted_aggregate,
    HintPolicy, LearningCurve,
};
use tutorsim::generators::{gen_fraction, FractionKind, ProblemSpec};
use tutorsim::graph::TutorRegistry;
use tutorsim::model::{Outcome, Sai, Transaction};
use tutorsim::student::{bkt_update, select_next, BktConfig, KcParams, MasteryState, SelectionPolicy, StudentError};
use tutorsim::trainer::{run_curriculum, TrainerConfig};

fn tx(student: &str, problem: &str, skill: &str, outcome: Outcome) -> Transaction {
    Transaction {
        student_id: student.into(),
        session_id: "s".into(),
        timestamp: 0,
        level: "unit".into(),
        problem_name: problem.into(),
        problem_view: 1,
        step_name: skill.into(),
        attempt_at_step: 1,
        outcome,
        sai: Sai::new(format!("{skill}_field"), "UpdateTextField", "1").unwrap(),
        skill: skill.into(),
        opportunity: 0,
    }
}

fn fixture() -> Vec<Transaction> {
    use Outcome::*;
    vec![
        tx("s1", "p1", "a", Incorrect),
        tx("s1", "p1", "a", Correct),
        tx("s1", "p2", "a", Correct),
        tx("s1", "p1", "b", Hint),
        tx("s1", "p2", "b", Correct),
        tx("s2", "p1", "a", Correct),
    ]
}

fn rates(c: &LearningCurve) -> Vec<(u32, f64, usize)> {
    c.points.iter().map(|p| (p.opportunity, p.error_rate, p.n)).collect()
}

#[test]
fn fixture_curve_policy_a() {
    let set = first_attempt_curves(&fixture(), None, HintPolicy::A);
    assert_eq!(rates(&set.per_skill["a"]), vec![(1, 0.5, 2), (2, 0.0, 1)]);
    assert_eq!(rates(&set.per_skill["b"]), vec![(1, 1.0, 1), (2, 0.0, 1)]);
    assert_eq!(rates(&set.aggregate), vec![(1, 0.75, 3), (2, 0.0, 2)]);
    let w = weighted_aggregate(&set);
    assert!((w.points[0].error_rate - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(w.points[1].error_rate, 0.0);
}

#[test]
fn fixture_curve_policy_b() {
    let set = first_attempt_curves(&fixture(), None, HintPolicy::B);
    assert_eq!(rates(&set.per_skill["a"]), vec![(1, 0.5, 2), (2, 0.0, 1)]);
    assert_eq!(rates(&set.per_skill["b"]), vec![(1, 0.0, 1)]);
    assert_eq!(rates(&set.aggregate), vec![(1, 0.25, 3), (2, 0.0, 1)]);
}

#[test]
fn skill_map_regroups_by_selection() {
    let map: HashMap<String, String> = [("a_field", "x"), ("b_field", "x")]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let set = first_attempt_curves(&fixture(), Some(&map), HintPolicy::A);
    assert_eq!(set.per_skill.keys().collect::<Vec<_>>(), vec!["x"]);
    // s1 meets x on p1 (incorrect first) and p2; s2 on p1
    assert_eq!(rates(&set.per_skill["x"]), vec![(1, 0.5, 2), (2, 0.0, 1)]);
}

#[test]
fn csv_round_trip_and_distance() {
    let set = first_attempt_curves(&fixture(), None, HintPolicy::A);
    let curves = set.all();
    let text = export_curves(&curves).unwrap();
    assert!(text.starts_with("grouping,opportunity,error_rate,n"));
    let back = parse_curves(&text).unwrap();
    assert_eq!(back.len(), curves.len());
    for (a, b) in back.iter().zip(curves) {
        assert_eq!(a, b);
    }
    let d = curve_distance(&set.per_skill["a"], &set.per_skill["b"]).unwrap();
    assert!((d - (0.125f64).sqrt()).abs() < 1e-12);
    let lone = LearningCurve {
        grouping: "z".into(),
        points: vec![],
    };
    assert!(curve_distance(&lone, &set.aggregate).is_err());
}

fn fraction_pool(n: u64) -> Vec<Arc<tutorsim::graph::BehaviorGraph>> {
    (0..n)
        .map(|s| Arc::new(gen_fraction(FractionKind::ALL[(s % 3) as usize], s).1))
        .collect()
}

#[test]
fn oracle_curve_is_zero_and_passive_curve_is_one() {
    let pool = fraction_pool(12);
    let tutors = Arc::new(TutorRegistry::from_graphs(pool.iter().cloned()));
    let cfg = TrainerConfig::default();
    let oracle = run_curriculum(&mut OracleAgent::new(tutors), &pool, &cfg).unwrap();
    let c = first_attempt_curve(&oracle, None, HintPolicy::A);
    assert!(!c.points.is_empty());
    assert!(c.error_rates().iter().all(|r| *r == 0.0));

    let passive = run_curriculum(&mut PassiveAgent, &pool, &cfg).unwrap();
    let c = first_attempt_curve(&passive, None, HintPolicy::A);
    assert!(c.error_rates().iter().all(|r| *r == 1.0));
    assert!(first_attempt_curve(&passive, None, HintPolicy::B).points.is_empty());
}

#[test]
fn memorizing_agent_curve_drops_to_zero() {
    let g = Arc::new(gen_fraction(FractionKind::SameDenominator, 4).1);
    let pool = vec![g; 5];
    let log = run_curriculum(&mut MemorizingAgent::new(), &pool, &TrainerConfig::default()).unwrap();
    let c = first_attempt_curve(&log, None, HintPolicy::A);
    assert_eq!(c.error_rates(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
}

/// Direct restatement of first-attempt error rates: list first attempts,
/// number them per (student, skill), then average.
fn naive_curve(log: &[Transaction]) -> Vec<(String, u32, f64)> {
    let mut firsts: Vec<&Transaction> = Vec::new();
    for t in log {
        if t.skill.is_empty() {
            continue;
        }
        let dup = firsts.iter().any(|f| {
            f.student_id == t.student_id
                && f.problem_name == t.problem_name
                && f.problem_view == t.problem_view
                && f.skill == t.skill
        });
        if !dup {
            firsts.push(t);
        }
    }
    let mut numbered: Vec<(String, u32, bool)> = Vec::new();
    for (i, t) in firsts.iter().enumerate() {
        let k = firsts[..=i]
            .iter()
            .filter(|f| f.student_id == t.student_id && f.skill == t.skill)
            .count() as u32;
        numbered.push((t.skill.clone(), k, t.outcome != Outcome::Correct));
    }
    let mut keys: Vec<(String, u32)> = numbered.iter().map(|(s, k, _)| (s.clone(), *k)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(s, k)| {
            let cell: Vec<bool> = numbered
                .iter()
                .filter(|(s2, k2, _)| *s2 == s && *k2 == k)
                .map(|x| x.2)
                .collect();
            let errors = cell.iter().filter(|e| **e).count();
            (s, k, errors as f64 / cell.len() as f64)
        })
        .collect()
}

fn random_log() -> impl Strategy<Value = Vec<Transaction>> {
    prop::collection::vec(
        (
            prop::sample::select(vec!["s1", "s2", "s3"]),
            prop::sample::select(vec!["p1", "p2", "p3", "p4"]),
            1u32..3,
            prop::sample::select(vec!["a", "b", "c", ""]),
            prop::sample::select(vec![Outcome::Correct, Outcome::Incorrect, Outcome::Hint]),
        )
            .prop_map(|(s, p, v, k, o)| {
                let mut t = tx(s, p, k, o);
                t.problem_view = v;
                t
            }),
        0..60,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn curves_match_naive_oracle(log in random_log()) {
        let set = first_attempt_curves(&log, None, HintPolicy::A);
        let got: Vec<(String, u32, f64)> = set
            .per_skill
            .iter()
            .flat_map(|(s, c)| c.points.iter().map(move |p| (s.clone(), p.opportunity, p.error_rate)))
            .collect();
        prop_assert_eq!(got, naive_curve(&log));
    }

    #[test]
    fn distance_is_symmetric_and_zero_on_self(a in random_log(), b in random_log()) {
        let ca = first_attempt_curve(&a, None, HintPolicy::A);
        let cb = first_attempt_curve(&b, None, HintPolicy::A);
        match (curve_distance(&ca, &cb), curve_distance(&cb, &ca)) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12 && x >= 0.0),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "asymmetric overlap"),
        }
        if !ca.points.is_empty() {
            prop_assert_eq!(curve_distance(&ca, &ca).unwrap(), 0.0);
        }
    }

    #[test]
    fn rates_lie_in_unit_interval(log in random_log(), b in any::<bool>()) {
        let policy = if b { HintPolicy::A } else { HintPolicy::B };
        let set = first_attempt_curves(&log, None, policy);
        for c in set.all() {
            for p in &c.points {
                prop_assert!((0.0..=1.0).contains(&p.error_rate) && p.n > 0);
            }
        }
    }
}

// BKT against exact rational arithmetic.

fn q(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn exact_bkt(
    p: &BigRational,
    t: &BigRational,
    g: &BigRational,
    s: &BigRational,
    correct: bool,
) -> (BigRational, BigRational) {
    let one = q(1, 1);
    let post = if correct {
        p * (&one - s) / (p * (&one - s) + (&one - p) * g)
    } else {
        p * s / (p * s + (&one - p) * (&one - g))
    };
    let next = &post + (&one - &post) * t;
    (post, next)
}

fn params(p: f64, t: f64, g: f64, s: f64) -> KcParams {
    KcParams {
        p_init: p,
        p_transit: t,
        p_guess: g,
        p_slip: s,
    }
}

#[test]
fn bkt_matches_exact_rational_update() {
    let (post, next) = exact_bkt(&q(1, 2), &q(3, 10), &q(1, 5), &q(1, 10), true);
    assert_eq!(post, q(9, 11));
    assert!((post.to_f64().unwrap() - 0.8182).abs() < 1e-4);
    let got = bkt_update(0.5, &params(0.5, 0.3, 0.2, 0.1), true).unwrap();
    assert!((got - 0.8727).abs() < 1e-4);
    assert!((got - next.to_f64().unwrap()).abs() < 1e-12);

    let (_, next) = exact_bkt(&q(1, 2), &q(3, 10), &q(1, 5), &q(1, 10), false);
    let got = bkt_update(0.5, &params(0.5, 0.3, 0.2, 0.1), false).unwrap();
    assert!((got - next.to_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn bkt_rejects_bad_params() {
    assert!(matches!(
        bkt_update(0.5, &params(0.5, 0.3, 0.6, 0.5), true),
        Err(StudentError::InvalidParams(_))
    ));
    assert!(bkt_update(1.5, &params(0.5, 0.3, 0.2, 0.1), true).is_err());
    assert_eq!(
        bkt_update(0.0, &params(0.0, 0.0, 0.0, 0.1), true),
        Err(StudentError::DegenerateParams)
    );
}

fn kc() -> impl Strategy<Value = KcParams> {
    (0.0f64..=1.0, 0.0f64..=1.0, 0.01f64..0.49, 0.01f64..0.49).prop_map(|(p, t, g, s)| params(p, t, g, s))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn bkt_agrees_with_rational_oracle(pk in 0u32..=1000, tk in 0u32..=1000, gk in 1u32..499, sk in 1u32..499, correct in any::<bool>()) {
        let f = |k: u32| k as f64 / 1000.0;
        let (_, next) = exact_bkt(&q(pk as i64, 1000), &q(tk as i64, 1000), &q(gk as i64, 1000), &q(sk as i64, 1000), correct);
        let got = bkt_update(f(pk), &params(f(pk), f(tk), f(gk), f(sk)), correct).unwrap();
        prop_assert!((got - next.to_f64().unwrap()).abs() < 1e-9);
    }

    #[test]
    fn bkt_stays_in_unit_interval(p in 0.0f64..=1.0, k in kc(), correct in any::<bool>()) {
        let v = bkt_update(p, &k, correct).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn bkt_is_monotone_in_prior(a in 0.0f64..=1.0, b in 0.0f64..=1.0, k in kc(), correct in any::<bool>()) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(bkt_update(lo, &k, correct).unwrap() <= bkt_update(hi, &k, correct).unwrap() + 1e-12);
    }

    #[test]
    fn correct_streak_never_lowers_mastery(k in kc(), n in 1usize..30) {
        let mut p = k.p_init;
        for _ in 0..n {
            let next = bkt_update(p, &k, true).unwrap();
            prop_assert!(next >= p - 1e-12);
            p = next;
        }
    }
}

#[test]
fn selection_targets_weakest_skill() {
    let cfg = BktConfig::from_toml("[default]\np_init = 0.5\n").unwrap();
    let mut m = MasteryState::new(cfg);
    for _ in 0..5 {
        m.observe("add-numerators", true).unwrap();
        m.observe("copy-denominator", true).unwrap();
    }
    let same = ProblemSpec::new("fraction_arithmetic", 1).with_param("kind", "same_denominator");
    let mult = ProblemSpec::new("fraction_arithmetic", 2).with_param("kind", "multiply");
    let pick = select_next(&m, &[same.clone(), mult.clone()], SelectionPolicy::LowestMasteryFirst).unwrap();
    assert_eq!(pick, mult);
    assert_eq!(
        select_next(&m, &[], SelectionPolicy::LowestMasteryFirst),
        Err(StudentError::NoCandidates)
    );
}
