mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use tutorsim::datashop::{parse_jsonl, parse_log, transaction_to_json, write_log, TransactionLog};
use tutorsim::generators::{
    gen_fraction, gen_multicolumn_addition, gen_sequential_scaffold, linear_equation_template, FractionKind,
};
use tutorsim::graph::{enumerate_reachable, BehaviorGraph, GraphCursor};
use tutorsim::model::{Outcome, Sai, Transaction};
use tutorsim::profile::{build_profile, parse_profile, write_profile, IncorrectAction, IncorrectSource, ProfileEntry};
use tutorsim::rl::build_encoding;

fn field() -> impl Strategy<Value = String> {
    prop_oneof!["[a-z0-9_-]{0,10}", ".{0,12}", "[\t\n\r\\\\ab\"]{0,8}",]
}

fn sai() -> impl Strategy<Value = Sai> {
    ("[a-z_][a-z0-9_]{0,8}", "[A-Za-z]{1,14}", field()).prop_map(|(s, a, i)| Sai::new(s, a, i).unwrap())
}

fn transaction() -> impl Strategy<Value = Transaction> {
    (
        (field(), field(), 0i64..4_000_000_000_000, field(), field()),
        (
            1u32..50,
            field(),
            1u32..10,
            prop_oneof![Just(Outcome::Correct), Just(Outcome::Incorrect), Just(Outcome::Hint)],
        ),
        (sai(), field(), 1u32..500),
    )
        .prop_map(
            |((student, session, ts, level, problem), (view, step, attempt, outcome), (sai, skill, opp))| Transaction {
                student_id: student,
                session_id: session,
                timestamp: ts,
                level,
                problem_name: problem,
                problem_view: view,
                step_name: step,
                attempt_at_step: attempt,
                outcome,
                sai,
                skill,
                opportunity: opp,
            },
        )
}

#[test]
fn datashop_tsv_and_jsonl_round_trip_1000_transactions() {
    let mut runner = TestRunner::new(Config::with_cases(1));
    let strategy = prop::collection::vec(transaction(), 1000);
    runner
        .run(&strategy, |ts| {
            let log = TransactionLog::from_transactions(ts.clone());
            let text = write_log(&log);
            let back = parse_log(&text).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(&back.transactions, &ts);
            prop_assert_eq!(write_log(&back), text);

            let jsonl: String = ts.iter().map(|t| format!("{}\n", transaction_to_json(t))).collect();
            let back = parse_jsonl(&jsonl).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(&back, &ts);
            Ok(())
        })
        .unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn datashop_small_logs_round_trip(ts in prop::collection::vec(transaction(), 0..20)) {
        let log = TransactionLog::from_transactions(ts.clone());
        let back = parse_log(&write_log(&log)).unwrap();
        prop_assert_eq!(back.transactions, ts);
    }
}

#[test]
fn profile_round_trips_1000_entries() {
    let graphs: Vec<Arc<BehaviorGraph>> = (0..60)
        .flat_map(|seed| {
            FractionKind::ALL
                .into_iter()
                .map(move |k| Arc::new(gen_fraction(k, seed).1))
        })
        .collect();
    let mut profile = build_profile(&graphs, 3, 7);
    assert!(profile.len() >= 1000, "only {} entries", profile.len());
    profile.truncate(1000);
    for (i, e) in profile.iter_mut().enumerate().filter(|(i, _)| i % 3 == 0) {
        e.incorrect_actions.push(IncorrectAction {
            sai: Sai::new("answer_num", "UpdateTextField", format!("weird\t{i}\n\"x\"")).unwrap(),
            source: IncorrectSource::Perturbation,
        });
    }
    let text = write_profile(&profile);
    assert_eq!(text.lines().count(), 1000);
    let back: Vec<ProfileEntry> = parse_profile(&text).unwrap();
    assert_eq!(back, profile);
    assert_eq!(write_profile(&back), text);
}

fn encoding_graphs() -> Vec<Arc<BehaviorGraph>> {
    let mut out = Vec::new();
    for seed in 0..6 {
        for kind in FractionKind::ALL {
            out.push(Arc::new(gen_fraction(kind, seed).1));
        }
        out.push(Arc::new(gen_multicolumn_addition(3, seed).unwrap().1));
        out.push(Arc::new(
            gen_sequential_scaffold(&linear_equation_template(), seed).unwrap().1,
        ));
    }
    out
}

#[test]
fn encoding_is_a_bijection_over_all_actions() {
    let graphs = encoding_graphs();
    let table = build_encoding(&graphs).unwrap();
    assert!(table.is_frozen());
    assert!(table.n_actions() > 0);
    for i in 0..table.n_actions() {
        let a = table.decode_action(i).unwrap();
        assert_eq!(table.encode_action(a), Some(i));
    }
    let distinct: BTreeSet<&Sai> = table.actions().iter().collect();
    assert_eq!(distinct.len(), table.n_actions());
    assert!(table.decode_action(table.n_actions()).is_err());

    // every demonstrable action in every reachable state is encodable
    for g in &graphs {
        for c in enumerate_reachable(g, 10_000) {
            for d in c.get_all_demos().unwrap_or_default() {
                let i = table.encode_action(&d).expect("demo action in table");
                assert_eq!(table.decode_action(i).unwrap(), &d);
            }
        }
    }
}

#[test]
fn observation_dimension_is_constant() {
    let graphs = encoding_graphs();
    let table = build_encoding(&graphs).unwrap();
    let dim = table.obs_dim();
    assert_eq!(dim, table.widgets().len() * table.n_values());
    let mut states = 0;
    for g in &graphs {
        for c in enumerate_reachable(g, 10_000) {
            let v = table.encode_state(c.state());
            assert_eq!(v.len(), dim);
            let visible = c.state().widgets.values().filter(|w| w.visible).count();
            assert_eq!(v.iter().filter(|x| **x == 1.0).count(), visible);
            states += 1;
        }
    }
    assert!(states > 100);
}

#[test]
fn encoding_does_not_depend_on_graph_order() {
    let graphs = encoding_graphs();
    let mut rev = graphs.clone();
    rev.reverse();
    let a = build_encoding(&graphs).unwrap();
    let b = build_encoding(&rev).unwrap();
    assert_eq!(a.actions(), b.actions());
    assert_eq!(a.widgets(), b.widgets());
    let c = GraphCursor::new(graphs[0].clone());
    assert_eq!(a.encode_state(c.state()), b.encode_state(c.state()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_graph_encoding_round_trips(seed in 0u64..5_000) {
        let g = common::random_graph(seed, 8);
        if let Ok(table) = build_encoding(&[g]) {
            for i in 0..table.n_actions() {
                prop_assert_eq!(table.encode_action(table.decode_action(i).unwrap()), Some(i));
            }
        }
    }
}
