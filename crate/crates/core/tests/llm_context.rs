use std::sync::Arc;

use proptest::prelude::*;
use tutorsim::generators::gen_multicolumn_addition;
use tutorsim::graph::{BehaviorGraph, TutorRegistry};
use tutorsim::llm::{
    build_prompt, examples_section_of, ContextBuffer, LlmAgent, LlmClient, LlmError, MockEndpoint, OracleEndpoint,
    PromptMode, PromptTemplate, RecordingEndpoint, DEFAULT_CHAR_BUDGET, EXAMPLE_HEADER,
};
use tutorsim::model::{canonical_json, Outcome, ProblemState, Reward, Sai, WidgetKind, WidgetView};
use tutorsim::trainer::{run_curriculum, Agent, TrainerConfig};

/// Rendered form of one example, restated independently of the buffer.
fn render(state: &ProblemState, sai: &Sai, correct: bool) -> String {
    format!(
        "--- example ---\nstate: {}\naction: {}\ncorrect: {}\n",
        state.to_canonical_json(),
        canonical_json(sai),
        if correct { "yes" } else { "no" }
    )
}

/// The longest suffix of `pushed` whose rendered size fits in `budget`.
fn expected_window(pushed: &[String], budget: usize) -> Vec<String> {
    let mut used = 0;
    let mut start = pushed.len();
    while start > 0 {
        let len = pushed[start - 1].chars().count();
        if used + len > budget {
            break;
        }
        used += len;
        start -= 1;
    }
    pushed[start..].to_vec()
}

fn blocks(section: &str) -> Vec<String> {
    section
        .split(EXAMPLE_HEADER)
        .filter(|b| !b.is_empty())
        .map(|b| format!("{EXAMPLE_HEADER}{b}"))
        .collect()
}

struct Tap {
    inner: LlmAgent,
    pushed: Vec<String>,
    pushed_before_act: Vec<usize>,
}

impl Agent for Tap {
    fn act(&mut self, state: &ProblemState) -> Option<Sai> {
        self.pushed_before_act.push(self.pushed.len());
        self.inner.act(state)
    }

    fn train(&mut self, state: &ProblemState, action: &Sai, reward: Reward) {
        self.pushed.push(render(state, action, reward.is_correct()));
        self.inner.train(state, action, reward);
    }
}

fn six_digit_problems() -> Vec<Arc<BehaviorGraph>> {
    (0..10)
        .map(|s| Arc::new(gen_multicolumn_addition(6, s).unwrap().1))
        .collect()
}

#[test]
fn ten_problem_session_keeps_oldest_first_window() {
    let pool = six_digit_problems();
    let tutors = Arc::new(TutorRegistry::from_graphs(pool.iter().cloned()));
    let rec = Arc::new(RecordingEndpoint::new(OracleEndpoint::new(tutors)));
    let client = Arc::new(LlmClient::new(Arc::new(rec.clone())));
    let mut agent = Tap {
        inner: LlmAgent::new(client, ContextBuffer::new(DEFAULT_CHAR_BUDGET)),
        pushed: Vec::new(),
        pushed_before_act: Vec::new(),
    };
    let log = run_curriculum(&mut agent, &pool, &TrainerConfig::default()).unwrap();
    assert!(log.iter().all(|t| t.outcome == Outcome::Correct));

    let transcript = rec.entries();
    assert_eq!(transcript.len(), agent.pushed_before_act.len());
    let total: usize = agent.pushed.iter().map(|e| e.chars().count()).sum();
    assert!(total > 2 * DEFAULT_CHAR_BUDGET, "session too small to force evictions");

    let mut evicted_any = false;
    let mut prev: Option<Vec<String>> = None;
    for (entry, &n) in transcript.iter().zip(&agent.pushed_before_act) {
        let section = examples_section_of(&entry.prompt).expect("prompt has an examples section");
        assert!(section.chars().count() <= DEFAULT_CHAR_BUDGET);
        let got = blocks(section);
        assert_eq!(got, expected_window(&agent.pushed[..n], DEFAULT_CHAR_BUDGET));
        if let Some(p) = prev {
            // the new window drops a prefix of the old one and appends at the end
            let dropped = p.len() + 1 - got.len();
            evicted_any |= dropped > 0;
            assert_eq!(&p[dropped..], &got[..got.len() - 1]);
        }
        prev = Some(got);
    }
    assert!(evicted_any);
}

fn state_with(n: usize, width: usize) -> ProblemState {
    ProblemState::new(format!("p{n}"))
        .with_widget(WidgetView::new("w", WidgetKind::TextField).with_value("x".repeat(width)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn buffer_matches_suffix_oracle(budget in 200usize..3000, widths in prop::collection::vec((0usize..400, any::<bool>()), 1..60)) {
        let mut buf = ContextBuffer::new(budget);
        let mut pushed = Vec::new();
        let mut evicted_seqs = Vec::new();
        for (i, (w, ok)) in widths.into_iter().enumerate() {
            let s = state_with(i, w);
            let a = Sai::new("w", "UpdateTextField", i.to_string()).unwrap();
            pushed.push(render(&s, &a, ok));
            let ev = buf.push_example(&s, &a, ok);
            evicted_seqs.extend(ev.iter().map(|e| e.seq));
            prop_assert!(buf.used_chars() <= budget);
            prop_assert_eq!(blocks(&buf.examples_section()), expected_window(&pushed, budget));
        }
        // evictions happen strictly in insertion order
        prop_assert!(evicted_seqs.windows(2).all(|w| w[0] + 1 == w[1]));
        prop_assert!(evicted_seqs.first().is_none_or(|s| *s == 0));
        prop_assert_eq!(evicted_seqs.len() + buf.len(), pushed.len());
    }
}

#[test]
fn oversized_state_is_rejected() {
    let buf = ContextBuffer::new(100);
    let template = PromptTemplate::new(PromptMode::Demo);
    match build_prompt(&template, &state_with(0, 500), &buf) {
        Err(LlmError::StateTooLarge { budget, .. }) => assert_eq!(budget, 100),
        other => panic!("expected StateTooLarge, got {other:?}"),
    }
}

#[test]
fn canned_demo_endpoint_behaves_like_the_oracle_on_a_scripted_session() {
    let g = Arc::new(gen_multicolumn_addition(2, 3).unwrap().1);
    let tutors = Arc::new(TutorRegistry::from_graphs([g.clone()]));
    let scripted = tutors.clone();
    let mock = MockEndpoint::new(move |prompt| {
        let (state, _) = tutorsim::llm::prompt_query(prompt).expect("parsable prompt");
        let demo = scripted.demo(&state).expect("demo");
        Ok(format!("Sure. {}", serde_json::to_string(&demo).unwrap()))
    });
    let mut agent = LlmAgent::new(Arc::new(LlmClient::new(Arc::new(mock))), ContextBuffer::default());
    let log = run_curriculum(&mut agent, &[g], &TrainerConfig::default()).unwrap();
    assert!(!log.is_empty());
    assert!(log.iter().all(|t| t.outcome == Outcome::Correct));
}

#[test]
fn request_cap_stops_the_session_with_demos() {
    let g = Arc::new(gen_multicolumn_addition(2, 4).unwrap().1);
    let tutors = Arc::new(TutorRegistry::from_graphs([g.clone()]));
    let client = Arc::new(LlmClient::new(Arc::new(OracleEndpoint::new(tutors))).with_cap(Some(2)));
    let mut agent = LlmAgent::new(client.clone(), ContextBuffer::default());
    let log = run_curriculum(&mut agent, &[g], &TrainerConfig::default()).unwrap();
    assert_eq!(client.attempts(), 2);
    assert!(log[..2].iter().all(|t| t.outcome == Outcome::Correct));
    assert!(log[2..].iter().all(|t| t.outcome == Outcome::Hint));
    let expected = LlmError::BudgetExceeded { cap: 2 }.to_string();
    assert_eq!(agent.last_error(), Some(expected.as_str()));
}
