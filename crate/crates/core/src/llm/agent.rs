use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::{
    build_grade_prompt, build_prompt, parse_response, ContextBuffer, LlmClient, LlmError, PromptMode, PromptTemplate,
    Response,
};
use crate::model::{ProblemState, Reward, Sai};
use crate::profile::{Demoer, Grader, Verdict};
use crate::trainer::Agent;

#[derive(Debug, Default)]
pub struct FailureCounts {
    pub unparseable: AtomicU64,
    pub transport: AtomicU64,
}

impl FailureCounts {
    fn note(&self, e: &LlmError) {
        let c = match e {
            LlmError::UnparseableResponse { .. } => &self.unparseable,
            _ => &self.transport,
        };
        c.fetch_add(1, Ordering::Relaxed);
    }

    pub fn unparseable(&self) -> u64 {
        self.unparseable.load(Ordering::Relaxed)
    }

    pub fn transport(&self) -> u64 {
        self.transport.load(Ordering::Relaxed)
    }
}

/// Learner backed by a language model. Acting prompts with the buffered
/// examples; training only appends to the buffer.
pub struct LlmAgent {
    client: Arc<LlmClient>,
    template: PromptTemplate,
    buffer: ContextBuffer,
    failures: FailureCounts,
    last_error: Option<String>,
}

impl LlmAgent {
    pub fn new(client: Arc<LlmClient>, buffer: ContextBuffer) -> Self {
        LlmAgent {
            client,
            template: PromptTemplate::new(PromptMode::Demo),
            buffer,
            failures: FailureCounts::default(),
            last_error: None,
        }
    }

    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.template = template;
        self
    }

    pub fn buffer(&self) -> &ContextBuffer {
        &self.buffer
    }

    pub fn failures(&self) -> &FailureCounts {
        &self.failures
    }

    pub fn last_error(&self) -> Option<&str> {
        self.last_error.as_deref()
    }

    fn ask(&self, state: &ProblemState) -> Result<Sai, LlmError> {
        let prompt = build_prompt(&self.template, state, &self.buffer)?;
        let text = self.client.complete(&prompt)?;
        match parse_response(PromptMode::Demo, &text)? {
            Response::Action(sai) => Ok(sai),
            Response::Verdict(_) => unreachable!("demo mode parses actions"),
        }
    }
}

impl Agent for LlmAgent {
    /// Failures of any kind yield `None`, which the trainer answers with a
    /// demonstration.
    fn act(&mut self, state: &ProblemState) -> Option<Sai> {
        match self.ask(state) {
            Ok(sai) => Some(sai),
            Err(e) => {
                self.failures.note(&e);
                self.last_error = Some(e.to_string());
                None
            }
        }
    }

    fn train(&mut self, state: &ProblemState, action: &Sai, reward: Reward) {
        self.buffer.push_example(state, action, reward.is_correct());
    }

    fn name(&self) -> &str {
        "llm"
    }
}

/// Model-as-grader for completeness profiles. Any failure is a miss.
pub struct LlmGrader {
    client: Arc<LlmClient>,
    template: PromptTemplate,
    buffer: ContextBuffer,
    failures: FailureCounts,
}

impl LlmGrader {
    pub fn new(client: Arc<LlmClient>) -> Self {
        LlmGrader {
            client,
            template: PromptTemplate::new(PromptMode::Grade),
            buffer: ContextBuffer::default(),
            failures: FailureCounts::default(),
        }
    }

    /// Fixed examples included in every prompt.
    pub fn with_examples(mut self, buffer: ContextBuffer) -> Self {
        self.buffer = buffer;
        self
    }

    pub fn failures(&self) -> &FailureCounts {
        &self.failures
    }
}

impl Grader for LlmGrader {
    fn grade(&self, state: &ProblemState, action: &Sai) -> Option<Verdict> {
        let r = build_grade_prompt(&self.template, state, action, &self.buffer)
            .and_then(|p| self.client.complete(&p))
            .and_then(|t| parse_response(PromptMode::Grade, &t));
        match r {
            Ok(Response::Verdict(v)) => Some(v),
            Ok(Response::Action(_)) => None,
            Err(e) => {
                self.failures.note(&e);
                None
            }
        }
    }
}

/// Model-as-demonstrator for completeness profiles.
pub struct LlmDemoer {
    client: Arc<LlmClient>,
    template: PromptTemplate,
    buffer: ContextBuffer,
    failures: FailureCounts,
}

impl LlmDemoer {
    pub fn new(client: Arc<LlmClient>) -> Self {
        LlmDemoer {
            client,
            template: PromptTemplate::new(PromptMode::Demo),
            buffer: ContextBuffer::default(),
            failures: FailureCounts::default(),
        }
    }

    pub fn with_examples(mut self, buffer: ContextBuffer) -> Self {
        self.buffer = buffer;
        self
    }

    pub fn failures(&self) -> &FailureCounts {
        &self.failures
    }
}

impl Demoer for LlmDemoer {
    fn demo(&self, state: &ProblemState) -> Option<Sai> {
        let r = build_prompt(&self.template, state, &self.buffer)
            .and_then(|p| self.client.complete(&p))
            .and_then(|t| parse_response(PromptMode::Demo, &t));
        match r {
            Ok(Response::Action(sai)) => Some(sai),
            Ok(Response::Verdict(_)) => None,
            Err(e) => {
                self.failures.note(&e);
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_fraction, FractionKind};
    use crate::graph::{GraphCursor, TutorRegistry};
    use crate::llm::{MockEndpoint, OracleEndpoint};
    use crate::profile::{build_profile, demo_eval, grade_profile, inject_incorrect, Perturbation};
    use crate::trainer::{run_problem, TrainerConfig};

    fn setup() -> (Arc<crate::graph::BehaviorGraph>, Arc<TutorRegistry>) {
        let g = Arc::new(gen_fraction(FractionKind::DifferentDenominator, 4).1);
        (g.clone(), Arc::new(TutorRegistry::from_graphs([g])))
    }

    #[test]
    fn oracle_backed_agent_never_needs_demos() {
        let (g, tutors) = setup();
        let client = Arc::new(LlmClient::new(Arc::new(OracleEndpoint::new(tutors))));
        let mut agent = LlmAgent::new(client, ContextBuffer::default());
        let log = run_problem(&mut agent, GraphCursor::new(g), &TrainerConfig::default()).unwrap();
        assert!(log.iter().all(|t| t.outcome == crate::model::Outcome::Correct));
        assert_eq!(agent.buffer().len(), log.len());
    }

    #[test]
    fn gibberish_is_counted_not_fatal() {
        let (g, tutors) = setup();
        let client = Arc::new(LlmClient::new(Arc::new(MockEndpoint::canned("hmm"))));
        let mut agent = LlmAgent::new(client.clone(), ContextBuffer::default());
        let log = run_problem(&mut agent, GraphCursor::new(g.clone()), &TrainerConfig::default()).unwrap();
        assert!(log.iter().all(|t| t.outcome == crate::model::Outcome::Hint));
        assert_eq!(agent.failures().unparseable(), log.len() as u64);

        let profile = build_profile(&[g], 2, 1);
        let grader = LlmGrader::new(client.clone());
        let m = grade_profile(&grader, &profile, 1);
        assert_eq!(m.correct_accuracy(), 0.0);
        assert_eq!(m.incorrect_accuracy(), 0.0);
        let d = demo_eval(&LlmDemoer::new(client), &profile, &tutors, 1).unwrap();
        assert_eq!(d.demo_accuracy(), 0.0);
    }

    #[test]
    fn oracle_backed_grader_and_demoer() {
        let (g, tutors) = setup();
        let client = Arc::new(LlmClient::new(Arc::new(OracleEndpoint::new(tutors.clone()))));
        let profile = build_profile(&[g], 3, 2);
        let profile = inject_incorrect(&profile, &tutors, Perturbation::PerturbNumeric, 2, 3).unwrap();
        let m = grade_profile(&LlmGrader::new(client.clone()), &profile, 1);
        assert_eq!((m.correct_accuracy(), m.incorrect_accuracy()), (1.0, 1.0));
        let d = demo_eval(&LlmDemoer::new(client), &profile, &tutors, 1).unwrap();
        assert_eq!(d.demo_accuracy(), 1.0);
    }
}
