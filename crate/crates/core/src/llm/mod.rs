//! Language-model tutors and learners: prompt assembly with a bounded
//! in-context example buffer, response parsing, and remote transport.

mod agent;
mod endpoint;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{canonical_json, ProblemState, Sai};
use crate::profile::Verdict;

pub use agent::{FailureCounts, LlmAgent, LlmDemoer, LlmGrader};
pub use endpoint::{
    parse_transcript, Endpoint, EndpointConfig, HttpEndpoint, LlmClient, MockEndpoint, OracleEndpoint,
    RecordingEndpoint, ReplayEndpoint, TranscriptEntry, TransportError, DEFAULT_TOKEN_ENV,
};

pub const DEFAULT_CHAR_BUDGET: usize = 50_000;

pub const STATE_MARKER: &str = "Current state:\n";
pub const CANDIDATE_MARKER: &str = "Candidate action:\n";
pub const EXAMPLES_MARKER: &str = "Examples:\n";
pub const EXAMPLE_HEADER: &str = "--- example ---\n";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("state serialization is {len} characters, over the {budget}-character budget")]
    StateTooLarge { len: usize, budget: usize },
    #[error("unparseable {mode:?} response: {snippet:?}")]
    UnparseableResponse { mode: PromptMode, snippet: String },
    #[error("transport failed after {attempts} attempt(s): {last}")]
    Transport { attempts: u32, last: TransportError },
    #[error("request cap of {cap} reached")]
    BudgetExceeded { cap: u64 },
    #[error("transcript: {0}")]
    Transcript(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    /// Insertion sequence number within its buffer.
    pub seq: u64,
    pub state: String,
    pub action: Sai,
    pub correct: bool,
}

impl Example {
    pub fn render(&self) -> String {
        format!(
            "{EXAMPLE_HEADER}state: {}\naction: {}\ncorrect: {}\n",
            self.state,
            canonical_json(&self.action),
            if self.correct { "yes" } else { "no" }
        )
    }

    pub fn rendered_len(&self) -> usize {
        self.render().chars().count()
    }
}

/// FIFO of worked examples whose rendered size stays within a character
/// budget. Only the examples section is counted, not the surrounding
/// template or the current state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextBuffer {
    examples: VecDeque<Example>,
    char_budget: usize,
    used: usize,
    next_seq: u64,
}

impl Default for ContextBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_CHAR_BUDGET)
    }
}

impl ContextBuffer {
    pub fn new(char_budget: usize) -> Self {
        ContextBuffer {
            examples: VecDeque::new(),
            char_budget,
            used: 0,
            next_seq: 0,
        }
    }

    pub fn char_budget(&self) -> usize {
        self.char_budget
    }

    pub fn used_chars(&self) -> usize {
        self.used
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> impl Iterator<Item = &Example> {
        self.examples.iter()
    }

    /// Appends an example and evicts from the front until the buffer fits.
    /// Returns the evicted examples, oldest first.
    pub fn push_example(&mut self, state: &ProblemState, action: &Sai, correct: bool) -> Vec<Example> {
        let ex = Example {
            seq: self.next_seq,
            state: state.to_canonical_json(),
            action: action.clone(),
            correct,
        };
        self.next_seq += 1;
        self.used += ex.rendered_len();
        self.examples.push_back(ex);
        let mut evicted = Vec::new();
        while self.used > self.char_budget {
            let old = self.examples.pop_front().expect("over budget implies nonempty");
            self.used -= old.rendered_len();
            evicted.push(old);
        }
        evicted
    }

    pub fn examples_section(&self) -> String {
        self.examples.iter().map(Example::render).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Demo,
    Grade,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionTypeDoc {
    pub name: String,
    pub description: String,
    pub example: Sai,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub mode: PromptMode,
    pub action_types: Vec<ActionTypeDoc>,
    pub control_flow: Option<String>,
}

fn doc(name: &str, description: &str, selection: &str, input: &str) -> ActionTypeDoc {
    ActionTypeDoc {
        name: name.into(),
        description: description.into(),
        example: Sai {
            selection: selection.into(),
            action_type: name.into(),
            input: input.into(),
        },
    }
}

impl PromptTemplate {
    /// Template describing the built-in action types.
    pub fn new(mode: PromptMode) -> Self {
        PromptTemplate {
            mode,
            action_types: vec![
                doc(
                    "UpdateTextField",
                    "Types the input into the selected text field.",
                    "answer_num",
                    "3",
                ),
                doc(
                    "ButtonPressed",
                    "Presses the selected button. Pressing done finishes the problem.",
                    "done",
                    "-1",
                ),
                doc(
                    "UpdateCheckbox",
                    "Sets the selected checkbox to true or false.",
                    "check_1",
                    "true",
                ),
            ],
            control_flow: None,
        }
    }

    pub fn with_control_flow(mut self, text: impl Into<String>) -> Self {
        self.control_flow = Some(text.into());
        self
    }

    fn preamble(&self) -> String {
        let mut s = String::new();
        s.push_str(match self.mode {
            PromptMode::Demo => "You are a tutor demonstrating the next step of a math problem.\n",
            PromptMode::Grade => "You are a tutor checking one step a student took on a math problem.\n",
        });
        s.push_str("The problem interface is a set of widgets given as JSON. Actions are JSON objects with selection, action_type and input.\nAction types:\n");
        for a in &self.action_types {
            s.push_str(&format!(
                "- {}: {} Example: {}\n",
                a.name,
                a.description,
                canonical_json(&a.example)
            ));
        }
        if let Some(cf) = &self.control_flow {
            s.push_str("How this problem proceeds:\n");
            s.push_str(cf);
            if !cf.ends_with('\n') {
                s.push('\n');
            }
        }
        s
    }

    fn instruction(&self) -> &'static str {
        match self.mode {
            PromptMode::Demo => "Reply with the single next correct action as one JSON object with keys selection, action_type and input.\n",
            PromptMode::Grade => "Is the candidate action correct in this state? Answer with a bare yes or no.\n",
        }
    }

    /// Characters contributed by the template itself, excluding examples,
    /// state and candidate action.
    pub fn allowance(&self) -> usize {
        let fixed = [EXAMPLES_MARKER, STATE_MARKER, CANDIDATE_MARKER, "(none)\n", "\n\n"];
        self.preamble().chars().count()
            + self.instruction().chars().count()
            + fixed.iter().map(|s| s.chars().count()).sum::<usize>()
    }
}

fn assemble(
    template: &PromptTemplate,
    state: &ProblemState,
    candidate: Option<&Sai>,
    buffer: &ContextBuffer,
) -> Result<String, LlmError> {
    let state_json = state.to_canonical_json();
    let len = state_json.chars().count();
    if len > buffer.char_budget() {
        return Err(LlmError::StateTooLarge {
            len,
            budget: buffer.char_budget(),
        });
    }
    let mut p = template.preamble();
    p.push_str(EXAMPLES_MARKER);
    if buffer.is_empty() {
        p.push_str("(none)\n");
    } else {
        p.push_str(&buffer.examples_section());
    }
    p.push_str(STATE_MARKER);
    p.push_str(&state_json);
    p.push('\n');
    if let Some(c) = candidate {
        p.push_str(CANDIDATE_MARKER);
        p.push_str(&canonical_json(c));
        p.push('\n');
    }
    p.push_str(template.instruction());
    Ok(p)
}

/// Demo-mode prompt: template, examples oldest first, current state.
pub fn build_prompt(
    template: &PromptTemplate,
    state: &ProblemState,
    buffer: &ContextBuffer,
) -> Result<String, LlmError> {
    assemble(template, state, None, buffer)
}

/// Grade-mode prompt: as [`build_prompt`] plus the action to judge.
pub fn build_grade_prompt(
    template: &PromptTemplate,
    state: &ProblemState,
    action: &Sai,
    buffer: &ContextBuffer,
) -> Result<String, LlmError> {
    assemble(template, state, Some(action), buffer)
}

/// The examples section of a prompt built by this module, if any.
pub fn examples_section_of(prompt: &str) -> Option<&str> {
    let start = prompt.find(EXAMPLES_MARKER)? + EXAMPLES_MARKER.len();
    let end = start + prompt[start..].find(STATE_MARKER)?;
    let section = &prompt[start..end];
    Some(if section == "(none)\n" { "" } else { section })
}

/// Current state and candidate action embedded in a prompt.
pub fn prompt_query(prompt: &str) -> Option<(ProblemState, Option<Sai>)> {
    let line_after = |marker: &str| {
        let i = prompt.rfind(marker)? + marker.len();
        prompt[i..].lines().next()
    };
    let state = ProblemState::from_json(line_after(STATE_MARKER)?).ok()?;
    let candidate = match line_after(CANDIDATE_MARKER) {
        Some(l) => Some(serde_json::from_str(l).ok()?),
        None => None,
    };
    Some((state, candidate))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    Action(Sai),
    Verdict(Verdict),
}

fn snippet(text: &str) -> String {
    text.chars().take(80).collect()
}

/// Grade mode reads a leading yes/no token; demo mode takes the first JSON
/// object in the text that is a well-formed action.
pub fn parse_response(mode: PromptMode, text: &str) -> Result<Response, LlmError> {
    let fail = || LlmError::UnparseableResponse {
        mode,
        snippet: snippet(text),
    };
    match mode {
        PromptMode::Grade => {
            let word: String = text
                .trim_start_matches(|c: char| !c.is_alphanumeric())
                .chars()
                .take_while(|c| c.is_alphabetic())
                .collect::<String>()
                .to_lowercase();
            match word.as_str() {
                "yes" => Ok(Response::Verdict(Verdict::Yes)),
                "no" => Ok(Response::Verdict(Verdict::No)),
                _ => Err(fail()),
            }
        }
        PromptMode::Demo => {
            for (i, _) in text.match_indices('{') {
                let mut de = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Sai>();
                if let Some(Ok(sai)) = de.next() {
                    if let Ok(sai) = Sai::new(sai.selection, sai.action_type, sai.input) {
                        return Ok(Response::Action(sai));
                    }
                }
            }
            Err(fail())
        }
    }
}
