//! Shared domain types: interface actions, tutor states, rewards and
//! DataShop-style transactions, plus their canonical text forms.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("malformed SAI: {0}")]
    MalformedSai(String),
    #[error("reward must be +1 or -1, got {0}")]
    InvalidReward(i64),
    #[error("invalid state document: {0}")]
    InvalidState(String),
}

/// Action types understood by every tutor. Graph files may register more.
pub mod action_types {
    pub const UPDATE_TEXT_FIELD: &str = "UpdateTextField";
    pub const BUTTON_PRESSED: &str = "ButtonPressed";
    pub const UPDATE_CHECKBOX: &str = "UpdateCheckbox";
    pub const DONE: &str = "Done";
    /// Tutor-performed: make the selected widget visible.
    pub const SHOW_WIDGET: &str = "ShowWidget";
    /// Tutor-performed: hide the selected widget.
    pub const HIDE_WIDGET: &str = "HideWidget";

    pub const BUILTIN: [&str; 6] = [
        UPDATE_TEXT_FIELD,
        BUTTON_PRESSED,
        UPDATE_CHECKBOX,
        DONE,
        SHOW_WIDGET,
        HIDE_WIDGET,
    ];
}

/// A (selection, action_type, input) triple naming one interface action.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Sai {
    pub selection: String,
    pub action_type: String,
    pub input: String,
}

impl Sai {
    pub fn new(
        selection: impl Into<String>,
        action_type: impl Into<String>,
        input: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let sai = Sai {
            selection: selection.into(),
            action_type: action_type.into(),
            input: input.into(),
        };
        if sai.selection.is_empty() {
            return Err(ModelError::MalformedSai("empty selection".into()));
        }
        if sai.action_type.is_empty() {
            return Err(ModelError::MalformedSai("empty action type".into()));
        }
        Ok(sai)
    }

    /// Parses the textual triple form `("field1", "UpdateTextField", "7")`.
    ///
    /// JSON arrays of three strings and JSON objects with `selection`,
    /// `action_type` and `input` keys are accepted as well.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let trimmed = text.trim();
        if trimmed.starts_with('{') {
            #[derive(Deserialize)]
            struct Obj {
                selection: String,
                action_type: String,
                #[serde(default)]
                input: String,
            }
            let obj: Obj = serde_json::from_str(trimmed).map_err(|e| ModelError::MalformedSai(e.to_string()))?;
            return Sai::new(obj.selection, obj.action_type, obj.input);
        }
        let inner = if let Some(rest) = trimmed.strip_prefix('(') {
            rest.strip_suffix(')')
                .ok_or_else(|| ModelError::MalformedSai("unclosed '('".into()))?
        } else if let Some(rest) = trimmed.strip_prefix('[') {
            rest.strip_suffix(']')
                .ok_or_else(|| ModelError::MalformedSai("unclosed '['".into()))?
        } else {
            return Err(ModelError::MalformedSai("expected '(', '[' or '{'".into()));
        };
        let parts: Vec<String> =
            serde_json::from_str(&format!("[{inner}]")).map_err(|e| ModelError::MalformedSai(e.to_string()))?;
        match <[String; 3]>::try_from(parts) {
            Ok([s, a, i]) => Sai::new(s, a, i),
            Err(parts) => Err(ModelError::MalformedSai(format!(
                "expected 3 components, found {}",
                parts.len()
            ))),
        }
    }
}

impl fmt::Display for Sai {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = |s: &str| serde_json::to_string(s).expect("string serialization");
        write!(
            f,
            "({}, {}, {})",
            q(&self.selection),
            q(&self.action_type),
            q(&self.input)
        )
    }
}

impl std::str::FromStr for Sai {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Sai::parse(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidgetKind {
    TextField,
    Button,
    Checkbox,
    Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WidgetView {
    pub widget_id: String,
    pub kind: WidgetKind,
    #[serde(default)]
    pub value: String,
    /// Already correctly filled in; only tutor-performed actions may change it.
    #[serde(default)]
    pub locked: bool,
    #[serde(default = "default_true")]
    pub visible: bool,
}

fn default_true() -> bool {
    true
}

impl WidgetView {
    pub fn new(widget_id: impl Into<String>, kind: WidgetKind) -> Self {
        WidgetView {
            widget_id: widget_id.into(),
            kind,
            value: String::new(),
            locked: false,
            visible: true,
        }
    }

    pub fn with_value(mut self, value: impl Into<String>) -> Self {
        self.value = value.into();
        self
    }

    pub fn locked(mut self) -> Self {
        self.locked = true;
        self
    }

    pub fn hidden(mut self) -> Self {
        self.visible = false;
        self
    }
}

/// JSON-like snapshot of a tutor interface.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemState {
    pub problem_id: String,
    pub widgets: BTreeMap<String, WidgetView>,
    #[serde(default)]
    pub done: bool,
}

impl ProblemState {
    pub fn new(problem_id: impl Into<String>) -> Self {
        ProblemState {
            problem_id: problem_id.into(),
            widgets: BTreeMap::new(),
            done: false,
        }
    }

    /// Inserts a widget; a widget with the same id is replaced.
    pub fn with_widget(mut self, widget: WidgetView) -> Self {
        self.widgets.insert(widget.widget_id.clone(), widget);
        self
    }

    pub fn widget(&self, id: &str) -> Option<&WidgetView> {
        self.widgets.get(id)
    }

    pub fn value_of(&self, id: &str) -> Option<&str> {
        self.widgets.get(id).map(|w| w.value.as_str())
    }

    /// Canonical key-ordered compact JSON. Equal states give identical bytes.
    pub fn to_canonical_json(&self) -> String {
        canonical_json(self)
    }

    /// Canonical form with two-space indentation, for prompts and files.
    pub fn to_canonical_pretty(&self) -> String {
        let value = serde_json::to_value(self).expect("state serializes");
        serde_json::to_string_pretty(&value).expect("value serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let state: ProblemState = serde_json::from_str(text).map_err(|e| ModelError::InvalidState(e.to_string()))?;
        for (key, w) in &state.widgets {
            if key != &w.widget_id {
                return Err(ModelError::InvalidState(format!(
                    "widget key {key:?} does not match widget_id {:?}",
                    w.widget_id
                )));
            }
        }
        Ok(state)
    }
}

/// Serializes through `serde_json::Value`, whose maps are key-sorted.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("value serializes");
    serde_json::to_string(&value).expect("value serializes")
}

pub fn serialize_state(state: &ProblemState) -> String {
    state.to_canonical_json()
}

pub fn parse_sai(text: &str) -> Result<Sai, ModelError> {
    Sai::parse(text)
}

/// Tutor feedback: +1 for a correct action, -1 for an incorrect one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct Reward(i8);

impl Reward {
    pub const CORRECT: Reward = Reward(1);
    pub const INCORRECT: Reward = Reward(-1);

    pub fn new(value: i64) -> Result<Self, ModelError> {
        match value {
            1 => Ok(Reward::CORRECT),
            -1 => Ok(Reward::INCORRECT),
            other => Err(ModelError::InvalidReward(other)),
        }
    }

    pub fn from_correct(correct: bool) -> Self {
        if correct {
            Reward::CORRECT
        } else {
            Reward::INCORRECT
        }
    }

    pub fn value(self) -> i64 {
        self.0 as i64
    }

    pub fn is_correct(self) -> bool {
        self.0 > 0
    }
}

impl TryFrom<i64> for Reward {
    type Error = ModelError;
    fn try_from(value: i64) -> Result<Self, Self::Error> {
        Reward::new(value)
    }
}

impl From<Reward> for i64 {
    fn from(r: Reward) -> i64 {
        r.value()
    }
}

impl fmt::Display for Reward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Correct,
    Incorrect,
    Hint,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Correct => "CORRECT",
            Outcome::Incorrect => "INCORRECT",
            Outcome::Hint => "HINT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "CORRECT" => Some(Outcome::Correct),
            "INCORRECT" => Some(Outcome::Incorrect),
            "HINT" => Some(Outcome::Hint),
            _ => None,
        }
    }

    /// Reward an agent receives for this event; demos are worked examples
    /// delivered with reward +1.
    pub fn reward(self) -> Reward {
        match self {
            Outcome::Incorrect => Reward::INCORRECT,
            Outcome::Correct | Outcome::Hint => Reward::CORRECT,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One graded attempt (or demonstrated hint) in DataShop form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub student_id: String,
    pub session_id: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: i64,
    pub level: String,
    pub problem_name: String,
    /// How many times this student has started this problem (1-based).
    pub problem_view: u32,
    pub step_name: String,
    pub attempt_at_step: u32,
    pub outcome: Outcome,
    pub sai: Sai,
    pub skill: String,
    pub opportunity: u32,
}

impl Transaction {
    pub fn reward(&self) -> Reward {
        self.outcome.reward()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_ab(order_ba: bool) -> ProblemState {
        let a = WidgetView::new("a", WidgetKind::TextField).with_value("1");
        let b = WidgetView::new("b", WidgetKind::Label).with_value("x").locked();
        let s = ProblemState::new("p1");
        if order_ba {
            s.with_widget(b).with_widget(a)
        } else {
            s.with_widget(a).with_widget(b)
        }
    }

    #[test]
    fn serialization_ignores_insertion_order() {
        assert_eq!(serialize_state(&state_ab(false)), serialize_state(&state_ab(true)));
    }

    #[test]
    fn canonical_keys_are_sorted() {
        let text = serialize_state(&state_ab(false));
        let done = text.find("\"done\"").unwrap();
        let pid = text.find("\"problem_id\"").unwrap();
        let widgets = text.find("\"widgets\"").unwrap();
        assert!(done < pid && pid < widgets);
        let kind = text.find("\"kind\"").unwrap();
        let locked = text.find("\"locked\"").unwrap();
        assert!(kind < locked);
    }

    #[test]
    fn parse_sai_triple() {
        let sai = parse_sai(r#"("field1","UpdateTextField","7")"#).unwrap();
        assert_eq!(sai, Sai::new("field1", "UpdateTextField", "7").unwrap());
        let sai = parse_sai(r#"("done", "ButtonPressed", "")"#).unwrap();
        assert_eq!(sai.input, "");
        assert_eq!(sai.selection, "done");
    }

    #[test]
    fn parse_sai_two_components_is_malformed() {
        assert!(matches!(
            parse_sai(r#"("field1","UpdateTextField")"#),
            Err(ModelError::MalformedSai(_))
        ));
        assert!(matches!(parse_sai("field1"), Err(ModelError::MalformedSai(_))));
        assert!(matches!(
            parse_sai(r#"("","UpdateTextField","1")"#),
            Err(ModelError::MalformedSai(_))
        ));
    }

    #[test]
    fn sai_display_parses_back() {
        let sai = Sai::new("f\"1", "UpdateTextField", "a,b)").unwrap();
        assert_eq!(parse_sai(&sai.to_string()).unwrap(), sai);
        let obj = r#"{"selection":"x","action_type":"ButtonPressed"}"#;
        assert_eq!(parse_sai(obj).unwrap().input, "");
    }

    #[test]
    fn reward_rejects_other_values() {
        assert!(Reward::new(1).is_ok());
        assert!(Reward::new(-1).is_ok());
        for v in [0, 2, -2, 100] {
            assert_eq!(Reward::new(v), Err(ModelError::InvalidReward(v)));
        }
        assert!(serde_json::from_str::<Reward>("0").is_err());
        assert_eq!(serde_json::to_string(&Reward::INCORRECT).unwrap(), "-1");
    }

    #[test]
    fn state_rejects_mismatched_widget_key() {
        let text = r#"{"problem_id":"p","done":false,"widgets":{"a":{"widget_id":"b","kind":"label"}}}"#;
        assert!(ProblemState::from_json(text).is_err());
    }
}
