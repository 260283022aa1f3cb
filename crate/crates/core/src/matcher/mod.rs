//! Flexible answer matching: exact text, numeric value within a tolerance,
//! algebraic equivalence and anchored patterns.
//!
//! References and witnesses may contain `${widget_id}` placeholders that are
//! replaced with the current value of that widget, which lets later steps
//! depend on what the student typed earlier.

pub mod canon;
pub mod expr;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ProblemState;

pub use canon::{canonicalize, canonicalize_with_bound, CanonError, Canonical};
pub use expr::{parse_expr, parse_number, ExprNode, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Exact,
    Numeric,
    Algebraic,
    Pattern,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatcherError {
    #[error("tolerance must be given for numeric matchers and only for them")]
    ToleranceMismatch,
    #[error("invalid tolerance {0:?}")]
    InvalidTolerance(String),
    #[error("reference {0:?} cannot be interpreted: {1}")]
    BadReference(String, String),
    #[error("invalid pattern: {0}")]
    BadPattern(String),
    #[error("witness {witness:?} is not accepted by its own matcher")]
    WitnessRejected { witness: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatcherSpec {
    pub mode: MatchMode,
    pub reference: String,
    /// Rational text such as `0`, `0.01` or `1/100`; numeric mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<String>,
    /// Concrete value used when the tutor demonstrates this step.
    pub witness: String,
    /// Reject fraction literals that are not in lowest terms (`2/4`).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub require_simplified: bool,
}

impl MatcherSpec {
    pub fn exact(value: impl Into<String>) -> Self {
        let value = value.into();
        MatcherSpec {
            mode: MatchMode::Exact,
            reference: value.clone(),
            tolerance: None,
            witness: value,
            require_simplified: false,
        }
    }

    pub fn numeric(value: impl Into<String>, tolerance: impl Into<String>) -> Self {
        let value = value.into();
        MatcherSpec {
            mode: MatchMode::Numeric,
            reference: value.clone(),
            tolerance: Some(tolerance.into()),
            witness: value,
            require_simplified: false,
        }
    }

    pub fn algebraic(value: impl Into<String>) -> Self {
        let value = value.into();
        MatcherSpec {
            mode: MatchMode::Algebraic,
            reference: value.clone(),
            tolerance: None,
            witness: value,
            require_simplified: false,
        }
    }

    pub fn pattern(pattern: impl Into<String>, witness: impl Into<String>) -> Self {
        MatcherSpec {
            mode: MatchMode::Pattern,
            reference: pattern.into(),
            tolerance: None,
            witness: witness.into(),
            require_simplified: false,
        }
    }

    pub fn with_witness(mut self, witness: impl Into<String>) -> Self {
        self.witness = witness.into();
        self
    }

    pub fn simplified(mut self) -> Self {
        self.require_simplified = true;
        self
    }

    pub fn is_contextual(&self) -> bool {
        self.reference.contains("${") || self.witness.contains("${")
    }

    /// Checks the spec's own invariants. Context-dependent specs are only
    /// checked for shape since their values are not known until runtime.
    pub fn validate(&self) -> Result<(), MatcherError> {
        if self.tolerance.is_some() != (self.mode == MatchMode::Numeric) {
            return Err(MatcherError::ToleranceMismatch);
        }
        if let Some(tol) = &self.tolerance {
            match parse_number(tol) {
                Some(t) if !t.is_negative() => {}
                _ => return Err(MatcherError::InvalidTolerance(tol.clone())),
            }
        }
        if self.mode == MatchMode::Pattern {
            Regex::new(&anchored(&self.reference)).map_err(|e| MatcherError::BadPattern(e.to_string()))?;
        }
        if self.is_contextual() {
            return Ok(());
        }
        match self.mode {
            MatchMode::Numeric if parse_number(&self.reference).is_none() => {
                return Err(MatcherError::BadReference(
                    self.reference.clone(),
                    "not a number".into(),
                ))
            }
            MatchMode::Algebraic => {
                let e = parse_expr(&self.reference)
                    .map_err(|e| MatcherError::BadReference(self.reference.clone(), e.to_string()))?;
                canonicalize(&e).map_err(|e| MatcherError::BadReference(self.reference.clone(), e.to_string()))?;
            }
            _ => {}
        }
        if !self.matches(&self.witness) {
            return Err(MatcherError::WitnessRejected {
                witness: self.witness.clone(),
            });
        }
        Ok(())
    }

    /// Context-free match; placeholders are left unresolved.
    pub fn matches(&self, input: &str) -> bool {
        matches_resolved(self, &self.reference, input)
    }

    /// Resolves placeholders against `state` and matches.
    pub fn matches_in(&self, state: &ProblemState, input: &str) -> bool {
        let reference = resolve(&self.reference, state);
        matches_resolved(self, &reference, input)
    }

    /// The concrete demo value in the context of `state`.
    pub fn witness_in(&self, state: &ProblemState) -> String {
        resolve(&self.witness, state)
    }
}

/// Replaces `${id}` with the value of widget `id` (empty when unknown).
pub fn resolve(template: &str, state: &ProblemState) -> String {
    if !template.contains("${") {
        return template.to_string();
    }
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find('}') {
            Some(end) => {
                out.push_str(state.value_of(&after[..end]).unwrap_or(""));
                rest = &after[end + 1..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn anchored(pattern: &str) -> String {
    format!("^(?:{pattern})$")
}

fn matches_resolved(spec: &MatcherSpec, reference: &str, input: &str) -> bool {
    let input = input.trim();
    match spec.mode {
        MatchMode::Exact => input == reference.trim(),
        MatchMode::Numeric => {
            let Ok(parsed) = parse_expr(input) else {
                return false;
            };
            if spec.require_simplified && !parsed.fractions_simplified() {
                return false;
            }
            let (Ok(value), Some(target)) = (parsed.eval_constant(), parse_number(reference)) else {
                return false;
            };
            let tolerance = spec
                .tolerance
                .as_deref()
                .and_then(parse_number)
                .unwrap_or_else(BigRational::zero);
            (value - target).abs() <= tolerance
        }
        MatchMode::Algebraic => {
            let Ok(parsed) = parse_expr(input) else {
                return false;
            };
            if spec.require_simplified && !parsed.fractions_simplified() {
                return false;
            }
            let Ok(reference) = parse_expr(reference) else {
                return false;
            };
            match (canonicalize(&parsed), canonicalize(&reference)) {
                (Ok(a), Ok(b)) => a.same_form(&b),
                _ => false,
            }
        }
        MatchMode::Pattern => Regex::new(&anchored(reference))
            .map(|re| re.is_match(input))
            .unwrap_or(false),
    }
}

pub fn matches(spec: &MatcherSpec, input: &str) -> bool {
    spec.matches(input)
}
