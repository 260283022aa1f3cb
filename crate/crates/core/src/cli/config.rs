use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::agents::QConfig;
use crate::llm::{EndpointConfig, DEFAULT_CHAR_BUDGET};
use crate::student::BktConfig;
use crate::trainer::DEFAULT_MAX_ACTIONS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub max_incorrect: Option<u32>,
    pub max_actions: u32,
    pub student_id: String,
    pub session_id: String,
}

impl Default for TrainerSection {
    fn default() -> Self {
        TrainerSection {
            max_incorrect: None,
            max_actions: DEFAULT_MAX_ACTIONS,
            student_id: "agent".into(),
            session_id: "session-1".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextSection {
    pub char_budget: usize,
}

impl Default for ContextSection {
    fn default() -> Self {
        ContextSection {
            char_budget: DEFAULT_CHAR_BUDGET,
        }
    }
}

/// Agent and tutor parameters read from a TOML file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub trainer: TrainerSection,
    pub q: QConfig,
    pub llm: EndpointConfig,
    pub context: ContextSection,
    pub student: BktConfig,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: CliConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.student.default.validate()?;
        for p in cfg.student.skills.values() {
            p.validate()?;
        }
        Ok(cfg)
    }
}
