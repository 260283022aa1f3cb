//! Tutor-environment engine: behavior-graph tutors, agents, evaluation.
pub mod agents;
pub mod analytics;
pub mod cli;
pub mod datashop;
pub mod generators;
pub mod graph;
pub mod llm;
pub mod matcher;
pub mod model;
pub mod profile;
pub mod rl;
pub mod student;
pub mod trainer;
