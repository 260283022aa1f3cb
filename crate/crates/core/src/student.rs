//! Bayesian knowledge tracing and mastery-driven problem selection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generators::{generate, ProblemSpec, SCAFFOLD_DOMAIN};

#[derive(Debug, Error, PartialEq)]
pub enum StudentError {
    #[error("invalid BKT parameters: {0}")]
    InvalidParams(String),
    #[error("BKT update is undefined: observation has zero probability")]
    DegenerateParams,
    #[error("no candidate problems")]
    NoCandidates,
    #[error("candidate {0} cannot be generated: {1}")]
    BadCandidate(String, String),
    #[error("config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KcParams {
    pub p_init: f64,
    pub p_transit: f64,
    pub p_guess: f64,
    pub p_slip: f64,
}

impl Default for KcParams {
    fn default() -> Self {
        KcParams {
            p_init: 0.25,
            p_transit: 0.2,
            p_guess: 0.2,
            p_slip: 0.1,
        }
    }
}

impl KcParams {
    pub fn validate(&self) -> Result<(), StudentError> {
        for (name, v) in [
            ("p_init", self.p_init),
            ("p_transit", self.p_transit),
            ("p_guess", self.p_guess),
            ("p_slip", self.p_slip),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(StudentError::InvalidParams(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        if self.p_guess + self.p_slip >= 1.0 {
            return Err(StudentError::InvalidParams("p_guess + p_slip must be below 1".into()));
        }
        Ok(())
    }
}

/// Posterior given the observation, followed by the learning transition.
pub fn bkt_update(p_known: f64, params: &KcParams, observed_correct: bool) -> Result<f64, StudentError> {
    params.validate()?;
    if !(0.0..=1.0).contains(&p_known) {
        return Err(StudentError::InvalidParams(format!(
            "p_known = {p_known} is outside [0, 1]"
        )));
    }
    let KcParams {
        p_transit: t,
        p_guess: g,
        p_slip: s,
        ..
    } = *params;
    let (num, den) = if observed_correct {
        let num = p_known * (1.0 - s);
        (num, num + (1.0 - p_known) * g)
    } else {
        let num = p_known * s;
        (num, num + (1.0 - p_known) * (1.0 - g))
    };
    if den == 0.0 {
        return Err(StudentError::DegenerateParams);
    }
    let posterior = num / den;
    Ok(posterior + (1.0 - posterior) * t)
}

/// Scaffold level by mastery: below `low` gives 2, below `high` gives 1,
/// otherwise 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaffoldThresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for ScaffoldThresholds {
    fn default() -> Self {
        ScaffoldThresholds { low: 0.5, high: 0.85 }
    }
}

impl ScaffoldThresholds {
    pub fn level_for(&self, p_known: f64) -> u32 {
        if p_known < self.low {
            2
        } else if p_known < self.high {
            1
        } else {
            0
        }
    }
}

/// Per-domain configuration file contents.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BktConfig {
    pub default: KcParams,
    pub skills: BTreeMap<String, KcParams>,
    pub thresholds: ScaffoldThresholds,
}

impl BktConfig {
    pub fn from_toml(text: &str) -> Result<Self, StudentError> {
        let cfg: BktConfig = toml::from_str(text).map_err(|e| StudentError::Config(e.to_string()))?;
        cfg.default.validate()?;
        for p in cfg.skills.values() {
            p.validate()?;
        }
        Ok(cfg)
    }

    pub fn params_for(&self, skill: &str) -> &KcParams {
        self.skills.get(skill).unwrap_or(&self.default)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MasteryState {
    pub config: BktConfig,
    pub p_known: BTreeMap<String, f64>,
    pub opportunities: BTreeMap<String, u32>,
}

impl MasteryState {
    pub fn new(config: BktConfig) -> Self {
        MasteryState {
            config,
            ..Default::default()
        }
    }

    pub fn p_known(&self, skill: &str) -> f64 {
        self.p_known
            .get(skill)
            .copied()
            .unwrap_or_else(|| self.config.params_for(skill).p_init)
    }

    pub fn observe(&mut self, skill: &str, correct: bool) -> Result<f64, StudentError> {
        let p = bkt_update(self.p_known(skill), self.config.params_for(skill), correct)?;
        self.p_known.insert(skill.to_string(), p);
        *self.opportunities.entry(skill.to_string()).or_insert(0) += 1;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    #[default]
    LowestMasteryFirst,
}

/// Skills exercised by a problem and its scaffold level.
fn describe(spec: &ProblemSpec) -> Result<(BTreeSet<String>, u32), StudentError> {
    let graph = generate(spec).map_err(|e| StudentError::BadCandidate(spec.problem_id(), e.to_string()))?;
    let skills = graph
        .edges()
        .iter()
        .map(|e| e.skill.clone())
        .filter(|s| !s.is_empty() && s != "done")
        .collect();
    let level = spec
        .params
        .get("level")
        .and_then(|v| v.as_u64())
        .map(|l| l as u32)
        .unwrap_or(if spec.domain_id == SCAFFOLD_DOMAIN { u32::MAX } else { 0 });
    Ok((skills, level))
}

/// Picks the candidate that exercises the least-mastered skill, preferring
/// the variant whose scaffold level suits that skill's mastery. Ties keep
/// candidate order.
pub fn select_next(
    mastery: &MasteryState,
    candidates: &[ProblemSpec],
    policy: SelectionPolicy,
) -> Result<ProblemSpec, StudentError> {
    let SelectionPolicy::LowestMasteryFirst = policy;
    if candidates.is_empty() {
        return Err(StudentError::NoCandidates);
    }
    let described: Vec<(BTreeSet<String>, u32)> = candidates.iter().map(describe).collect::<Result<_, _>>()?;
    let mut target: Option<(f64, &str)> = None;
    for (skills, _) in &described {
        for s in skills {
            let p = mastery.p_known(s);
            if target.is_none_or(|(best, _)| p < best) {
                target = Some((p, s));
            }
        }
    }
    let Some((p, skill)) = target else {
        return Ok(candidates[0].clone());
    };
    let want = mastery.config.thresholds.level_for(p);
    let best = candidates
        .iter()
        .zip(&described)
        .filter(|(_, (skills, _))| skills.contains(skill))
        .min_by_key(|(_, (_, level))| level.abs_diff(want))
        .map(|(c, _)| c.clone())
        .expect("target skill comes from some candidate");
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{FRACTION_DOMAIN, MULTICOLUMN_DOMAIN};

    #[test]
    fn fixed_points() {
        let p = KcParams {
            p_init: 0.5,
            p_transit: 0.3,
            p_guess: 0.2,
            p_slip: 0.0,
        };
        assert_eq!(bkt_update(1.0, &p, true).unwrap(), 1.0);
        let z = KcParams {
            p_init: 0.0,
            p_transit: 0.0,
            p_guess: 0.0,
            p_slip: 0.1,
        };
        assert_eq!(bkt_update(0.0, &z, false).unwrap(), 0.0);
        let degenerate = KcParams { p_guess: 0.0, ..z };
        assert_eq!(bkt_update(0.0, &degenerate, true), Err(StudentError::DegenerateParams));
    }

    #[test]
    fn validation_and_config() {
        assert!(KcParams::default().validate().is_ok());
        let bad = KcParams {
            p_guess: 0.6,
            p_slip: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let cfg =
            BktConfig::from_toml("[default]\np_init = 0.3\n[skills.carry]\np_slip = 0.05\n[thresholds]\nhigh = 0.9\n")
                .unwrap();
        assert_eq!(cfg.default.p_init, 0.3);
        assert_eq!(cfg.params_for("carry").p_slip, 0.05);
        assert_eq!(cfg.params_for("carry").p_init, 0.25);
        assert_eq!(cfg.thresholds.high, 0.9);
        assert!(BktConfig::from_toml("[default]\np_init = 2.0\n").is_err());
    }

    #[test]
    fn selection() {
        let frac = ProblemSpec::new(FRACTION_DOMAIN, 1).with_param("kind", "multiply");
        let add = ProblemSpec::new(MULTICOLUMN_DOMAIN, 1).with_param("digits", 2u64);
        let mut m = MasteryState::default();
        assert_eq!(
            select_next(&m, &[frac.clone()], SelectionPolicy::default()).unwrap(),
            frac
        );
        for s in ["multiply-numerators", "multiply-denominators"] {
            m.p_known.insert(s.into(), 0.9);
        }
        for s in ["add-column", "carry", "write-final-carry"] {
            m.p_known.insert(s.into(), 0.2);
        }
        let picked = select_next(&m, &[frac.clone(), add.clone()], SelectionPolicy::default()).unwrap();
        assert_eq!(picked, add);
        assert_eq!(
            select_next(&m, &[], SelectionPolicy::default()),
            Err(StudentError::NoCandidates)
        );
    }

    #[test]
    fn scaffold_level_follows_mastery() {
        let base = ProblemSpec::new(SCAFFOLD_DOMAIN, 2);
        let lvl = |l: u64| base.clone().with_param("level", l);
        let mut m = MasteryState::default();
        m.p_known.insert("divide-coefficient".into(), 0.9);
        m.p_known.insert("subtract-constant".into(), 0.95);
        let got = select_next(&m, &[lvl(1), lvl(0)], SelectionPolicy::default()).unwrap();
        assert_eq!(got, lvl(0));
        m.p_known.insert("divide-coefficient".into(), 0.3);
        let got = select_next(&m, &[lvl(0), lvl(1)], SelectionPolicy::default()).unwrap();
        assert_eq!(got, lvl(1));
    }
}
