//! First-attempt learning curves from transaction logs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Outcome, Transaction};

pub const AGGREGATE: &str = "all";

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("curves share no opportunity")]
    NoOverlap,
    #[error("curve CSV: {0}")]
    Csv(String),
}

/// How a hint that is the first event of an opportunity is scored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum HintPolicy {
    /// Counts as an error.
    #[default]
    A,
    /// The opportunity is left out entirely.
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub opportunity: u32,
    pub error_rate: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub grouping: String,
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn error_rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.error_rate).collect()
    }

    pub fn at(&self, opportunity: u32) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.opportunity == opportunity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    pub per_skill: BTreeMap<String, LearningCurve>,
    /// Unweighted mean over skills at each opportunity.
    pub aggregate: LearningCurve,
}

impl CurveSet {
    /// Aggregate first, then skills by name.
    pub fn all(&self) -> Vec<&LearningCurve> {
        std::iter::once(&self.aggregate)
            .chain(self.per_skill.values())
            .collect()
    }
}

/// Builds per-skill and aggregate curves. Each (student, problem view,
/// skill) contributes only its first transaction; the k-th such
/// contribution for a student and skill is opportunity k. `skill_map`
/// overrides the logged skill by selection.
pub fn first_attempt_curves(
    log: &[Transaction],
    skill_map: Option<&HashMap<String, String>>,
    policy: HintPolicy,
) -> CurveSet {
    let mut seen: HashSet<(String, String, u32, String)> = HashSet::new();
    let mut counters: HashMap<(String, String), u32> = HashMap::new();
    // skill -> opportunity -> (errors, n)
    let mut tallies: BTreeMap<String, BTreeMap<u32, (usize, usize)>> = BTreeMap::new();
    for t in log {
        let skill = skill_map
            .and_then(|m| m.get(&t.sai.selection))
            .cloned()
            .unwrap_or_else(|| t.skill.clone());
        if skill.is_empty() {
            continue;
        }
        let key = (
            t.student_id.clone(),
            t.problem_name.clone(),
            t.problem_view,
            skill.clone(),
        );
        if !seen.insert(key) {
            continue;
        }
        let error = match (t.outcome, policy) {
            (Outcome::Correct, _) => false,
            (Outcome::Incorrect, _) | (Outcome::Hint, HintPolicy::A) => true,
            (Outcome::Hint, HintPolicy::B) => continue,
        };
        let k = counters.entry((t.student_id.clone(), skill.clone())).or_insert(0);
        *k += 1;
        let cell = tallies.entry(skill).or_default().entry(*k).or_insert((0, 0));
        cell.0 += usize::from(error);
        cell.1 += 1;
    }

    let per_skill: BTreeMap<String, LearningCurve> = tallies
        .into_iter()
        .map(|(skill, cells)| {
            let points = cells
                .into_iter()
                .map(|(opportunity, (errors, n))| CurvePoint {
                    opportunity,
                    error_rate: errors as f64 / n as f64,
                    n,
                })
                .collect();
            (
                skill.clone(),
                LearningCurve {
                    grouping: skill,
                    points,
                },
            )
        })
        .collect();

    let mut by_opp: BTreeMap<u32, (f64, usize, usize)> = BTreeMap::new();
    for c in per_skill.values() {
        for p in &c.points {
            let e = by_opp.entry(p.opportunity).or_insert((0.0, 0, 0));
            e.0 += p.error_rate;
            e.1 += 1;
            e.2 += p.n;
        }
    }
    let aggregate = LearningCurve {
        grouping: AGGREGATE.into(),
        points: by_opp
            .into_iter()
            .map(|(opportunity, (sum, skills, n))| CurvePoint {
                opportunity,
                error_rate: sum / skills as f64,
                n,
            })
            .collect(),
    };
    CurveSet { per_skill, aggregate }
}

/// Single-curve form: the aggregate of [`first_attempt_curves`].
pub fn first_attempt_curve(
    log: &[Transaction],
    skill_map: Option<&HashMap<String, String>>,
    policy: HintPolicy,
) -> LearningCurve {
    first_attempt_curves(log, skill_map, policy).aggregate
}

/// Transaction-weighted aggregate, for comparison with the default.
pub fn weighted_aggregate(set: &CurveSet) -> LearningCurve {
    let mut by_opp: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for c in set.per_skill.values() {
        for p in &c.points {
            let e = by_opp.entry(p.opportunity).or_insert((0.0, 0));
            e.0 += p.error_rate * p.n as f64;
            e.1 += p.n;
        }
    }
    LearningCurve {
        grouping: format!("{AGGREGATE}-weighted"),
        points: by_opp
            .into_iter()
            .map(|(opportunity, (errors, n))| CurvePoint {
                opportunity,
                error_rate: errors / n as f64,
                n,
            })
            .collect(),
    }
}

/// Root-mean-square difference over the opportunities both curves cover.
pub fn curve_distance(a: &LearningCurve, b: &LearningCurve) -> Result<f64, AnalyticsError> {
    let mut sum = 0.0;
    let mut k = 0usize;
    for p in &a.points {
        if let Some(q) = b.at(p.opportunity) {
            sum += (p.error_rate - q.error_rate).powi(2);
            k += 1;
        }
    }
    if k == 0 {
        return Err(AnalyticsError::NoOverlap);
    }
    Ok((sum / k as f64).sqrt())
}

/// Fraction of steps, per problem view, whose first attempt was correct.
pub fn first_attempt_correctness(log: &[Transaction]) -> f64 {
    let mut seen = HashSet::new();
    let (mut correct, mut total) = (0usize, 0usize);
    for t in log {
        if seen.insert((&t.student_id, &t.problem_name, t.problem_view, &t.step_name)) {
            total += 1;
            correct += usize::from(t.outcome == Outcome::Correct);
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

pub const CSV_HEADER: [&str; 4] = ["grouping", "opportunity", "error_rate", "n"];

pub fn export_curves(curves: &[&LearningCurve]) -> Result<String, AnalyticsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| AnalyticsError::Csv(e.to_string());
    w.write_record(CSV_HEADER).map_err(err)?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                c.grouping.clone(),
                p.opportunity.to_string(),
                p.error_rate.to_string(),
                p.n.to_string(),
            ])
            .map_err(err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| AnalyticsError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| AnalyticsError::Csv(e.to_string()))
}

/// Parses [`export_curves`] output back into curves, in first-seen order.
pub fn parse_curves(text: &str) -> Result<Vec<LearningCurve>, AnalyticsError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| AnalyticsError::Csv(e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(AnalyticsError::Csv(format!("unexpected header {header:?}")));
    }
    let mut out: Vec<LearningCurve> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| AnalyticsError::Csv(e.to_string()))?;
        let bad = |what: &str| AnalyticsError::Csv(format!("row {}: bad {what}", i + 2));
        let grouping = rec.get(0).ok_or_else(|| bad("grouping"))?.to_string();
        let point = CurvePoint {
            opportunity: rec
                .get(1)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("opportunity"))?,
            error_rate: rec
                .get(2)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("error_rate"))?,
            n: rec.get(3).and_then(|v| v.parse().ok()).ok_or_else(|| bad("n"))?,
        };
        match out.iter_mut().find(|c| c.grouping == grouping) {
            Some(c) => c.points.push(point),
            None => out.push(LearningCurve {
                grouping,
                points: vec![point],
            }),
        }
    }
    Ok(out)
}

/// Simple line chart of error rate against opportunity.
pub fn render_svg(curves: &[&LearningCurve], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    const COLORS: [&str; 8] = [
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    ];
    let max_opp = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.opportunity))
        .max()
        .unwrap_or(1)
        .max(2);
    let x = |o: u32| M + (o - 1) as f64 / (max_opp - 1) as f64 * (W - 2.0 * M);
    let y = |r: f64| H - M - r * (H - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-size="16" text-anchor="middle">{}</text>"#,
        W / 2.0,
        xml_escape(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{M}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{M}" y1="{M}" x2="{M}" y2="{}" stroke="black"/>"#,
        H - M,
        W - M,
        H - M,
        H - M
    );
    for tick in [0.0, 0.5, 1.0] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{tick:.1}</text>"#,
            M - 6.0,
            y(tick) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">opportunity</text>"#,
        W / 2.0,
        H - 12.0
    );
    for (i, c) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|p| format!("{:.1},{:.1}", x(p.opportunity), y(p.error_rate)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
            W - M + 4.0,
            M + 14.0 * i as f64,
            xml_escape(&c.grouping)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
