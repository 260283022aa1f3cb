//! DataShop-style transaction logs: tab-separated and JSON-lines sinks and
//! parsers.
//!
//! Field escaping in TSV: `\` becomes `\\`, tab `\t`, newline `\n`,
//! carriage return `\r`. Nothing else is altered. See
//! `docs/datashop-format.md`.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, NaiveDateTime};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::{Outcome, Sai, Transaction};

pub const FORMAT_VERSION: u32 = 1;

pub const COLUMNS: [&str; 14] = [
    "Anon Student Id",
    "Session Id",
    "Time",
    "Level (Domain)",
    "Problem Name",
    "Problem View",
    "Step Name",
    "Attempt At Step",
    "Outcome",
    "Selection",
    "Action",
    "Input",
    "KC (Default)",
    "KC Opportunity",
];

const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S%.3f";

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("log I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("log sink lock poisoned")]
    Poisoned,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LogError {
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    RowArity { line: usize, expected: usize, found: usize },
    #[error("line {line}: column {column:?}: {message}")]
    BadField {
        line: usize,
        column: String,
        message: String,
    },
}

/// Parsed log: transactions in file order plus any columns this crate does
/// not interpret, kept verbatim per row.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransactionLog {
    pub transactions: Vec<Transaction>,
    pub extra_columns: Vec<String>,
    pub extra_values: Vec<Vec<String>>,
}

impl TransactionLog {
    pub fn from_transactions(transactions: Vec<Transaction>) -> Self {
        let n = transactions.len();
        TransactionLog {
            transactions,
            extra_columns: Vec::new(),
            extra_values: vec![Vec::new(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }
}

pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

/// Inverse of [`escape_field`]. Unknown escapes are kept literally.
pub fn unescape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

pub fn format_time(ms: i64) -> String {
    DateTime::from_timestamp_millis(ms)
        .map(|t| t.naive_utc().format(TIME_FORMAT).to_string())
        .unwrap_or_else(|| ms.to_string())
}

pub fn parse_time(s: &str) -> Option<i64> {
    NaiveDateTime::parse_from_str(s, TIME_FORMAT)
        .ok()
        .map(|t| t.and_utc().timestamp_millis())
}

fn fields(t: &Transaction) -> [String; 14] {
    [
        t.student_id.clone(),
        t.session_id.clone(),
        format_time(t.timestamp),
        t.level.clone(),
        t.problem_name.clone(),
        t.problem_view.to_string(),
        t.step_name.clone(),
        t.attempt_at_step.to_string(),
        t.outcome.as_str().to_string(),
        t.sai.selection.clone(),
        t.sai.action_type.clone(),
        t.sai.input.clone(),
        t.skill.clone(),
        t.opportunity.to_string(),
    ]
}

pub fn header_line(extra_columns: &[String]) -> String {
    let mut cols: Vec<String> = COLUMNS.iter().map(|c| escape_field(c)).collect();
    cols.extend(extra_columns.iter().map(|c| escape_field(c)));
    cols.join("\t")
}

pub fn row_line(t: &Transaction, extra: &[String]) -> String {
    let mut cols: Vec<String> = fields(t).iter().map(|f| escape_field(f)).collect();
    cols.extend(extra.iter().map(|f| escape_field(f)));
    cols.join("\t")
}

/// Serializes a whole log, header included.
pub fn write_log(log: &TransactionLog) -> String {
    let mut out = header_line(&log.extra_columns);
    out.push('\n');
    for (i, t) in log.transactions.iter().enumerate() {
        let extra = log.extra_values.get(i).map(Vec::as_slice).unwrap_or(&[]);
        out.push_str(&row_line(t, extra));
        out.push('\n');
    }
    out
}

fn bad(line: usize, column: &str, message: impl Into<String>) -> LogError {
    LogError::BadField {
        line,
        column: column.into(),
        message: message.into(),
    }
}

fn build_transaction(line: usize, get: &dyn Fn(&str) -> String) -> Result<Transaction, LogError> {
    let num = |col: &str| -> Result<u32, LogError> {
        get(col)
            .parse()
            .map_err(|_| bad(line, col, "expected a non-negative integer"))
    };
    let time = get("Time");
    let timestamp = parse_time(&time).ok_or_else(|| bad(line, "Time", format!("cannot parse {time:?}")))?;
    let outcome_text = get("Outcome");
    let outcome = Outcome::parse(&outcome_text)
        .ok_or_else(|| bad(line, "Outcome", format!("unknown outcome {outcome_text:?}")))?;
    let sai =
        Sai::new(get("Selection"), get("Action"), get("Input")).map_err(|e| bad(line, "Selection", e.to_string()))?;
    Ok(Transaction {
        student_id: get("Anon Student Id"),
        session_id: get("Session Id"),
        timestamp,
        level: get("Level (Domain)"),
        problem_name: get("Problem Name"),
        problem_view: num("Problem View")?,
        step_name: get("Step Name"),
        attempt_at_step: num("Attempt At Step")?,
        outcome,
        sai,
        skill: get("KC (Default)"),
        opportunity: num("KC Opportunity")?,
    })
}

/// Parses TSV produced by [`write_log`] or any file with the same columns
/// in any order plus extras.
pub fn parse_log(source: &str) -> Result<TransactionLog, LogError> {
    let mut lines = source.split('\n');
    let header = lines
        .next()
        .filter(|h| !h.trim().is_empty())
        .ok_or_else(|| LogError::HeaderMismatch("missing header line".into()))?;
    let header: Vec<String> = header
        .strip_suffix('\r')
        .unwrap_or(header)
        .split('\t')
        .map(unescape_field)
        .collect();
    let mut position = HashMap::new();
    for (i, h) in header.iter().enumerate() {
        if position.insert(h.clone(), i).is_some() {
            return Err(LogError::HeaderMismatch(format!("duplicate column {h:?}")));
        }
    }
    for c in COLUMNS {
        if !position.contains_key(c) {
            return Err(LogError::HeaderMismatch(format!("missing column {c:?}")));
        }
    }
    let extra_idx: Vec<usize> = (0..header.len())
        .filter(|i| !COLUMNS.contains(&header[*i].as_str()))
        .collect();
    let mut log = TransactionLog {
        extra_columns: extra_idx.iter().map(|i| header[*i].clone()).collect(),
        ..Default::default()
    };
    for (n, raw) in lines.enumerate() {
        let line_no = n + 2;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.is_empty() {
            continue;
        }
        let cells: Vec<String> = raw.split('\t').map(unescape_field).collect();
        if cells.len() != header.len() {
            return Err(LogError::RowArity {
                line: line_no,
                expected: header.len(),
                found: cells.len(),
            });
        }
        let get = |col: &str| cells[position[col]].clone();
        log.transactions.push(build_transaction(line_no, &get)?);
        log.extra_values
            .push(extra_idx.iter().map(|i| cells[*i].clone()).collect());
    }
    Ok(log)
}

pub fn transaction_to_json(t: &Transaction) -> Value {
    let mut m = Map::new();
    for (col, val) in COLUMNS.iter().zip(fields(t)) {
        let v = match *col {
            "Problem View" | "Attempt At Step" | "KC Opportunity" => {
                Value::from(val.parse::<u64>().expect("numeric column"))
            }
            _ => Value::from(val),
        };
        m.insert(col.to_string(), v);
    }
    Value::Object(m)
}

/// Parses the JSON-lines mirror (one object per line, TSV column names as
/// keys).
pub fn parse_jsonl(source: &str) -> Result<Vec<Transaction>, LogError> {
    let mut out = Vec::new();
    for (n, raw) in source.lines().enumerate() {
        let line_no = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let obj: Map<String, Value> = serde_json::from_str(raw).map_err(|e| bad(line_no, "", e.to_string()))?;
        for c in COLUMNS {
            if !obj.contains_key(c) {
                return Err(bad(line_no, c, "missing field"));
            }
        }
        let get = |col: &str| match &obj[col] {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        out.push(build_transaction(line_no, &get)?);
    }
    Ok(out)
}

/// Destination for transactions. Implementations serialize concurrent
/// appends internally.
pub trait TransactionSink: Send + Sync {
    fn log(&self, t: &Transaction) -> Result<(), SinkError>;

    fn flush(&self) -> Result<(), SinkError> {
        Ok(())
    }
}

pub struct TsvSink<W: Write + Send> {
    out: Mutex<W>,
}

impl<W: Write + Send> TsvSink<W> {
    /// Writes the header immediately.
    pub fn new(mut writer: W) -> Result<Self, SinkError> {
        writeln!(writer, "{}", header_line(&[]))?;
        Ok(TsvSink {
            out: Mutex::new(writer),
        })
    }

    pub fn into_inner(self) -> W {
        self.out.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

impl TsvSink<BufWriter<File>> {
    /// Opens `path` for appending, writing the header only when the file is
    /// new or empty.
    pub fn append(path: &Path) -> Result<Self, SinkError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let empty = file.metadata()?.len() == 0;
        let mut w = BufWriter::new(file);
        if empty {
            writeln!(w, "{}", header_line(&[]))?;
        }
        Ok(TsvSink { out: Mutex::new(w) })
    }
}

impl<W: Write + Send> TransactionSink for TsvSink<W> {
    fn log(&self, t: &Transaction) -> Result<(), SinkError> {
        let mut out = self.out.lock().map_err(|_| SinkError::Poisoned)?;
        writeln!(out, "{}", row_line(t, &[]))?;
        Ok(())
    }

    fn flush(&self) -> Result<(), SinkError> {
        self.out.lock().map_err(|_| SinkError::Poisoned)?.flush()?;
        Ok(())
    }
}

pub struct JsonlSink<W: Write + Send> {
    out: Mutex<W>,
}

impl<W: Write + Send> JsonlSink<W> {
    pub fn new(writer: W) -> Self {
        JsonlSink {
            out: Mutex::new(writer),
        }
    }

    pub fn into_inner(self) -> W {
        self.out.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

impl JsonlSink<BufWriter<File>> {
    pub fn append(path: &Path) -> Result<Self, SinkError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(JsonlSink::new(BufWriter::new(file)))
    }
}

impl<W: Write + Send> TransactionSink for JsonlSink<W> {
    fn log(&self, t: &Transaction) -> Result<(), SinkError> {
        let line = serde_json::to_string(&transaction_to_json(t)).expect("json value serializes");
        let mut out = self.out.lock().map_err(|_| SinkError::Poisoned)?;
        writeln!(out, "{line}")?;
        Ok(())
    }

    fn flush(&self) -> Result<(), SinkError> {
        self.out.lock().map_err(|_| SinkError::Poisoned)?.flush()?;
        Ok(())
    }
}

/// Keeps transactions in memory.
#[derive(Default)]
pub struct MemorySink {
    rows: Mutex<Vec<Transaction>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn transactions(&self) -> Vec<Transaction> {
        self.rows.lock().map(|r| r.clone()).unwrap_or_default()
    }
}

impl TransactionSink for MemorySink {
    fn log(&self, t: &Transaction) -> Result<(), SinkError> {
        self.rows.lock().map_err(|_| SinkError::Poisoned)?.push(t.clone());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tx(input: &str) -> Transaction {
        Transaction {
            student_id: "stu".into(),
            session_id: "s1".into(),
            timestamp: 1_700_000_000_123,
            level: "fraction_arithmetic".into(),
            problem_name: "p1".into(),
            problem_view: 1,
            step_name: "answer_num".into(),
            attempt_at_step: 2,
            outcome: Outcome::Correct,
            sai: Sai::new("answer_num", "UpdateTextField", input).unwrap(),
            skill: "add".into(),
            opportunity: 3,
        }
    }

    #[test]
    fn escaping_round_trip() {
        for s in ["a\tb", "x\\ty", "line\nbreak\r", "\\", "plain"] {
            assert_eq!(unescape_field(&escape_field(s)), s);
            assert!(!escape_field(s).contains('\t'));
        }
        assert_eq!(escape_field("a\tb"), "a\\tb");
    }

    #[test]
    fn row_has_outcome_and_round_trips() {
        let t = tx("3\t4");
        let line = row_line(&t, &[]);
        assert_eq!(line.split('\t').nth(8), Some("CORRECT"));
        let log = TransactionLog::from_transactions(vec![t.clone()]);
        assert_eq!(parse_log(&write_log(&log)).unwrap(), log);
    }

    #[test]
    fn empty_body_and_errors() {
        let empty = parse_log(&format!("{}\n", header_line(&[]))).unwrap();
        assert!(empty.is_empty());
        assert!(matches!(parse_log(""), Err(LogError::HeaderMismatch(_))));
        assert!(matches!(
            parse_log("Anon Student Id\tTime\n"),
            Err(LogError::HeaderMismatch(_))
        ));
        let mut text = write_log(&TransactionLog::from_transactions(vec![tx("1")]));
        text.push_str("only\ttwo\n");
        assert_eq!(
            parse_log(&text),
            Err(LogError::RowArity {
                line: 3,
                expected: 14,
                found: 2
            })
        );
    }

    #[test]
    fn extra_columns_preserved() {
        let mut text = header_line(&["Feedback Text".to_string()]);
        text.push('\n');
        text.push_str(&row_line(&tx("5"), &["well done".to_string()]));
        text.push('\n');
        let log = parse_log(&text).unwrap();
        assert_eq!(log.extra_columns, ["Feedback Text"]);
        assert_eq!(log.extra_values[0], ["well done"]);
        assert_eq!(write_log(&log), text);
    }

    #[test]
    fn jsonl_mirror() {
        let sink = JsonlSink::new(Vec::new());
        sink.log(&tx("7")).unwrap();
        let text = String::from_utf8(sink.into_inner()).unwrap();
        assert!(text.contains("\"KC Opportunity\":3"));
        assert_eq!(parse_jsonl(&text).unwrap(), vec![tx("7")]);
    }

    #[test]
    fn tsv_sink_writes_header_once() {
        let sink = TsvSink::new(Vec::new()).unwrap();
        sink.log(&tx("1")).unwrap();
        sink.log(&tx("2")).unwrap();
        let text = String::from_utf8(sink.into_inner()).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(parse_log(&text).unwrap().len(), 2);
    }

    #[test]
    fn time_format() {
        assert_eq!(format_time(0), "1970-01-01 00:00:00.000");
        assert_eq!(parse_time(&format_time(1_700_000_000_123)), Some(1_700_000_000_123));
    }
}
