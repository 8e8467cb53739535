//! Persistent record of model runs.
//!
//! The ledger is an append-only JSON-lines file. The first line is a
//! [`LedgerHeader`]; every following line is one [`EvaluationRecord`]. Records
//! are keyed by their exact level-index vector, and a later line for the same
//! key supersedes an earlier one (a retried failure, for instance).

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design::DesignPlan;
use crate::effects::OutputMap;
use crate::error::{Error, Result};

pub const LEDGER_FORMAT: &str = "morris-ledger/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerHeader {
    pub format: String,
    pub config_hash: String,
    pub rng: String,
    pub parameters: Vec<String>,
    pub outputs: Vec<String>,
}

impl LedgerHeader {
    pub fn new(config_hash: impl Into<String>, rng: impl Into<String>, parameters: Vec<String>, outputs: Vec<String>) -> Self {
        Self {
            format: LEDGER_FORMAT.to_string(),
            config_hash: config_hash.into(),
            rng: rng.into(),
            parameters,
            outputs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

/// Timing and process details of an external run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Attempt {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub started_unix_ms: Option<u128>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_unix_ms: Option<u128>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exit_status: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub point_id: usize,
    pub levels: Vec<u32>,
    pub physical_values: Vec<f64>,
    pub outputs: BTreeMap<String, f64>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<Attempt>,
}

impl EvaluationRecord {
    pub fn ok(point_id: usize, levels: Vec<u32>, physical_values: Vec<f64>, outputs: BTreeMap<String, f64>) -> Self {
        Self {
            point_id,
            levels,
            physical_values,
            outputs,
            status: Status::Ok,
            attempt: None,
        }
    }

    pub fn failed(point_id: usize, levels: Vec<u32>, physical_values: Vec<f64>, diagnostic: impl Into<String>) -> Self {
        Self {
            point_id,
            levels,
            physical_values,
            outputs: BTreeMap::new(),
            status: Status::Failed,
            attempt: Some(Attempt {
                diagnostic: Some(diagnostic.into()),
                ..Attempt::default()
            }),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    /// Demote an ok record that lacks a declared output or carries a non-finite one.
    pub fn enforce_outputs(mut self, declared: &[String]) -> Self {
        if self.status == Status::Ok {
            let bad: Vec<&String> = declared
                .iter()
                .filter(|name| !self.outputs.get(*name).is_some_and(|v| v.is_finite()))
                .collect();
            if !bad.is_empty() {
                let msg = format!("missing or non-finite outputs: {}", join(&bad));
                self.outputs.retain(|_, v| v.is_finite());
                self.status = Status::Failed;
                self.attempt.get_or_insert_with(Attempt::default).diagnostic = Some(msg);
            }
        }
        self
    }
}

fn join(names: &[&String]) -> String {
    names.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
}

/// In-memory view of a ledger, optionally backed by a file.
#[derive(Debug)]
pub struct Ledger {
    header: LedgerHeader,
    path: Option<PathBuf>,
    writer: Option<BufWriter<File>>,
    records: Vec<EvaluationRecord>,
    latest: HashMap<Vec<u32>, usize>,
}

impl Ledger {
    pub fn in_memory(header: LedgerHeader) -> Self {
        Self {
            header,
            path: None,
            writer: None,
            records: Vec::new(),
            latest: HashMap::new(),
        }
    }

    /// Open for appending, creating the file if needed. An existing file must
    /// carry the same header. A torn final line left by an interrupted write
    /// is dropped.
    pub fn open(path: &Path, header: LedgerHeader) -> Result<Self> {
        if path.exists() && std::fs::metadata(path)?.len() > 0 {
            truncate_torn_tail(path)?;
            let mut ledger = Self::load(path)?;
            if ledger.header != header {
                return Err(Error::LedgerMismatch {
                    path: path.to_path_buf(),
                    reason: describe_mismatch(&ledger.header, &header),
                });
            }
            let file = OpenOptions::new().append(true).open(path)?;
            ledger.writer = Some(BufWriter::new(file));
            return Ok(ledger);
        }
        let mut writer = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut writer, &header)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        let mut ledger = Self::in_memory(header);
        ledger.path = Some(path.to_path_buf());
        ledger.writer = Some(writer);
        Ok(ledger)
    }

    /// Read-only load.
    pub fn load(path: &Path) -> Result<Self> {
        let malformed = |line: usize, e: &dyn std::fmt::Display| Error::Malformed {
            path: path.to_path_buf(),
            message: format!("line {line}: {e}"),
        };
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| malformed(1, &"empty ledger"))??;
        let header: LedgerHeader = serde_json::from_str(&header_line).map_err(|e| malformed(1, &e))?;
        if header.format != LEDGER_FORMAT {
            return Err(malformed(1, &format!("unsupported format `{}`", header.format)));
        }
        let mut ledger = Self::in_memory(header);
        ledger.path = Some(path.to_path_buf());
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: EvaluationRecord = serde_json::from_str(&line).map_err(|e| malformed(n + 2, &e))?;
            ledger.insert(record);
        }
        Ok(ledger)
    }

    pub fn header(&self) -> &LedgerHeader {
        &self.header
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn insert(&mut self, record: EvaluationRecord) {
        self.latest.insert(record.levels.clone(), self.records.len());
        self.records.push(record);
    }

    /// Append and persist a batch of records.
    pub fn append(&mut self, records: Vec<EvaluationRecord>) -> Result<()> {
        if let Some(w) = self.writer.as_mut() {
            for r in &records {
                serde_json::to_writer(&mut *w, r)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        for r in records {
            self.insert(r);
        }
        Ok(())
    }

    pub fn lookup(&self, levels: &[u32]) -> Option<&EvaluationRecord> {
        self.latest.get(levels).map(|&i| &self.records[i])
    }

    /// Every line ever appended, superseded ones included.
    pub fn records(&self) -> &[EvaluationRecord] {
        &self.records
    }

    /// Number of model runs recorded.
    pub fn run_count(&self) -> usize {
        self.records.len()
    }

    /// Current record for each plan point, in point-id order.
    pub fn records_for_plan<'a>(&'a self, plan: &DesignPlan) -> Result<Vec<&'a EvaluationRecord>> {
        let mut missing = Vec::new();
        let mut failed = Vec::new();
        let mut out = Vec::with_capacity(plan.points.len());
        for (id, p) in plan.points.iter().enumerate() {
            match self.lookup(p.levels()) {
                None => missing.push(id),
                Some(r) if !r.is_ok() => failed.push(id),
                Some(r) => out.push(r),
            }
        }
        if !missing.is_empty() {
            return Err(Error::IncompleteEvaluation { point_ids: missing });
        }
        if !failed.is_empty() {
            return Err(Error::EvaluationFailed { point_ids: failed });
        }
        Ok(out)
    }

    /// Raw output values keyed by plan point id.
    pub fn outputs_for_plan(&self, plan: &DesignPlan, output: &str) -> Result<OutputMap> {
        let records = self.records_for_plan(plan)?;
        let mut map = OutputMap::with_capacity(records.len());
        let mut missing = Vec::new();
        for (id, r) in records.iter().enumerate() {
            match r.outputs.get(output) {
                Some(&v) => {
                    map.insert(id, v);
                }
                None => missing.push(id),
            }
        }
        if !missing.is_empty() {
            return Err(Error::IncompleteEvaluation { point_ids: missing });
        }
        Ok(map)
    }
}

fn describe_mismatch(found: &LedgerHeader, expected: &LedgerHeader) -> String {
    if found.config_hash != expected.config_hash {
        format!("config hash {} != {}", found.config_hash, expected.config_hash)
    } else if found.rng != expected.rng {
        format!("rng `{}` != `{}`", found.rng, expected.rng)
    } else {
        "parameter or output names differ".into()
    }
}

fn truncate_torn_tail(path: &Path) -> Result<()> {
    let mut file = OpenOptions::new().read(true).write(true).open(path)?;
    let len = file.metadata()?.len();
    let mut last = [0u8; 1];
    file.seek(SeekFrom::Start(len - 1))?;
    file.read_exact(&mut last)?;
    if last[0] == b'\n' {
        return Ok(());
    }
    let mut bytes = Vec::with_capacity(len as usize);
    file.seek(SeekFrom::Start(0))?;
    file.read_to_end(&mut bytes)?;
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    file.set_len(keep as u64)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> LedgerHeader {
        LedgerHeader::new("abc", "rng", vec!["x".into()], vec!["y".into()])
    }

    fn rec(id: usize, level: u32, y: f64) -> EvaluationRecord {
        EvaluationRecord::ok(id, vec![level], vec![level as f64], [("y".to_string(), y)].into())
    }

    #[test]
    fn reopen_keeps_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.jsonl");
        let mut l = Ledger::open(&path, header()).unwrap();
        l.append(vec![rec(0, 0, 1.0), rec(1, 1, 2.0)]).unwrap();
        drop(l);
        let l = Ledger::open(&path, header()).unwrap();
        assert_eq!(l.run_count(), 2);
        assert_eq!(l.lookup(&[1]).unwrap().outputs["y"], 2.0);
    }

    #[test]
    fn later_record_supersedes() {
        let mut l = Ledger::in_memory(header());
        l.append(vec![EvaluationRecord::failed(0, vec![3], vec![3.0], "boom")]).unwrap();
        l.append(vec![rec(0, 3, 9.0)]).unwrap();
        assert!(l.lookup(&[3]).unwrap().is_ok());
        assert_eq!(l.run_count(), 2);
    }

    #[test]
    fn mismatched_header_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.jsonl");
        Ledger::open(&path, header()).unwrap();
        let mut other = header();
        other.config_hash = "def".into();
        assert!(matches!(Ledger::open(&path, other), Err(Error::LedgerMismatch { .. })));
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.jsonl");
        let mut l = Ledger::open(&path, header()).unwrap();
        l.append(vec![rec(0, 0, 1.0)]).unwrap();
        drop(l);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"point_id\":1,\"lev").unwrap();
        drop(f);
        let mut l = Ledger::open(&path, header()).unwrap();
        assert_eq!(l.run_count(), 1);
        l.append(vec![rec(1, 1, 2.0)]).unwrap();
        drop(l);
        assert_eq!(Ledger::load(&path).unwrap().run_count(), 2);
    }

    #[test]
    fn non_finite_outputs_demote_record() {
        let r = EvaluationRecord::ok(0, vec![0], vec![0.0], [("y".to_string(), f64::NAN)].into())
            .enforce_outputs(&["y".to_string()]);
        assert_eq!(r.status, Status::Failed);
        let r = rec(0, 0, 1.0).enforce_outputs(&["y".to_string(), "z".to_string()]);
        assert_eq!(r.status, Status::Failed);
        assert!(r.attempt.unwrap().diagnostic.unwrap().contains('z'));
    }
}
