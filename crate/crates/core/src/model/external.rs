//! File-based protocol for external simulators.
//!
//! For each batch a request CSV is written with header `point_id,<parameter
//! names...>` and one row of physical values per point. The command is run
//! with `{request}` and `{response}` substituted in its arguments and must
//! write a response CSV with header `point_id,<output names...>`. Rows may come
//! back in any order; each requested id must appear exactly once.
//!
//! A nonzero exit status fails the whole batch even if a response file exists.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::ledger::{Attempt, EvaluationRecord, Status};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalModelSpec {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_one")]
    pub max_parallel: usize,
    /// Points per invocation.
    #[serde(default = "default_one")]
    pub batch_size: usize,
}

fn default_timeout() -> f64 {
    3600.0
}

fn default_one() -> usize {
    1
}

/// A point waiting for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingPoint {
    pub point_id: usize,
    pub levels: Vec<u32>,
    pub physical_values: Vec<f64>,
}

static BATCH_COUNTER: AtomicU64 = AtomicU64::new(0);

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Run one batch through the external command and turn the response into records.
pub fn run_external_batch(
    points: &[PendingPoint],
    parameter_names: &[String],
    spec: &ExternalModelSpec,
    scratch_dir: &Path,
) -> Vec<EvaluationRecord> {
    let started = now_ms();
    let batch = BATCH_COUNTER.fetch_add(1, Ordering::Relaxed);
    let stem = format!("batch-{}-{}", std::process::id(), batch);
    let request = scratch_dir.join(format!("{stem}.request.csv"));
    let response = scratch_dir.join(format!("{stem}.response.csv"));
    let log = scratch_dir.join(format!("{stem}.log"));

    let outcome = invoke(points, parameter_names, spec, &request, &response, &log);
    let finished = now_ms();
    let records = match outcome {
        Err((exit_status, msg)) => points
            .iter()
            .map(|p| failed(p, msg.clone(), exit_status))
            .collect(),
        Ok(rows) => collect_rows(points, &spec.outputs, rows),
    };
    for f in [&request, &response, &log] {
        let _ = std::fs::remove_file(f);
    }
    records
        .into_iter()
        .map(|mut r| {
            let attempt = r.attempt.get_or_insert_with(Attempt::default);
            attempt.started_unix_ms = Some(started);
            attempt.finished_unix_ms = Some(finished);
            if r.status == Status::Ok {
                attempt.exit_status = Some(0);
            }
            r
        })
        .collect()
}

fn failed(p: &PendingPoint, msg: String, exit_status: Option<i32>) -> EvaluationRecord {
    let mut r = EvaluationRecord::failed(p.point_id, p.levels.clone(), p.physical_values.clone(), msg);
    if let Some(a) = r.attempt.as_mut() {
        a.exit_status = exit_status;
    }
    r
}

type Rows = HashMap<usize, Vec<Result<BTreeMap<String, f64>, String>>>;
type BatchError = (Option<i32>, String);

fn invoke(
    points: &[PendingPoint],
    parameter_names: &[String],
    spec: &ExternalModelSpec,
    request: &Path,
    response: &Path,
    log: &Path,
) -> Result<Rows, BatchError> {
    write_request(request, points, parameter_names).map_err(|e| (None, format!("cannot write request file: {e}")))?;
    let (program, args) = spec
        .command
        .split_first()
        .ok_or((None, "external command is empty".to_string()))?;
    let substitute = |s: &str| {
        s.replace("{request}", &request.to_string_lossy())
            .replace("{response}", &response.to_string_lossy())
    };
    let log_file = File::create(log).map_err(|e| (None, format!("cannot create log file: {e}")))?;
    let log_err = log_file.try_clone().map_err(|e| (None, e.to_string()))?;
    let mut child = Command::new(substitute(program))
        .args(args.iter().map(|a| substitute(a)))
        .stdin(Stdio::null())
        .stdout(log_file)
        .stderr(log_err)
        .spawn()
        .map_err(|e| (None, format!("cannot start `{program}`: {e}")))?;

    let deadline = Instant::now() + Duration::from_secs_f64(spec.timeout_s.max(0.0));
    let mut pause = Duration::from_millis(2);
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err((None, format!("timed out after {} s", spec.timeout_s)));
            }
            Ok(None) => {
                std::thread::sleep(pause);
                pause = (pause * 2).min(Duration::from_millis(50));
            }
            Err(e) => return Err((None, format!("cannot wait for child: {e}"))),
        }
    };
    if !status.success() {
        let tail = log_tail(log);
        let code = status.code();
        let what = code.map_or_else(|| "killed by signal".to_string(), |c| format!("exit status {c}"));
        return Err((code, if tail.is_empty() { what } else { format!("{what}: {tail}") }));
    }
    read_response(response, &spec.outputs).map_err(|msg| (Some(0), msg))
}

fn log_tail(log: &Path) -> String {
    let text = std::fs::read_to_string(log).unwrap_or_default();
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    lines[lines.len().saturating_sub(3)..].join(" | ")
}

fn write_request(path: &Path, points: &[PendingPoint], parameter_names: &[String]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["point_id".to_string()];
    header.extend(parameter_names.iter().cloned());
    w.write_record(&header)?;
    for p in points {
        let mut row = vec![p.point_id.to_string()];
        // `{}` on f64 gives the shortest round-trip form with a decimal dot.
        row.extend(p.physical_values.iter().map(|v| format!("{v}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_response(path: &Path, outputs: &[String]) -> Result<Rows, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("cannot read response file: {e}"))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| format!("bad response header: {e}"))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.first().map(String::as_str) != Some("point_id") {
        return Err("response header must start with point_id".into());
    }
    let got: HashSet<&String> = header[1..].iter().collect();
    let want: HashSet<&String> = outputs.iter().collect();
    if got != want || header.len() - 1 != outputs.len() {
        return Err(format!(
            "response outputs [{}] do not match declared outputs [{}]",
            header[1..].join(", "),
            outputs.join(", ")
        ));
    }
    let mut rows: Rows = HashMap::new();
    for row in rdr.records() {
        let Ok(row) = row else { continue };
        let Some(id) = row.get(0).and_then(|s| s.parse::<usize>().ok()) else {
            continue;
        };
        let parsed = header[1..]
            .iter()
            .zip(row.iter().skip(1))
            .map(|(name, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok((name.clone(), v)),
                _ => Err(format!("non-numeric value `{cell}` for `{name}`")),
            })
            .collect::<Result<BTreeMap<_, _>, _>>()
            .and_then(|m| {
                if m.len() == outputs.len() {
                    Ok(m)
                } else {
                    Err("response row is short".to_string())
                }
            });
        rows.entry(id).or_default().push(parsed);
    }
    Ok(rows)
}

fn collect_rows(points: &[PendingPoint], outputs: &[String], mut rows: Rows) -> Vec<EvaluationRecord> {
    points
        .iter()
        .map(|p| match rows.remove(&p.point_id) {
            None => failed(p, "point missing from response".into(), Some(0)),
            Some(mut v) if v.len() == 1 => match v.pop().unwrap() {
                Ok(values) => EvaluationRecord::ok(p.point_id, p.levels.clone(), p.physical_values.clone(), values)
                    .enforce_outputs(outputs),
                Err(msg) => failed(p, msg, Some(0)),
            },
            Some(v) => failed(p, format!("point appears {} times in response", v.len()), Some(0)),
        })
        .collect()
}

/// Private scratch directory for request/response files.
pub fn scratch_dir(base: Option<&Path>) -> std::io::Result<PathBuf> {
    let base = base.map(Path::to_path_buf).unwrap_or_else(std::env::temp_dir);
    let dir = base.join(format!("morris-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
