//! Evaluating design points with exact-key caching.

pub mod analytic;
pub mod external;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::DesignPlan;
use crate::error::{Error, Result};
use crate::ledger::{EvaluationRecord, Ledger};

pub use analytic::AnalyticModel;
pub use external::{run_external_batch, ExternalModelSpec, PendingPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Analytic {
        function: AnalyticModel,
        #[serde(default = "default_output")]
        output: String,
    },
    External(ExternalModelSpec),
}

fn default_output() -> String {
    "y".to_string()
}

impl Model {
    pub fn output_names(&self) -> Vec<String> {
        match self {
            Model::Analytic { output, .. } => vec![output.clone()],
            Model::External(spec) => spec.outputs.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Concurrent workers; overrides the external spec's `max_parallel` when set.
    pub jobs: Option<usize>,
    pub timeout_s: Option<f64>,
    pub scratch_dir: Option<PathBuf>,
    /// Analytic records are persisted in chunks of this size.
    pub chunk: usize,
    /// Stop after this many new evaluations; used to exercise resume.
    pub limit: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            jobs: None,
            timeout_s: None,
            scratch_dir: None,
            chunk: 1024,
            limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalStats {
    /// Model evaluations performed in this pass.
    pub invocations: usize,
    pub cached: usize,
    pub failed: usize,
    /// External processes launched.
    pub processes: usize,
}

/// Evaluate every distinct plan point that has no successful record yet.
pub fn evaluate_plan(plan: &DesignPlan, model: &Model, ledger: &mut Ledger, opts: &EvalOptions) -> Result<EvalStats> {
    let params = &plan.parameters;
    let mut stats = EvalStats::default();
    let mut pending = Vec::new();
    for (id, p) in plan.points.iter().enumerate() {
        match ledger.lookup(p.levels()) {
            Some(r) if r.is_ok() => stats.cached += 1,
            _ => pending.push(PendingPoint {
                point_id: id,
                levels: p.levels().to_vec(),
                physical_values: p.physical(params),
            }),
        }
    }
    if let Some(limit) = opts.limit {
        pending.truncate(limit);
    }
    let names = model.output_names();

    match model {
        Model::Analytic { function, output } => {
            function.check_dimension(params.len())?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(opts.jobs.unwrap_or(0))
                .build()
                .map_err(|e| Error::InvalidDesign(format!("cannot start worker pool: {e}")))?;
            for chunk in pending.chunks(opts.chunk.max(1)) {
                let records: Vec<EvaluationRecord> = pool.install(|| {
                    chunk
                        .par_iter()
                        .map(|p| {
                            let x = plan.points[p.point_id].coords(params);
                            let y = function.eval(&x);
                            EvaluationRecord::ok(
                                p.point_id,
                                p.levels.clone(),
                                p.physical_values.clone(),
                                BTreeMap::from([(output.clone(), y)]),
                            )
                            .enforce_outputs(&names)
                        })
                        .collect()
                });
                stats.invocations += records.len();
                stats.failed += records.iter().filter(|r| !r.is_ok()).count();
                ledger.append(records)?;
            }
        }
        Model::External(spec) => {
            let mut spec = spec.clone();
            if let Some(t) = opts.timeout_s {
                spec.timeout_s = t;
            }
            let workers = opts.jobs.unwrap_or(spec.max_parallel).max(1);
            let scratch = external::scratch_dir(opts.scratch_dir.as_deref())?;
            let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
            let batches: Vec<&[PendingPoint]> = pending.chunks(spec.batch_size.max(1)).collect();
            // Each wave runs in parallel and is persisted in point-id order, so
            // the ledger does not depend on completion order.
            for wave in batches.chunks(workers) {
                let mut records: Vec<EvaluationRecord> = std::thread::scope(|s| {
                    let handles: Vec<_> = wave
                        .iter()
                        .map(|batch| s.spawn(|| run_external_batch(batch, &names, &spec, &scratch)))
                        .collect();
                    handles.into_iter().flat_map(|h| h.join().expect("batch worker panicked")).collect()
                });
                records.sort_by_key(|r| r.point_id);
                stats.processes += wave.len();
                stats.invocations += records.len();
                stats.failed += records.iter().filter(|r| !r.is_ok()).count();
                ledger.append(records)?;
            }
            let _ = std::fs::remove_dir(&scratch);
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{sample_first_order, GridPoint, ParameterSpec};
    use crate::effects::analyze;
    use crate::ledger::LedgerHeader;

    fn params(k: usize) -> Vec<ParameterSpec> {
        (0..k).map(|i| ParameterSpec::new(format!("x{i}"), 0.0, 10.0, 10).unwrap()).collect()
    }

    fn header() -> LedgerHeader {
        LedgerHeader::new("h", "r", vec![], vec!["y".into()])
    }

    fn linear(k: usize) -> Model {
        Model::Analytic {
            function: AnalyticModel::Linear { a: (0..k).map(|i| i as f64 + 1.0).collect(), b: 0.0 },
            output: "y".into(),
        }
    }

    #[test]
    fn second_pass_hits_cache() {
        let plan = sample_first_order(&params(24), 10, 3).unwrap();
        let mut ledger = Ledger::in_memory(header());
        let first = evaluate_plan(&plan, &linear(24), &mut ledger, &EvalOptions::default()).unwrap();
        assert_eq!(first.invocations, plan.distinct_points());
        let second = evaluate_plan(&plan, &linear(24), &mut ledger, &EvalOptions::default()).unwrap();
        assert_eq!(second.invocations, 0);
        assert_eq!(second.cached, plan.distinct_points());
    }

    #[test]
    fn shared_point_is_evaluated_once() {
        let k = 3;
        let plan = DesignPlan::from_trajectory_starts(
            params(k),
            &[(GridPoint(vec![1, 2, 3]), vec![0, 1, 2]), (GridPoint(vec![6, 2, 3]), vec![2, 0, 1])],
            0,
        )
        .unwrap();
        let mut ledger = Ledger::in_memory(header());
        let stats = evaluate_plan(&plan, &linear(k), &mut ledger, &EvalOptions::default()).unwrap();
        assert_eq!(stats.invocations, 2 * (k + 1) - 1);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let plan = sample_first_order(&params(6), 40, 12).unwrap();
        let model = Model::Analytic {
            function: AnalyticModel::IshigamiLike { a: 7.0, b: 0.1 },
            output: "y".into(),
        };
        let run = |jobs| {
            let mut ledger = Ledger::in_memory(header());
            let opts = EvalOptions { jobs: Some(jobs), chunk: 7, ..EvalOptions::default() };
            evaluate_plan(&plan, &model, &mut ledger, &opts).unwrap();
            let outputs = ledger.outputs_for_plan(&plan, "y").unwrap();
            (ledger.records().to_vec(), analyze(&plan, &outputs).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let plan = sample_first_order(&params(3), 2, 0).unwrap();
        let mut ledger = Ledger::in_memory(header());
        assert!(evaluate_plan(&plan, &linear(2), &mut ledger, &EvalOptions::default()).is_err());
    }
}
