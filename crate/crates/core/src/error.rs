use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Odd level counts above two break the equiprobable reflection rule.
    #[error("invalid grid: {levels} levels (must be 2 or an even number)")]
    InvalidGrid { levels: u32 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("value {value} outside [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("incomplete evaluation: no output for point ids {}", format_ids(.point_ids))]
    IncompleteEvaluation { point_ids: Vec<usize> },

    #[error("evaluation failed for point ids {}", format_ids(.point_ids))]
    EvaluationFailed { point_ids: Vec<usize> },

    #[error("cannot aggregate an empty group of effects")]
    EmptyGroup,

    #[error("classification refused: sigma needs at least 2 replicates, got {n}")]
    ClassificationRefused { n: usize },

    #[error("ratio undefined: mu_star is zero")]
    UndefinedRatio,

    #[error("domain error at point {point_id}: {reason}")]
    Domain { point_id: usize, reason: String },

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("stale plan: plan was built for config {plan_hash}, current config is {config_hash}")]
    StalePlan { plan_hash: String, config_hash: String },

    #[error("ledger {path} does not belong to this experiment: {reason}")]
    LedgerMismatch { path: PathBuf, reason: String },

    #[error("malformed file {path}: {message}")]
    Malformed { path: PathBuf, message: String },

    #[error("nothing to plot: {0}")]
    EmptyPlot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_ids(ids: &[usize]) -> String {
    const SHOWN: usize = 20;
    let mut s = ids
        .iter()
        .take(SHOWN)
        .map(|id| id.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    if ids.len() > SHOWN {
        s.push_str(&format!(", ... ({} total)", ids.len()));
    }
    s
}
