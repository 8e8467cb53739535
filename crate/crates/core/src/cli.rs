//! `morris` command line: plan, run, analyze, report.
//!
//! Exit codes: 0 ok, 1 usage or config error, 2 evaluation failures,
//! 3 incomplete ledger.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::classify::{classify_all, ZoneLabel};
use crate::config::ExperimentConfig;
use crate::design::{self, DesignMode, DesignPlan};
use crate::effects::{self, EffectKey, EffectsSummary};
use crate::error::{Error, Result};
use crate::ledger::{Ledger, LedgerHeader};
use crate::model::{evaluate_plan, EvalOptions};
use crate::report::{self, Presentation};
use crate::transforms;

pub const PLAN_FORMAT: &str = "morris-plan/1";

#[derive(Debug, Parser)]
#[command(name = "morris", version, about = "Elementary-effects screening for black-box models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the design and write the plan file.
    Plan(PlanArgs),
    /// Evaluate every plan point not yet in the ledger.
    Run(RunArgs),
    /// Compute effects and summary tables for every configured analysis.
    Analyze(AnalyzeArgs),
    /// Classify effects into zones and draw scatter plots.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Where to write the plan.
    #[arg(long)]
    pub plan: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub ledger: PathBuf,
    /// Concurrent model invocations.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Per-invocation timeout for external models.
    #[arg(long = "timeout-s")]
    pub timeout_s: Option<f64>,
    /// Directory for request/response files (defaults to the system temp dir).
    #[arg(long)]
    pub scratch_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub ledger: PathBuf,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Presentations to draw; defaults to those configured per analysis.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub presentation: Vec<Presentation>,
}

/// Plan file: config echo and hash around the generated design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub format: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub plan: DesignPlan,
}

impl PlanFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: PlanFile = serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if file.format != PLAN_FORMAT {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                message: format!("unsupported plan format `{}`", file.format),
            });
        }
        file.plan.validate()?;
        Ok(file)
    }

    /// Refuse plans generated from a different experiment definition.
    pub fn check_against(&self, config: &ExperimentConfig) -> Result<()> {
        let current = config.config_hash();
        if self.config_hash != current {
            return Err(Error::StalePlan {
                plan_hash: self.config_hash.clone(),
                config_hash: current,
            });
        }
        Ok(())
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::EvaluationFailed { .. } => 2,
        Error::IncompleteEvaluation { .. } => 3,
        _ => 1,
    }
}

/// Parse arguments, run the command, and return the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Plan(a) => cmd_plan(a, out),
        Command::Run(a) => cmd_run(a, out),
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::Report(a) => cmd_report(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn cmd_plan(args: &PlanArgs, out: &mut dyn Write) -> Result<i32> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.design.seed = seed;
    }
    let params = config.parameter_specs();
    let plan = design::sample(&params, config.design.mode, config.design.replicates, config.design.seed)?;
    let k = params.len();
    let r = config.design.replicates;
    let formula = match config.design.mode {
        DesignMode::FirstOrder => format!("r(k+1) = {}", design::first_order_runs(k, r)),
        DesignMode::SecondOrder => format!("r(1+k+k(k-1)/2) = {}", design::second_order_runs(k, r)),
    };
    let file = PlanFile {
        format: PLAN_FORMAT.to_string(),
        config_hash: config.config_hash(),
        config,
        plan,
    };
    write_json(&args.plan, &file)?;
    writeln!(
        out,
        "{} parameters, {}, r={}, seed={}: {} runs [{}], {} distinct points",
        k,
        file.plan.mode(),
        r,
        file.plan.seed,
        file.plan.total_runs(),
        formula,
        file.plan.distinct_points()
    )?;
    Ok(0)
}

fn ledger_header(config: &ExperimentConfig, plan: &DesignPlan) -> LedgerHeader {
    LedgerHeader::new(config.config_hash(), plan.rng.clone(), config.parameter_names(), config.model.output_names())
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let config = ExperimentConfig::load(&args.config)?;
    let plan_file = PlanFile::load(&args.plan)?;
    plan_file.check_against(&config)?;
    let plan = &plan_file.plan;
    let mut ledger = Ledger::open(&args.ledger, ledger_header(&config, plan))?;
    let opts = EvalOptions {
        jobs: args.jobs,
        timeout_s: args.timeout_s,
        scratch_dir: args.scratch_dir.clone(),
        ..EvalOptions::default()
    };
    let stats = evaluate_plan(plan, &config.model, &mut ledger, &opts)?;
    writeln!(
        out,
        "{} new evaluations, {} cached, {} failed ({} distinct points, ledger holds {} runs)",
        stats.invocations,
        stats.cached,
        stats.failed,
        plan.distinct_points(),
        ledger.run_count()
    )?;
    if stats.failed > 0 {
        let failed: Vec<usize> = plan
            .points
            .iter()
            .enumerate()
            .filter(|(_, p)| ledger.lookup(p.levels()).is_some_and(|r| !r.is_ok()))
            .map(|(id, _)| id)
            .collect();
        for id in failed.iter().take(10) {
            if let Some(d) = ledger
                .lookup(plan.points[*id].levels())
                .and_then(|r| r.attempt.as_ref())
                .and_then(|a| a.diagnostic.as_deref())
            {
                writeln!(out, "  point {id}: {d}")?;
            }
        }
        return Err(Error::EvaluationFailed { point_ids: failed });
    }
    Ok(0)
}

fn file_for(out_dir: &Path, analysis: &str, suffix: &str) -> PathBuf {
    out_dir.join(format!("{analysis}.{suffix}"))
}

pub fn cmd_analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<i32> {
    let config = ExperimentConfig::load(&args.config)?;
    let plan_file = PlanFile::load(&args.plan)?;
    plan_file.check_against(&config)?;
    let plan = &plan_file.plan;
    let ledger = Ledger::load(&args.ledger)?;
    if ledger.header() != &ledger_header(&config, plan) {
        return Err(Error::LedgerMismatch {
            path: args.ledger.clone(),
            reason: "header does not match the config and plan".into(),
        });
    }
    let records = ledger.records_for_plan(plan)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let runs_before = ledger.run_count();

    let mut derived_columns: Vec<(String, effects::OutputMap)> = Vec::new();
    let mut failures = Vec::new();
    for analysis in config.resolve_analyses()? {
        let values = match transforms::derive_outputs(plan, &ledger, &analysis.model_output, &analysis.chain)? {
            Ok(v) => v,
            Err(failure) => {
                write!(out, "analysis `{}`: {failure}", analysis.name)?;
                failures.push(analysis.name.clone());
                continue;
            }
        };
        let result = effects::analyze(plan, &values)?;
        report::write_effects_csv(&file_for(&args.out_dir, &analysis.name, "effects.csv"), &result.samples)?;
        report::write_summary_csv(&file_for(&args.out_dir, &analysis.name, "summary.csv"), &result.summaries)?;
        let top = result
            .first_order()
            .max_by(|a, b| a.mu_star.total_cmp(&b.mu_star))
            .map(|s| format!(", largest mu* {} at parameter {}", s.mu_star, s.key.label()))
            .unwrap_or_default();
        writeln!(
            out,
            "analysis `{}`: {} effect groups over {} replicates{}",
            analysis.name,
            result.summaries.len(),
            plan.replicates,
            top
        )?;
        if !config.model.output_names().contains(&analysis.name) {
            derived_columns.push((analysis.name.clone(), values));
        }
    }

    // Ledger export with derived outputs as extra columns.
    let mut w = csv::Writer::from_path(args.out_dir.join("ledger_export.csv"))?;
    let outputs = config.model.output_names();
    let mut header = vec!["point_id".to_string()];
    header.extend(config.parameter_names());
    header.extend(outputs.iter().cloned());
    header.extend(derived_columns.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    for (id, rec) in records.iter().enumerate() {
        let mut row = vec![id.to_string()];
        row.extend(rec.physical_values.iter().map(|v| format!("{v}")));
        row.extend(outputs.iter().map(|o| rec.outputs.get(o).map(|v| format!("{v}")).unwrap_or_default()));
        row.extend(derived_columns.iter().map(|(_, m)| format!("{}", m[&id])));
        w.write_record(&row)?;
    }
    w.flush()?;

    debug_assert_eq!(ledger.run_count(), runs_before);
    writeln!(out, "ledger runs unchanged: {runs_before}")?;
    if !failures.is_empty() {
        return Err(Error::Config {
            path: "analyses".into(),
            message: format!("transforms failed for {}", failures.join(", ")),
        });
    }
    Ok(0)
}

fn zones_for(summaries: &[EffectsSummary], negligible_rel: f64) -> Vec<Option<ZoneLabel>> {
    match classify_all(summaries, negligible_rel) {
        Ok(z) => z.into_iter().map(Some).collect(),
        Err(_) => vec![None; summaries.len()],
    }
}

pub fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> Result<i32> {
    let config = ExperimentConfig::load(&args.config)?;
    let params = config.parameter_specs();
    for analysis in config.resolve_analyses()? {
        let summaries = report::read_summary_csv(&file_for(&args.out_dir, &analysis.name, "summary.csv"))?;
        let (first, second): (Vec<EffectsSummary>, Vec<EffectsSummary>) =
            summaries.into_iter().partition(|s| matches!(s.key, EffectKey::First(_)));
        if let Some(bad) = first.iter().chain(&second).find(|s| s.key_out_of_range(params.len())) {
            return Err(Error::Malformed {
                path: file_for(&args.out_dir, &analysis.name, "summary.csv"),
                message: format!("effect {} does not fit {} parameters", bad.key.label(), params.len()),
            });
        }
        let mut zones = zones_for(&first, config.negligible_rel);
        zones.extend(zones_for(&second, config.negligible_rel));
        if zones.iter().any(Option::is_none) {
            writeln!(out, "analysis `{}`: fewer than 2 replicates, zones left blank", analysis.name)?;
        }
        let all: Vec<EffectsSummary> = first.iter().chain(&second).cloned().collect();
        report::write_zones_csv(&file_for(&args.out_dir, &analysis.name, "zones.csv"), &all, &zones, &params)?;

        let presentations = if args.presentation.is_empty() {
            analysis.presentations.clone()
        } else {
            args.presentation.clone()
        };
        let mut groups = vec![("first", &first)];
        if config.design.mode == DesignMode::SecondOrder {
            groups.push(("second", &second));
        }
        for presentation in &presentations {
            for (kind, group) in &groups {
                let path = file_for(&args.out_dir, &analysis.name, &format!("{kind}.{}.svg", presentation.as_str()));
                let title = format!("{} ({kind}-order effects)", analysis.name);
                report::emit_scatter_svg(group, *presentation, &path, &title)?;
                writeln!(out, "wrote {}", path.display())?;
            }
        }
    }
    Ok(0)
}

impl EffectsSummary {
    fn key_out_of_range(&self, k: usize) -> bool {
        match self.key {
            EffectKey::First(i) => i >= k,
            EffectKey::Second(i, j) => i >= j || j >= k,
        }
    }
}
