//! Per-parameter analyses over a shared network.

use std::collections::BTreeMap;

use bnsens_core::engine::query;
use bnsens_core::sensitivity::fit_bundle;
use bnsens_core::{EngineError, Evidence, Network, ParameterRef};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::paramspec::{format_parameter, format_target, Target};
use crate::report::{AnalysisConfig, Failure, ReplayEntry, Report, ReportEntry};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("the evidence has probability zero")]
    ZeroEvidenceProbability,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("thread pool: {0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),
}

/// Runs `work` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, work: impl FnOnce() -> T + Send) -> Result<T, AnalysisError> {
    match threads {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(work)),
        None => Ok(work()),
    }
}

/// Fits and reports every parameter in `params`. Entries and failures come out
/// in a fixed order whatever the scheduling.
pub fn analyze(
    net: &Network,
    evidence: &Evidence,
    target: Target,
    params: &[ParameterRef],
    config: &AnalysisConfig,
) -> Result<Report, AnalysisError> {
    if query(net, target.variable, evidence)?.evidence_prob <= 0.0 {
        return Err(AnalysisError::ZeroEvidenceProbability);
    }
    let labels = net.variable(target.variable).values();
    let outcomes: Vec<Result<ReportEntry, Failure>> = params
        .par_iter()
        .map(|p| {
            let spec = format_parameter(net, p);
            fit_bundle(net, p, target.variable, evidence, config.mode)
                .and_then(|fitted| ReportEntry::build(spec.clone(), labels, &fitted.bundle, target.focus))
                .map_err(|e| Failure {
                    parameter_spec: spec,
                    error: e.to_string(),
                })
        })
        .collect();
    let mut report = Report::new(format_target(net, target), config.clone());
    for outcome in outcomes {
        match outcome {
            Ok(entry) => report.entries.push(entry),
            Err(failure) => report.failures.push(failure),
        }
    }
    report.finish();
    Ok(report)
}

/// Recomputes a report from replayed constants; `whole_variable` requests
/// admissible deviations for entries without a focus value.
pub fn analyze_replay(
    target: String,
    entries: &[ReplayEntry],
    whole_variable: bool,
    config: &AnalysisConfig,
) -> Report {
    let mut report = Report::new(target, config.clone());
    for e in entries {
        let focus = if whole_variable { None } else { e.focus };
        match ReportEntry::build(e.parameter_spec.clone(), &e.labels, &e.bundle, focus) {
            Ok(entry) => report.entries.push(entry),
            Err(err) => report.failures.push(Failure {
                parameter_spec: e.parameter_spec.clone(),
                error: err.to_string(),
            }),
        }
    }
    report.finish();
    report
}

/// Reports of several cases with, per parameter, the number of cases that selected it.
pub fn batch_document(reports: &[Report]) -> Value {
    let mut selected: BTreeMap<&str, usize> = BTreeMap::new();
    for r in reports {
        for e in r.selected() {
            *selected.entry(&e.parameter_spec).or_default() += 1;
        }
    }
    json!({
        "format_version": crate::netparse::FORMAT_VERSION,
        "cases": reports.iter().map(Report::to_json).collect::<Vec<_>>(),
        "summary": {
            "cases": reports.len(),
            "selected_counts": selected,
        },
    })
}
