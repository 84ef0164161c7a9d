//! Experiment runner for `sqfn-core`: scenarios in, JSON or CSV reports out.

pub mod output;
pub mod report;
pub mod scenario;
pub mod suites;

use rayon::prelude::*;
use thiserror::Error;

pub use report::{CheckResult, Report, Status};
pub use scenario::{Model, Scenario, Suite};

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] sqfn_core::error::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl LabError {
    pub fn is_config(&self) -> bool {
        matches!(self, LabError::Core(sqfn_core::error::Error::Config(_)))
    }
}

/// Runs the scenario's suites in parallel and merges their results in the
/// order the suites were listed. The scenario is validated first, so a bad
/// frequency family never reaches a computation.
pub fn run_suite(scenario: &Scenario) -> Result<Report, LabError> {
    let resolved = scenario.resolve()?;
    let suites = if scenario.suites.is_empty() {
        Suite::ALL.to_vec()
    } else {
        scenario.suites.clone()
    };
    let outputs = suites
        .par_iter()
        .map(|&s| suites::run(s, scenario, &resolved))
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = Report {
        scenario: scenario.clone(),
        results: Vec::new(),
        tables: Vec::new(),
        artifacts: Default::default(),
    };
    for out in outputs {
        report.results.extend(out.results);
        report.tables.extend(out.tables);
        report.artifacts.extend(out.artifacts);
    }
    Ok(report)
}
