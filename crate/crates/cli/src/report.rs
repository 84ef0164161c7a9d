use std::collections::BTreeMap;

use serde::Serialize;

use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// Reported, not asserted.
    Info,
}

/// Direction of the comparison between `value` and `bound`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    AtMost,
    AtLeast,
    Below,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub suite: String,
    pub check: String,
    pub status: Status,
    pub value: f64,
    pub bound: Option<f64>,
    /// Positive when the check holds with room to spare.
    pub slack: Option<f64>,
}

impl CheckResult {
    pub fn asserted(suite: &str, check: &str, value: f64, sense: Sense, bound: f64) -> Self {
        let (ok, slack) = match sense {
            Sense::AtMost => (value <= bound, bound - value),
            Sense::AtLeast => (value >= bound, value - bound),
            Sense::Below => (value < bound, bound - value),
        };
        Self {
            suite: suite.into(),
            check: check.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            value,
            bound: Some(bound),
            slack: Some(slack),
        }
    }

    pub fn flag(suite: &str, check: &str, ok: bool) -> Self {
        Self {
            suite: suite.into(),
            check: check.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            value: ok as u8 as f64,
            bound: Some(1.0),
            slack: None,
        }
    }

    pub fn info(suite: &str, check: &str, value: f64) -> Self {
        Self {
            suite: suite.into(),
            check: check.into(),
            status: Status::Info,
            value,
            bound: None,
            slack: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

/// Rows of plot data; every row has one value per column.
#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Column pair drawn by the gnuplot script, log-log when `log` is set.
    pub plot: Option<(usize, usize)>,
    pub log: bool,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            plot: None,
            log: false,
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn plotted(mut self, x: usize, y: usize, log: bool) -> Self {
        self.plot = Some((x, y));
        self.log = log;
        self
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SuiteOutput {
    pub results: Vec<CheckResult>,
    pub tables: Vec<Table>,
    pub artifacts: BTreeMap<String, serde_json::Value>,
}

impl SuiteOutput {
    pub fn check(&mut self, r: CheckResult) {
        self.results.push(r);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub scenario: Scenario,
    pub results: Vec<CheckResult>,
    pub tables: Vec<Table>,
    pub artifacts: BTreeMap<String, serde_json::Value>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.results.iter().all(CheckResult::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(|r| !r.passed())
    }

    pub fn result(&self, check: &str) -> Option<&CheckResult> {
        self.results.iter().find(|r| r.check == check)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn senses() {
        assert_eq!(CheckResult::asserted("s", "c", 1.0, Sense::AtMost, 1.0).status, Status::Pass);
        assert_eq!(CheckResult::asserted("s", "c", 1.0, Sense::Below, 1.0).status, Status::Fail);
        let r = CheckResult::asserted("s", "c", 0.5, Sense::AtLeast, 0.75);
        assert_eq!(r.status, Status::Fail);
        assert_eq!(r.slack, Some(-0.25));
        assert_eq!(CheckResult::asserted("s", "c", f64::NAN, Sense::AtMost, 1.0).status, Status::Fail);
    }
}
