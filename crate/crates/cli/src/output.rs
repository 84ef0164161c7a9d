use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::report::{Report, Table};
use crate::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

pub fn to_json(report: &Report) -> Result<String, LabError> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// `suite,check,status,value,bound,slack`.
pub fn results_csv(report: &Report) -> Result<String, LabError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["suite", "check", "status", "value", "bound", "slack"])?;
    for r in &report.results {
        let status = serde_json::to_value(r.status)?;
        w.write_record([
            r.suite.as_str(),
            r.check.as_str(),
            status.as_str().unwrap_or_default(),
            &format!("{:e}", r.value),
            &fmt_opt(r.bound),
            &fmt_opt(r.slack),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
}

pub fn table_csv(table: &Table) -> Result<String, LabError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
}

/// A gnuplot script drawing every table that names a column pair.
pub fn gnuplot_script(tables: &[(PathBuf, &Table)]) -> String {
    let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 800,600\n");
    for (path, t) in tables {
        let Some((x, y)) = t.plot else { continue };
        let _ = writeln!(s, "\nset output '{}.png'", t.name);
        let _ = writeln!(s, "set title '{}'", t.name);
        let _ = writeln!(s, "set xlabel '{}'\nset ylabel '{}'", t.columns[x], t.columns[y]);
        if t.log {
            s.push_str("set logscale xy\n");
        } else {
            s.push_str("unset logscale\n");
        }
        let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        let _ = writeln!(s, "plot '{}' using {}:{} with points pt 7", file, x + 1, y + 1);
    }
    s
}

/// Writes the report to `out` and each table next to it as
/// `<stem>.<table>.csv`, plus `<stem>.gp`. Returns the files written.
pub fn write_all(report: &Report, out: &Path, format: Format) -> Result<Vec<PathBuf>, LabError> {
    let body = match format {
        Format::Json => to_json(report)?,
        Format::Csv => results_csv(report)?,
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, body)?;
    let mut written = vec![out.to_path_buf()];
    let stem = out.with_extension("");
    let mut tables = Vec::new();
    for t in &report.tables {
        let path = PathBuf::from(format!("{}.{}.csv", stem.display(), t.name));
        fs::write(&path, table_csv(t)?)?;
        written.push(path.clone());
        tables.push((path, t));
    }
    if !tables.is_empty() {
        let gp = stem.with_extension("gp");
        fs::write(&gp, gnuplot_script(&tables))?;
        written.push(gp);
    }
    Ok(written)
}
