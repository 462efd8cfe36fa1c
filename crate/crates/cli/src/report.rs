//! Result tables in the Specificity/Sensitivity/Accuracy/AUC layout.

use std::io::Write;
use std::path::Path;

use coughnet::crossval::FoldResult;
use coughnet::evaluation::EvalReport;

use crate::error::CliError;

pub const METRIC_COLUMNS: [&str; 4] = ["Specificity", "Sensitivity", "Accuracy", "AUC"];

/// One table row; values are kept as text so inputs render verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub values: [String; 4],
}

impl Row {
    pub fn from_report(name: impl Into<String>, r: &EvalReport) -> Row {
        Row::from_numbers(name, [r.specificity, r.sensitivity, r.accuracy, r.auc])
    }

    pub fn from_numbers(name: impl Into<String>, v: [f64; 4]) -> Row {
        Row { name: name.into(), values: v.map(|x| format!("{x:.4}")) }
    }
}

pub fn fold_rows(folds: &[FoldResult]) -> Vec<Row> {
    folds.iter().map(|f| Row::from_report(format!("fold{} {} {}", f.fold, f.chosen.model.family(), f.chosen.score_function), &f.report)).collect()
}

pub fn write_rows(path: &Path, rows: &[Row]) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::Usage(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(std::iter::once("Model").chain(METRIC_COLUMNS)).map_err(err)?;
    for r in rows {
        w.write_record(std::iter::once(r.name.as_str()).chain(r.values.iter().map(String::as_str))).map_err(err)?;
    }
    w.flush().map_err(CliError::io(path))
}

/// Reads a result table. Metric columns are matched case-insensitively; the
/// first non-metric column, if any, names the row.
pub fn read_rows(path: &Path) -> Result<Vec<Row>, CliError> {
    let bad = |line: Option<usize>, message: String| CliError::Config { path: path.to_path_buf(), line, message };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| bad(None, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| bad(Some(1), e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let mut idx = [0usize; 4];
    for (slot, col) in idx.iter_mut().zip(METRIC_COLUMNS) {
        *slot = find(col).ok_or_else(|| bad(Some(1), format!("missing column {col}")))?;
    }
    let name_col = (0..headers.len()).find(|i| !idx.contains(i));
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(Some(i + 2), e.to_string()))?;
        let get = |c: usize| rec.get(c).map(str::to_string).ok_or_else(|| bad(Some(i + 2), format!("missing field {}", c + 1)));
        rows.push(Row {
            name: name_col.map_or(Ok(format!("row{}", i + 1)), get)?,
            values: [get(idx[0])?, get(idx[1])?, get(idx[2])?, get(idx[3])?],
        });
    }
    Ok(rows)
}

/// Fixed-width text table.
pub fn render<W: Write>(mut out: W, rows: &[Row]) -> std::io::Result<()> {
    let header: Vec<&str> = std::iter::once("Model").chain(METRIC_COLUMNS).collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        widths[0] = widths[0].max(r.name.len());
        for (w, v) in widths[1..].iter_mut().zip(&r.values) {
            *w = (*w).max(v.len());
        }
    }
    let line = |cells: Vec<&str>| cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ");
    writeln!(out, "{}", line(header.clone()).trim_end())?;
    for r in rows {
        let cells = std::iter::once(r.name.as_str()).chain(r.values.iter().map(String::as_str)).collect();
        writeln!(out, "{}", line(cells).trim_end())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_survive_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "Model,Specificity,Sensitivity,Accuracy,AUC\nResnet50,0.9123,0.90,0.91,0.9759\nLSTM,0.87,0.8871,0.8880,0.9375\n").unwrap();
        let rows = read_rows(&path).unwrap();
        assert_eq!(rows[0].values, ["0.9123", "0.90", "0.91", "0.9759"].map(String::from));
        let mut buf = Vec::new();
        render(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().starts_with("Model"));
        assert!(text.contains("0.9759") && text.contains("0.8871"));

        let out = dir.path().join("o.csv");
        write_rows(&out, &rows).unwrap();
        assert_eq!(read_rows(&out).unwrap(), rows);
    }

    #[test]
    fn columns_by_name_in_any_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "auc,accuracy,name,sensitivity,specificity\n1,2,x,3,4\n").unwrap();
        let rows = read_rows(&path).unwrap();
        assert_eq!(rows[0].name, "x");
        assert_eq!(rows[0].values, ["4", "3", "2", "1"].map(String::from));
        std::fs::write(&path, "Model,AUC\nx,1\n").unwrap();
        assert!(matches!(read_rows(&path), Err(CliError::Config { line: Some(1), .. })));
    }
}
