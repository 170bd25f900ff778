//! CSV ingestion: one row per subject with columns `subject_id`, `group`,
//! `y` and an optional `x` (blank means the covariate is missing).

use crate::error::{CliError, Result};
use std::path::Path;
use trimcuped::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Control,
    Treatment,
}

impl Group {
    fn parse(label: &str) -> Option<Group> {
        match label {
            "control" | "0" => Some(Group::Control),
            "treatment" | "1" => Some(Group::Treatment),
            _ => None,
        }
    }
}

#[derive(Default)]
struct Columns {
    values: Vec<f64>,
    covariates: Vec<Option<f64>>,
}

fn parse_number(field: &str, column: &str, path: &Path, row: u64) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| CliError::Parse {
        path: path.to_path_buf(),
        row,
        message: format!("column `{column}`: `{field}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            row,
            message: format!("column `{column}`: `{field}` is not finite"),
        });
    }
    Ok(v)
}

/// Reads `(control, treatment)` from a CSV file.
///
/// Rows are reported by their line number in the file (the header is line 1).
pub fn ingest_csv(path: &Path) -> Result<(Sample, Sample)> {
    let file = std::fs::File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_reader(file, path)
}

pub fn ingest_reader<R: std::io::Read>(reader: R, path: &Path) -> Result<(Sample, Sample)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |row: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let (Some(id_col), Some(group_col), Some(y_col)) =
        (column("subject_id"), column("group"), column("y"))
    else {
        return Err(parse_err(
            1,
            format!(
                "header must contain subject_id, group and y columns, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    };
    let x_col = column("x");

    let mut control = Columns::default();
    let mut treatment = Columns::default();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line());
            parse_err(row, e.to_string())
        })?;
        let row = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        if field(id_col).is_empty() {
            return Err(parse_err(row, "empty subject_id".into()));
        }
        let label = field(group_col);
        let group = Group::parse(label).ok_or_else(|| CliError::UnknownGroupLabel {
            path: path.to_path_buf(),
            row,
            label: label.to_string(),
        })?;
        let y = parse_number(field(y_col), "y", path, row)?;
        let x = match x_col.map(field) {
            None | Some("") => None,
            Some(s) => Some(parse_number(s, "x", path, row)?),
        };
        let target = match group {
            Group::Control => &mut control,
            Group::Treatment => &mut treatment,
        };
        target.values.push(y);
        target.covariates.push(x);
    }

    let build = |cols: Columns, group: &'static str| -> Result<Sample> {
        if cols.values.is_empty() {
            return Err(CliError::EmptyGroup {
                path: path.to_path_buf(),
                group,
            });
        }
        Ok(match x_col {
            Some(_) => Sample::with_covariates(cols.values, cols.covariates)?,
            None => Sample::new(cols.values)?,
        })
    };
    Ok((build(control, "control")?, build(treatment, "treatment")?))
}
