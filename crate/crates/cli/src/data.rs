//! CSV ingestion for `analyze`.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{CliError, CliResult};

/// Which columns to read and in what role.
#[derive(Debug, Clone)]
pub struct Columns {
    pub outcome: String,
    pub treatment: String,
    /// `None` selects every column not used in another role.
    pub covariates: Option<Vec<String>>,
    pub stratum: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: Array1<f64>,
    pub treated: Vec<bool>,
    pub x: Array2<f64>,
    pub covariates: Vec<String>,
    pub strata: Option<Vec<i64>>,
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan")
}

fn column_index(header: &csv::StringRecord, name: &str) -> CliResult<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Usage(format!("column `{name}` not found in header")))
}

fn parse_err(line: u64, e: impl std::fmt::Display) -> CliError {
    CliError::Parse { line, message: e.to_string() }
}

pub fn read_csv(path: &Path, columns: &Columns) -> CliResult<Dataset> {
    let file = std::fs::File::open(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    read_from(file, columns)
}

pub fn read_from<R: std::io::Read>(reader: R, columns: &Columns) -> CliResult<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_err(1, e))?.clone();
    let outcome = column_index(&header, &columns.outcome)?;
    let treatment = column_index(&header, &columns.treatment)?;
    let stratum = columns.stratum.as_deref().map(|s| column_index(&header, s)).transpose()?;
    let names: Vec<String> = match &columns.covariates {
        Some(list) => list.clone(),
        None => header
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != outcome && *k != treatment && Some(*k) != stratum)
            .map(|(_, h)| h.to_string())
            .collect(),
    };
    let cov_idx = names.iter().map(|c| column_index(&header, c)).collect::<CliResult<Vec<_>>>()?;
    for (k, &i) in cov_idx.iter().enumerate() {
        if i == outcome || i == treatment || Some(i) == stratum || cov_idx[..k].contains(&i) {
            return Err(CliError::Usage(format!("column `{}` is selected twice", names[k])));
        }
    }

    let mut y = Vec::new();
    let mut treated = Vec::new();
    let mut x = Vec::new();
    let mut strata = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> CliResult<&str> {
            let v = &record[i];
            if is_missing(v) {
                Err(CliError::MissingValue { column: header[i].to_string(), line })
            } else {
                Ok(v)
            }
        };
        let number = |i: usize| -> CliResult<f64> {
            let v = field(i)?;
            v.parse::<f64>()
                .ok()
                .filter(|f| f.is_finite())
                .ok_or_else(|| parse_err(line, format!("column `{}`: `{v}` is not a finite number", &header[i])))
        };
        y.push(number(outcome)?);
        let t = field(treatment)?;
        treated.push(match t.parse::<f64>() {
            Ok(1.0) => true,
            Ok(0.0) => false,
            _ => {
                return Err(CliError::NonBinaryTreatment {
                    column: columns.treatment.clone(),
                    value: t.to_string(),
                    line,
                })
            }
        });
        for &i in &cov_idx {
            x.push(number(i)?);
        }
        if let Some(s) = stratum {
            let v = field(s)?;
            strata.push(
                v.parse::<i64>()
                    .map_err(|_| parse_err(line, format!("stratum `{v}` is not an integer label")))?,
            );
        }
    }
    if y.is_empty() {
        return Err(parse_err(1, "no data rows"));
    }
    let n = y.len();
    Ok(Dataset {
        y: Array1::from(y),
        treated,
        x: Array2::from_shape_vec((n, cov_idx.len()), x).expect("row-major covariate buffer"),
        covariates: names,
        strata: stratum.map(|_| strata),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(covariates: Option<&[&str]>) -> Columns {
        Columns {
            outcome: "y".into(),
            treatment: "t".into(),
            covariates: covariates.map(|c| c.iter().map(|s| s.to_string()).collect()),
            stratum: None,
        }
    }

    #[test]
    fn all_remaining_columns() {
        let d = read_from("y,a,t,b\n1,2,1,3\n4,5,0,6\n".as_bytes(), &cols(None)).unwrap();
        assert_eq!(d.covariates, ["a", "b"]);
        assert_eq!(d.x.row(1).to_vec(), [5.0, 6.0]);
        assert_eq!(d.treated, [true, false]);
    }

    #[test]
    fn data_errors() {
        let missing = read_from("y,t\n1,1\n,0\n".as_bytes(), &cols(Some(&[])));
        assert!(matches!(missing, Err(CliError::MissingValue { line: 3, .. })));
        let non_binary = read_from("y,t\n1,1\n2,2\n".as_bytes(), &cols(Some(&[])));
        assert!(matches!(non_binary, Err(CliError::NonBinaryTreatment { line: 3, .. })));
        let bad = read_from("y,t\n1,1\nx,0\n".as_bytes(), &cols(Some(&[])));
        assert!(matches!(bad, Err(CliError::Parse { line: 3, .. })));
        let ragged = read_from("y,t\n1,1,4\n".as_bytes(), &cols(Some(&[])));
        assert!(matches!(ragged, Err(CliError::Parse { .. })));
        assert!(matches!(read_from("y,t\n1,1\n".as_bytes(), &cols(Some(&["z"]))), Err(CliError::Usage(_))));
        assert!(matches!(read_from("y,t\n1,1\n".as_bytes(), &cols(Some(&["y"]))), Err(CliError::Usage(_))));
    }
}
