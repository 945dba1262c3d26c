//! CSV ingestion and serialization with a user-supplied column mapping, so
//! arbitrary log schemas can be adapted without reshaping files.
//!
//! Files must be UTF-8 with a header row. The trigger column uses `1`/`0`
//! for triggered/not-triggered and the empty string for "unobserved".

use std::path::Path;

use crate::data::{Arm, ExperimentDataset, TriggerMode, UnitRecord};
use crate::error::{Error, Result};

/// Column mapping for [`load_csv`] / [`write_csv`].
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub unit_id: String,
    pub assignment: String,
    pub triggered: String,
    pub outcome: String,
    /// Covariate columns, in order. `None` means every column not otherwise
    /// mapped, in header order.
    pub covariates: Option<Vec<String>>,
    /// Value of the assignment column marking treatment rows.
    pub treatment_value: String,
    /// Value of the assignment column marking control rows.
    pub control_value: String,
    /// Declared trigger mode; overrides inference and turns conflicting
    /// trigger values into errors.
    pub declared_mode: Option<TriggerMode>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            unit_id: "unit_id".into(),
            assignment: "assignment".into(),
            triggered: "triggered".into(),
            outcome: "y".into(),
            covariates: None,
            treatment_value: "treatment".into(),
            control_value: "control".into(),
            declared_mode: None,
        }
    }
}

/// Load and validate an experiment dataset from a CSV file.
pub fn load_csv<P: AsRef<Path>>(path: P, schema: &CsvSchema) -> Result<ExperimentDataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = col(&schema.unit_id)?;
    let assign_col = col(&schema.assignment)?;
    let trigger_col = col(&schema.triggered)?;
    let outcome_col = col(&schema.outcome)?;

    let covariate_names: Vec<String> = match &schema.covariates {
        Some(names) => {
            for name in names {
                col(name)?;
            }
            names.clone()
        }
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| ![id_col, assign_col, trigger_col, outcome_col].contains(i))
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let covariate_cols: Vec<usize> = covariate_names
        .iter()
        .map(|name| col(name))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = line + 2; // header is line 1
        let field = |c: usize| row.get(c).unwrap_or("");

        let assignment = match field(assign_col) {
            v if v == schema.treatment_value => Arm::Treatment,
            v if v == schema.control_value => Arm::Control,
            v => {
                return Err(Error::Parse {
                    row: row_no,
                    column: schema.assignment.clone(),
                    message: format!(
                        "assignment value `{v}` is neither `{}` nor `{}`",
                        schema.treatment_value, schema.control_value
                    ),
                })
            }
        };
        let triggered = match field(trigger_col).trim() {
            "" => None,
            "0" => Some(false),
            "1" => Some(true),
            v => {
                return Err(Error::Parse {
                    row: row_no,
                    column: schema.triggered.clone(),
                    message: format!("trigger value `{v}` is not 0, 1, or empty"),
                })
            }
        };
        let parse_num = |c: usize, name: &str| -> Result<f64> {
            field(c).trim().parse::<f64>().map_err(|_| Error::Parse {
                row: row_no,
                column: name.to_string(),
                message: format!("`{}` is not a number", field(c)),
            })
        };
        let outcome = parse_num(outcome_col, &schema.outcome)?;
        let covariates = covariate_cols
            .iter()
            .zip(&covariate_names)
            .map(|(&c, name)| parse_num(c, name))
            .collect::<Result<Vec<f64>>>()?;

        records.push(UnitRecord {
            unit_id: field(id_col).to_string(),
            assignment,
            triggered,
            covariates,
            outcome,
        });
    }

    ExperimentDataset::from_records(records, covariate_names, schema.declared_mode)
}

/// Write a dataset using the schema's column names. The output round-trips
/// through [`load_csv`] field-for-field (floats are written in shortest
/// round-trip form).
pub fn write_csv<P: AsRef<Path>>(
    ds: &ExperimentDataset,
    path: P,
    schema: &CsvSchema,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec![
        schema.unit_id.clone(),
        schema.assignment.clone(),
        schema.triggered.clone(),
    ];
    header.extend(ds.covariate_names().iter().cloned());
    header.push(schema.outcome.clone());
    writer.write_record(&header)?;

    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..ds.len() {
        row.clear();
        row.push(ds.unit_id(i).to_string());
        row.push(match ds.assignment(i) {
            Arm::Treatment => schema.treatment_value.clone(),
            Arm::Control => schema.control_value.clone(),
        });
        row.push(match ds.triggered(i) {
            Some(true) => "1".into(),
            Some(false) => "0".into(),
            None => String::new(),
        });
        for x in ds.covariate_row(i) {
            row.push(format!("{x}"));
        }
        row.push(format!("{}", ds.outcome(i)));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
