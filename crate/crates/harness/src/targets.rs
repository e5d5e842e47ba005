//! Calibration target files.
//!
//! Columns: `mode,material,moisture,target_mean_cmps,target_std_cmps,weight`,
//! velocities in cm/s. Blank lines are skipped.

use std::path::Path;

use skipcrawl_core::calibrate::CalibrationTarget;

use crate::{HarnessError, Result};

const COLUMNS: [&str; 6] = [
    "mode",
    "material",
    "moisture",
    "target_mean_cmps",
    "target_std_cmps",
    "weight",
];

fn field(record: &csv::StringRecord, i: usize, row: usize) -> Result<&str> {
    record
        .get(i)
        .map(str::trim)
        .ok_or_else(|| HarnessError::Targets {
            row,
            message: format!("missing column `{}`", COLUMNS[i]),
        })
}

fn number(record: &csv::StringRecord, i: usize, row: usize) -> Result<f64> {
    let text = field(record, i, row)?;
    text.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| HarnessError::Targets {
            row,
            message: format!("`{}` is not a number: `{text}`", COLUMNS[i]),
        })
}

/// Parses target rows. Row numbers in errors count data rows from 1.
pub fn parse_targets(text: &str) -> Result<Vec<CalibrationTarget>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| HarnessError::Targets {
        row: 0,
        message: e.to_string(),
    })?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != COLUMNS {
        return Err(HarnessError::Targets {
            row: 0,
            message: format!("header must be `{}`", COLUMNS.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| HarnessError::Targets {
            row,
            message: e.to_string(),
        })?;
        if record.len() != COLUMNS.len() {
            return Err(HarnessError::Targets {
                row,
                message: format!("expected {} fields, got {}", COLUMNS.len(), record.len()),
            });
        }
        let bad = |message: String| HarnessError::Targets { row, message };
        let target = CalibrationTarget {
            mode: field(&record, 0, row)?
                .parse()
                .map_err(|e: skipcrawl_core::Error| bad(e.to_string()))?,
            material: field(&record, 1, row)?
                .parse()
                .map_err(|e: skipcrawl_core::Error| bad(e.to_string()))?,
            moisture: number(&record, 2, row)?,
            target_mean: number(&record, 3, row)? / 100.0,
            target_std: number(&record, 4, row)? / 100.0,
            weight: number(&record, 5, row)?,
        };
        target.validate().map_err(|e| bad(e.to_string()))?;
        out.push(target);
    }
    if out.is_empty() {
        return Err(HarnessError::Targets {
            row: 0,
            message: "no target rows".into(),
        });
    }
    Ok(out)
}

pub fn read_targets(path: &Path) -> Result<Vec<CalibrationTarget>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_targets(&text)
}
