//! CSV ingestion behind a user-mapped schema, and the matching writer.
//!
//! Input is UTF-8, comma-delimited, with a header row and '.' decimal
//! separator. The schema config maps logical fields to column names; every
//! unmapped column becomes a covariate. Missing cells are a hard error —
//! there is no imputation.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use super::{Direction, SectionRecord};
use crate::error::{Error, Result};

/// Maps logical dataset fields to CSV column names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaConfig {
    /// Column holding a section identifier; row numbers are used if absent.
    #[serde(default)]
    pub section_id: Option<String>,
    pub crash_count: String,
    pub aadt: String,
    pub length_miles: String,
    pub years_observed: String,
    /// Column holding the group label (e.g. route), if any.
    #[serde(default)]
    pub group: Option<String>,
    #[serde(default)]
    pub direction: Option<String>,
}

impl SchemaConfig {
    /// Schema for datasets written by [`write_dataset`].
    pub fn canonical() -> Self {
        Self {
            section_id: Some("section_id".to_string()),
            crash_count: "crash_count".to_string(),
            aadt: "aadt".to_string(),
            length_miles: "length_miles".to_string(),
            years_observed: "years_observed".to_string(),
            group: Some("route_id".to_string()),
            direction: Some("direction".to_string()),
        }
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn parse_f64(text: &str, row: usize, column: &str) -> Result<f64> {
    let value: f64 = text.trim().parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("'{text}' is not a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("'{text}' is not finite"),
        });
    }
    Ok(value)
}

/// Loads one section per data row, preserving row order.
pub fn load_dataset(path: impl AsRef<Path>, schema: &SchemaConfig) -> Result<Vec<SectionRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let column_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("mapped column '{name}' not found in header")))
    };

    let crash_idx = column_index(&schema.crash_count)?;
    let aadt_idx = column_index(&schema.aadt)?;
    let length_idx = column_index(&schema.length_miles)?;
    let years_idx = column_index(&schema.years_observed)?;
    let id_idx = schema.section_id.as_deref().map(column_index).transpose()?;
    let group_idx = schema.group.as_deref().map(column_index).transpose()?;
    let direction_idx = schema.direction.as_deref().map(column_index).transpose()?;

    let mut mapped: Vec<usize> = vec![crash_idx, aadt_idx, length_idx, years_idx];
    mapped.extend(id_idx);
    mapped.extend(group_idx);
    mapped.extend(direction_idx);
    let covariate_columns: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !mapped.contains(i))
        .map(|(i, h)| (i, h.clone()))
        .collect();

    let mut records = Vec::new();
    for (row_number, row) in reader.records().enumerate() {
        let row = row?;
        let data_row = row_number + 1;
        let cell = |idx: usize| row.get(idx).unwrap_or("");

        let crash_text = cell(crash_idx).trim();
        let crash_count: i64 = crash_text.parse().map_err(|_| Error::Parse {
            row: data_row,
            column: schema.crash_count.clone(),
            message: format!("'{crash_text}' is not an integer"),
        })?;
        if crash_count < 0 {
            return Err(Error::Domain(format!(
                "row {data_row}: crash count must be non-negative, got {crash_count}"
            )));
        }

        let aadt = parse_f64(cell(aadt_idx), data_row, &schema.aadt)?;
        let length_miles = parse_f64(cell(length_idx), data_row, &schema.length_miles)?;
        let years_observed = parse_f64(cell(years_idx), data_row, &schema.years_observed)?;
        if aadt <= 0.0 {
            return Err(Error::Domain(format!(
                "row {data_row}: aadt must be positive, got {aadt}"
            )));
        }
        if length_miles <= 0.0 {
            return Err(Error::Domain(format!(
                "row {data_row}: length_miles must be positive, got {length_miles}"
            )));
        }
        if years_observed <= 0.0 {
            return Err(Error::Domain(format!(
                "row {data_row}: years_observed must be positive, got {years_observed}"
            )));
        }

        let section_id = match id_idx {
            Some(idx) => cell(idx).trim().to_string(),
            None => format!("row{data_row}"),
        };
        let route_id = group_idx.and_then(|idx| {
            let text = cell(idx).trim();
            (!text.is_empty()).then(|| text.to_string())
        });
        let direction = match direction_idx {
            Some(idx) => Direction::parse(cell(idx))
                .map_err(|_| Error::Parse {
                    row: data_row,
                    column: schema.direction.clone().unwrap_or_default(),
                    message: format!("'{}' is not a direction", cell(idx)),
                })?,
            None => Direction::Both,
        };

        let mut covariates = BTreeMap::new();
        for (idx, name) in &covariate_columns {
            let value = parse_f64(cell(*idx), data_row, name)?;
            covariates.insert(name.clone(), value);
        }

        records.push(SectionRecord {
            section_id,
            route_id,
            direction,
            crash_count: crash_count as u64,
            aadt,
            length_miles,
            years_observed,
            covariates,
        });
    }
    Ok(records)
}

/// Writes a dataset in the canonical column layout so that reloading it with
/// [`SchemaConfig::canonical`] round-trips field-identically.
pub fn write_dataset(records: &[SectionRecord], path: impl AsRef<Path>) -> Result<()> {
    let Some(first) = records.first() else {
        return Err(Error::Data("cannot write an empty dataset".to_string()));
    };
    let covariate_names: Vec<&String> = first.covariates.keys().collect();
    let mut writer = csv::Writer::from_path(path.as_ref())?;

    let mut header = vec![
        "section_id".to_string(),
        "route_id".to_string(),
        "direction".to_string(),
        "crash_count".to_string(),
        "aadt".to_string(),
        "length_miles".to_string(),
        "years_observed".to_string(),
    ];
    header.extend(covariate_names.iter().map(|s| s.to_string()));
    writer.write_record(&header)?;

    for record in records {
        let mut row = vec![
            record.section_id.clone(),
            record.route_id.clone().unwrap_or_default(),
            record.direction.as_str().to_string(),
            record.crash_count.to_string(),
            format_f64(record.aadt),
            format_f64(record.length_miles),
            format_f64(record.years_observed),
        ];
        for name in &covariate_names {
            let value = record.covariates.get(*name).ok_or_else(|| {
                Error::Schema(format!(
                    "record '{}' is missing covariate '{}'",
                    record.section_id, name
                ))
            })?;
            row.push(format_f64(*value));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Shortest decimal representation that parses back to the same f64.
fn format_f64(value: f64) -> String {
    let mut text = format!("{value}");
    if !text.contains('.') && !text.contains('e') && !text.contains("inf") && !text.contains("NaN")
    {
        text.push_str(".0");
    }
    text
}
