//! Dataset and model-specification data model: observed road sections,
//! declarative model specs, CSV ingestion behind a user-mapped schema, and
//! design-matrix construction with offset vectors.

mod csv_io;
mod design;
mod friction;
mod spec;

pub use csv_io::{load_dataset, write_dataset, SchemaConfig};
pub use design::{build_design, DesignMatrix, GroupIndex};
pub use friction::{
    curvature_to_radius_ft, mph_to_fps, side_friction_demand, side_friction_from_curvature,
    GRAVITY_FT_S2,
};
pub use spec::{Family, ModelSpec, Term, Transform};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Travel direction a section's crashes were aggregated over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
    #[default]
    Both,
}

impl Direction {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "increasing" => Ok(Direction::Increasing),
            "decreasing" => Ok(Direction::Decreasing),
            "both" => Ok(Direction::Both),
            other => Err(Error::Domain(format!("unknown direction '{other}'"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Increasing => "increasing",
            Direction::Decreasing => "decreasing",
            Direction::Both => "both",
        }
    }
}

/// One observed road section: total crash count over the observation period
/// plus exposure and named covariates.
///
/// Exposure fields are addressable by the builtin names `aadt`,
/// `length_miles`, and `years_observed` wherever a covariate name is
/// accepted (model terms and offsets), so the canonical rate-model offset is
/// simply `offset_terms = [aadt, length_miles, years_observed]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionRecord {
    pub section_id: String,
    /// Optional group key (e.g. the route a section belongs to).
    pub route_id: Option<String>,
    pub direction: Direction,
    pub crash_count: u64,
    /// Period-average annual average daily traffic, vehicles/day.
    pub aadt: f64,
    pub length_miles: f64,
    pub years_observed: f64,
    pub covariates: BTreeMap<String, f64>,
}

impl SectionRecord {
    /// Looks up a value by name: builtin exposure fields first, then
    /// covariates.
    pub fn value(&self, name: &str) -> Option<f64> {
        match name {
            "aadt" => Some(self.aadt),
            "length_miles" => Some(self.length_miles),
            "years_observed" => Some(self.years_observed),
            _ => self.covariates.get(name).copied(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.aadt > 0.0) || !self.aadt.is_finite() {
            return Err(Error::Domain(format!(
                "section '{}': aadt must be positive and finite, got {}",
                self.section_id, self.aadt
            )));
        }
        if !(self.length_miles > 0.0) || !self.length_miles.is_finite() {
            return Err(Error::Domain(format!(
                "section '{}': length_miles must be positive and finite, got {}",
                self.section_id, self.length_miles
            )));
        }
        if !(self.years_observed > 0.0) || !self.years_observed.is_finite() {
            return Err(Error::Domain(format!(
                "section '{}': years_observed must be positive and finite, got {}",
                self.section_id, self.years_observed
            )));
        }
        for (name, value) in &self.covariates {
            if !value.is_finite() {
                return Err(Error::Data(format!(
                    "section '{}': covariate '{}' is not finite",
                    self.section_id, name
                )));
            }
        }
        Ok(())
    }
}

/// Checks that every record is individually valid and that all records share
/// one covariate-name set.
pub fn validate_dataset(records: &[SectionRecord]) -> Result<()> {
    let Some(first) = records.first() else {
        return Err(Error::Data("dataset is empty".to_string()));
    };
    let names: Vec<&String> = first.covariates.keys().collect();
    for (i, record) in records.iter().enumerate() {
        record.validate()?;
        if record.covariates.len() != names.len()
            || !record.covariates.keys().eq(names.iter().copied())
        {
            return Err(Error::Schema(format!(
                "record {} ('{}') has a different covariate set than record 0",
                i, record.section_id
            )));
        }
    }
    Ok(())
}
