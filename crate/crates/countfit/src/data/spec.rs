//! Declarative model specification: family, terms, transforms, offsets.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Nb,
    Zinb,
    GlmmNb,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Nb => "nb",
            Family::Zinb => "zinb",
            Family::GlmmNb => "glmm_nb",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "nb" => Ok(Family::Nb),
            "zinb" => Ok(Family::Zinb),
            "glmm_nb" | "glmm-nb" | "glmmnb" => Ok(Family::GlmmNb),
            other => Err(Error::Invalid(format!("unknown family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    Log,
    Square,
}

impl Transform {
    pub fn apply(&self, value: f64) -> Result<f64> {
        match self {
            Transform::Identity => Ok(value),
            Transform::Log => {
                if value > 0.0 {
                    Ok(value.ln())
                } else {
                    Err(Error::Domain(format!(
                        "log transform needs a positive value, got {value}"
                    )))
                }
            }
            Transform::Square => Ok(value * value),
        }
    }
}

/// One column of the design matrix: the intercept, or a transformed
/// covariate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Intercept,
    Covariate {
        name: String,
        #[serde(default)]
        transform: Transform,
    },
}

impl Term {
    pub fn covariate(name: impl Into<String>) -> Self {
        Term::Covariate {
            name: name.into(),
            transform: Transform::Identity,
        }
    }

    pub fn log(name: impl Into<String>) -> Self {
        Term::Covariate {
            name: name.into(),
            transform: Transform::Log,
        }
    }

    pub fn square(name: impl Into<String>) -> Self {
        Term::Covariate {
            name: name.into(),
            transform: Transform::Square,
        }
    }

    /// Display label, also used as the coefficient name.
    pub fn label(&self) -> String {
        match self {
            Term::Intercept => "(Intercept)".to_string(),
            Term::Covariate { name, transform } => match transform {
                Transform::Identity => name.clone(),
                Transform::Log => format!("log({name})"),
                Transform::Square => format!("{name}^2"),
            },
        }
    }
}

/// Declarative model definition consumed by `build_design`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    /// Count-part terms; the first must be the intercept.
    pub count_terms: Vec<Term>,
    /// Zero-part terms, used only when `family == Zinb`.
    #[serde(default)]
    pub zero_terms: Vec<Term>,
    /// Variables entered as `log(value)` with coefficient fixed at one.
    #[serde(default)]
    pub offset_terms: Vec<String>,
    /// Grouping variable, required exactly when `family == GlmmNb`.
    /// `"route_id"` selects the record's route field; any other name selects
    /// a covariate whose values act as group codes.
    #[serde(default)]
    pub group_by: Option<String>,
}

impl ModelSpec {
    pub fn new(family: Family, count_terms: Vec<Term>) -> Self {
        Self {
            family,
            count_terms,
            zero_terms: Vec::new(),
            offset_terms: Vec::new(),
            group_by: None,
        }
    }

    pub fn with_offsets(mut self, offsets: Vec<String>) -> Self {
        self.offset_terms = offsets;
        self
    }

    pub fn with_zero_terms(mut self, terms: Vec<Term>) -> Self {
        self.zero_terms = terms;
        self
    }

    pub fn with_group_by(mut self, group: impl Into<String>) -> Self {
        self.group_by = Some(group.into());
        self
    }

    /// The canonical rate-model offsets: log(AADT) + log(length) + log(years).
    pub fn canonical_offsets() -> Vec<String> {
        vec![
            "aadt".to_string(),
            "length_miles".to_string(),
            "years_observed".to_string(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.count_terms.is_empty() {
            return Err(Error::Invalid(
                "count_terms must be non-empty (at least an intercept)".to_string(),
            ));
        }
        if self.count_terms[0] != Term::Intercept {
            return Err(Error::Invalid(
                "count_terms must start with the intercept".to_string(),
            ));
        }
        if self.count_terms[1..].contains(&Term::Intercept) {
            return Err(Error::Invalid("duplicate intercept in count_terms".to_string()));
        }
        let mut labels = BTreeSet::new();
        for term in &self.count_terms {
            if !labels.insert(term.label()) {
                return Err(Error::Invalid(format!(
                    "duplicate count term '{}'",
                    term.label()
                )));
            }
        }
        let mut offsets = BTreeSet::new();
        for name in &self.offset_terms {
            if !offsets.insert(name.as_str()) {
                return Err(Error::Invalid(format!("duplicate offset term '{name}'")));
            }
        }
        match self.family {
            Family::Zinb => {
                if self.zero_terms.is_empty() || self.zero_terms[0] != Term::Intercept {
                    return Err(Error::Invalid(
                        "ZINB needs zero_terms starting with the intercept".to_string(),
                    ));
                }
                let mut zlabels = BTreeSet::new();
                for term in &self.zero_terms {
                    if !zlabels.insert(term.label()) {
                        return Err(Error::Invalid(format!(
                            "duplicate zero term '{}'",
                            term.label()
                        )));
                    }
                }
            }
            _ => {
                if !self.zero_terms.is_empty() {
                    return Err(Error::Invalid(
                        "zero_terms are only valid for the ZINB family".to_string(),
                    ));
                }
            }
        }
        match self.family {
            Family::GlmmNb => {
                if self.group_by.is_none() {
                    return Err(Error::Invalid(
                        "GLMM-NB requires a group_by variable".to_string(),
                    ));
                }
            }
            _ => {
                if self.group_by.is_some() {
                    return Err(Error::Invalid(
                        "group_by is only valid for the GLMM-NB family".to_string(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: ModelSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nb_spec() -> ModelSpec {
        ModelSpec::new(
            Family::Nb,
            vec![Term::Intercept, Term::covariate("curvature")],
        )
        .with_offsets(ModelSpec::canonical_offsets())
    }

    #[test]
    fn valid_spec_passes() {
        nb_spec().validate().unwrap();
    }

    #[test]
    fn intercept_must_lead() {
        let spec = ModelSpec::new(Family::Nb, vec![Term::covariate("x")]);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn zero_terms_only_for_zinb() {
        let mut spec = nb_spec();
        spec.zero_terms = vec![Term::Intercept];
        assert!(spec.validate().is_err());

        let spec = ModelSpec::new(Family::Zinb, vec![Term::Intercept])
            .with_zero_terms(vec![Term::Intercept, Term::covariate("z")]);
        spec.validate().unwrap();

        let spec = ModelSpec::new(Family::Zinb, vec![Term::Intercept]);
        assert!(spec.validate().is_err(), "ZINB without zero terms");
    }

    #[test]
    fn group_by_pairs_with_glmm() {
        let spec = ModelSpec::new(Family::GlmmNb, vec![Term::Intercept]);
        assert!(spec.validate().is_err());
        let spec = spec.with_group_by("route_id");
        spec.validate().unwrap();
        let mut nb = nb_spec();
        nb.group_by = Some("route_id".to_string());
        assert!(nb.validate().is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(Term::Intercept.label(), "(Intercept)");
        assert_eq!(Term::log("aadt").label(), "log(aadt)");
        assert_eq!(Term::square("curvature").label(), "curvature^2");
    }

    #[test]
    fn json_round_trip() {
        let spec = ModelSpec::new(
            Family::Zinb,
            vec![Term::Intercept, Term::log("aadt"), Term::square("curvature")],
        )
        .with_zero_terms(vec![Term::Intercept, Term::covariate("shoulder_width")])
        .with_offsets(ModelSpec::canonical_offsets());
        let text = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}
