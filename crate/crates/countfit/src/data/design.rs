//! Design-matrix construction: transforms, offsets, and group indexing.

use std::collections::BTreeMap;

use super::spec::{Family, ModelSpec, Term};
use super::SectionRecord;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::num::Float;

/// Dense group index: for each observation, an index into `labels`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupIndex {
    pub index: Vec<usize>,
    pub labels: Vec<String>,
}

impl GroupIndex {
    pub fn n_groups(&self) -> usize {
        self.labels.len()
    }

    /// Observation indices per group, in group order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.labels.len()];
        for (obs, &g) in self.index.iter().enumerate() {
            members[g].push(obs);
        }
        members
    }
}

/// Numeric model inputs: response, count-part matrix `X` (intercept first),
/// optional zero-part matrix `Z`, offset vector, and optional group index.
#[derive(Debug, Clone)]
pub struct DesignMatrix<F> {
    pub x: Mat<F>,
    pub x_names: Vec<String>,
    pub z: Option<Mat<F>>,
    pub z_names: Vec<String>,
    pub offset: Vec<F>,
    pub y: Vec<u64>,
    pub groups: Option<GroupIndex>,
}

impl<F: Float> DesignMatrix<F> {
    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.x.rows() != n || self.offset.len() != n {
            return Err(Error::Data(format!(
                "row count mismatch: X has {}, offset has {}, y has {}",
                self.x.rows(),
                self.offset.len(),
                n
            )));
        }
        if let Some(z) = &self.z {
            if z.rows() != n {
                return Err(Error::Data("Z row count differs from y".to_string()));
            }
        }
        if let Some(groups) = &self.groups {
            if groups.index.len() != n {
                return Err(Error::Data("group index length differs from y".to_string()));
            }
            if let Some(&bad) = groups.index.iter().find(|&&g| g >= groups.n_groups()) {
                return Err(Error::Data(format!("group index {bad} out of range")));
            }
        }
        check_matrix(&self.x, &self.x_names, n)?;
        if let Some(z) = &self.z {
            check_matrix(z, &self.z_names, n)?;
        }
        for (i, o) in self.offset.iter().enumerate() {
            if !o.is_finite() {
                return Err(Error::Data(format!("offset at row {i} is not finite")));
            }
        }
        Ok(())
    }
}

fn check_matrix<F: Float>(m: &Mat<F>, names: &[String], n: usize) -> Result<()> {
    if m.cols() != names.len() {
        return Err(Error::Data("column-name count mismatch".to_string()));
    }
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite design entry at row {i}, column '{}'",
                    names[j]
                )));
            }
        }
    }
    // Every non-intercept column needs variation for the fit to be
    // identified; flagging it here names the column instead of surfacing a
    // singular Hessian later.
    if n > 1 {
        for j in 1..m.cols() {
            let first = m[(0, j)];
            if (1..n).all(|i| m[(i, j)] == first) {
                return Err(Error::Domain(format!(
                    "column '{}' has zero variance",
                    names[j]
                )));
            }
        }
    }
    Ok(())
}

fn term_value(record: &SectionRecord, term: &Term) -> Result<f64> {
    match term {
        Term::Intercept => Ok(1.0),
        Term::Covariate { name, transform } => {
            let raw = record.value(name).ok_or_else(|| {
                Error::Schema(format!(
                    "unknown covariate '{name}' on section '{}'",
                    record.section_id
                ))
            })?;
            transform.apply(raw)
        }
    }
}

fn build_matrix<F: Float>(records: &[SectionRecord], terms: &[Term]) -> Result<(Mat<F>, Vec<String>)> {
    let names: Vec<String> = terms.iter().map(Term::label).collect();
    let mut rows = Vec::with_capacity(records.len());
    for record in records {
        let mut row = Vec::with_capacity(terms.len());
        for term in terms {
            row.push(F::cast(term_value(record, term)?));
        }
        rows.push(row);
    }
    Ok((Mat::from_rows(rows), names))
}

/// Builds the design for `spec` over `records`, deterministically and
/// order-preservingly.
pub fn build_design<F: Float>(
    records: &[SectionRecord],
    spec: &ModelSpec,
) -> Result<DesignMatrix<F>> {
    spec.validate()?;
    super::validate_dataset(records)?;

    let (x, x_names) = build_matrix::<F>(records, &spec.count_terms)?;
    let (z, z_names) = if spec.family == Family::Zinb {
        let (z, names) = build_matrix::<F>(records, &spec.zero_terms)?;
        (Some(z), names)
    } else {
        (None, Vec::new())
    };

    let mut offset = Vec::with_capacity(records.len());
    for record in records {
        let mut acc = 0.0f64;
        for name in &spec.offset_terms {
            let value = record.value(name).ok_or_else(|| {
                Error::Schema(format!(
                    "unknown offset variable '{name}' on section '{}'",
                    record.section_id
                ))
            })?;
            if value <= 0.0 {
                return Err(Error::Domain(format!(
                    "offset variable '{name}' must be positive on section '{}', got {value}",
                    record.section_id
                )));
            }
            acc += value.ln();
        }
        offset.push(F::cast(acc));
    }

    let y: Vec<u64> = records.iter().map(|r| r.crash_count).collect();

    let groups = match &spec.group_by {
        None => None,
        Some(key) => Some(build_groups(records, key)?),
    };

    let design = DesignMatrix {
        x,
        x_names,
        z,
        z_names,
        offset,
        y,
        groups,
    };
    design.validate()?;
    Ok(design)
}

fn build_groups(records: &[SectionRecord], key: &str) -> Result<GroupIndex> {
    let mut labels: Vec<String> = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut index = Vec::with_capacity(records.len());
    for record in records {
        let label = if key == "route_id" || key == "route" || key == "group" {
            record
                .route_id
                .clone()
                .ok_or_else(|| {
                    Error::Schema(format!(
                        "section '{}' has no group label but group_by = '{key}'",
                        record.section_id
                    ))
                })?
        } else {
            let value = record.value(key).ok_or_else(|| {
                Error::Schema(format!("unknown grouping variable '{key}'"))
            })?;
            format!("{value}")
        };
        let next = labels.len();
        let idx = *seen.entry(label.clone()).or_insert_with(|| {
            labels.push(label);
            next
        });
        index.push(idx);
    }
    Ok(GroupIndex { index, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Direction, Term};

    fn record(id: &str, aadt: f64, len: f64, years: f64, crashes: u64, curv: f64) -> SectionRecord {
        SectionRecord {
            section_id: id.to_string(),
            route_id: Some(format!("R{}", id.len() % 2)),
            direction: Direction::Both,
            crash_count: crashes,
            aadt,
            length_miles: len,
            years_observed: years,
            covariates: [("curvature".to_string(), curv)].into_iter().collect(),
        }
    }

    fn records() -> Vec<SectionRecord> {
        vec![
            record("a", 1000.0, 0.2, 10.0, 1, 3.0),
            record("bb", 2000.0, 0.2, 10.0, 0, 1.0),
            record("c", 500.0, 0.3, 8.0, 2, 0.5),
        ]
    }

    #[test]
    fn canonical_offset_is_log_of_exposure_product() {
        let spec = ModelSpec::new(
            Family::Nb,
            vec![Term::Intercept, Term::covariate("curvature")],
        )
        .with_offsets(ModelSpec::canonical_offsets());
        let design: DesignMatrix<f64> = build_design(&records(), &spec).unwrap();
        // aadt=1000, length=0.2, years=10 -> log(2000)
        assert!((design.offset[0] - 2000.0f64.ln()).abs() < 1e-12);
        assert!((design.offset[0] - 7.6009).abs() < 1e-4);
        for (i, r) in records().iter().enumerate() {
            let expected = (r.aadt * r.length_miles * r.years_observed).ln();
            assert!((design.offset[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_offsets_give_zero_vector() {
        let spec = ModelSpec::new(
            Family::Nb,
            vec![Term::Intercept, Term::covariate("curvature")],
        );
        let design: DesignMatrix<f64> = build_design(&records(), &spec).unwrap();
        assert!(design.offset.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn square_transform() {
        let spec = ModelSpec::new(
            Family::Nb,
            vec![Term::Intercept, Term::square("curvature")],
        );
        let design: DesignMatrix<f64> = build_design(&records(), &spec).unwrap();
        assert_eq!(design.x[(0, 1)], 9.0);
        assert_eq!(design.x_names[1], "curvature^2");
    }

    #[test]
    fn unknown_covariate_is_a_schema_error() {
        let spec = ModelSpec::new(Family::Nb, vec![Term::Intercept, Term::covariate("nope")]);
        assert!(matches!(
            build_design::<f64>(&records(), &spec),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn log_of_nonpositive_offset_is_a_domain_error() {
        let mut recs = records();
        recs[1].covariates.insert("width".to_string(), 0.0);
        recs[0].covariates.insert("width".to_string(), 1.0);
        recs[2].covariates.insert("width".to_string(), 2.0);
        let spec = ModelSpec::new(
            Family::Nb,
            vec![Term::Intercept, Term::covariate("curvature")],
        )
        .with_offsets(vec!["width".to_string()]);
        assert!(matches!(
            build_design::<f64>(&recs, &spec),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn permuting_records_permutes_rows() {
        let spec = ModelSpec::new(
            Family::Nb,
            vec![Term::Intercept, Term::covariate("curvature")],
        )
        .with_offsets(ModelSpec::canonical_offsets());
        let recs = records();
        let d1: DesignMatrix<f64> = build_design(&recs, &spec).unwrap();
        let permuted = vec![recs[2].clone(), recs[0].clone(), recs[1].clone()];
        let d2: DesignMatrix<f64> = build_design(&permuted, &spec).unwrap();
        for (i, j) in [(0usize, 2usize), (1, 0), (2, 1)] {
            assert_eq!(d1.x.row(j), d2.x.row(i));
            assert_eq!(d1.offset[j], d2.offset[i]);
            assert_eq!(d1.y[j], d2.y[i]);
        }
    }

    #[test]
    fn groups_are_dense_in_first_appearance_order() {
        let spec = ModelSpec::new(Family::GlmmNb, vec![Term::Intercept, Term::covariate("curvature")])
            .with_group_by("route_id");
        let design: DesignMatrix<f64> = build_design(&records(), &spec).unwrap();
        let groups = design.groups.unwrap();
        assert_eq!(groups.labels, vec!["R1", "R0"]);
        assert_eq!(groups.index, vec![0, 1, 0]);
        assert_eq!(groups.members(), vec![vec![0, 2], vec![1]]);
    }

    #[test]
    fn constant_column_is_rejected_by_name() {
        let mut recs = records();
        for r in &mut recs {
            r.covariates.insert("flat".to_string(), 2.5);
        }
        let spec = ModelSpec::new(Family::Nb, vec![Term::Intercept, Term::covariate("flat")]);
        match build_design::<f64>(&recs, &spec) {
            Err(Error::Domain(msg)) => assert!(msg.contains("flat"), "{msg}"),
            other => panic!("expected domain error, got {other:?}"),
        }
    }
}
