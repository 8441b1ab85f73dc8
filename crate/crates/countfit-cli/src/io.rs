//! File plumbing: atomic writes, dataset fingerprints, and the versioned
//! JSON documents the subcommands exchange.

use serde::{Deserialize, Serialize};
use std::path::Path;

use countfit::data::{ModelSpec, SectionRecord};
use countfit::error::{Error, Result};
use countfit::{FitResult64, GofReport64};

pub const SCHEMA_VERSION: u32 = 1;

/// Writes through a sibling temp file and renames, so readers never observe
/// a half-written artifact.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// FNV-1a 64-bit content fingerprint of a dataset (not cryptographic; used
/// to detect accidental dataset mismatches between subcommands).
pub fn dataset_fingerprint(records: &[SectionRecord]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for r in records {
        eat(r.section_id.as_bytes());
        eat(r.route_id.as_deref().unwrap_or("").as_bytes());
        eat(r.direction.as_str().as_bytes());
        eat(&r.crash_count.to_le_bytes());
        eat(&r.aadt.to_bits().to_le_bytes());
        eat(&r.length_miles.to_bits().to_le_bytes());
        eat(&r.years_observed.to_bits().to_le_bytes());
        for (name, value) in &r.covariates {
            eat(name.as_bytes());
            eat(&value.to_bits().to_le_bytes());
        }
    }
    format!("{hash:016x}")
}

/// The fit artifact: the estimation result plus everything needed to rebuild
/// its design matrix and to check dataset identity downstream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDocument {
    pub schema_version: u32,
    pub data_fingerprint: String,
    pub model_spec: ModelSpec,
    pub fit: FitResult64,
}

impl FitDocument {
    pub fn new(fingerprint: String, model_spec: ModelSpec, fit: FitResult64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            data_fingerprint: fingerprint,
            model_spec,
            fit,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(path, (text + "\n").as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let doc: FitDocument = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported fit document schema version {}",
                doc.schema_version
            )));
        }
        doc.model_spec.validate()?;
        Ok(doc)
    }
}

/// The goodness-of-fit artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GofDocument {
    pub schema_version: u32,
    pub data_fingerprint: String,
    pub report: GofReport64,
}

impl GofDocument {
    pub fn new(fingerprint: String, report: GofReport64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            data_fingerprint: fingerprint,
            report,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(path, (text + "\n").as_bytes())
    }
}
