//! Reading quarterly AERS extracts into per-subject reports.
//!
//! A quarter is a set of `$`-delimited tables (DEMO, DRUG, INDI, REAC) keyed
//! by ISR. [`parse_table`] turns one table into rows plus a reject log and
//! never aborts on malformed lines; [`load_quarter`] joins the four tables
//! into one [`SubjectReport`] per ISR.

mod load;
mod parse;
pub mod schema;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quarter::Quarter;

pub use load::{discover_quarters, load_quarter, load_quarter_from, LoadedQuarter, QuarterFiles, TableInput};
pub use parse::{parse_table, ParsedLine, ParsedTable, RawRow, RejectEntry, RejectLog, RejectReason, TableReader};
pub use schema::{SchemaConfig, SchemaError, TableKind, TableSchema};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no DRUG table for {quarter} in {location}")]
    MissingDrugFile { quarter: Quarter, location: String },
    #[error("no quarterly DRUG tables found in {0}")]
    NoQuarters(String),
    #[error("{file}: {rejected} of {lines} data lines rejected ({detail}); the table does not match its schema")]
    SchemaMismatch { file: String, rejected: u64, lines: u64, detail: String },
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// A drug name after [`normalize_drug_name`].
///
/// The empty string is the distinguished EMPTY marker: no non-blank input
/// normalizes to it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DrugName(String);

impl DrugName {
    pub const EMPTY: DrugName = DrugName(String::new());

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty_marker(&self) -> bool {
        self.0.is_empty()
    }

    /// Label for human-facing output, where an empty field would be ambiguous.
    pub fn label(&self) -> &str {
        if self.is_empty_marker() {
            "<EMPTY>"
        } else {
            &self.0
        }
    }
}

impl fmt::Display for DrugName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for DrugName {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Trims, collapses internal whitespace runs to one space and uppercases
/// ASCII letters. Nothing else is touched, so spelling variants such as
/// `ASPIRIN.` stay distinct from `ASPIRIN`.
pub fn normalize_drug_name(raw: &str) -> DrugName {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(c.to_ascii_uppercase());
    }
    DrugName(out)
}

/// Subject report identifier. Numeric text with leading zeros removed;
/// ordered numerically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Isr(String);

impl Isr {
    /// Accepts ASCII digits, surrounded by optional whitespace.
    pub fn parse(text: &str) -> Option<Isr> {
        let t = text.trim();
        if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let stripped = t.trim_start_matches('0');
        Some(Isr(if stripped.is_empty() { "0".to_string() } else { stripped.to_string() }))
    }

    pub fn from_number(n: u64) -> Isr {
        Isr(n.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Ord for Isr {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Isr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Isr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Isr {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Isr::parse(&value).ok_or_else(|| format!("`{value}` is not a numeric ISR"))
    }
}

impl From<Isr> for String {
    fn from(isr: Isr) -> String {
        isr.0
    }
}

/// One subject (ISR) in one release quarter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectReport {
    pub isr: Isr,
    pub quarter: Quarter,
    /// Every DRUG row for the subject, in file order. Repeats are kept.
    pub drug_names: Vec<DrugName>,
    pub indication_count: u32,
    pub reaction_count: u32,
}

impl SubjectReport {
    /// Drug names with repeats removed, sorted.
    pub fn distinct_drug_names(&self) -> Vec<&DrugName> {
        let mut names: Vec<&DrugName> = self.drug_names.iter().collect();
        names.sort();
        names.dedup();
        names
    }
}
