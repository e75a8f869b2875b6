//! Column layouts for the quarterly extract tables.
//!
//! FDA changed the table layouts between releases, so a layout is resolved
//! per (table kind, quarter) from a versioned JSON config. The shipped
//! default covers the legacy 2004Q1-2012Q2 layout.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quarter::{Quarter, QuarterRange};

/// Environment variable naming a schema config that replaces the defaults.
pub const SCHEMA_ENV: &str = "AERS_SCHEMA";

const DEFAULT_SCHEMA: &str = include_str!("default_schema.json");
const SUPPORTED_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("schema config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema config version {0} (expected {SUPPORTED_VERSION})")]
    Version(u32),
    #[error("invalid {kind} schema: {reason}")]
    Invalid { kind: TableKind, reason: String },
    #[error("no {kind} schema covers {quarter}")]
    NotFound { kind: TableKind, quarter: Quarter },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TableKind {
    Demo,
    Drug,
    Indi,
    Reac,
}

impl TableKind {
    pub const ALL: [TableKind; 4] = [TableKind::Demo, TableKind::Drug, TableKind::Indi, TableKind::Reac];

    /// File-name prefix, e.g. `DRUG` in `DRUG04Q1.TXT`.
    pub fn prefix(self) -> &'static str {
        match self {
            TableKind::Demo => "DEMO",
            TableKind::Drug => "DRUG",
            TableKind::Indi => "INDI",
            TableKind::Reac => "REAC",
        }
    }

    pub fn file_name(self, quarter: Quarter) -> String {
        format!("{}{}.TXT", self.prefix(), quarter.file_tag())
    }
}

impl fmt::Display for TableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

/// Resolved layout of one table. Column indexes are zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSchema {
    pub kind: TableKind,
    pub delimiter: u8,
    pub has_header: bool,
    /// Expected fields per line; `None` takes the count from the header line.
    pub field_count: Option<usize>,
    pub isr_column: usize,
    /// DRUGNAME for DRUG, the indication term for INDI, the reaction term for REAC.
    pub payload_column: Option<usize>,
    pub sequence_column: Option<usize>,
}

impl TableSchema {
    pub fn validate(&self) -> Result<(), SchemaError> {
        let invalid = |reason: String| SchemaError::Invalid { kind: self.kind, reason };
        if !self.delimiter.is_ascii() || matches!(self.delimiter, b'\n' | b'\r') {
            return Err(invalid(format!("delimiter byte {:#04x} is not usable", self.delimiter)));
        }
        if self.field_count.is_none() && !self.has_header {
            return Err(invalid("field_count may only be omitted when a header is present".into()));
        }
        let mut cols = vec![self.isr_column];
        cols.extend(self.payload_column);
        cols.extend(self.sequence_column);
        for (i, c) in cols.iter().enumerate() {
            if cols[..i].contains(c) {
                return Err(invalid(format!("column {c} is referenced twice")));
            }
            if let Some(n) = self.field_count {
                if *c >= n {
                    return Err(invalid(format!("column {c} is outside {n} fields")));
                }
            }
        }
        if self.kind == TableKind::Drug && self.payload_column.is_none() {
            return Err(invalid("DRUG tables need a DRUGNAME (payload) column".into()));
        }
        Ok(())
    }

    /// Highest column index the schema reads.
    pub(crate) fn max_column(&self) -> usize {
        [Some(self.isr_column), self.payload_column, self.sequence_column].into_iter().flatten().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SchemaEntry {
    kind: TableKind,
    from: Option<Quarter>,
    to: Option<Quarter>,
    #[serde(default = "default_delimiter")]
    delimiter: String,
    #[serde(default = "default_true")]
    header: bool,
    field_count: Option<usize>,
    isr: usize,
    #[serde(default)]
    payload: Option<usize>,
    #[serde(default)]
    sequence: Option<usize>,
}

fn default_delimiter() -> String {
    "$".to_string()
}

fn default_true() -> bool {
    true
}

impl SchemaEntry {
    fn covers(&self, kind: TableKind, quarter: Quarter) -> bool {
        self.kind == kind && self.from.is_none_or(|f| f <= quarter) && self.to.is_none_or(|t| quarter <= t)
    }

    fn to_schema(&self) -> Result<TableSchema, SchemaError> {
        let delimiter = match self.delimiter.as_bytes() {
            [b] => *b,
            _ => {
                return Err(SchemaError::Invalid {
                    kind: self.kind,
                    reason: format!("delimiter `{}` must be a single ASCII character", self.delimiter),
                })
            }
        };
        let schema = TableSchema {
            kind: self.kind,
            delimiter,
            has_header: self.header,
            field_count: self.field_count,
            isr_column: self.isr,
            payload_column: self.payload,
            sequence_column: self.sequence,
        };
        schema.validate()?;
        Ok(schema)
    }
}

/// Versioned mapping from (table kind, quarter range) to column layouts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaConfig {
    version: u32,
    tables: Vec<SchemaEntry>,
}

impl SchemaConfig {
    /// The shipped legacy layout.
    pub fn legacy() -> Self {
        Self::from_json(DEFAULT_SCHEMA).expect("bundled schema config is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let config: SchemaConfig = serde_json::from_str(text)?;
        if config.version != SUPPORTED_VERSION {
            return Err(SchemaError::Version(config.version));
        }
        for entry in &config.tables {
            entry.to_schema()?;
            if let (Some(from), Some(to)) = (entry.from, entry.to) {
                QuarterRange::new(from, to)
                    .map_err(|e| SchemaError::Invalid { kind: entry.kind, reason: e.to_string() })?;
            }
        }
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| SchemaError::Read { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    /// Loads the config named by `AERS_SCHEMA`, or the legacy defaults.
    pub fn from_env() -> Result<Self, SchemaError> {
        match std::env::var_os(SCHEMA_ENV) {
            Some(path) if !path.is_empty() => Self::from_path(Path::new(&path)),
            _ => Ok(Self::legacy()),
        }
    }

    /// First entry, in file order, whose kind and quarter range match.
    pub fn resolve(&self, kind: TableKind, quarter: Quarter) -> Result<TableSchema, SchemaError> {
        self.tables.iter().find(|e| e.covers(kind, quarter)).ok_or(SchemaError::NotFound { kind, quarter })?.to_schema()
    }
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self::legacy()
    }
}
