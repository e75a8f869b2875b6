use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use log::{debug, warn};

use super::parse::{parse_table, ParsedTable, RejectLog, RejectReason};
use super::schema::{SchemaConfig, TableKind, TableSchema};
use super::{normalize_drug_name, DrugName, IngestError, Isr, SubjectReport};
use crate::quarter::Quarter;

/// Paths of one quarter's tables. Only DRUG is mandatory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuarterFiles {
    pub quarter: Quarter,
    pub demo: Option<PathBuf>,
    pub drug: Option<PathBuf>,
    pub indi: Option<PathBuf>,
    pub reac: Option<PathBuf>,
}

impl QuarterFiles {
    /// Looks for `DEMOyyQq.TXT` and friends in `dir`, ignoring case.
    pub fn discover(dir: &Path, quarter: Quarter) -> Result<Self, IngestError> {
        let names = list_dir(dir)?;
        let find = |kind: TableKind| {
            let wanted = kind.file_name(quarter);
            names.iter().find(|n| n.eq_ignore_ascii_case(&wanted)).map(|n| dir.join(n))
        };
        Ok(QuarterFiles {
            quarter,
            demo: find(TableKind::Demo),
            drug: find(TableKind::Drug),
            indi: find(TableKind::Indi),
            reac: find(TableKind::Reac),
        })
    }

    pub fn path(&self, kind: TableKind) -> Option<&Path> {
        match kind {
            TableKind::Demo => self.demo.as_deref(),
            TableKind::Drug => self.drug.as_deref(),
            TableKind::Indi => self.indi.as_deref(),
            TableKind::Reac => self.reac.as_deref(),
        }
    }
}

fn list_dir(dir: &Path) -> Result<Vec<String>, IngestError> {
    let io = |source| IngestError::Io { path: dir.display().to_string(), source };
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let entry = entry.map_err(io)?;
        if let Some(name) = entry.file_name().to_str() {
            names.push(name.to_string());
        }
    }
    names.sort();
    Ok(names)
}

/// Every quarter in `dir` that has a DRUG table, in chronological order.
pub fn discover_quarters(dir: &Path) -> Result<Vec<QuarterFiles>, IngestError> {
    let mut quarters = BTreeSet::new();
    for name in list_dir(dir)? {
        let upper = name.to_ascii_uppercase();
        let Some(rest) = upper.strip_prefix("DRUG") else { continue };
        let Some(tag) = rest.strip_suffix(".TXT") else { continue };
        if let Ok(q) = Quarter::from_file_tag(tag) {
            quarters.insert(q);
        }
    }
    quarters.into_iter().map(|q| QuarterFiles::discover(dir, q)).collect()
}

/// A named table source.
pub struct TableInput<R> {
    pub name: String,
    pub reader: R,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedQuarter {
    pub quarter: Quarter,
    /// Sorted by ISR.
    pub reports: Vec<SubjectReport>,
    pub rejects: RejectLog,
}

/// Opens and joins one quarter's tables from disk.
pub fn load_quarter(files: &QuarterFiles, config: &SchemaConfig) -> Result<LoadedQuarter, IngestError> {
    let open = |kind: TableKind| -> Result<Option<TableInput<File>>, IngestError> {
        let Some(path) = files.path(kind) else { return Ok(None) };
        let reader = File::open(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        Ok(Some(TableInput { name, reader }))
    };
    let drug = open(TableKind::Drug)?.ok_or_else(|| IngestError::MissingDrugFile {
        quarter: files.quarter,
        location: files
            .demo
            .as_deref()
            .and_then(Path::parent)
            .map_or_else(|| "<unknown>".to_string(), |p| p.display().to_string()),
    })?;
    load_quarter_from(
        files.quarter,
        open(TableKind::Demo)?,
        Some(drug),
        open(TableKind::Indi)?,
        open(TableKind::Reac)?,
        config,
    )
}

#[derive(Default)]
struct Pending {
    drug_names: Vec<DrugName>,
    indication_count: u32,
    reaction_count: u32,
}

/// Joins a quarter's tables: subjects from DRUG (and DEMO), then indication
/// and reaction tallies per ISR.
///
/// Output order is by ISR, so it does not depend on the order tables are read.
pub fn load_quarter_from<R: Read>(
    quarter: Quarter,
    demo: Option<TableInput<R>>,
    drug: Option<TableInput<R>>,
    indi: Option<TableInput<R>>,
    reac: Option<TableInput<R>>,
    config: &SchemaConfig,
) -> Result<LoadedQuarter, IngestError> {
    let drug = drug.ok_or_else(|| IngestError::MissingDrugFile { quarter, location: "<input>".into() })?;
    let read =
        |kind: TableKind, input: Option<TableInput<R>>| -> Result<Option<(ParsedTable, TableSchema)>, IngestError> {
            let Some(input) = input else {
                if kind != TableKind::Drug {
                    warn!("{quarter}: no {kind} table, treating it as empty");
                }
                return Ok(None);
            };
            let schema = config.resolve(kind, quarter)?;
            let table = parse_table(input.reader, &schema, &input.name)?;
            check_schema_fit(&table)?;
            Ok(Some((table, schema)))
        };

    let demo = read(TableKind::Demo, demo)?;
    let drug = read(TableKind::Drug, Some(drug))?.expect("drug table present");
    let indi = read(TableKind::Indi, indi)?;
    let reac = read(TableKind::Reac, reac)?;

    let mut subjects: BTreeMap<Isr, Pending> = BTreeMap::new();
    let isr_of = |fields: &[String], schema: &TableSchema| {
        Isr::parse(&fields[schema.isr_column]).expect("parser only emits numeric ISRs")
    };

    {
        let (table, schema) = &drug;
        let name_col = schema.payload_column.expect("validated DRUG schema has a name column");
        for row in &table.rows {
            subjects
                .entry(isr_of(&row.fields, schema))
                .or_default()
                .drug_names
                .push(normalize_drug_name(&row.fields[name_col]));
        }
    }
    if let Some((table, schema)) = &demo {
        for row in &table.rows {
            subjects.entry(isr_of(&row.fields, schema)).or_default();
        }
    }
    let mut tally = |table: &Option<(ParsedTable, TableSchema)>, bump: fn(&mut Pending)| {
        let mut orphans = 0u64;
        if let Some((table, schema)) = table {
            for row in &table.rows {
                match subjects.get_mut(&isr_of(&row.fields, schema)) {
                    Some(p) => bump(p),
                    None => orphans += 1,
                }
            }
            if orphans > 0 {
                debug!("{}: {orphans} rows reference ISRs with no DRUG or DEMO row", table.file);
            }
        }
    };
    tally(&indi, |p| p.indication_count += 1);
    tally(&reac, |p| p.reaction_count += 1);

    let reports = subjects
        .into_iter()
        .map(|(isr, p)| SubjectReport {
            isr,
            quarter,
            drug_names: p.drug_names,
            indication_count: p.indication_count,
            reaction_count: p.reaction_count,
        })
        .collect();

    let mut rejects = RejectLog::default();
    for (table, _) in [demo, Some(drug), indi, reac].into_iter().flatten() {
        rejects.extend(table.rejects);
    }
    Ok(LoadedQuarter { quarter, reports, rejects })
}

/// A table where most lines are rejected was almost certainly read with the
/// wrong layout.
fn check_schema_fit(table: &ParsedTable) -> Result<(), IngestError> {
    let lines = table.data_lines();
    let rejected = table.rejects.len() as u64;
    if lines > 0 && rejected * 2 > lines {
        let detail =
            [RejectReason::FieldCount, RejectReason::EmptyIsr, RejectReason::NonNumericIsr, RejectReason::Encoding]
                .iter()
                .map(|r| format!("{r}={}", table.rejects.count(*r)))
                .collect::<Vec<_>>()
                .join(", ");
        return Err(IngestError::SchemaMismatch { file: table.file.clone(), rejected, lines, detail });
    }
    Ok(())
}
