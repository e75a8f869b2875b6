//! Snapshot files: a `drug_name,year,quarter,count` CSV plus a sibling
//! `*.meta.json` holding quarter coverage, subject totals and provenance.
//!
//! Rows are sorted by drug-name bytes, then chronologically, so two exports
//! of the same store are byte-identical.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BuildVersion, CountStore, ModelError, Series, StoreMeta};
use crate::ingest::{normalize_drug_name, DrugName};
use crate::quarter::Quarter;

const HEADER: [&str; 4] = ["drug_name", "year", "quarter", "count"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub build_version: BuildVersion,
    pub quarters: Vec<Quarter>,
    pub subjects_per_quarter: BTreeMap<Quarter, u64>,
    pub drug_names: usize,
    pub total_events: u64,
    pub sources: BTreeMap<String, String>,
}

impl SnapshotMeta {
    pub fn of(store: &CountStore) -> Self {
        SnapshotMeta {
            build_version: store.meta().build_version,
            quarters: store.quarters().collect(),
            subjects_per_quarter: store.subjects_per_quarter().clone(),
            drug_names: store.drug_count(),
            total_events: store.total_events(),
            sources: store.meta().sources.clone(),
        }
    }
}

/// `foo.csv` -> `foo.meta.json`.
pub fn meta_path_for(csv_path: &Path) -> PathBuf {
    let stem = csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.meta.json"))
}

pub fn write_snapshot_csv<W: Write>(store: &CountStore, out: W) -> Result<(), ModelError> {
    let to_err = |e: csv::Error| ModelError::Snapshot { path: "<output>".into(), line: None, message: e.to_string() };
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(HEADER).map_err(to_err)?;
    for (name, series) in store.iter() {
        for (q, c) in series {
            w.write_record([name.as_str(), &q.year().to_string(), &q.q().to_string(), &c.to_string()])
                .map_err(to_err)?;
        }
    }
    w.flush().map_err(|source| ModelError::Io { path: "<output>".into(), source })
}

pub fn write_snapshot_meta<W: Write>(store: &CountStore, mut out: W) -> Result<(), ModelError> {
    let io = |source| ModelError::Io { path: "<output>".into(), source };
    serde_json::to_writer_pretty(&mut out, &SnapshotMeta::of(store)).map_err(|e| io(e.into()))?;
    out.write_all(b"\n").map_err(io)
}

/// Writes the meta file, then the CSV. Returns the meta path.
pub fn export_snapshot(store: &CountStore, csv_path: &Path) -> Result<PathBuf, ModelError> {
    let meta_path = meta_path_for(csv_path);
    let create = |p: &Path| {
        File::create(p).map(BufWriter::new).map_err(|source| ModelError::Io { path: p.display().to_string(), source })
    };
    let mut meta = create(&meta_path)?;
    write_snapshot_meta(store, &mut meta)?;
    meta.flush().map_err(|source| ModelError::Io { path: meta_path.display().to_string(), source })?;
    write_snapshot_csv(store, create(csv_path)?)?;
    Ok(meta_path)
}

pub fn import_snapshot(csv_path: &Path) -> Result<CountStore, ModelError> {
    let meta_path = meta_path_for(csv_path);
    let open = |p: &Path| File::open(p).map_err(|source| ModelError::Io { path: p.display().to_string(), source });
    read_snapshot(open(csv_path)?, open(&meta_path)?, &csv_path.display().to_string())
}

/// Parses and validates a snapshot. `path` labels diagnostics.
pub fn read_snapshot<C: Read, M: Read>(csv_in: C, meta_in: M, path: &str) -> Result<CountStore, ModelError> {
    let fail = |line: Option<u64>, message: String| ModelError::Snapshot { path: path.to_string(), line, message };

    let meta: SnapshotMeta = serde_json::from_reader(meta_in).map_err(|e| fail(None, format!("meta file: {e}")))?;
    let covered: Vec<Quarter> = meta.subjects_per_quarter.keys().copied().collect();
    if covered != meta.quarters {
        return Err(fail(None, "meta quarters disagree with subjects_per_quarter".into()));
    }

    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(csv_in);
    let mut records = reader.records();
    match records.next() {
        Some(Ok(h)) if h.iter().eq(HEADER) => {}
        Some(Ok(h)) => return Err(fail(Some(1), format!("bad header `{}`", h.iter().collect::<Vec<_>>().join(",")))),
        Some(Err(e)) => return Err(fail(Some(1), e.to_string())),
        None => return Err(fail(Some(1), "missing header".into())),
    }

    let mut counts: BTreeMap<DrugName, Series> = BTreeMap::new();
    let mut last: Option<(DrugName, Quarter)> = None;
    for rec in records {
        let rec = rec.map_err(|e| fail(e.position().map(|p| p.line()), e.to_string()))?;
        let line = rec.position().map(|p| p.line());
        if rec.len() != 4 {
            return Err(fail(line, format!("expected 4 fields, found {}", rec.len())));
        }
        let name = normalize_drug_name(&rec[0]);
        if name.as_str() != &rec[0] {
            return Err(fail(line, format!("drug name `{}` is not normalized", &rec[0])));
        }
        let year: u16 = rec[1].parse().map_err(|_| fail(line, format!("non-numeric year `{}`", &rec[1])))?;
        let qn: u8 = rec[2].parse().map_err(|_| fail(line, format!("non-numeric quarter `{}`", &rec[2])))?;
        let quarter = Quarter::new(year, qn).map_err(|e| fail(line, e.to_string()))?;
        let count: u64 = rec[3].parse().map_err(|_| fail(line, format!("non-numeric count `{}`", &rec[3])))?;
        if count == 0 {
            return Err(fail(line, "zero counts are not stored".into()));
        }
        if !meta.subjects_per_quarter.contains_key(&quarter) {
            return Err(fail(line, format!("{quarter} is not a covered quarter")));
        }
        if let Some((prev_name, prev_q)) = &last {
            if (prev_name, *prev_q) >= (&name, quarter) {
                return Err(fail(line, "rows are not sorted by drug name and quarter".into()));
            }
        }
        counts.entry(name.clone()).or_default().insert(quarter, count);
        last = Some((name, quarter));
    }

    let store = CountStore::from_parts(
        counts,
        meta.subjects_per_quarter.clone(),
        StoreMeta { build_version: meta.build_version, sources: meta.sources.clone() },
    )
    .map_err(|e| fail(None, e.to_string()))?;
    if store.total_events() != meta.total_events {
        return Err(fail(
            None,
            format!("meta total_events {} but rows sum to {}", meta.total_events, store.total_events()),
        ));
    }
    if store.drug_count() != meta.drug_names {
        return Err(fail(None, format!("meta drug_names {} but rows hold {}", meta.drug_names, store.drug_count())));
    }
    Ok(store)
}
