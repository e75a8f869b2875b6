//! Directory of quarterly tables to count store, in one call.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use log::info;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::ingest::{discover_quarters, load_quarter, IngestError, QuarterFiles, RejectLog, SchemaConfig, TableKind};
use crate::model::{build_counts_parallel, CountStore, StoreBuilder, Weighting};
use crate::quarter::QuarterRange;
use crate::Error;

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Quarters to load. Every quarter in the range must have a DRUG table.
    /// `None` loads whatever the directory holds.
    pub range: Option<QuarterRange>,
    pub weighting: Weighting,
    pub schema: SchemaConfig,
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub store: CountStore,
    pub rejects: RejectLog,
}

pub fn ingest_directory(dir: &Path, options: &IngestOptions) -> Result<IngestOutcome, Error> {
    let files: Vec<QuarterFiles> = match options.range {
        Some(range) => range.iter().map(|q| QuarterFiles::discover(dir, q)).collect::<Result<_, _>>()?,
        None => discover_quarters(dir)?,
    };
    if files.is_empty() {
        return Err(IngestError::NoQuarters(dir.display().to_string()).into());
    }
    if let Some(f) = files.iter().find(|f| f.drug.is_none()) {
        return Err(IngestError::MissingDrugFile { quarter: f.quarter, location: dir.display().to_string() }.into());
    }

    let loaded = files.par_iter().map(|f| load_quarter(f, &options.schema)).collect::<Result<Vec<_>, _>>()?;
    let sources = files
        .par_iter()
        .flat_map_iter(|f| TableKind::ALL.into_iter().filter_map(|k| f.path(k)))
        .map(sha256_file)
        .collect::<Result<BTreeMap<_, _>, _>>()?;

    let mut template = StoreBuilder::new().with_weighting(options.weighting);
    if let Some(range) = options.range {
        template = template.with_range(range);
    }
    for f in &files {
        template.cover(f.quarter)?;
    }
    let partitions: Vec<&[_]> = loaded.iter().map(|l| l.reports.as_slice()).collect();
    let mut store = build_counts_parallel(&partitions, &template)?;
    store.set_sources(sources);

    let mut rejects = RejectLog::default();
    for l in loaded {
        info!("{}: {} subjects, {} rejected lines", l.quarter, l.reports.len(), l.rejects.len());
        rejects.extend(l.rejects);
    }
    Ok(IngestOutcome { store, rejects })
}

fn sha256_file(path: &Path) -> Result<(String, String), IngestError> {
    let io = |source| IngestError::Io { path: path.display().to_string(), source };
    let mut file = std::fs::File::open(path).map_err(io)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(io)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    Ok((name, hex::encode(hasher.finalize())))
}
