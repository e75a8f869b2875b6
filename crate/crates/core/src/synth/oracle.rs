//! Deliberately naive reference counter.
//!
//! Shares no parsing or counting code with the ingest and model modules: it
//! finds columns by header name, splits on `$`, normalizes with its own
//! routine and accumulates into a dense matrix.

use std::collections::BTreeMap;
use std::path::Path;

use super::{Corpus, SynthError};
use crate::ingest::{normalize_drug_name, DrugName};
use crate::model::{CountStore, StoreMeta};
use crate::quarter::Quarter;

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn split(bytes: &[u8]) -> Result<Table, SynthError> {
    let text = String::from_utf8_lossy(bytes);
    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).filter(|l| !l.is_empty());
    let header: Vec<String> = match lines.next() {
        Some(h) => h.trim_end_matches('$').split('$').map(|s| s.trim().to_ascii_uppercase()).collect(),
        None => return Err(SynthError::Oracle("table without header".into())),
    };
    let width = header.len();
    let rows = lines
        .map(|l| l.split('$').map(str::to_string).collect::<Vec<_>>())
        .map(|mut f| {
            if f.len() == width + 1 && f.last().is_some_and(String::is_empty) {
                f.pop();
            }
            f
        })
        .filter(|f| f.len() == width)
        .collect();
    Ok(Table { header, rows })
}

fn column(t: &Table, name: &str) -> Result<usize, SynthError> {
    t.header.iter().position(|h| h == name).ok_or_else(|| SynthError::Oracle(format!("no {name} column")))
}

fn isrs(t: &Table) -> Result<Vec<u64>, SynthError> {
    let c = column(t, "ISR")?;
    Ok(t.rows.iter().filter_map(|r| r[c].trim().parse().ok()).collect())
}

fn naive_normalize(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ").to_uppercase()
}

fn occurrences(sorted: &[u64], isr: u64) -> u64 {
    (sorted.partition_point(|x| *x <= isr) - sorted.partition_point(|x| *x < isr)) as u64
}

/// Counts with the additive subject weight over raw table bytes.
fn count(quarters: &[(Quarter, [Option<Vec<u8>>; 4])]) -> Result<CountStore, SynthError> {
    let mut per_quarter = Vec::new();
    for (q, [demo, drug, indi, reac]) in quarters {
        let drug = split(drug.as_deref().ok_or_else(|| SynthError::Oracle(format!("{q}: no DRUG table")))?)?;
        let (ic, nc) = (column(&drug, "ISR")?, column(&drug, "DRUGNAME")?);
        let mut mentions: Vec<(u64, String)> = drug
            .rows
            .iter()
            .filter_map(|r| r[ic].trim().parse().ok().map(|isr| (isr, naive_normalize(&r[nc]))))
            .collect();
        mentions.sort();

        let optional = |t: &Option<Vec<u8>>| -> Result<Vec<u64>, SynthError> {
            let mut v = match t {
                Some(b) => isrs(&split(b)?)?,
                None => Vec::new(),
            };
            v.sort_unstable();
            Ok(v)
        };
        let mut subjects: Vec<u64> = mentions.iter().map(|m| m.0).chain(optional(demo)?).collect();
        subjects.sort_unstable();
        subjects.dedup();
        per_quarter.push((*q, subjects, mentions, optional(indi)?, optional(reac)?));
    }

    let mut names: Vec<String> = per_quarter.iter().flat_map(|p| p.2.iter().map(|m| m.1.clone())).collect();
    names.sort();
    names.dedup();
    let mut dense = vec![vec![0u64; per_quarter.len()]; names.len()];
    for (qi, (_, _, mentions, indi, reac)) in per_quarter.iter().enumerate() {
        for (isr, name) in mentions {
            let w = (occurrences(indi, *isr) + occurrences(reac, *isr)).max(1);
            let ni = names.binary_search(name).expect("name collected above");
            dense[ni][qi] += w;
        }
    }

    let mut counts: BTreeMap<DrugName, BTreeMap<Quarter, u64>> = BTreeMap::new();
    for (ni, row) in dense.iter().enumerate() {
        for (qi, c) in row.iter().enumerate() {
            if *c > 0 {
                counts.entry(normalize_drug_name(&names[ni])).or_default().insert(per_quarter[qi].0, *c);
            }
        }
    }
    let subjects = per_quarter.iter().map(|p| (p.0, p.1.len() as u64)).collect();
    CountStore::from_parts(counts, subjects, StoreMeta::default()).map_err(|e| SynthError::Oracle(e.to_string()))
}

/// Reference counts for an in-memory corpus.
pub fn oracle_counts(corpus: &Corpus) -> Result<CountStore, SynthError> {
    let quarters: Vec<_> = corpus
        .tables
        .iter()
        .map(|(q, t)| (*q, [Some(t.demo.clone()), Some(t.drug.clone()), Some(t.indi.clone()), Some(t.reac.clone())]))
        .collect();
    count(&quarters)
}

/// Reference counts for `DEMOyyQq.TXT`-style files in `dir`.
pub fn oracle_counts_dir(dir: &Path, quarters: &[Quarter]) -> Result<CountStore, SynthError> {
    let mut input = Vec::new();
    for q in quarters {
        let read = |prefix: &str| {
            let name = format!("{prefix}{:02}Q{}.TXT", q.year() % 100, q.q());
            std::fs::read(dir.join(name)).ok()
        };
        input.push((*q, [read("DEMO"), read("DRUG"), read("INDI"), read("REAC")]));
    }
    count(&input)
}
