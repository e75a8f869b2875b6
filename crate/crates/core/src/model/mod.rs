//! The relational count model: drug-name reference counts per quarter.
//!
//! Each drug mention of a subject adds the subject's weight (indications
//! plus reactions, at least 1) to that drug's count in the subject's
//! quarter. A subject on ten drugs with four indications and two reactions
//! therefore contributes 6 to each of the ten drugs.

mod snapshot;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{DrugName, SubjectReport};
use crate::quarter::{Quarter, QuarterRange};

pub use snapshot::{
    export_snapshot, import_snapshot, meta_path_for, read_snapshot, write_snapshot_csv, write_snapshot_meta,
    SnapshotMeta,
};

/// Version of the count semantics and snapshot layout.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("subject {isr} is in {quarter}, outside the declared range {range}")]
    QuarterOutOfRange { isr: String, quarter: Quarter, range: QuarterRange },
    #[error("count overflow for {drug} in {quarter}")]
    Overflow { drug: String, quarter: Quarter },
    #[error("cannot merge stores built as {left} and {right}")]
    VersionMismatch { left: BuildVersion, right: BuildVersion },
    #[error("source {file} has different checksums in the merged stores")]
    SourceConflict { file: String },
    #[error("malformed store: {0}")]
    Invalid(String),
    #[error("{path}{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Snapshot { path: String, line: Option<u64>, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// How a subject's indication and reaction tallies inflate each drug mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// `max(1, I + R)`.
    #[default]
    Additive,
    /// `max(1, I) * max(1, R)`: the row count of a chained left join of
    /// indications and reactions onto each drug row.
    Multiplicative,
}

impl Weighting {
    pub fn weight(self, indication_count: u32, reaction_count: u32) -> u64 {
        match self {
            Weighting::Additive => subject_weight(indication_count, reaction_count),
            Weighting::Multiplicative => u64::from(indication_count.max(1)) * u64::from(reaction_count.max(1)),
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Additive => "additive",
            Weighting::Multiplicative => "multiplicative",
        })
    }
}

impl FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "additive" => Ok(Weighting::Additive),
            "multiplicative" => Ok(Weighting::Multiplicative),
            other => Err(format!("unknown weighting `{other}`")),
        }
    }
}

/// Count reference units each drug mention of a subject contributes.
pub fn subject_weight(indication_count: u32, reaction_count: u32) -> u64 {
    (u64::from(indication_count) + u64::from(reaction_count)).max(1)
}

/// Stores can only be merged when their build versions agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BuildVersion {
    pub format: u32,
    pub weighting: Weighting,
}

impl Default for BuildVersion {
    fn default() -> Self {
        BuildVersion { format: FORMAT_VERSION, weighting: Weighting::Additive }
    }
}

impl fmt::Display for BuildVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}/{}", self.format, self.weighting)
    }
}

impl FromStr for BuildVersion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (format, weighting) = s
            .strip_prefix('v')
            .and_then(|rest| rest.split_once('/'))
            .ok_or_else(|| format!("malformed build version `{s}`"))?;
        Ok(BuildVersion {
            format: format.parse().map_err(|_| format!("malformed build version `{s}`"))?,
            weighting: weighting.parse()?,
        })
    }
}

impl Serialize for BuildVersion {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BuildVersion {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StoreMeta {
    pub build_version: BuildVersion,
    /// Source file name to SHA-256 hex digest.
    pub sources: BTreeMap<String, String>,
}

pub type Series = BTreeMap<Quarter, u64>;

/// Sparse drug-name x quarter count matrix plus per-quarter subject totals.
///
/// Stored counts are always at least 1; a missing entry means zero. Every
/// covered quarter has a subject total, possibly zero.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CountStore {
    counts: BTreeMap<DrugName, Series>,
    subjects_per_quarter: BTreeMap<Quarter, u64>,
    total_events: u64,
    meta: StoreMeta,
}

impl CountStore {
    pub fn from_parts(
        counts: BTreeMap<DrugName, Series>,
        subjects_per_quarter: BTreeMap<Quarter, u64>,
        meta: StoreMeta,
    ) -> Result<Self, ModelError> {
        let mut total: u64 = 0;
        for (name, series) in &counts {
            if series.is_empty() {
                return Err(ModelError::Invalid(format!("drug `{name}` has an empty series")));
            }
            for (q, c) in series {
                if *c == 0 {
                    return Err(ModelError::Invalid(format!("zero count stored for `{name}` in {q}")));
                }
                if !subjects_per_quarter.contains_key(q) {
                    return Err(ModelError::Invalid(format!("`{name}` has a count in uncovered quarter {q}")));
                }
                total = total
                    .checked_add(*c)
                    .ok_or_else(|| ModelError::Overflow { drug: name.to_string(), quarter: *q })?;
            }
        }
        Ok(CountStore { counts, subjects_per_quarter, total_events: total, meta })
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty() && self.subjects_per_quarter.is_empty()
    }

    pub fn drug_count(&self) -> usize {
        self.counts.len()
    }

    /// Covered quarters, chronological.
    pub fn quarters(&self) -> impl ExactSizeIterator<Item = Quarter> + '_ {
        self.subjects_per_quarter.keys().copied()
    }

    pub fn subjects_per_quarter(&self) -> &BTreeMap<Quarter, u64> {
        &self.subjects_per_quarter
    }

    pub fn total_subjects(&self) -> u64 {
        self.subjects_per_quarter.values().sum()
    }

    pub fn total_events(&self) -> u64 {
        self.total_events
    }

    /// Sum over drugs of each covered quarter's counts.
    pub fn events_per_quarter(&self) -> BTreeMap<Quarter, u64> {
        let mut events: BTreeMap<Quarter, u64> = self.quarters().map(|q| (q, 0)).collect();
        for series in self.counts.values() {
            for (q, c) in series {
                *events.get_mut(q).expect("count quarters are covered") += c;
            }
        }
        events
    }

    pub fn series(&self, drug: &DrugName) -> Option<&Series> {
        self.counts.get(drug)
    }

    pub fn count(&self, drug: &DrugName, quarter: Quarter) -> u64 {
        self.counts.get(drug).and_then(|s| s.get(&quarter)).copied().unwrap_or(0)
    }

    /// Drugs in byte order of their names.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&DrugName, &Series)> {
        self.counts.iter()
    }

    /// Each drug's count summed over quarters, in name order.
    pub fn drug_totals(&self) -> Vec<(&DrugName, u64)> {
        self.counts.iter().map(|(n, s)| (n, s.values().sum())).collect()
    }

    /// Counts present in one quarter, in name order.
    pub fn quarter_counts(&self, quarter: Quarter) -> Vec<(&DrugName, u64)> {
        self.counts.iter().filter_map(|(n, s)| s.get(&quarter).map(|c| (n, *c))).collect()
    }

    pub fn meta(&self) -> &StoreMeta {
        &self.meta
    }

    pub fn set_sources(&mut self, sources: BTreeMap<String, String>) {
        self.meta.sources = sources;
    }

    /// The part of the store inside `range`. Drugs with no count left are
    /// dropped.
    pub fn restricted(&self, range: QuarterRange) -> CountStore {
        let mut total_events = 0;
        let counts: BTreeMap<DrugName, Series> = self
            .counts
            .iter()
            .filter_map(|(name, series)| {
                let kept: Series = series.iter().filter(|(q, _)| range.contains(**q)).map(|(q, c)| (*q, *c)).collect();
                total_events += kept.values().sum::<u64>();
                (!kept.is_empty()).then(|| (name.clone(), kept))
            })
            .collect();
        let subjects_per_quarter =
            self.subjects_per_quarter.iter().filter(|(q, _)| range.contains(**q)).map(|(q, s)| (*q, *s)).collect();
        CountStore { counts, subjects_per_quarter, total_events, meta: self.meta.clone() }
    }
}

/// Accumulates subject reports into a [`CountStore`].
#[derive(Debug, Clone)]
pub struct StoreBuilder {
    range: Option<QuarterRange>,
    weighting: Weighting,
    counts: HashMap<DrugName, Series>,
    subjects: BTreeMap<Quarter, u64>,
    total: u64,
}

impl Default for StoreBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl StoreBuilder {
    pub fn new() -> Self {
        StoreBuilder {
            range: None,
            weighting: Weighting::Additive,
            counts: HashMap::new(),
            subjects: BTreeMap::new(),
            total: 0,
        }
    }

    /// Declares the quarter range. Every quarter in it is covered, and
    /// reports outside it are rejected.
    pub fn with_range(mut self, range: QuarterRange) -> Self {
        for q in range.iter() {
            self.subjects.entry(q).or_insert(0);
        }
        self.range = Some(range);
        self
    }

    pub fn with_weighting(mut self, weighting: Weighting) -> Self {
        self.weighting = weighting;
        self
    }

    /// Marks a quarter as covered even if it ends up with no subjects.
    pub fn cover(&mut self, quarter: Quarter) -> Result<(), ModelError> {
        if let Some(range) = self.range {
            if !range.contains(quarter) {
                return Err(ModelError::QuarterOutOfRange { isr: "-".into(), quarter, range });
            }
        }
        self.subjects.entry(quarter).or_insert(0);
        Ok(())
    }

    pub fn add_report(&mut self, report: &SubjectReport) -> Result<(), ModelError> {
        let quarter = report.quarter;
        if let Some(range) = self.range {
            if !range.contains(quarter) {
                return Err(ModelError::QuarterOutOfRange { isr: report.isr.to_string(), quarter, range });
            }
        }
        *self.subjects.entry(quarter).or_insert(0) += 1;
        let weight = self.weighting.weight(report.indication_count, report.reaction_count);
        for name in &report.drug_names {
            let series = match self.counts.get_mut(name) {
                Some(s) => s,
                None => self.counts.entry(name.clone()).or_default(),
            };
            let overflow = || ModelError::Overflow { drug: name.to_string(), quarter };
            let slot = series.entry(quarter).or_insert(0);
            *slot = slot.checked_add(weight).ok_or_else(overflow)?;
            self.total = self.total.checked_add(weight).ok_or_else(overflow)?;
        }
        Ok(())
    }

    pub fn add_batch(&mut self, reports: &[SubjectReport]) -> Result<(), ModelError> {
        reports.iter().try_for_each(|r| self.add_report(r))
    }

    pub fn finish(self) -> CountStore {
        CountStore {
            counts: self.counts.into_iter().collect(),
            subjects_per_quarter: self.subjects,
            total_events: self.total,
            meta: StoreMeta {
                build_version: BuildVersion { format: FORMAT_VERSION, weighting: self.weighting },
                sources: BTreeMap::new(),
            },
        }
    }
}

/// Builds an additive store from batches of reports. Covered quarters are
/// those that appear in the reports.
pub fn build_counts<'a, I>(batches: I) -> Result<CountStore, ModelError>
where
    I: IntoIterator<Item = &'a [SubjectReport]>,
{
    let mut builder = StoreBuilder::new();
    for batch in batches {
        builder.add_batch(batch)?;
    }
    Ok(builder.finish())
}

/// Builds one partial store per partition on the rayon pool and merges them.
///
/// `template` supplies range, weighting and pre-covered quarters for every
/// partial build.
pub fn build_counts_parallel(
    partitions: &[&[SubjectReport]],
    template: &StoreBuilder,
) -> Result<CountStore, ModelError> {
    partitions
        .par_iter()
        .map(|part| {
            let mut b = template.clone();
            b.add_batch(part)?;
            Ok(b.finish())
        })
        .try_reduce(|| template.clone().finish(), merge_stores)
}

/// Pointwise sum of two stores built with the same version.
pub fn merge_stores(a: CountStore, b: CountStore) -> Result<CountStore, ModelError> {
    if a.meta.build_version != b.meta.build_version {
        return Err(ModelError::VersionMismatch { left: a.meta.build_version, right: b.meta.build_version });
    }
    let (mut big, small) = if a.counts.len() >= b.counts.len() { (a, b) } else { (b, a) };
    for (q, n) in small.subjects_per_quarter {
        let slot = big.subjects_per_quarter.entry(q).or_insert(0);
        *slot = slot.checked_add(n).ok_or_else(|| ModelError::Invalid(format!("subject total overflow in {q}")))?;
    }
    for (name, series) in small.counts {
        let target = big.counts.entry(name.clone()).or_default();
        for (q, c) in series {
            let slot = target.entry(q).or_insert(0);
            *slot = slot.checked_add(c).ok_or_else(|| ModelError::Overflow { drug: name.to_string(), quarter: q })?;
        }
    }
    big.total_events = big
        .total_events
        .checked_add(small.total_events)
        .ok_or_else(|| ModelError::Invalid("total event overflow".into()))?;
    for (file, digest) in small.meta.sources {
        match big.meta.sources.get(&file) {
            Some(existing) if *existing != digest => return Err(ModelError::SourceConflict { file }),
            Some(_) => {}
            None => {
                big.meta.sources.insert(file, digest);
            }
        }
    }
    Ok(big)
}
