//! Population-level surveillance: quarterly trend ratios, per-quarter
//! distribution summaries and baseline-departure outbreak alerts.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::DrugName;
use crate::model::{CountStore, Series};
use crate::quarter::Quarter;
use crate::stats::percentile_sorted;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurveilError {
    #[error("invalid detection config: {0}")]
    Config(String),
    #[error("no drug has a count in {0}")]
    EmptyQuarter(Quarter),
}

/// Reference subjects-to-events ratio (1:2) exported alongside the trend.
pub const REFERENCE_RATIO: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarterTrend {
    pub quarter: Quarter,
    pub subjects: u64,
    pub events: u64,
    /// `subjects / events`; `None` when the quarter has no events.
    pub ratio: Option<f64>,
    pub subject_share: f64,
    pub event_share: f64,
}

/// One row per covered quarter, chronological. Shares are 0 when the
/// corresponding corpus total is 0.
pub fn population_trend(store: &CountStore) -> Vec<QuarterTrend> {
    let events = store.events_per_quarter();
    let total_subjects = store.total_subjects();
    let total_events = store.total_events();
    let share = |part: u64, whole: u64| if whole == 0 { 0.0 } else { part as f64 / whole as f64 };
    store
        .subjects_per_quarter()
        .iter()
        .map(|(q, s)| {
            let e = events[q];
            QuarterTrend {
                quarter: *q,
                subjects: *s,
                events: e,
                ratio: (e > 0).then(|| *s as f64 / e as f64),
                subject_share: share(*s, total_subjects),
                event_share: share(e, total_events),
            }
        })
        .collect()
}

pub fn write_trend_csv<W: Write>(rows: &[QuarterTrend], with_reference: bool, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = vec!["year", "quarter", "subjects", "events", "ratio", "subject_share", "event_share"];
    if with_reference {
        header.push("reference_ratio");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.quarter.year().to_string(),
            r.quarter.q().to_string(),
            r.subjects.to_string(),
            r.events.to_string(),
            r.ratio.map(|x| x.to_string()).unwrap_or_default(),
            r.subject_share.to_string(),
            r.event_share.to_string(),
        ];
        if with_reference {
            rec.push(REFERENCE_RATIO.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Minimum active quarters before a series is scored.
pub const DEFAULT_MIN_ACTIVE: usize = 4;

/// One active quarter measured against the drug's other active quarters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Departure {
    pub count: u64,
    /// Median of the other active quarters; `None` if there are none.
    pub baseline_median: Option<f64>,
    /// Sample sd of the other active quarters; `None` below two of them.
    pub baseline_sd: Option<f64>,
    /// `(count - baseline_median) / baseline_sd`; `None` below the support
    /// threshold or when the baseline sd is zero.
    pub score: Option<f64>,
    /// `count / max(1, baseline_median)`.
    pub fold_change: Option<f64>,
}

pub fn departure_scores(series: &Series) -> BTreeMap<Quarter, Departure> {
    departure_scores_with(series, DEFAULT_MIN_ACTIVE)
}

/// Leave-one-out departure of every active quarter. The scored quarter is
/// excluded from its own baseline so a large spike cannot mask itself.
pub fn departure_scores_with(series: &Series, min_active: usize) -> BTreeMap<Quarter, Departure> {
    let active: Vec<(Quarter, u64)> = series.iter().filter(|(_, c)| **c > 0).map(|(q, c)| (*q, *c)).collect();
    let mut sorted: Vec<u64> = active.iter().map(|(_, c)| *c).collect();
    sorted.sort_unstable();
    let scored = active.len() >= min_active;
    let mut others: Vec<f64> = Vec::with_capacity(sorted.len());

    active
        .iter()
        .map(|(q, count)| {
            // drop one occurrence of this count from the sorted sample
            let skip = sorted.partition_point(|c| c < count);
            others.clear();
            others.extend(sorted.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, c)| *c as f64));

            let baseline_median = (!others.is_empty()).then(|| midpoint_median(&others));
            let baseline_sd = (others.len() >= 2).then(|| sample_sd(&others));
            let score = match (scored, baseline_median, baseline_sd) {
                (true, Some(m), Some(sd)) if sd > 0.0 => Some((*count as f64 - m) / sd),
                _ => None,
            };
            let fold_change = baseline_median.map(|m| *count as f64 / m.max(1.0));
            (*q, Departure { count: *count, baseline_median, baseline_sd, score, fold_change })
        })
        .collect()
}

fn midpoint_median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    /// Minimum departure score.
    pub theta: f64,
    /// Minimum count in the alerting quarter.
    pub min_count: u64,
    pub min_active: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig { theta: 3.0, min_count: 1000, min_active: DEFAULT_MIN_ACTIVE }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<(), SurveilError> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(SurveilError::Config(format!("theta must be positive, got {}", self.theta)));
        }
        if self.min_count < 1 {
            return Err(SurveilError::Config("min count must be at least 1".into()));
        }
        if self.min_active < 3 {
            return Err(SurveilError::Config(format!(
                "min active quarters must be at least 3, got {}",
                self.min_active
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub drug: DrugName,
    pub quarter: Quarter,
    pub count: u64,
    pub baseline_median: f64,
    pub baseline_sd: f64,
    pub departure_score: f64,
    pub fold_change: f64,
}

/// Every (drug, quarter) whose departure score reaches `theta` with at
/// least `min_count` references. Sorted by descending score, then drug
/// name bytes, then quarter.
pub fn detect_outbreaks(store: &CountStore, config: &DetectConfig) -> Result<Vec<Alert>, SurveilError> {
    config.validate()?;
    let drugs: Vec<(&DrugName, &Series)> = store.iter().collect();
    let mut alerts: Vec<Alert> = drugs
        .par_iter()
        .filter(|(_, s)| s.len() >= config.min_active && s.values().any(|c| *c >= config.min_count))
        .flat_map_iter(|(name, series)| {
            departure_scores_with(series, config.min_active).into_iter().filter_map(move |(quarter, d)| {
                let score = d.score?;
                (score >= config.theta && d.count >= config.min_count).then(|| Alert {
                    drug: (*name).clone(),
                    quarter,
                    count: d.count,
                    baseline_median: d.baseline_median.expect("scored quarters have a baseline"),
                    baseline_sd: d.baseline_sd.expect("scored quarters have a baseline"),
                    departure_score: score,
                    fold_change: d.fold_change.expect("scored quarters have a baseline"),
                })
            })
        })
        .collect();
    alerts.sort_by(|a, b| {
        b.departure_score
            .total_cmp(&a.departure_score)
            .then_with(|| a.drug.cmp(&b.drug))
            .then_with(|| a.quarter.cmp(&b.quarter))
    });
    Ok(alerts)
}

pub fn write_alerts_csv<W: Write>(alerts: &[Alert], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["drug_name", "year", "quarter", "count", "baseline_median", "baseline_sd", "score", "fold"])?;
    for a in alerts {
        w.write_record([
            a.drug.to_string(),
            a.quarter.year().to_string(),
            a.quarter.q().to_string(),
            a.count.to_string(),
            a.baseline_median.to_string(),
            a.baseline_sd.to_string(),
            a.departure_score.to_string(),
            a.fold_change.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const DEFAULT_MAX_OUTLIERS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotSummary {
    pub quarter: Quarter,
    pub n: usize,
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
    /// `p75 + 1.5 * (p75 - p25)`.
    pub upper_fence: f64,
    /// Drugs above the fence, descending by count, capped.
    pub outliers: Vec<(DrugName, u64)>,
}

pub fn boxplot_summary(store: &CountStore, quarter: Quarter) -> Result<BoxplotSummary, SurveilError> {
    boxplot_summary_with(store, quarter, DEFAULT_MAX_OUTLIERS)
}

/// Five-number summary of the per-drug counts present in `quarter`.
pub fn boxplot_summary_with(
    store: &CountStore,
    quarter: Quarter,
    max_outliers: usize,
) -> Result<BoxplotSummary, SurveilError> {
    let present = store.quarter_counts(quarter);
    if present.is_empty() {
        return Err(SurveilError::EmptyQuarter(quarter));
    }
    let mut sorted: Vec<f64> = present.iter().map(|(_, c)| *c as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let pct = |p| percentile_sorted(&sorted, p).expect("non-empty, p in range");
    let (p25, p75) = (pct(0.25), pct(0.75));
    let upper_fence = p75 + 1.5 * (p75 - p25);
    let mut outliers: Vec<(DrugName, u64)> =
        present.into_iter().filter(|(_, c)| *c as f64 > upper_fence).map(|(n, c)| (n.clone(), c)).collect();
    outliers.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    outliers.truncate(max_outliers);
    Ok(BoxplotSummary {
        quarter,
        n: sorted.len(),
        min: sorted[0],
        p25,
        median: pct(0.5),
        p75,
        max: sorted[sorted.len() - 1],
        upper_fence,
        outliers,
    })
}

pub fn write_boxplot_csv<W: Write>(rows: &[BoxplotSummary], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["year", "quarter", "n", "min", "p25", "median", "p75", "max", "upper_fence", "outliers"])?;
    for b in rows {
        w.write_record([
            b.quarter.year().to_string(),
            b.quarter.q().to_string(),
            b.n.to_string(),
            b.min.to_string(),
            b.p25.to_string(),
            b.median.to_string(),
            b.p75.to_string(),
            b.max.to_string(),
            b.upper_fence.to_string(),
            b.outliers.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_outliers_csv<W: Write>(rows: &[BoxplotSummary], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["year", "quarter", "drug_name", "count"])?;
    for b in rows {
        for (name, count) in &b.outliers {
            w.write_record([
                b.quarter.year().to_string(),
                b.quarter.q().to_string(),
                name.to_string(),
                count.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
