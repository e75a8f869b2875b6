//! Descriptive statistics over drug-name counts.
//!
//! Conventions: sample standard deviation (n - 1), bias-corrected
//! (adjusted Fisher-Pearson) skewness and excess kurtosis, and weighted
//! average percentiles at rank `h = p(n + 1)`. With these the standard
//! errors of skewness and kurtosis depend on `n` alone.

use std::cmp::Ordering;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::DrugName;
use crate::model::{CountStore, Series};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("statistic of an empty sample")]
    Empty,
    #[error("percentile fraction {0} outside [0, 1]")]
    Fraction(f64),
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: u64, got: u64 },
    #[error("store has no drug names")]
    EmptyStore,
    #[error("`{0}` has no quarter with a nonzero count")]
    NoActiveQuarters(String),
}

/// Percentile of an unsorted sample. See [`percentile_sorted`].
pub fn percentile(values: &[f64], p: f64) -> Result<f64, StatsError> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, p)
}

/// Weighted-average percentile of an ascending sample: rank `h = p(n + 1)`,
/// linear interpolation between the bracketing order statistics, clamped to
/// the sample extremes when `h` falls outside `[1, n]`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> Result<f64, StatsError> {
    if sorted.is_empty() {
        return Err(StatsError::Empty);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(StatsError::Fraction(p));
    }
    let n = sorted.len();
    let h = p * (n as f64 + 1.0);
    if h <= 1.0 {
        return Ok(sorted[0]);
    }
    if h >= n as f64 {
        return Ok(sorted[n - 1]);
    }
    let lo = h.floor();
    let i = lo as usize;
    let (a, b) = (sorted[i - 1], sorted[i]);
    Ok(a + (h - lo) * (b - a))
}

/// Median of an ascending sample; the mean of the two central values for
/// even sizes.
fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Moment statistics. Fields are `None` below their sample-size threshold,
/// and skewness/kurtosis are `None` for a constant sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub sd: Option<f64>,
    pub variance: Option<f64>,
    pub se_mean: Option<f64>,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
}

pub fn moments(values: &[f64]) -> Result<Moments, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut out = Moments {
        n: values.len() as u64,
        mean,
        sd: None,
        variance: None,
        se_mean: None,
        skewness: None,
        kurtosis: None,
    };
    if values.len() < 2 {
        return Ok(out);
    }
    let constant = values.iter().all(|v| *v == values[0]);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    if !constant {
        for v in values {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
    }
    let variance = m2 / (n - 1.0);
    let sd = variance.sqrt();
    out.variance = Some(variance);
    out.sd = Some(sd);
    out.se_mean = Some(standard_error_of_mean(sd, out.n));
    if constant {
        return Ok(out);
    }
    if values.len() >= 3 {
        out.skewness = Some(n / ((n - 1.0) * (n - 2.0)) * m3 / (sd * sd * sd));
    }
    if values.len() >= 4 {
        let s4 = variance * variance;
        out.kurtosis = Some(
            n * (n + 1.0) / ((n - 1.0) * (n - 2.0) * (n - 3.0)) * m4 / s4
                - 3.0 * (n - 1.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0)),
        );
    }
    Ok(out)
}

/// `sd / sqrt(n)`.
pub fn standard_error_of_mean(sd: f64, n: u64) -> f64 {
    sd / (n as f64).sqrt()
}

/// Standard errors of skewness and kurtosis for a sample of size `n >= 4`.
pub fn standard_errors(n: u64) -> Result<(f64, f64), StatsError> {
    if n < 4 {
        return Err(StatsError::TooFew { needed: 4, got: n });
    }
    let n = n as f64;
    let se_skew = (6.0 * n * (n - 1.0) / ((n - 2.0) * (n + 1.0) * (n + 3.0))).sqrt();
    let se_kurt = 2.0 * se_skew * ((n * n - 1.0) / ((n - 3.0) * (n + 5.0))).sqrt();
    Ok((se_skew, se_kurt))
}

/// Summary of the per-drug total counts (each drug summed over quarters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub n_drug_names: u64,
    pub sum: u64,
    pub mean: f64,
    pub se_mean: Option<f64>,
    pub sd: Option<f64>,
    pub variance: Option<f64>,
    pub skewness: Option<f64>,
    pub se_skewness: Option<f64>,
    pub kurtosis: Option<f64>,
    pub se_kurtosis: Option<f64>,
    pub range: u64,
    pub min: u64,
    pub max: u64,
    pub median: f64,
    pub mode: u64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

pub fn corpus_summary(store: &CountStore) -> Result<CorpusSummary, StatsError> {
    let totals: Vec<u64> = store.drug_totals().into_iter().map(|(_, t)| t).collect();
    summarize_totals(&totals)
}

/// [`corpus_summary`] over an explicit multiset of totals.
pub fn summarize_totals(totals: &[u64]) -> Result<CorpusSummary, StatsError> {
    if totals.is_empty() {
        return Err(StatsError::EmptyStore);
    }
    let mut sorted = totals.to_vec();
    sorted.sort_unstable();
    let as_f64: Vec<f64> = sorted.iter().map(|v| *v as f64).collect();
    let n = sorted.len() as u64;
    let sum: u64 = sorted.iter().sum();
    let m = moments(&as_f64)?;
    let (se_skewness, se_kurtosis) = standard_errors(n).map_or((None, None), |(s, k)| (Some(s), Some(k)));

    // Most frequent value; ties go to the smallest.
    let (mut mode, mut best) = (sorted[0], 0usize);
    for run in sorted.chunk_by(|a, b| a == b) {
        if run.len() > best {
            best = run.len();
            mode = run[0];
        }
    }

    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let pct = |p| percentile_sorted(&as_f64, p).expect("non-empty, p in range");
    Ok(CorpusSummary {
        n_drug_names: n,
        sum,
        mean: sum as f64 / n as f64,
        se_mean: m.se_mean,
        sd: m.sd,
        variance: m.variance,
        skewness: m.skewness,
        se_skewness,
        kurtosis: m.kurtosis,
        se_kurtosis,
        range: max - min,
        min,
        max,
        median: pct(0.5),
        mode,
        p25: pct(0.25),
        p50: pct(0.5),
        p75: pct(0.75),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl CorpusSummary {
    /// `(statistic, value)` pairs in display order; absent values are empty.
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        vec![
            ("Sum", self.sum.to_string()),
            ("Mean", self.mean.to_string()),
            ("Std Error of Mean", opt(self.se_mean)),
            ("Std Deviation", opt(self.sd)),
            ("Variance", opt(self.variance)),
            ("Skewness", opt(self.skewness)),
            ("Std Error of Skewness", opt(self.se_skewness)),
            ("Kurtosis", opt(self.kurtosis)),
            ("Std Error of Kurtosis", opt(self.se_kurtosis)),
            ("Range", self.range.to_string()),
            ("Drug Names", self.n_drug_names.to_string()),
            ("Minimum Count", self.min.to_string()),
            ("Maximum Count", self.max.to_string()),
            ("Count Median", self.median.to_string()),
            ("Count Mode", self.mode.to_string()),
            ("Percentile 25", self.p25.to_string()),
            ("Percentile 50", self.p50.to_string()),
            ("Percentile 75", self.p75.to_string()),
        ]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["statistic", "value"])?;
        for (k, v) in self.rows() {
            w.write_record([k, v.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Quarterly measures of one drug, over its active quarters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarterlyMeasures {
    pub drug: DrugName,
    pub qsum: u64,
    pub qmin: u64,
    pub qmax: u64,
    pub qmedian: f64,
    pub qaverage: f64,
    pub qsd: f64,
    pub active_quarters: u32,
}

pub const MEASURES_HEADER: [&str; 8] =
    ["DRUG_NAME", "QSUM", "QMIN", "QMAX", "QMEDIAN", "QAVERAGE", "QSD", "ACTIVE_QUARTERS"];

/// Measures over the quarters where the drug has a nonzero count. The
/// standard deviation is the sample one, and 0 for a single active quarter.
pub fn drug_quarter_measures(drug: &DrugName, series: &Series) -> Result<QuarterlyMeasures, StatsError> {
    let mut active: Vec<u64> = series.values().copied().filter(|c| *c > 0).collect();
    if active.is_empty() {
        return Err(StatsError::NoActiveQuarters(drug.to_string()));
    }
    active.sort_unstable();
    let k = active.len();
    let qsum: u64 = active.iter().sum();
    let qaverage = qsum as f64 / k as f64;
    let qsd = if k > 1 {
        let ss: f64 = active.iter().map(|c| (*c as f64 - qaverage).powi(2)).sum();
        (ss / (k as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    let as_f64: Vec<f64> = active.iter().map(|c| *c as f64).collect();
    Ok(QuarterlyMeasures {
        drug: drug.clone(),
        qsum,
        qmin: active[0],
        qmax: active[k - 1],
        qmedian: median_sorted(&as_f64),
        qaverage,
        qsd,
        active_quarters: k as u32,
    })
}

impl QuarterlyMeasures {
    pub fn record(&self) -> [String; 8] {
        [
            self.drug.to_string(),
            self.qsum.to_string(),
            self.qmin.to_string(),
            self.qmax.to_string(),
            self.qmedian.to_string(),
            self.qaverage.to_string(),
            self.qsd.to_string(),
            self.active_quarters.to_string(),
        ]
    }
}

pub fn write_measures_csv<W: Write>(rows: &[QuarterlyMeasures], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(MEASURES_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RankMetric {
    Qsum,
    Qmax,
    Qaverage,
}

impl FromStr for RankMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "QSUM" => Ok(RankMetric::Qsum),
            "QMAX" => Ok(RankMetric::Qmax),
            "QAVERAGE" => Ok(RankMetric::Qaverage),
            _ => Err(format!("unknown metric `{s}` (expected QSUM, QMAX or QAVERAGE)")),
        }
    }
}

struct RankKey {
    qsum: u64,
    qmax: u64,
    active: u64,
}

impl RankKey {
    fn of(series: &Series) -> Self {
        let active = series.values().filter(|c| **c > 0);
        RankKey {
            qsum: series.values().sum(),
            qmax: series.values().copied().max().unwrap_or(0),
            active: active.count() as u64,
        }
    }

    /// Descending by metric. Averages compare by cross-multiplication so
    /// the order is exact.
    fn cmp_desc(&self, other: &Self, metric: RankMetric) -> Ordering {
        match metric {
            RankMetric::Qsum => other.qsum.cmp(&self.qsum),
            RankMetric::Qmax => other.qmax.cmp(&self.qmax),
            RankMetric::Qaverage => {
                let lhs = u128::from(other.qsum) * u128::from(self.active.max(1));
                let rhs = u128::from(self.qsum) * u128::from(other.active.max(1));
                lhs.cmp(&rhs)
            }
        }
    }
}

/// The `n` highest-ranked drugs by `metric`, ties broken by name bytes.
pub fn top_n(store: &CountStore, n: usize, metric: RankMetric) -> Vec<QuarterlyMeasures> {
    let mut keyed: Vec<(RankKey, &DrugName, &Series)> =
        store.iter().map(|(name, s)| (RankKey::of(s), name, s)).collect();
    keyed.par_sort_unstable_by(|a, b| a.0.cmp_desc(&b.0, metric).then_with(|| a.1.cmp(b.1)));
    keyed.truncate(n);
    keyed
        .par_iter()
        .map(|(_, name, s)| drug_quarter_measures(name, s).expect("stored series have active quarters"))
        .collect()
}

/// Measures for every drug, in name order.
pub fn all_measures(store: &CountStore) -> Vec<QuarterlyMeasures> {
    let rows: Vec<(&DrugName, &Series)> = store.iter().collect();
    rows.par_iter()
        .map(|(name, s)| drug_quarter_measures(name, s).expect("stored series have active quarters"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::normalize_drug_name;
    use crate::quarter::{Quarter, QuarterRange};
    use proptest::prelude::*;

    fn study() -> Vec<Quarter> {
        QuarterRange::new("2004Q1".parse().unwrap(), "2012Q2".parse().unwrap()).unwrap().iter().collect()
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 0.25).unwrap(), 1.25);
        assert_eq!(percentile(&[5.0], 0.5).unwrap(), 5.0);
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 1.0).unwrap(), 4.0);
        assert_eq!(percentile(&[4.0, 3.0, 2.0, 1.0], 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5).unwrap(), 3.0);
    }

    #[test]
    fn percentile_errors() {
        assert_eq!(percentile(&[], 0.5), Err(StatsError::Empty));
        assert!(matches!(percentile(&[1.0], 1.5), Err(StatsError::Fraction(_))));
        assert!(matches!(percentile(&[1.0], -0.1), Err(StatsError::Fraction(_))));
        assert!(matches!(percentile(&[1.0], f64::NAN), Err(StatsError::Fraction(_))));
    }

    #[test]
    fn moments_closed_form() {
        let m = moments(&[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(m.mean, 4.0);
        assert_eq!(m.variance, Some(4.0));
        assert_eq!(m.sd, Some(2.0));
        assert!((m.se_mean.unwrap() - 1.154_700_538_379_251_7).abs() < 1e-12);
        assert_eq!(m.skewness, Some(0.0));
        assert_eq!(m.kurtosis, None);
    }

    #[test]
    fn constant_sample_has_no_shape() {
        let m = moments(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(m.sd, Some(0.0));
        assert_eq!((m.skewness, m.kurtosis), (None, None));
        let m = moments(&[0.1; 7]).unwrap();
        assert_eq!(m.sd, Some(0.0));
        assert_eq!(m.skewness, None);
    }

    #[test]
    fn thresholds() {
        let m = moments(&[3.0]).unwrap();
        assert_eq!((m.mean, m.sd, m.se_mean), (3.0, None, None));
        assert_eq!(moments(&[]), Err(StatsError::Empty));
        assert!(moments(&[1.0, 2.0, 9.0]).unwrap().kurtosis.is_none());
        assert!(moments(&[1.0, 2.0, 9.0, 4.0]).unwrap().kurtosis.is_some());
    }

    #[test]
    fn standard_error_values() {
        let (s, k) = standard_errors(344_452).unwrap();
        assert!((s - 0.004173586).abs() < 1e-6);
        assert!((k - 0.008347148).abs() < 1e-6);
        let (s10, _) = standard_errors(10).unwrap();
        assert!((s10 - (540.0f64 / 1144.0).sqrt()).abs() < 1e-12);
        assert!((s10 - 0.687043).abs() < 1e-6);
        assert!(standard_errors(3).is_err());
        for n in [1_000u64, 10_000, 1_000_000] {
            let (s, k) = standard_errors(n).unwrap();
            assert!((s / (6.0 / n as f64).sqrt() - 1.0).abs() < 0.01);
            assert!((k / (24.0 / n as f64).sqrt() - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn single_drug_summary() {
        let s = summarize_totals(&[7]).unwrap();
        assert_eq!((s.sum, s.mean, s.median, s.mode, s.range), (7, 7.0, 7.0, 7, 0));
        assert_eq!(s.sd, None);
        assert_eq!(summarize_totals(&[]), Err(StatsError::EmptyStore));
    }

    #[test]
    fn mode_ties_take_smallest() {
        let s = summarize_totals(&[9, 9, 3, 3, 1]).unwrap();
        assert_eq!(s.mode, 3);
        let s = summarize_totals(&[1, 1, 40, 4, 10, 10, 10]).unwrap();
        assert_eq!(s.mode, 10);
    }

    #[test]
    fn heparin_active_quarter_convention() {
        // 32 of 34 quarters active; QSUM / QAVERAGE in the published table is 32.0
        let quarters = study();
        let mut series = Series::new();
        let active = &quarters[2..];
        let fill = (12_673_689u64 - 4 - 3_201_998) / 30;
        let mut rest = 12_673_689u64 - 4 - 3_201_998 - fill * 30;
        for (i, q) in active.iter().enumerate() {
            let c = match i {
                0 => 4,
                1 => 3_201_998,
                _ => {
                    let extra = rest.min(1);
                    rest -= extra;
                    fill + extra
                }
            };
            series.insert(*q, c);
        }
        let m = drug_quarter_measures(&normalize_drug_name("HEPARIN SODIUM INJECTION"), &series).unwrap();
        assert_eq!(m.active_quarters, 32);
        assert_eq!(m.qsum, 12_673_689);
        assert_eq!((m.qmin, m.qmax), (4, 3_201_998));
        assert!((m.qaverage - 396_052.78).abs() < 0.01);
    }

    #[test]
    fn aspirin_average() {
        let quarters = study();
        let mut series = Series::new();
        let base = 5_023_238u64 / 34;
        let extra = 5_023_238u64 - base * 34;
        for (i, q) in quarters.iter().enumerate() {
            series.insert(*q, base + u64::from((i as u64) < extra));
        }
        let m = drug_quarter_measures(&normalize_drug_name("ASPIRIN"), &series).unwrap();
        assert_eq!(m.active_quarters, 34);
        assert!((m.qaverage - 147_742.29).abs() < 0.01);
    }

    #[test]
    fn single_active_quarter() {
        let q: Vec<Quarter> = study();
        let series = Series::from([(q[0], 0), (q[2], 10)]);
        let m = drug_quarter_measures(&normalize_drug_name("X"), &series).unwrap();
        assert_eq!(m.active_quarters, 1);
        assert_eq!((m.qmin, m.qmax, m.qmedian, m.qaverage, m.qsd), (10, 10, 10.0, 10.0, 0.0));
        let zero = Series::from([(q[0], 0)]);
        assert!(matches!(
            drug_quarter_measures(&normalize_drug_name("X"), &zero),
            Err(StatsError::NoActiveQuarters(_))
        ));
    }

    #[test]
    fn even_median_is_midpoint() {
        let q = study();
        let series = Series::from([(q[0], 2000), (q[1], 3545), (q[2], 1), (q[3], 9000)]);
        let m = drug_quarter_measures(&normalize_drug_name("X"), &series).unwrap();
        assert_eq!(m.qmedian, 2772.5);
    }

    #[test]
    fn measures_csv_header() {
        let mut out = Vec::new();
        write_measures_csv(&[], &mut out).unwrap();
        assert_eq!(out, b"DRUG_NAME,QSUM,QMIN,QMAX,QMEDIAN,QAVERAGE,QSD,ACTIVE_QUARTERS\n");
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("qsum".parse::<RankMetric>().unwrap(), RankMetric::Qsum);
        assert_eq!("QAVERAGE".parse::<RankMetric>().unwrap(), RankMetric::Qaverage);
        assert!("QMEDIAN".parse::<RankMetric>().is_err());
    }

    proptest! {
        #[test]
        fn percentile_monotone_and_bounded(mut v in proptest::collection::vec(-1e6f64..1e6, 1..50), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            v.sort_by(f64::total_cmp);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let x = percentile_sorted(&v, lo).unwrap();
            let y = percentile_sorted(&v, hi).unwrap();
            prop_assert!(x <= y);
            prop_assert!(v[0] <= x && y <= v[v.len() - 1]);
        }

        #[test]
        fn summary_identities(totals in proptest::collection::vec(1u64..100_000, 1..200)) {
            let s = summarize_totals(&totals).unwrap();
            let n = totals.len() as f64;
            prop_assert!(((s.mean * n) - s.sum as f64).abs() <= 1e-9 * s.sum as f64);
            if let (Some(sd), Some(var)) = (s.sd, s.variance) {
                prop_assert!((sd * sd - var).abs() <= 1e-9 * var.max(1e-300));
            }
            prop_assert_eq!(s.range, s.max - s.min);
            prop_assert!(s.min as f64 <= s.p25 && s.p25 <= s.median && s.median <= s.p75 && s.p75 <= s.max as f64);
            prop_assert!(totals.contains(&s.mode));
        }

        #[test]
        fn measures_identity(counts in proptest::collection::vec(0u64..1_000_000, 1..34)) {
            prop_assume!(counts.iter().any(|c| *c > 0));
            let series: Series = study().into_iter().zip(counts).collect();
            let m = drug_quarter_measures(&normalize_drug_name("D"), &series).unwrap();
            prop_assert!((m.qaverage * f64::from(m.active_quarters) - m.qsum as f64).abs() <= 1e-9 * m.qsum as f64);
            prop_assert!(m.qmin as f64 <= m.qmedian && m.qmedian <= m.qmax as f64);
            prop_assert!(m.qmin >= 1);
        }
    }
}
