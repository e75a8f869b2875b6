//! Acceptance criteria 1-9, one PASS/FAIL line each. Exits non-zero if any
//! criterion fails. Criterion 10 needs the public archive; see README.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use aers_core::ingest::{load_quarter_from, SchemaConfig, TableInput, TableKind};
use aers_core::model::{
    build_counts_parallel, export_snapshot, import_snapshot, write_snapshot_csv, write_snapshot_meta,
};
use aers_core::pipeline::{ingest_directory, IngestOptions};
use aers_core::stats::{drug_quarter_measures, moments, percentile, standard_error_of_mean, standard_errors};
use aers_core::surveil::{detect_outbreaks, population_trend, DetectConfig};
use aers_core::synth::{
    generate_corpus, inject_spike, oracle_counts, Bounds, Complexity, Corpus, Sampling, SynthConfig,
};
use aers_core::{normalize_drug_name, CountStore, Quarter, QuarterRange, StoreBuilder, SubjectReport};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(), String>;
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn q(s: &str) -> Quarter {
    s.parse().unwrap()
}

fn study_quarters() -> Vec<Quarter> {
    QuarterRange::new(q("2004Q1"), q("2012Q2")).unwrap().iter().collect()
}

/// Writes the corpus to a scratch directory and runs the full ingest path.
fn ingest(corpus: &Corpus) -> (CountStore, aers_core::ingest::RejectLog) {
    let dir = tempfile::tempdir().unwrap();
    corpus.write_to(dir.path()).unwrap();
    ingest_dir(dir.path())
}

fn ingest_dir(dir: &Path) -> (CountStore, aers_core::ingest::RejectLog) {
    let out = ingest_directory(dir, &IngestOptions::default()).unwrap();
    let mut store = out.store;
    store.set_sources(BTreeMap::new());
    (store, out.rejects)
}

fn snapshot_bytes(store: &CountStore) -> (Vec<u8>, Vec<u8>) {
    let (mut csv, mut meta) = (Vec::new(), Vec::new());
    write_snapshot_csv(store, &mut csv).unwrap();
    write_snapshot_meta(store, &mut meta).unwrap();
    (csv, meta)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    // relative tolerance, with an absolute floor for values that are
    // themselves rounding noise around zero
    (a - b).abs() <= rel * a.abs().max(b.abs()) || (a - b).abs() <= 1e-12
}

fn criterion_1() -> Outcome {
    let (se_skew, se_kurt) = standard_errors(344_452).map_err(|e| e.to_string())?;
    ensure!((se_skew - 0.004_173_586).abs() <= 1e-6, "se_skew {se_skew}");
    ensure!((se_kurt - 0.008_347_148).abs() <= 1e-6, "se_kurt {se_kurt}");
    Ok(())
}

fn criterion_2() -> Outcome {
    let se = standard_error_of_mean(36_047.526_72, 344_452);
    ensure!((se - 61.420_18).abs() <= 1e-4, "se_mean {se}");
    Ok(())
}

fn criterion_3() -> Outcome {
    // (name, QSUM, QMIN, QMAX, QAVERAGE)
    let rows: [(&str, u64, u64, u64, f64); 11] = [
        ("HEPARIN SODIUM INJECTION", 12_673_689, 4, 3_201_998, 396_052.78),
        ("ASPIRIN", 5_023_238, 44_465, 457_536, 147_742.29),
        ("FOSAMAX", 4_762_966, 6_352, 699_062, 140_087.24),
        ("HUMIRA", 3_258_678, 4_155, 487_234, 95_843.47),
        ("SEROQUEL", 3_149_210, 7_841, 393_928, 92_623.82),
        ("VIOXX", 3_064_082, 2_119, 455_405, 90_120.06),
        ("PREDNISONE", 2_749_852, 3_790, 298_614, 80_878.00),
        ("LASIX", 2_682_382, 23_422, 291_380, 78_893.59),
        ("METHOTREXATE", 2_288_678, 18_771, 201_030, 67_314.06),
        ("LIPITOR", 2_097_675, 18_981, 182_054, 61_696.32),
        ("LISINOPRIL", 2_042_128, 6_701, 217_668, 60_062.59),
    ];
    let quarters = study_quarters();
    ensure!(quarters.len() == 34, "study window has {} quarters", quarters.len());
    for (name, qsum, qmin, qmax, qaverage) in rows {
        // active quarters implied by the printed QSUM and QAVERAGE
        let k = (qsum as f64 / qaverage).round() as usize;
        let expected = if name == "HEPARIN SODIUM INJECTION" { 32 } else { 34 };
        ensure!(k == expected, "{name}: QSUM/QAVERAGE gives {k} active quarters");

        // fixture series: QMIN and QMAX plus an even split of the rest over
        // the other k - 2 active quarters; the remaining quarters are empty
        let rest = qsum - qmin - qmax;
        let slots = (k - 2) as u64;
        let mut series = BTreeMap::new();
        series.insert(quarters[0], qmin);
        series.insert(quarters[1], qmax);
        for (i, quarter) in quarters[2..k].iter().enumerate() {
            series.insert(*quarter, rest / slots + u64::from((i as u64) < rest % slots));
        }
        let m = drug_quarter_measures(&normalize_drug_name(name), &series).map_err(|e| e.to_string())?;
        ensure!(m.active_quarters as usize == expected, "{name}: {} active quarters", m.active_quarters);
        ensure!(m.qsum == qsum && m.qmin == qmin && m.qmax == qmax, "{name}: measures {m:?}");
        ensure!((m.qaverage * m.active_quarters as f64 - qsum as f64).abs() <= 0.5, "{name}: qaverage {}", m.qaverage);
        ensure!((m.qaverage - qaverage).abs() <= 0.005, "{name}: qaverage {} vs {qaverage}", m.qaverage);
    }
    Ok(())
}

fn random_config(rng: &mut ChaCha8Rng, seed: u64) -> SynthConfig {
    let n_quarters = rng.random_range(1..=8);
    let start = study_quarters()[rng.random_range(0..=34 - n_quarters)];
    let quarters: Vec<Quarter> = std::iter::successors(Some(start), |q| Some(q.next())).take(n_quarters).collect();
    let max_per_quarter = 2000 / n_quarters;
    SynthConfig {
        quarters,
        subjects_per_quarter: rng.random_range(0..=max_per_quarter.min(250)),
        vocabulary: rng.random_range(1..=400),
        zipf_exponent: rng.random_range(0.5..2.0),
        drugs_per_subject: Bounds::new(rng.random_range(0..=2), rng.random_range(2..=10)),
        seed,
        sampling: if rng.random_bool(0.5) {
            Sampling::Independent
        } else {
            Sampling::Cohort { jitter: rng.random_range(0.0..=1.0) }
        },
        real_names: rng.random_bool(0.5),
        messy_names: rng.random_bool(0.5),
        ..SynthConfig::default()
    }
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..100u64 {
        let config = random_config(&mut rng, seed);
        let corpus = generate_corpus(&config).map_err(|e| e.to_string())?;
        let oracle = oracle_counts(&corpus).map_err(|e| e.to_string())?;
        let (built, rejects) = ingest(&corpus);
        ensure!(rejects.is_empty(), "seed {seed}: {} rejects", rejects.len());
        ensure!(built == oracle, "seed {seed}: build differs from oracle");
        ensure!(built.total_events() == oracle.total_events(), "seed {seed}: events differ");
        for quarter in &config.quarters {
            let truth = corpus.truth.subjects(*quarter) as u64;
            ensure!(built.subjects_per_quarter()[quarter] == truth, "seed {seed}: subjects in {quarter}");
        }
    }
    Ok(())
}

fn load_reports(corpus: &Corpus) -> Vec<SubjectReport> {
    let schema = SchemaConfig::legacy();
    let mut reports = Vec::new();
    for (quarter, t) in &corpus.tables {
        let input = |kind: TableKind| Some(TableInput { name: kind.file_name(*quarter), reader: t.get(kind) });
        let loaded = load_quarter_from(
            *quarter,
            input(TableKind::Demo),
            input(TableKind::Drug),
            input(TableKind::Indi),
            input(TableKind::Reac),
            &schema,
        )
        .unwrap();
        reports.extend(loaded.reports);
    }
    reports
}

fn criterion_5() -> Outcome {
    let config = SynthConfig {
        quarters: study_quarters()[..8].to_vec(),
        subjects_per_quarter: 250,
        vocabulary: 300,
        seed: 5,
        sampling: Sampling::Independent,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(&config).map_err(|e| e.to_string())?;
    let reports = load_reports(&corpus);

    let mut template = StoreBuilder::new();
    for quarter in &config.quarters {
        template.cover(*quarter).unwrap();
    }
    let mut one_pass = template.clone();
    one_pass.add_batch(&reports).unwrap();
    let reference = snapshot_bytes(&one_pass.finish());

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..20 {
        let mut shuffled = reports.clone();
        shuffled.shuffle(&mut rng);
        let mut cuts: Vec<usize> = (0..rng.random_range(1..16)).map(|_| rng.random_range(0..=shuffled.len())).collect();
        cuts.extend([0, shuffled.len()]);
        cuts.sort_unstable();
        let parts: Vec<&[SubjectReport]> = cuts.windows(2).map(|w| &shuffled[w[0]..w[1]]).collect();
        let merged = build_counts_parallel(&parts, &template).map_err(|e| e.to_string())?;
        ensure!(snapshot_bytes(&merged) == reference, "partition trial {trial} exports differently");
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.csv");
    let store = one_pass_store(&template, &reports);
    export_snapshot(&store, &path).map_err(|e| e.to_string())?;
    let back = import_snapshot(&path).map_err(|e| e.to_string())?;
    ensure!(back == store, "snapshot round trip changed the store");
    ensure!(snapshot_bytes(&back) == reference, "re-export after import differs");
    let on_disk = (std::fs::read(&path).unwrap(), std::fs::read(dir.path().join("store.meta.json")).unwrap());
    ensure!(on_disk == reference, "file export differs from in-memory export");
    Ok(())
}

fn one_pass_store(template: &StoreBuilder, reports: &[SubjectReport]) -> CountStore {
    let mut b = template.clone();
    b.add_batch(reports).unwrap();
    b.finish()
}

fn stationary(seed: u64) -> SynthConfig {
    SynthConfig { seed, ..SynthConfig::default() }
}

fn criterion_6() -> Outcome {
    let config = DetectConfig { min_count: 10, ..DetectConfig::default() };
    for seed in [6u64, 60, 600] {
        let mut corpus = generate_corpus(&stationary(seed)).map_err(|e| e.to_string())?;
        let (store, _) = ingest(&corpus);
        ensure!(store.quarters().count() == 34, "seed {seed}: {} quarters", store.quarters().count());
        let before = detect_outbreaks(&store, &config).map_err(|e| e.to_string())?;
        ensure!(
            before.is_empty(),
            "seed {seed}: stationary corpus raised {} alerts, first {:?}",
            before.len(),
            before.first()
        );

        let drug = corpus.config.drug_name(12);
        let quarter = q("2008Q3");
        inject_spike(&mut corpus, &drug, quarter, 100).map_err(|e| e.to_string())?;
        let (spiked, _) = ingest(&corpus);
        let alerts = detect_outbreaks(&spiked, &config).map_err(|e| e.to_string())?;
        ensure!(alerts.len() == 1, "seed {seed}: {} alerts after spike: {alerts:?}", alerts.len());
        ensure!(alerts[0].drug == drug && alerts[0].quarter == quarter, "seed {seed}: alert at {:?}", alerts[0]);
    }
    Ok(())
}

/// Inserts corrupt lines after the header of each table and returns the
/// expected `(file, line)` of every reject.
fn corrupt(dir: &Path, quarters: &[Quarter], rng: &mut ChaCha8Rng) -> BTreeSet<(String, u64)> {
    let mut expected = BTreeSet::new();
    for quarter in quarters {
        for kind in TableKind::ALL {
            let name = kind.file_name(*quarter);
            let path = dir.join(&name);
            let text = std::fs::read_to_string(&path).unwrap();
            let lines: Vec<&str> = text.lines().collect();
            let width = lines[0].split('$').count();
            let mut out = vec![lines[0].to_string()];
            for line in &lines[1..] {
                if rng.random_bool(0.05) {
                    let bad = match rng.random_range(0..3) {
                        0 => vec!["123"; width + 2].join("$"),
                        1 => vec!["9"; width.saturating_sub(1).max(1)].join("$"),
                        _ => {
                            let mut f = vec!["X"; width];
                            f[0] = "  ";
                            f.join("$")
                        }
                    };
                    out.push(bad);
                    expected.insert((name.clone(), out.len() as u64));
                }
                out.push(line.to_string());
            }
            std::fs::write(&path, out.join("\n") + "\n").unwrap();
        }
    }
    expected
}

fn criterion_7() -> Outcome {
    let config = SynthConfig {
        quarters: study_quarters()[..4].to_vec(),
        subjects_per_quarter: 200,
        seed: 7,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(&config).map_err(|e| e.to_string())?;
    let clean = tempfile::tempdir().unwrap();
    corpus.write_to(clean.path()).unwrap();
    let (reference, clean_rejects) = ingest_dir(clean.path());
    ensure!(clean_rejects.is_empty(), "clean corpus has rejects");

    let dirty = tempfile::tempdir().unwrap();
    corpus.write_to(dirty.path()).unwrap();
    let expected = corrupt(dirty.path(), &config.quarters, &mut ChaCha8Rng::seed_from_u64(7));
    ensure!(expected.len() >= 20, "only {} corrupt lines injected", expected.len());
    let (store, rejects) = ingest_dir(dirty.path());
    let got: BTreeSet<(String, u64)> = rejects.entries.iter().map(|e| (e.file.clone(), e.line)).collect();
    ensure!(rejects.len() == expected.len(), "{} rejects for {} corrupt lines", rejects.len(), expected.len());
    ensure!(got == expected, "reject locations differ: {:?}", got.symmetric_difference(&expected).collect::<Vec<_>>());
    ensure!(store == reference, "counts changed by corrupt lines");
    Ok(())
}

fn naive_percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let rank = p * (n + 1.0);
    if rank <= 1.0 {
        return v[0];
    }
    if rank >= n {
        return v[v.len() - 1];
    }
    let below = v[rank as usize - 1];
    let above = v[rank as usize];
    below * (1.0 - rank.fract()) + above * rank.fract()
}

/// Population moments g1, g2 converted to the bias-corrected estimators.
fn naive_shape(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m = |k: i32| values.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    let (m2, m3, m4) = (m(2), m(3), m(4));
    let g1 = m3 / m2.powf(1.5);
    let g2 = m4 / (m2 * m2) - 3.0;
    let skew = (n * (n - 1.0)).sqrt() / (n - 2.0) * g1;
    let kurt = (n - 1.0) / ((n - 2.0) * (n - 3.0)) * ((n + 1.0) * g2 + 6.0);
    (skew, kurt)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..1000 {
        let n = rng.random_range(4..300);
        let values: Vec<f64> = match i % 3 {
            0 => (0..n).map(|_| rng.random_range(-1000.0..1000.0)).collect(),
            1 => (0..n).map(|_| rng.random_range(0.0f64..12.0).exp()).collect(),
            _ => (0..n).map(|_| f64::from(rng.random_range(1u32..50))).collect(),
        };
        for p in [0.0, 0.01, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0, rng.random_range(0.0..=1.0)] {
            let got = percentile(&values, p).map_err(|e| e.to_string())?;
            let want = naive_percentile(&values, p);
            ensure!(close(got, want, 1e-9), "vector {i}, p {p}: {got} vs {want}");
        }
        let m = moments(&values).map_err(|e| e.to_string())?;
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        ensure!(close(m.mean, mean, 1e-9), "vector {i}: mean");
        ensure!(close(m.variance.unwrap(), var, 1e-9), "vector {i}: variance");
        if values.iter().any(|v| *v != values[0]) {
            let (skew, kurt) = naive_shape(&values);
            ensure!(close(m.skewness.unwrap(), skew, 1e-9), "vector {i}: skewness {:?} vs {skew}", m.skewness);
            ensure!(close(m.kurtosis.unwrap(), kurt, 1e-9), "vector {i}: kurtosis {:?} vs {kurt}", m.kurtosis);
        }

        let centre = rng.random_range(-100.0..100.0);
        let half: Vec<f64> = (0..n / 2).map(|_| rng.random_range(0.0..50.0)).collect();
        let mut symmetric: Vec<f64> = half.iter().flat_map(|d| [centre + d, centre - d]).collect();
        if n % 2 == 1 {
            symmetric.push(centre);
        }
        symmetric.shuffle(&mut rng);
        if let Some(s) = moments(&symmetric).map_err(|e| e.to_string())?.skewness {
            ensure!(s.abs() <= 1e-9, "vector {i}: symmetric skewness {s}");
        }
    }
    Ok(())
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for seed in 0..20 {
        let corpus = generate_corpus(&random_config(&mut rng, seed)).map_err(|e| e.to_string())?;
        let store = oracle_counts(&corpus).map_err(|e| e.to_string())?;
        let trend = population_trend(&store);
        let (s, e): (f64, f64) =
            (trend.iter().map(|t| t.subject_share).sum(), trend.iter().map(|t| t.event_share).sum());
        if store.total_subjects() > 0 {
            ensure!((s - 1.0).abs() <= 1e-9, "seed {seed}: subject shares sum to {s}");
        }
        if store.total_events() > 0 {
            ensure!((e - 1.0).abs() <= 1e-9, "seed {seed}: event shares sum to {e}");
        }
    }

    let base = stationary(9);
    let (store, _) = ingest(&generate_corpus(&base).map_err(|e| e.to_string())?);
    let flat = population_trend(&store);
    let gap = flat.iter().map(|t| (t.subject_share - t.event_share).abs()).fold(0.0, f64::max);
    ensure!(gap < 0.02, "stationary max |subject_share - event_share| = {gap}");

    let target = q("2009Q2");
    let mut spiked = base.clone();
    spiked
        .complexity_overrides
        .insert(target, Complexity { indications: Bounds::new(8, 12), reactions: Bounds::new(4, 6) });
    let (store, _) = ingest(&generate_corpus(&spiked).map_err(|e| e.to_string())?);
    let trend = population_trend(&store);
    let before = flat.iter().find(|t| t.quarter == target).unwrap();
    let after = trend.iter().find(|t| t.quarter == target).unwrap();
    ensure!(
        after.event_share > 2.0 * after.subject_share,
        "event share {} vs subject share {}",
        after.event_share,
        after.subject_share
    );
    ensure!(
        after.event_share > 2.0 * before.event_share,
        "event share {} vs baseline {}",
        after.event_share,
        before.event_share
    );
    let drift = (after.subject_share - before.subject_share).abs() / before.subject_share;
    ensure!(drift < 0.10, "subject share moved by {:.1}%", drift * 100.0);
    Ok(())
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "standard errors of skewness and kurtosis", Duration::from_secs(1), criterion_1),
        (2, "standard error of the mean", Duration::from_secs(1), criterion_2),
        (3, "quarterly measure arithmetic", Duration::from_secs(1), criterion_3),
        (4, "oracle equivalence over 100 corpora", Duration::from_secs(30), criterion_4),
        (5, "partition, merge and snapshot determinism", Duration::from_secs(30), criterion_5),
        (6, "injected epidemic detection", Duration::from_secs(30), criterion_6),
        (7, "parser tolerance", Duration::from_secs(5), criterion_7),
        (8, "percentile and moments oracle", Duration::from_secs(5), criterion_8),
        (9, "trend normalization", Duration::from_secs(5), criterion_9),
    ];
    let mut failures = 0;
    for (id, label, budget, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|()| {
            if elapsed <= budget {
                Ok(())
            } else {
                Err(format!("took {elapsed:.2?}, budget {budget:?}"))
            }
        });
        match outcome {
            Ok(()) => println!("criterion {id}: PASS  {label} ({elapsed:.2?})"),
            Err(why) => {
                failures += 1;
                println!("criterion {id}: FAIL  {label} ({elapsed:.2?}): {why}");
            }
        }
    }
    println!("criterion 10: not run (needs the full public archive, see README)");
    if failures > 0 {
        std::process::exit(1);
    }
}
