use std::path::Path;
use std::process::{Command, Output};

fn aers(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aers")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = aers(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small stationary corpus and its ingested snapshot.
fn prepared(dir: &Path) -> (String, String) {
    let corpus = dir.join("corpus");
    let store = dir.join("store.csv");
    ok(&["synth", "--out", p(&corpus), "--seed", "3", "--subjects", "120", "--vocabulary", "80"]);
    ok(&["ingest", "--in", p(&corpus), "--out", p(&store)]);
    (p(&corpus).to_string(), p(&store).to_string())
}

#[test]
fn exit_codes() {
    assert_eq!(aers(&["launch"]).status.code(), Some(2));
    assert_eq!(aers(&["top", "--nope"]).status.code(), Some(2));
    assert_eq!(aers(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("summary.csv");
    let missing = aers(&["summarize", "--in", "/no/such/snapshot.csv", "--out", p(&out)]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/no/such/snapshot.csv"));
    assert!(!out.exists());
}

#[test]
fn synth_ingest_detect_with_paths_only() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, store) = prepared(dir.path());
    let quiet = ok(&["detect", "--in", &store, "--min-count", "10"]);
    assert_eq!(quiet, "drug_name,year,quarter,count,baseline_median,baseline_sd,score,fold\n");

    ok(&["inject", "--in", &corpus, "--drug", "vioxx", "--quarter", "2007Q2", "--multiplier", "100"]);
    let spiked = dir.path().join("spiked.csv");
    ok(&["ingest", "--in", &corpus, "--out", p(&spiked)]);
    let alerts = ok(&["detect", "--in", p(&spiked), "--min-count", "10"]);
    let rows: Vec<&str> = alerts.lines().skip(1).collect();
    assert_eq!(rows.len(), 1, "{alerts}");
    assert!(rows[0].starts_with("VIOXX,2007,2,"), "{alerts}");
}

#[test]
fn outputs_are_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (_, store_a) = prepared(a.path());
    let (_, store_b) = prepared(b.path());
    for name in ["store.csv", "store.meta.json", "store.rejects.csv"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    for args in [
        vec!["summarize"],
        vec!["top", "--n", "5", "--metric", "QAVERAGE"],
        vec!["trend"],
        vec!["boxplot"],
        vec!["series", "--drug", "aspirin"],
        vec!["detect", "--min-count", "10", "--format", "json"],
    ] {
        let run = |store: &str| ok(&[&args[..], &["--in", store]].concat());
        assert_eq!(run(&store_a), run(&store_b), "{args:?}");
    }
}

#[test]
fn report_layouts() {
    let dir = tempfile::tempdir().unwrap();
    let (_, store) = prepared(dir.path());

    let summary = ok(&["summarize", "--in", &store]);
    assert!(summary.starts_with("statistic,value\nSum,"));
    assert!(summary.contains("\nStd Error of Skewness,"));

    let top = ok(&["top", "--in", &store, "--n", "3"]);
    let lines: Vec<&str> = top.lines().collect();
    assert_eq!(lines[0], "DRUG_NAME,QSUM,QMIN,QMAX,QMEDIAN,QAVERAGE,QSD,ACTIVE_QUARTERS");
    assert!(lines[1].starts_with("HEPARIN SODIUM INJECTION,"));
    assert_eq!(lines.len(), 4);

    let series = ok(&["series", "--in", &store, "--drug", "Aspirin", "--from", "2005Q1", "--to", "2005Q4"]);
    assert_eq!(series.lines().count(), 5);
    assert!(series.lines().nth(1).unwrap().starts_with("ASPIRIN,2005,1,"));

    let trend = ok(&["trend", "--in", &store]);
    assert!(trend.starts_with("year,quarter,subjects,events,ratio,subject_share,event_share,reference_ratio\n"));
    assert_eq!(trend.lines().count(), 35);

    let json: serde_json::Value =
        serde_json::from_str(&ok(&["summarize", "--in", &store, "--format", "json"])).unwrap();
    assert!(json["sum"].as_u64().unwrap() > 0);

    assert_eq!(aers(&["series", "--in", &store, "--drug", "NOT A DRUG"]).status.code(), Some(1));
}

#[test]
fn boxplot_files_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let (_, store) = prepared(dir.path());
    let out = dir.path().join("box.csv");
    ok(&["boxplot", "--in", &store, "--quarter", "2008Q1", "--out", p(&out), "--render", "svg"]);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("year,quarter,n,min,p25,median,p75,max,upper_fence,outliers\n2008,1,"));
    let outliers = std::fs::read_to_string(dir.path().join("box.outliers.csv")).unwrap();
    assert!(outliers.starts_with("year,quarter,drug_name,count\n"));
    assert!(outliers.contains("HEPARIN SODIUM INJECTION"));
    let svg = std::fs::read_to_string(dir.path().join("box.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));

    let trend_svg = ok(&["trend", "--in", &store, "--render", "svg"]);
    assert!(trend_svg.contains("<polyline"));
}

#[test]
fn ingest_writes_reject_log() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = prepared(dir.path());
    let drug = Path::new(&corpus).join("DRUG04Q1.TXT");
    let mut text = std::fs::read_to_string(&drug).unwrap();
    text.push_str("not$enough\n");
    std::fs::write(&drug, text).unwrap();
    let store = dir.path().join("dirty.csv");
    ok(&["ingest", "--in", &corpus, "--out", p(&store), "--from", "2004Q1", "--to", "2004Q2"]);
    let rejects = std::fs::read_to_string(dir.path().join("dirty.rejects.csv")).unwrap();
    assert_eq!(rejects.lines().count(), 2);
    assert!(rejects.contains("DRUG04Q1.TXT,") && rejects.contains("FIELD_COUNT"));
    let meta = std::fs::read_to_string(dir.path().join("dirty.meta.json")).unwrap();
    assert!(meta.contains("\"2004Q2\"") && !meta.contains("\"2004Q3\""));
}

#[test]
fn schema_override_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = prepared(dir.path());
    let schema = dir.path().join("schema.json");
    std::fs::write(&schema, r#"{"version": 1, "tables": []}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_aers"))
        .args(["ingest", "--in", &corpus, "--out", p(&dir.path().join("x.csv"))])
        .env("AERS_SCHEMA", &schema)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn invalid_thresholds_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (_, store) = prepared(dir.path());
    assert_eq!(aers(&["detect", "--in", &store, "--theta", "-1"]).status.code(), Some(2));
    assert_eq!(aers(&["detect", "--in", &store, "--min-count", "0"]).status.code(), Some(2));
    assert_eq!(aers(&["top", "--in", &store, "--from", "2010Q1", "--to", "2009Q1"]).status.code(), Some(2));
}
