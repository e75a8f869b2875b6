//! Deterministic synthetic corpora in the legacy AERS layout, with ground
//! truth, spike injection and a naive counting oracle.
//!
//! Two sampling modes are available. `Independent` draws every subject of
//! every quarter afresh. `Cohort` replays one seeded cohort each quarter and
//! drops a bounded, uniformly drawn number of each drug's mentions, so
//! quarter-to-quarter variation per drug is bounded and roughly uniform.
//! That keeps leave-one-out departure scores well under 3 on an unperturbed
//! corpus.

mod oracle;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{normalize_drug_name, DrugName, Isr, SubjectReport, TableKind};
use crate::quarter::{Quarter, QuarterRange};

pub use oracle::{oracle_counts, oracle_counts_dir};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("drug `{0}` is not in the synthetic vocabulary")]
    UnknownDrug(String),
    #[error("quarter {0} is not in the corpus")]
    UnknownQuarter(Quarter),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("oracle: {0}")]
    Oracle(String),
}

/// Inclusive integer bounds for a uniform draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: u32,
    pub max: u32,
}

impl Bounds {
    pub const fn new(min: u32, max: u32) -> Self {
        Bounds { min, max }
    }

    fn draw<R: Rng>(self, rng: &mut R) -> u32 {
        rng.random_range(self.min..=self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Sampling {
    Independent,
    /// Replays a fixed cohort; each quarter drops up to `jitter` of each
    /// drug's mentions.
    Cohort {
        jitter: f64,
    },
}

/// Indication and reaction ranges for one quarter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Complexity {
    pub indications: Bounds,
    pub reactions: Bounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub quarters: Vec<Quarter>,
    pub subjects_per_quarter: usize,
    pub vocabulary: usize,
    pub zipf_exponent: f64,
    pub drugs_per_subject: Bounds,
    pub indications: Bounds,
    pub reactions: Bounds,
    pub seed: u64,
    pub sampling: Sampling,
    /// Use HEPARIN SODIUM INJECTION, ASPIRIN and VIOXX for the three most
    /// popular names.
    pub real_names: bool,
    /// Write drug names with varied case and spacing. Normalized names are
    /// unaffected.
    pub messy_names: bool,
    /// Per-quarter replacement for the indication/reaction ranges.
    #[serde(default)]
    pub complexity_overrides: BTreeMap<Quarter, Complexity>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let range = QuarterRange::new(Quarter::new(2004, 1).unwrap(), Quarter::new(2012, 2).unwrap()).unwrap();
        SynthConfig {
            quarters: range.iter().collect(),
            subjects_per_quarter: 300,
            vocabulary: 500,
            zipf_exponent: 1.1,
            drugs_per_subject: Bounds::new(1, 10),
            indications: Bounds::new(0, 4),
            reactions: Bounds::new(0, 2),
            seed: 0,
            sampling: Sampling::Cohort { jitter: 0.2 },
            real_names: true,
            messy_names: false,
            complexity_overrides: BTreeMap::new(),
        }
    }
}

const REAL_NAMES: [&str; 3] = ["HEPARIN SODIUM INJECTION", "ASPIRIN", "VIOXX"];

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.quarters.windows(2).any(|w| w[0] >= w[1]) {
            return bad("quarters must be strictly increasing".into());
        }
        if let Some(q) = self.quarters.iter().find(|q| !(2000..=2099).contains(&q.year())) {
            return bad(format!("{q}: file names carry two-digit years, so years must be 2000-2099"));
        }
        if self.vocabulary == 0 {
            return bad("vocabulary must be non-empty".into());
        }
        if self.subjects_per_quarter > 900_000 {
            return bad("at most 900000 subjects per quarter".into());
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return bad(format!("zipf exponent {} must be non-negative", self.zipf_exponent));
        }
        let bounds = [
            ("drugs_per_subject", self.drugs_per_subject),
            ("indications", self.indications),
            ("reactions", self.reactions),
        ];
        let overrides =
            self.complexity_overrides.values().flat_map(|c| [("override", c.indications), ("override", c.reactions)]);
        for (what, b) in bounds.into_iter().chain(overrides) {
            if b.min > b.max {
                return bad(format!("{what}: min {} exceeds max {}", b.min, b.max));
            }
            if b.max > 1000 {
                return bad(format!("{what}: max {} is above 1000", b.max));
            }
        }
        if let Some(q) = self.complexity_overrides.keys().find(|q| !self.quarters.contains(q)) {
            return bad(format!("complexity override for {q}, which is not a corpus quarter"));
        }
        if let Sampling::Cohort { jitter } = self.sampling {
            if !(0.0..=1.0).contains(&jitter) {
                return bad(format!("cohort jitter {jitter} outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// Vocabulary entry for a 1-based popularity rank.
    pub fn drug_name(&self, rank: usize) -> DrugName {
        if self.real_names && rank <= REAL_NAMES.len() {
            normalize_drug_name(REAL_NAMES[rank - 1])
        } else {
            normalize_drug_name(&format!("DRUG{rank:06}"))
        }
    }

    pub fn vocabulary_names(&self) -> Vec<DrugName> {
        (1..=self.vocabulary).map(|r| self.drug_name(r)).collect()
    }

    fn complexity(&self, q: Quarter) -> Complexity {
        self.complexity_overrides
            .get(&q)
            .copied()
            .unwrap_or(Complexity { indications: self.indications, reactions: self.reactions })
    }
}

/// What the generator put into each quarter, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub reports: BTreeMap<Quarter, Vec<SubjectReport>>,
}

impl GroundTruth {
    pub fn subjects(&self, q: Quarter) -> usize {
        self.reports.get(&q).map_or(0, Vec::len)
    }

    pub fn mentions(&self, q: Quarter, drug: &DrugName) -> usize {
        self.reports.get(&q).map_or(0, |rs| rs.iter().map(|r| r.drug_names.iter().filter(|n| *n == drug).count()).sum())
    }
}

/// The four table files of one quarter.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QuarterTables {
    pub demo: Vec<u8>,
    pub drug: Vec<u8>,
    pub indi: Vec<u8>,
    pub reac: Vec<u8>,
}

impl QuarterTables {
    fn with_headers() -> Self {
        let line = |cols: &[&str]| {
            let mut v = cols.join("$").into_bytes();
            v.push(b'\n');
            v
        };
        QuarterTables {
            demo: line(&DEMO_COLUMNS),
            drug: line(&DRUG_COLUMNS),
            indi: line(&INDI_COLUMNS),
            reac: line(&REAC_COLUMNS),
        }
    }

    pub fn get(&self, kind: TableKind) -> &[u8] {
        match kind {
            TableKind::Demo => &self.demo,
            TableKind::Drug => &self.drug,
            TableKind::Indi => &self.indi,
            TableKind::Reac => &self.reac,
        }
    }

    fn get_mut(&mut self, kind: TableKind) -> &mut Vec<u8> {
        match kind {
            TableKind::Demo => &mut self.demo,
            TableKind::Drug => &mut self.drug,
            TableKind::Indi => &mut self.indi,
            TableKind::Reac => &mut self.reac,
        }
    }
}

const DEMO_COLUMNS: [&str; 22] = [
    "ISR", "CASE", "I_F_COD", "FOLL_SEQ", "IMAGE", "EVENT_DT", "MFR_DT", "FDA_DT", "REPT_COD", "MFR_NUM", "MFR_SNDR",
    "AGE", "AGE_COD", "GNDR_COD", "E_SUB", "WT", "WT_COD", "REPT_DT", "OCCP_COD", "DEATH_DT", "TO_MFR", "CONFID",
];
const DRUG_COLUMNS: [&str; 12] = [
    "ISR", "DRUG_SEQ", "ROLE_COD", "DRUGNAME", "VAL_VBM", "ROUTE", "DOSE_VBM", "DECHAL", "RECHAL", "LOT_NUM", "EXP_DT",
    "NDA_NUM",
];
const INDI_COLUMNS: [&str; 3] = ["ISR", "DRUG_SEQ", "INDI_PT"];
const REAC_COLUMNS: [&str; 2] = ["ISR", "PT"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injection {
    pub drug: DrugName,
    pub quarter: Quarter,
    pub multiplier: u32,
    pub added_subjects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    config: SynthConfig,
    injections: Vec<Injection>,
}

const MANIFEST_FILE: &str = "synth.json";
const TRUTH_FILE: &str = "ground_truth.json";

/// A generated corpus: file bytes per quarter plus its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: SynthConfig,
    pub tables: BTreeMap<Quarter, QuarterTables>,
    pub truth: GroundTruth,
    pub injections: Vec<Injection>,
}

/// One subject before rendering; `drugs` holds vocabulary ranks.
struct Draft {
    drugs: Vec<usize>,
    indications: u32,
    reactions: u32,
}

// RNG stream families. Each (family, quarter) pair gets its own ChaCha
// stream so changing one quarter's settings leaves the others untouched.
const STREAM_COHORT: u64 = 1;
const STREAM_SUBJECTS: u64 = 2;
const STREAM_COMPLEXITY: u64 = 3;
const STREAM_JITTER: u64 = 4;
const STREAM_MESSY: u64 = 5;
const STREAM_SPIKE: u64 = 6;

fn rng_for(seed: u64, family: u64, quarter: Option<Quarter>, extra: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = quarter.map_or(0, |q| u64::from(q.ordinal()) + 1);
    rng.set_stream((family << 56) ^ (q << 32) ^ extra);
    rng
}

fn isr_base(q: Quarter) -> u64 {
    (u64::from(q.year()) * 10 + u64::from(q.q())) * 1_000_000
}

pub fn generate_corpus(config: &SynthConfig) -> Result<Corpus, SynthError> {
    config.validate()?;
    let zipf = Zipf::new(config.vocabulary as f64, config.zipf_exponent)
        .map_err(|e| SynthError::Config(format!("zipf: {e}")))?;
    let draw_drugs = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        let d = config.drugs_per_subject.draw(rng);
        (0..d).map(|_| (zipf.sample(rng) as usize).clamp(1, config.vocabulary)).collect()
    };

    let cohort: Vec<Draft> = match config.sampling {
        Sampling::Cohort { .. } => {
            let mut rng = rng_for(config.seed, STREAM_COHORT, None, 0);
            (0..config.subjects_per_quarter)
                .map(|_| Draft {
                    drugs: draw_drugs(&mut rng),
                    indications: config.indications.draw(&mut rng),
                    reactions: config.reactions.draw(&mut rng),
                })
                .collect()
        }
        Sampling::Independent => Vec::new(),
    };

    let mut corpus = Corpus {
        config: config.clone(),
        tables: BTreeMap::new(),
        truth: GroundTruth::default(),
        injections: Vec::new(),
    };

    for &q in &config.quarters {
        let complexity = config.complexity(q);
        let mut crng = rng_for(config.seed, STREAM_COMPLEXITY, Some(q), 0);
        let drafts: Vec<Draft> = match config.sampling {
            Sampling::Independent => {
                let mut rng = rng_for(config.seed, STREAM_SUBJECTS, Some(q), 0);
                (0..config.subjects_per_quarter)
                    .map(|_| Draft {
                        drugs: draw_drugs(&mut rng),
                        indications: complexity.indications.draw(&mut crng),
                        reactions: complexity.reactions.draw(&mut crng),
                    })
                    .collect()
            }
            Sampling::Cohort { jitter } => {
                let overridden = config.complexity_overrides.contains_key(&q);
                let mut drafts: Vec<Draft> = cohort
                    .iter()
                    .map(|c| Draft {
                        drugs: c.drugs.clone(),
                        indications: if overridden { complexity.indications.draw(&mut crng) } else { c.indications },
                        reactions: if overridden { complexity.reactions.draw(&mut crng) } else { c.reactions },
                    })
                    .collect();
                drop_mentions(&mut drafts, jitter, &mut rng_for(config.seed, STREAM_JITTER, Some(q), 0));
                drafts
            }
        };

        let mut tables = QuarterTables::with_headers();
        let mut messy = rng_for(config.seed, STREAM_MESSY, Some(q), 0);
        let mut reports = Vec::with_capacity(drafts.len());
        for (i, draft) in drafts.iter().enumerate() {
            let isr = isr_base(q) + i as u64 + 1;
            let names: Vec<DrugName> = draft.drugs.iter().map(|r| config.drug_name(*r)).collect();
            let rendered: Vec<String> = names
                .iter()
                .map(|n| if config.messy_names { scramble(n.as_str(), &mut messy) } else { n.to_string() })
                .collect();
            append_subject(&mut tables, isr, &rendered, draft.indications, draft.reactions);
            reports.push(SubjectReport {
                isr: Isr::from_number(isr),
                quarter: q,
                drug_names: names,
                indication_count: draft.indications,
                reaction_count: draft.reactions,
            });
        }
        corpus.tables.insert(q, tables);
        corpus.truth.reports.insert(q, reports);
    }
    Ok(corpus)
}

/// For each drug with `M` mentions across the cohort, drops a uniform
/// `0..=floor(jitter * M)` of them.
fn drop_mentions(drafts: &mut [Draft], jitter: f64, rng: &mut ChaCha8Rng) {
    let mut positions: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (s, d) in drafts.iter().enumerate() {
        for (p, rank) in d.drugs.iter().enumerate() {
            positions.entry(*rank).or_default().push((s, p));
        }
    }
    let mut doomed: Vec<(usize, usize)> = Vec::new();
    for mentions in positions.values() {
        let cap = (jitter * mentions.len() as f64).floor() as usize;
        let k = rng.random_range(0..=cap);
        doomed.extend(index::sample(rng, mentions.len(), k).into_iter().map(|i| mentions[i]));
    }
    // remove back to front so earlier positions stay valid
    doomed.sort_unstable_by(|a, b| b.cmp(a));
    for (s, p) in doomed {
        drafts[s].drugs.remove(p);
    }
}

/// Random case and spacing that normalizes back to `name`.
fn scramble(name: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    if rng.random_bool(0.2) {
        out.push(' ');
    }
    let lower = rng.random_bool(0.3);
    for (i, word) in name.split(' ').enumerate() {
        if i > 0 {
            out.push_str(if rng.random_bool(0.3) { "  " } else { " " });
        }
        if lower {
            out.push_str(&word.to_ascii_lowercase());
        } else {
            out.push_str(word);
        }
    }
    if rng.random_bool(0.2) {
        out.push_str("  ");
    }
    out
}

fn push_line(buf: &mut Vec<u8>, fields: &[&str]) {
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            buf.push(b'$');
        }
        buf.extend_from_slice(f.as_bytes());
    }
    buf.push(b'\n');
}

fn append_subject(tables: &mut QuarterTables, isr: u64, drug_names: &[String], indications: u32, reactions: u32) {
    let isr_s = isr.to_string();
    let mut demo = vec![""; DEMO_COLUMNS.len()];
    demo[0] = &isr_s;
    demo[1] = &isr_s;
    demo[2] = "I";
    demo[8] = "EXP";
    push_line(tables.get_mut(TableKind::Demo), &demo);

    for (i, name) in drug_names.iter().enumerate() {
        let seq = (i + 1).to_string();
        let role = if i == 0 { "PS" } else { "SS" };
        push_line(tables.get_mut(TableKind::Drug), &[&isr_s, &seq, role, name, "1", "ORAL", "", "", "", "", "", ""]);
    }
    let seqs = drug_names.len().max(1);
    for k in 0..indications as usize {
        let seq = (k % seqs + 1).to_string();
        let term = format!("INDICATION {}", k + 1);
        push_line(tables.get_mut(TableKind::Indi), &[&isr_s, &seq, &term]);
    }
    for k in 0..reactions {
        let term = format!("REACTION {}", k + 1);
        push_line(tables.get_mut(TableKind::Reac), &[&isr_s, &term]);
    }
}

/// Appends subjects mentioning `drug` in `quarter` until its mention count
/// there is `multiplier` times what it was. Returns the number of subjects
/// added. Other quarters are not touched.
pub fn inject_spike(
    corpus: &mut Corpus,
    drug: &DrugName,
    quarter: Quarter,
    multiplier: u32,
) -> Result<usize, SynthError> {
    if multiplier == 0 {
        return Err(SynthError::Config("spike multiplier must be positive".into()));
    }
    let rank = corpus
        .config
        .vocabulary_names()
        .iter()
        .position(|n| n == drug)
        .ok_or_else(|| SynthError::UnknownDrug(drug.to_string()))?
        + 1;
    if !corpus.tables.contains_key(&quarter) {
        return Err(SynthError::UnknownQuarter(quarter));
    }
    let baseline = corpus.truth.mentions(quarter, drug);
    let added = baseline * (multiplier as usize - 1);
    let reports = corpus.truth.reports.entry(quarter).or_default();
    if reports.len() + added > 999_999 {
        return Err(SynthError::Config(format!("spike would exceed the ISR space of {quarter}")));
    }
    let complexity = corpus.config.complexity(quarter);
    let serial = corpus.injections.len() as u64;
    let mut rng = rng_for(corpus.config.seed, STREAM_SPIKE, Some(quarter), (rank as u64) << 8 | serial);
    let tables = corpus.tables.get_mut(&quarter).expect("checked above");
    let next = reports
        .iter()
        .map(|r| r.isr.as_str().parse::<u64>().expect("synthetic ISRs are u64"))
        .max()
        .unwrap_or(isr_base(quarter));
    for i in 0..added {
        let isr = next + i as u64 + 1;
        let (ind, reac) = (complexity.indications.draw(&mut rng), complexity.reactions.draw(&mut rng));
        append_subject(tables, isr, &[drug.to_string()], ind, reac);
        reports.push(SubjectReport {
            isr: Isr::from_number(isr),
            quarter,
            drug_names: vec![drug.clone()],
            indication_count: ind,
            reaction_count: reac,
        });
    }
    corpus.injections.push(Injection { drug: drug.clone(), quarter, multiplier, added_subjects: added });
    Ok(added)
}

impl Corpus {
    /// Writes the table files, `ground_truth.json` and `synth.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SynthError> {
        let io = |p: &Path| {
            let path = p.display().to_string();
            move |source| SynthError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        for (q, tables) in &self.tables {
            for kind in TableKind::ALL {
                let path = dir.join(kind.file_name(*q));
                std::fs::write(&path, tables.get(kind)).map_err(io(&path))?;
            }
        }
        let write_json = |name: &str, value: &dyn erased::Json| -> Result<(), SynthError> {
            let path = dir.join(name);
            let mut text =
                value.to_pretty().map_err(|source| SynthError::Json { path: path.display().to_string(), source })?;
            text.push('\n');
            std::fs::write(&path, text).map_err(io(&path))
        };
        write_json(TRUTH_FILE, &self.truth)?;
        write_json(MANIFEST_FILE, &Manifest { config: self.config.clone(), injections: self.injections.clone() })
    }

    /// Reads a corpus written by [`Corpus::write_to`].
    pub fn read_from(dir: &Path) -> Result<Self, SynthError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read(&path).map_err(|source| SynthError::Io { path: path.display().to_string(), source })
        };
        let json_err = |name: &str| {
            let path = dir.join(name).display().to_string();
            move |source| SynthError::Json { path, source }
        };
        let manifest: Manifest = serde_json::from_slice(&read(MANIFEST_FILE)?).map_err(json_err(MANIFEST_FILE))?;
        let truth: GroundTruth = serde_json::from_slice(&read(TRUTH_FILE)?).map_err(json_err(TRUTH_FILE))?;
        let mut tables = BTreeMap::new();
        for &q in &manifest.config.quarters {
            tables.insert(
                q,
                QuarterTables {
                    demo: read(&TableKind::Demo.file_name(q))?,
                    drug: read(&TableKind::Drug.file_name(q))?,
                    indi: read(&TableKind::Indi.file_name(q))?,
                    reac: read(&TableKind::Reac.file_name(q))?,
                },
            );
        }
        Ok(Corpus { config: manifest.config, tables, truth, injections: manifest.injections })
    }
}

mod erased {
    /// Object-safe pretty JSON encoding.
    pub trait Json {
        fn to_pretty(&self) -> serde_json::Result<String>;
    }

    impl<T: serde::Serialize> Json for T {
        fn to_pretty(&self) -> serde_json::Result<String> {
            serde_json::to_string_pretty(self)
        }
    }
}
