//! Drug-name incidence counting and surveillance over FDA Adverse Event
//! Reporting System (AERS) quarterly extracts.
//!
//! The pipeline runs `ingest` (parse `$`-delimited quarterly tables into
//! subject reports), `model` (weighted drug-name x quarter counts and
//! snapshots), then `stats` and `surveil` over the resulting store. `synth`
//! generates corpora with known ground truth for testing.

pub mod cli;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod quarter;
pub mod stats;
pub mod surveil;
pub mod synth;

mod svg;

pub use ingest::{normalize_drug_name, DrugName, IngestError, Isr, SubjectReport};
pub use model::{build_counts, CountStore, ModelError, StoreBuilder, Weighting};
pub use quarter::{Quarter, QuarterError, QuarterRange};
pub use stats::StatsError;
pub use surveil::SurveilError;
pub use synth::SynthError;

/// Any failure the library can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Quarter(#[from] QuarterError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Surveil(#[from] SurveilError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}
