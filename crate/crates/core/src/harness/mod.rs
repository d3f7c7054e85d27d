//! Ingesting samples, generating synthetic corpora and running whole corpora.

mod generate;
mod ingest;
mod pipeline;

pub use generate::{
    generate_corpus, load_corpus, threshold_probe, Corpus, CorpusEntry, CorpusError, GeneratedSample, GeneratorSpec,
    Transform,
};
pub use ingest::{
    ingest, manifest_all_urls, manifest_entries, package_scripts, prefilter, EntryPoint, IngestError, Label,
    PrefilterDecision, Sample, SampleKind,
};
pub use pipeline::{
    render_report, run_pipeline, run_sample, write_run, write_run_at, PipelineConfig, PipelineResult, SampleOutcome,
};
