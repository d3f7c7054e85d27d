//! Forced-execution analysis for a JavaScript subset.
//!
//! The pipeline parses scripts, marks condition blocks that contain code-injection APIs,
//! runs them in an interpreter that executes those blocks on every branch, follows
//! injected code recursively, and turns the resulting logs into flags, evasion
//! categories and clusters.

pub mod cluster;
pub mod engine;
pub mod frontend;
pub mod harness;
pub mod post;
pub mod scanner;
pub mod tracker;

pub use cluster::{build_feature_vector, dbscan, expand_flags, ClusterAssignment, DbscanParams, FeatureVector, Metric};
pub use engine::{Engine, EngineConfig, PageContext, ResourceResolver, RunOptions};
pub use frontend::{node_count, parse, parse_str, render, tokenize, FrontendError, Node, NodeKind, SourceFile, Span};
pub use harness::{
    generate_corpus, ingest, prefilter, run_pipeline, GeneratorSpec, PipelineConfig, Sample, SampleKind,
};
pub use post::{classify_evasions, compute_metrics, flag, EvasionTaxonomy, Metrics, SampleReport};
pub use scanner::{
    find_condition_nodes, mark_forced_blocks, scan_block_for_apis, ApiCatalog, ApiSignature, ConditionKind, ForcedPlan,
    MatchKind, Mode, ScanResult,
};
pub use tracker::{chain_lengths, coverage_loc, emit_log, Provenance, ScriptId, ScriptRecord};
